// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "duma/cli.hpp"

int main(int argc, char** argv) { return duma::dispatch(argc, argv, std::cout, std::cerr); }
