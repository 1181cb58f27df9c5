// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>

namespace duma {

// Entry point of the duma command-line tool. Returns the process exit code:
// 0 on success, 1 on validation or runtime failure (one "error: ..." line on
// err), 2 on usage errors.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace duma
