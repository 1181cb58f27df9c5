// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "duma/data.hpp"
#include "duma/train.hpp"
#include "json.hpp"

namespace duma {

//   fuse_modes   mul, sum, concat
//   directions   p2q_only, q2p_only, both
//   layer_sweep  k = 1..6 with layer sharing on
//   head_modes   duma, vanilla_sa, tb, sa_plus_ca
enum class Suite { fuse_modes, directions, layer_sweep, head_modes };

std::string to_string(Suite suite);
Suite parse_suite(std::string_view text);

struct AblationVariant {
  std::string label;
  TrainConfig config;
};

// The variants of a suite, each a copy of base with one knob changed.
std::vector<AblationVariant> ablation_variants(Suite suite, const TrainConfig& base);

struct AblationRun {
  std::string variant;
  std::uint64_t seed = 0;
  double best_dev = 0.0;
  double test_acc = 0.0;
  std::size_t best_step = 0;
  std::size_t steps = 0;
  MetricsLog log;
};

struct AblationRow {
  std::string variant;
  std::size_t params = 0;  // total trainable scalars
  std::vector<double> dev;   // best dev accuracy per seed, in seed order
  std::vector<double> test;  // test accuracy per seed
  double median_dev = 0.0;
  double median_test = 0.0;
};

// An ordering the suite is expected to show. A failed check is reported as a
// regression; the table is still complete.
struct OrderingCheck {
  std::string name;
  bool holds = false;
  std::string detail;
};

struct AblationReport {
  Suite suite = Suite::fuse_modes;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;
  std::vector<AblationRun> runs;
  std::vector<OrderingCheck> checks;

  const AblationRow& row(std::string_view variant) const;
  // Tab-separated: variant, params, median_dev, median_test, then per-seed
  // test accuracies.
  std::string to_tsv() const;
  nlohmann::json to_json() const;
};

// Middle element, or the mean of the two middle elements. Throws on empty.
double median(std::vector<double> values);

using AblationProgress = std::function<void(const AblationRun&)>;

// Trains every variant once per seed on the same data with the same budget.
// parallel > 1 runs that many seeds at once, each on its own thread with
// private state; results do not depend on the thread count.
AblationReport run_ablation(Suite suite, const TrainConfig& base, const DatasetSplits& data,
                            std::span<const std::uint64_t> seeds, std::size_t parallel = 1,
                            const std::string& config_hash = "",
                            const AblationProgress& progress = {});

}  // namespace duma
