// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#include "duma/ablation.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "duma/errors.hpp"

namespace duma {

using nlohmann::json;

std::string to_string(Suite suite) {
  switch (suite) {
    case Suite::fuse_modes: return "fuse_modes";
    case Suite::directions: return "directions";
    case Suite::layer_sweep: return "layer_sweep";
    case Suite::head_modes: return "head_modes";
  }
  return "?";
}

Suite parse_suite(std::string_view text) {
  if (text == "fuse_modes") return Suite::fuse_modes;
  if (text == "directions") return Suite::directions;
  if (text == "layer_sweep") return Suite::layer_sweep;
  if (text == "head_modes") return Suite::head_modes;
  throw ValidationError("unknown suite '" + std::string(text) +
                        "' (fuse_modes|directions|layer_sweep|head_modes)");
}

std::vector<AblationVariant> ablation_variants(Suite suite, const TrainConfig& base) {
  std::vector<AblationVariant> out;
  auto with = [&](std::string label, auto edit) {
    TrainConfig cfg = base;
    edit(cfg.model);
    out.push_back({std::move(label), std::move(cfg)});
  };
  switch (suite) {
    case Suite::fuse_modes:
      for (FuseMode f : {FuseMode::mul, FuseMode::sum, FuseMode::concat})
        with(to_string(f), [&](ModelConfig& m) {
          m.head_mode = HeadMode::duma;
          m.duma.fuse = f;
        });
      break;
    case Suite::directions:
      for (Direction d : {Direction::p2q_only, Direction::q2p_only, Direction::both})
        with(to_string(d), [&](ModelConfig& m) {
          m.head_mode = HeadMode::duma;
          m.duma.direction = d;
        });
      break;
    case Suite::layer_sweep:
      for (std::size_t k = 1; k <= 6; ++k)
        with("k=" + std::to_string(k), [&](ModelConfig& m) {
          m.head_mode = HeadMode::duma;
          m.duma.layers = k;
          m.duma.share_layers = true;
        });
      break;
    case Suite::head_modes:
      with("duma", [](ModelConfig& m) {
        m.head_mode = HeadMode::duma;
        m.duma.variant = Variant::plain;
      });
      with("vanilla_sa", [](ModelConfig& m) { m.head_mode = HeadMode::vanilla_sa; });
      with("tb", [](ModelConfig& m) {
        m.head_mode = HeadMode::duma;
        m.duma.variant = Variant::tb;
      });
      with("sa_plus_ca", [](ModelConfig& m) { m.head_mode = HeadMode::sa_plus_ca; });
      break;
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

const AblationRow& AblationReport::row(std::string_view variant) const {
  for (const auto& r : rows)
    if (r.variant == variant) return r;
  throw ValidationError("report has no row '" + std::string(variant) + "'");
}

namespace {

// Shortest text that parses back to the same double.
std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string AblationReport::to_tsv() const {
  std::ostringstream os;
  os << "variant\tparams\tmedian_dev\tmedian_test";
  for (auto s : seeds) os << "\ttest_seed" << s;
  os << '\n';
  for (const auto& r : rows) {
    os << r.variant << '\t' << r.params << '\t' << shortest(r.median_dev) << '\t'
       << shortest(r.median_test);
    for (double t : r.test) os << '\t' << shortest(t);
    os << '\n';
  }
  return os.str();
}

json AblationReport::to_json() const {
  json rows_j = json::array();
  for (const auto& r : rows)
    rows_j.push_back({{"variant", r.variant},
                      {"params", r.params},
                      {"dev", r.dev},
                      {"test", r.test},
                      {"median_dev", r.median_dev},
                      {"median_test", r.median_test}});
  json runs_j = json::array();
  for (const auto& r : runs)
    runs_j.push_back({{"variant", r.variant},
                      {"seed", r.seed},
                      {"best_dev", r.best_dev},
                      {"test_acc", r.test_acc},
                      {"best_step", r.best_step},
                      {"steps", r.steps}});
  json checks_j = json::array();
  for (const auto& c : checks)
    checks_j.push_back({{"name", c.name},
                        {"holds", c.holds},
                        {"regression", !c.holds},
                        {"detail", c.detail}});
  return {{"suite", to_string(suite)}, {"config_hash", config_hash}, {"seeds", seeds},
          {"rows", rows_j},            {"runs", runs_j},             {"checks", checks_j}};
}

namespace {

std::vector<OrderingCheck> ordering_checks(const AblationReport& r) {
  std::vector<OrderingCheck> out;
  auto fmt = [](double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
  };
  if (r.suite == Suite::head_modes) {
    const double duma = r.row("duma").median_test, vanilla = r.row("vanilla_sa").median_test;
    out.push_back({"duma >= vanilla_sa", duma >= vanilla,
                   "duma " + fmt(duma) + ", vanilla_sa " + fmt(vanilla)});
  }
  if (r.suite == Suite::directions) {
    const double both = r.row("both").median_test;
    const double uni = std::max(r.row("p2q_only").median_test, r.row("q2p_only").median_test);
    out.push_back({"both >= best uni-directional - 0.01", both >= uni - 0.01,
                   "both " + fmt(both) + ", best uni-directional " + fmt(uni)});
  }
  return out;
}

}  // namespace

AblationReport run_ablation(Suite suite, const TrainConfig& base, const DatasetSplits& data,
                            std::span<const std::uint64_t> seeds, std::size_t parallel,
                            const std::string& config_hash, const AblationProgress& progress) {
  if (seeds.empty()) throw ValidationError("ablation: no seeds");
  base.validate();
  const auto variants = ablation_variants(suite, base);
  const std::size_t vocab_size = Vocab::build(data.train).size();

  AblationReport report;
  report.suite = suite;
  report.config_hash = config_hash;
  report.seeds.assign(seeds.begin(), seeds.end());

  // Jobs in (variant, seed) order; each writes only its own slot.
  struct Job {
    std::size_t variant;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < variants.size(); ++v)
    for (auto s : seeds) jobs.push_back({v, s});
  std::vector<AblationRun> results(jobs.size());

  std::atomic<std::size_t> next{0};
  std::mutex report_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      {
        std::lock_guard lock(report_mutex);
        if (failure) return;
      }
      try {
        const auto& job = jobs[i];
        TrainResult tr = train(variants[job.variant].config, data, job.seed, config_hash);
        AblationRun run{variants[job.variant].label, job.seed,
                        tr.log.final ? tr.log.final->best_dev : 0.0,
                        tr.test_acc,
                        tr.log.final ? tr.log.final->best_step : 0,
                        tr.checkpoint.step,
                        tr.log};
        std::lock_guard lock(report_mutex);
        results[i] = std::move(run);
        if (progress) progress(results[i]);
      } catch (...) {
        std::lock_guard lock(report_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(parallel, jobs.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t v = 0; v < variants.size(); ++v) {
    AblationRow row;
    row.variant = variants[v].label;
    ModelConfig mc = variants[v].config.model;
    mc.vocab_size = vocab_size;
    row.params = count_params(mc).total();
    for (const auto& run : results)
      if (run.variant == row.variant) {
        row.dev.push_back(run.best_dev);
        row.test.push_back(run.test_acc);
      }
    row.median_dev = median(row.dev);
    row.median_test = median(row.test);
    report.rows.push_back(std::move(row));
  }
  report.runs = std::move(results);
  report.checks = ordering_checks(report);
  return report;
}

}  // namespace duma
