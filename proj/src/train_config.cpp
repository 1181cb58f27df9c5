// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#include "duma/train_config.hpp"

#include <cmath>
#include <sstream>

#include "duma/errors.hpp"
#include "json.hpp"

namespace duma {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(peak_lr >= 0.0) || !std::isfinite(peak_lr))
    throw ValidationError("train: peak_lr must be a finite non-negative number");
  if (batch_size == 0) throw ValidationError("train: batch_size must be at least 1");
  if (max_steps == 0) throw ValidationError("train: max_steps must be at least 1");
  if (seeds.empty()) throw ValidationError("train: seed list is empty");
  if (eval_every == 0) throw ValidationError("train: eval_every must be at least 1");
  if (grad_clip < 0.0) throw ValidationError("train: grad_clip must be non-negative");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    throw ValidationError("train: Adam betas must lie in [0, 1)");
  if (!(adam.eps > 0.0)) throw ValidationError("train: Adam eps must be positive");
}

TrainConfig TrainConfig::dream_finetune() {
  TrainConfig cfg;
  cfg.peak_lr = 1e-5;
  cfg.batch_size = 8;
  cfg.warmup_steps = 100;
  return cfg;
}

double lr_at(std::size_t step, const TrainConfig& cfg) {
  const double peak = cfg.peak_lr;
  if (step < cfg.warmup_steps)
    return peak * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  if (cfg.constant_lr) return peak;
  if (step >= cfg.max_steps) return 0.0;
  if (cfg.max_steps <= cfg.warmup_steps) return peak;
  return peak * static_cast<double>(cfg.max_steps - step) /
         static_cast<double>(cfg.max_steps - cfg.warmup_steps);
}

std::string MetricsLog::to_jsonl() const {
  std::ostringstream os;
  os << json{{"type", "header"}, {"seed", seed}, {"config_hash", config_hash}}.dump() << '\n';
  // Steps and evals interleave in step order; an eval follows the step it was taken after.
  std::size_t e = 0;
  auto flush_evals = [&](std::size_t upto) {
    for (; e < evals.size() && evals[e].step <= upto; ++e)
      os << json{{"type", "eval"}, {"step", evals[e].step}, {"dev_acc", evals[e].dev_acc}}.dump()
         << '\n';
  };
  for (const auto& s : steps) {
    flush_evals(s.step - 1);
    os << json{{"type", "step"}, {"step", s.step}, {"loss", s.loss}, {"lr", s.lr}}.dump() << '\n';
  }
  flush_evals(static_cast<std::size_t>(-1));
  if (final) {
    json f{{"type", "final"}, {"best_step", final->best_step}, {"best_dev", final->best_dev}};
    f["test_acc"] = final->test_acc ? json(*final->test_acc) : json(nullptr);
    os << f.dump() << '\n';
  }
  return os.str();
}

std::string MetricsLog::timings_jsonl() const {
  std::ostringstream os;
  for (const auto& [step, secs] : wall_seconds)
    os << json{{"step", step}, {"wall_seconds", secs}}.dump() << '\n';
  return os.str();
}

MetricsLog MetricsLog::from_jsonl(const std::string& text) {
  MetricsLog log;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "header") {
        log.seed = j.at("seed").get<std::uint64_t>();
        log.config_hash = j.at("config_hash").get<std::string>();
        header = true;
      } else if (type == "step") {
        log.steps.push_back({j.at("step").get<std::size_t>(), j.at("loss").get<double>(),
                             j.at("lr").get<double>()});
      } else if (type == "eval") {
        log.evals.push_back({j.at("step").get<std::size_t>(), j.at("dev_acc").get<double>()});
      } else if (type == "final") {
        FinalRecord f{j.at("best_step").get<std::size_t>(), j.at("best_dev").get<double>(), {}};
        if (!j.at("test_acc").is_null()) f.test_acc = j.at("test_acc").get<double>();
        log.final = f;
      } else {
        throw ParseError("unknown record type '" + type + "'");
      }
    } catch (const json::exception& ex) {
      throw ParseError("metrics line " + std::to_string(lineno) + ": " + ex.what());
    } catch (const ParseError& ex) {
      throw ParseError("metrics line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  if (!header) throw ParseError("metrics: missing header line");
  return log;
}

bool MetricsLog::operator==(const MetricsLog& other) const {
  return seed == other.seed && config_hash == other.config_hash && steps == other.steps &&
         evals == other.evals && final == other.final;
}

}  // namespace duma
