// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#include "duma/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "duma/errors.hpp"

namespace duma {

using nlohmann::json;

namespace {

// Reads fields of one JSON object, rejecting keys nobody asked for.
class Reader {
 public:
  Reader(const json& j, std::string section) : j_(j), section_(std::move(section)) {
    if (!j_.is_object()) throw ValidationError("config: section '" + section_ + "' must be an object");
  }

  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions()) return;
    for (const auto& [key, value] : j_.items())
      if (!known_.count(key))
        throw ValidationError("config: unknown key '" + section_ + "." + key + "'");
  }

  template <typename T>
  void get(const char* key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ValidationError("expected a boolean");
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_unsigned()) throw ValidationError("expected a non-negative integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ValidationError("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ValidationError("expected a string");
      }
      out = v.get<T>();
    } catch (const std::exception& e) {
      throw ValidationError("config: key '" + section_ + "." + key + "': " + e.what());
    }
  }

  const json* child(const char* key) {
    known_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const json& j_;
  std::string section_;
  std::set<std::string> known_;
};

}  // namespace

json to_json(const DumaConfig& cfg) {
  return {{"fuse", to_string(cfg.fuse)},
          {"direction", to_string(cfg.direction)},
          {"layers", cfg.layers},
          {"variant", to_string(cfg.variant)},
          {"share_directions", cfg.share_directions},
          {"share_layers", cfg.share_layers}};
}

json to_json(const ModelConfig& cfg) {
  return {{"d_model", cfg.d_model},
          {"heads", cfg.heads},
          {"n_enc", cfg.n_enc},
          {"ffn_multiplier", cfg.ffn_multiplier},
          {"max_len", cfg.max_len},
          {"share_encoder_layers", cfg.share_encoder_layers},
          {"init_std", cfg.init_std},
          {"attention_dropout", cfg.attention_dropout},
          {"head_mode", to_string(cfg.head_mode)},
          {"duma", to_json(cfg.duma)}};
}

json to_json(const TrainConfig& cfg) {
  return {{"peak_lr", cfg.peak_lr},
          {"warmup_steps", cfg.warmup_steps},
          {"batch_size", cfg.batch_size},
          {"max_steps", cfg.max_steps},
          {"epochs", cfg.epochs},
          {"seeds", cfg.seeds},
          {"eval_every", cfg.eval_every},
          {"patience", cfg.patience},
          {"constant_lr", cfg.constant_lr},
          {"grad_clip", cfg.grad_clip},
          {"adam", {{"beta1", cfg.adam.beta1}, {"beta2", cfg.adam.beta2}, {"eps", cfg.adam.eps}}},
          {"model", to_json(cfg.model)}};
}

json to_json(const SyntheticTaskConfig& cfg) {
  return {{"n_keys", cfg.n_keys},     {"n_values", cfg.n_values},
          {"pairs_per_passage", cfg.pairs_per_passage},
          {"options", cfg.options},   {"n_train", cfg.n_train},
          {"n_dev", cfg.n_dev},       {"n_test", cfg.n_test}};
}

json to_json(const RunConfig& cfg) {
  json train = to_json(cfg.train);
  json model = train["model"];
  train.erase("model");
  json data = to_json(cfg.data);
  data["seed"] = cfg.data_seed;
  return {{"model", model}, {"train", train}, {"data", data}};
}

DumaConfig duma_config_from_json(const json& j, DumaConfig base) {
  Reader r(j, "model.duma");
  std::string fuse = to_string(base.fuse), direction = to_string(base.direction),
              variant = to_string(base.variant);
  r.get("fuse", fuse);
  r.get("direction", direction);
  r.get("variant", variant);
  r.get("layers", base.layers);
  r.get("share_directions", base.share_directions);
  r.get("share_layers", base.share_layers);
  base.fuse = parse_fuse_mode(fuse);
  base.direction = parse_direction(direction);
  base.variant = parse_variant(variant);
  return base;
}

ModelConfig model_config_from_json(const json& j, ModelConfig base) {
  Reader r(j, "model");
  std::string head_mode = to_string(base.head_mode);
  r.get("d_model", base.d_model);
  r.get("heads", base.heads);
  r.get("n_enc", base.n_enc);
  r.get("ffn_multiplier", base.ffn_multiplier);
  r.get("max_len", base.max_len);
  r.get("share_encoder_layers", base.share_encoder_layers);
  r.get("init_std", base.init_std);
  r.get("attention_dropout", base.attention_dropout);
  r.get("head_mode", head_mode);
  base.head_mode = parse_head_mode(head_mode);
  if (const json* d = r.child("duma")) base.duma = duma_config_from_json(*d, base.duma);
  return base;
}

TrainConfig train_config_from_json(const json& j, TrainConfig base) {
  Reader r(j, "train");
  r.get("peak_lr", base.peak_lr);
  r.get("warmup_steps", base.warmup_steps);
  r.get("batch_size", base.batch_size);
  r.get("max_steps", base.max_steps);
  r.get("epochs", base.epochs);
  r.get("seeds", base.seeds);
  r.get("eval_every", base.eval_every);
  r.get("patience", base.patience);
  r.get("constant_lr", base.constant_lr);
  r.get("grad_clip", base.grad_clip);
  if (const json* a = r.child("adam")) {
    Reader ar(*a, "train.adam");
    ar.get("beta1", base.adam.beta1);
    ar.get("beta2", base.adam.beta2);
    ar.get("eps", base.adam.eps);
  }
  if (const json* m = r.child("model")) base.model = model_config_from_json(*m, base.model);
  return base;
}

SyntheticTaskConfig synthetic_config_from_json(const json& j, SyntheticTaskConfig base) {
  Reader r(j, "data");
  r.get("n_keys", base.n_keys);
  r.get("n_values", base.n_values);
  r.get("pairs_per_passage", base.pairs_per_passage);
  r.get("options", base.options);
  r.get("n_train", base.n_train);
  r.get("n_dev", base.n_dev);
  r.get("n_test", base.n_test);
  return base;
}

RunConfig run_config_from_json(const json& j, RunConfig base) {
  Reader r(j, "config");
  if (const json* m = r.child("model")) base.train.model = model_config_from_json(*m, base.train.model);
  if (const json* t = r.child("train")) base.train = train_config_from_json(*t, base.train);
  if (const json* d = r.child("data")) {
    json rest = *d;
    if (rest.contains("seed")) {
      if (!rest["seed"].is_number_unsigned())
        throw ValidationError("config: key 'data.seed': expected a non-negative integer");
      base.data_seed = rest["seed"].get<std::uint64_t>();
      rest.erase("seed");
    }
    base.data = synthetic_config_from_json(rest, base.data);
  }
  return base;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("config: " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

std::string config_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

std::string config_hash(const RunConfig& cfg) { return config_hash(to_json(cfg)); }

}  // namespace duma
