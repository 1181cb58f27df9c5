// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#include "duma/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "duma/config.hpp"
#include "duma/errors.hpp"
#include "json.hpp"

namespace duma {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are written in host order and must be little-endian");

namespace {

constexpr char kMagic[8] = {'D', 'U', 'M', 'A', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (in.size() - pos < sizeof(T)) throw ParseError("checkpoint: truncated file");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

bool Checkpoint::operator==(const Checkpoint& o) const {
  return to_json(config) == to_json(o.config) && vocab == o.vocab && seed == o.seed &&
         params == o.params && best == o.best && adam_m == o.adam_m && adam_v == o.adam_v &&
         step == o.step && epoch == o.epoch && order == o.order && cursor == o.cursor &&
         rng_state == o.rng_state && best_dev == o.best_dev && best_step == o.best_step &&
         evals_since_best == o.evals_since_best && finished == o.finished && log == o.log;
}

std::string serialize_checkpoint(const Checkpoint& c) {
  json directory = json::array();
  std::string data;
  auto add_group = [&](const std::string& prefix, const std::vector<TensorBlob>& blobs) {
    for (const auto& b : blobs) {
      if (shape_numel(b.shape) != b.values.size())
        throw DimensionError("checkpoint: blob " + b.name + " has " +
                             std::to_string(b.values.size()) + " values for shape " +
                             shape_str(b.shape));
      directory.push_back({{"name", prefix + b.name}, {"shape", b.shape}, {"offset", data.size()}});
      data.append(reinterpret_cast<const char*>(b.values.data()), b.values.size() * sizeof(double));
    }
  };
  add_group("param/", c.params);
  add_group("best/", c.best);
  add_group("adam_m/", c.adam_m);
  add_group("adam_v/", c.adam_v);

  json header{{"config", to_json(c.config)},
              {"vocab_size", c.config.model.vocab_size},
              {"vocab", c.vocab},
              {"seed", c.seed},
              {"step", c.step},
              {"epoch", c.epoch},
              {"order", c.order},
              {"cursor", c.cursor},
              {"rng_state", c.rng_state},
              {"best_dev", c.best_dev},
              {"best_step", c.best_step},
              {"evals_since_best", c.evals_since_best},
              {"finished", c.finished},
              {"metrics", c.log.to_jsonl()},
              {"tensors", directory}};
  const std::string h = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, h.size());
  out += h;
  out += data;
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw ParseError("checkpoint: bad magic, not a checkpoint file");
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kVersion)
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  const auto header_len = take<std::uint64_t>(bytes, pos);
  if (bytes.size() - pos < header_len) throw ParseError("checkpoint: truncated header");
  const std::string_view data(bytes.data() + pos + header_len, bytes.size() - pos - header_len);

  Checkpoint c;
  try {
    const json h = json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                               bytes.begin() + static_cast<std::ptrdiff_t>(pos + header_len));
    c.config = train_config_from_json(h.at("config"));
    c.config.model.vocab_size = h.at("vocab_size").get<std::size_t>();
    c.vocab = h.at("vocab").get<std::vector<std::string>>();
    c.seed = h.at("seed").get<std::uint64_t>();
    c.step = h.at("step").get<std::size_t>();
    c.epoch = h.at("epoch").get<std::size_t>();
    c.order = h.at("order").get<std::vector<std::size_t>>();
    c.cursor = h.at("cursor").get<std::size_t>();
    c.rng_state = h.at("rng_state").get<std::string>();
    c.best_dev = h.at("best_dev").get<double>();
    c.best_step = h.at("best_step").get<std::size_t>();
    c.evals_since_best = h.at("evals_since_best").get<std::size_t>();
    c.finished = h.at("finished").get<bool>();
    c.log = MetricsLog::from_jsonl(h.at("metrics").get<std::string>());
    for (const auto& entry : h.at("tensors")) {
      const std::string full = entry.at("name").get<std::string>();
      TensorBlob b;
      b.shape = entry.at("shape").get<Shape>();
      const std::size_t offset = entry.at("offset").get<std::size_t>();
      const std::size_t n = shape_numel(b.shape);
      if (offset > data.size() || (data.size() - offset) / sizeof(double) < n)
        throw ParseError("checkpoint: blob " + full + " runs past end of file");
      b.values.resize(n);
      std::memcpy(b.values.data(), data.data() + offset, n * sizeof(double));
      const auto slash = full.find('/');
      if (slash == std::string::npos) throw ParseError("checkpoint: unprefixed blob " + full);
      const std::string group = full.substr(0, slash);
      b.name = full.substr(slash + 1);
      if (group == "param") c.params.push_back(std::move(b));
      else if (group == "best") c.best.push_back(std::move(b));
      else if (group == "adam_m") c.adam_m.push_back(std::move(b));
      else if (group == "adam_v") c.adam_v.push_back(std::move(b));
      else throw ParseError("checkpoint: unknown blob group '" + group + "'");
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: malformed header: ") + e.what());
  } catch (const ValidationError& e) {
    throw ParseError(std::string("checkpoint: bad config: ") + e.what());
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("checkpoint: cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

std::vector<TensorBlob> snapshot_parameters(const Model& model) {
  std::vector<TensorBlob> out;
  for (const auto& [name, t] : model.named_parameters())
    out.push_back({name, t.shape(), std::vector<double>(t.data().begin(), t.data().end())});
  return out;
}

void load_parameters(Model& model, const std::vector<TensorBlob>& blobs) {
  auto named = model.named_parameters();
  if (named.size() != blobs.size())
    throw ValidationError("checkpoint: expected " + std::to_string(named.size()) +
                          " parameter tensors, found " + std::to_string(blobs.size()));
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto& [name, t] = named[i];
    if (blobs[i].name != name || blobs[i].shape != t.shape())
      throw ValidationError("checkpoint: parameter " + std::to_string(i) + " is " + blobs[i].name +
                            " " + shape_str(blobs[i].shape) + ", model expects " + name + " " +
                            shape_str(t.shape()));
    auto dst = t.mutable_data();
    std::copy(blobs[i].values.begin(), blobs[i].values.end(), dst.begin());
  }
}

Model model_from_checkpoint(const Checkpoint& ckpt, bool prefer_best) {
  Model model(ckpt.config.model, ckpt.seed);
  load_parameters(model, prefer_best && !ckpt.best.empty() ? ckpt.best : ckpt.params);
  return model;
}

}  // namespace duma
