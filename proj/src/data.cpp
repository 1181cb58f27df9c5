// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#include "duma/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "duma/errors.hpp"
#include "json.hpp"

namespace duma {

using nlohmann::json;

void McExample::validate() const {
  const std::string where = id.empty() ? std::string("example") : "example '" + id + "'";
  if (options.size() < 2)
    throw ValidationError(where + ": needs at least 2 options, has " +
                          std::to_string(options.size()));
  if (gold >= options.size())
    throw ValidationError(where + ": gold index " + std::to_string(gold) + " out of range for " +
                          std::to_string(options.size()) + " options");
  if (passage.empty()) throw ValidationError(where + ": empty passage");
  if (question.empty()) throw ValidationError(where + ": empty question");
  for (std::size_t i = 0; i < options.size(); ++i)
    if (options[i].empty()) throw ValidationError(where + ": empty option " + std::to_string(i));
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() : tokens_{"[PAD]", "[UNK]", "[CLS]", "[SEP]"} {
  for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], static_cast<int>(i));
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  static const char* kSpecials[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  if (tokens.size() < 4) throw ValidationError("vocab: missing special tokens");
  for (int i = 0; i < 4; ++i)
    if (tokens[i] != kSpecials[i])
      throw ValidationError("vocab: entry " + std::to_string(i) + " must be " + kSpecials[i]);
  Vocab v;
  v.tokens_ = std::move(tokens);
  v.ids_.clear();
  for (std::size_t i = 0; i < v.tokens_.size(); ++i)
    if (!v.ids_.emplace(v.tokens_[i], static_cast<int>(i)).second)
      throw ValidationError("vocab: duplicate token '" + v.tokens_[i] + "'");
  return v;
}

Vocab Vocab::build(std::span<const McExample> examples) {
  std::set<std::string> seen;
  auto add = [&](const std::string& text) {
    for (auto& t : tokenize(text)) seen.insert(std::move(t));
  };
  for (const auto& ex : examples) {
    add(ex.passage);
    add(ex.question);
    for (const auto& o : ex.options) add(o);
  }
  std::vector<std::string> tokens = Vocab().tokens();
  for (const auto& t : seen)
    if (std::find(tokens.begin(), tokens.end(), t) == tokens.end()) tokens.push_back(t);
  return from_tokens(std::move(tokens));
}

int Vocab::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw ValidationError("vocab: id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

// ---------------------------------------------------------------------------
// Loaders

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

McExample example_from_json(const json& obj) {
  if (!obj.is_object()) throw ParseError("expected a JSON object");
  static const std::set<std::string> kFields = {"id", "passage", "question", "options", "gold"};
  for (const auto& [key, value] : obj.items())
    if (!kFields.count(key)) throw ParseError("unknown field '" + key + "'");
  for (const auto& f : kFields)
    if (!obj.contains(f)) throw ParseError("missing field '" + f + "'");
  if (!obj["passage"].is_string() || !obj["question"].is_string() || !obj["id"].is_string())
    throw ParseError("id, passage and question must be strings");
  if (!obj["options"].is_array()) throw ParseError("options must be an array");
  if (!obj["gold"].is_number_integer()) throw ParseError("gold must be an integer");
  McExample ex;
  ex.id = obj["id"].get<std::string>();
  ex.passage = obj["passage"].get<std::string>();
  ex.question = obj["question"].get<std::string>();
  for (const auto& o : obj["options"]) {
    if (!o.is_string()) throw ParseError("options must hold strings");
    ex.options.push_back(o.get<std::string>());
  }
  const auto gold = obj["gold"].get<std::int64_t>();
  if (gold < 0) throw ValidationError("gold index " + std::to_string(gold) + " is negative");
  ex.gold = static_cast<std::size_t>(gold);
  return ex;
}

}  // namespace

std::vector<McExample> parse_dream(std::string_view json_text, std::size_t expected_choices) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("dream: ") + e.what());
  }
  if (!root.is_array()) throw ParseError("dream: top level must be a list");
  std::vector<McExample> out;
  for (std::size_t d = 0; d < root.size(); ++d) {
    const json& entry = root[d];
    if (!entry.is_array() || entry.size() != 3 || !entry[0].is_array() || !entry[1].is_array() ||
        !entry[2].is_string())
      throw ParseError("dream: entry " + std::to_string(d) +
                       " is not a [turns, questions, id] triple");
    const std::string dialogue_id = entry[2].get<std::string>();
    std::string passage;
    for (const auto& turn : entry[0]) {
      if (!turn.is_string()) throw ParseError("dream: non-string turn in '" + dialogue_id + "'");
      if (!passage.empty()) passage.push_back('\n');
      passage += turn.get<std::string>();
    }
    for (std::size_t q = 0; q < entry[1].size(); ++q) {
      const json& qobj = entry[1][q];
      const std::string id = dialogue_id + "-q" + std::to_string(q);
      if (!qobj.is_object() || !qobj.contains("question") || !qobj.contains("choice") ||
          !qobj.contains("answer") || !qobj["question"].is_string() ||
          !qobj["choice"].is_array() || !qobj["answer"].is_string())
        throw ParseError("dream: malformed question object in '" + id + "'");
      McExample ex;
      ex.id = id;
      ex.passage = passage;
      ex.question = qobj["question"].get<std::string>();
      for (const auto& c : qobj["choice"]) {
        if (!c.is_string()) throw ParseError("dream: non-string choice in '" + id + "'");
        ex.options.push_back(c.get<std::string>());
      }
      if (expected_choices != 0 && ex.options.size() != expected_choices)
        throw ValidationError("example '" + id + "': expected " +
                              std::to_string(expected_choices) + " choices, found " +
                              std::to_string(ex.options.size()));
      const auto answer = qobj["answer"].get<std::string>();
      auto it = std::find(ex.options.begin(), ex.options.end(), answer);
      if (it == ex.options.end())
        throw ValidationError("example '" + id + "': answer '" + answer + "' is not among the choices");
      ex.gold = static_cast<std::size_t>(it - ex.options.begin());
      ex.validate();
      out.push_back(std::move(ex));
    }
  }
  return out;
}

std::vector<McExample> load_dream(const std::filesystem::path& path, std::size_t expected_choices) {
  return parse_dream(read_file(path), expected_choices);
}

std::vector<McExample> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<McExample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      McExample ex = example_from_json(json::parse(line));
      ex.validate();
      out.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_jsonl(const std::filesystem::path& path, std::span<const McExample> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  for (const auto& ex : examples) {
    json obj;
    obj["id"] = ex.id;
    obj["passage"] = ex.passage;
    obj["question"] = ex.question;
    obj["options"] = ex.options;
    obj["gold"] = ex.gold;
    out << obj.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Synthetic task

void SyntheticTaskConfig::validate() const {
  if (options < 2) throw ValidationError("synthetic: need at least 2 options");
  if (pairs_per_passage < options)
    throw ValidationError("synthetic: pairs_per_passage (" + std::to_string(pairs_per_passage) +
                          ") must be at least the option count (" + std::to_string(options) + ")");
  if (n_keys < pairs_per_passage || n_values < pairs_per_passage)
    throw ValidationError("synthetic: alphabet too small for " +
                          std::to_string(pairs_per_passage) + " distinct pairs (keys " +
                          std::to_string(n_keys) + ", values " + std::to_string(n_values) + ")");
}

namespace {

struct Drawn {
  McExample example;
  std::string signature;
};

Drawn draw_example(const SyntheticTaskConfig& cfg, std::mt19937_64& rng, const std::string& id) {
  const std::size_t m = cfg.pairs_per_passage;
  std::vector<std::size_t> keys(cfg.n_keys), values(cfg.n_values);
  std::iota(keys.begin(), keys.end(), 0);
  std::iota(values.begin(), values.end(), 0);
  // Partial Fisher-Yates: the first m entries become a uniform sample.
  auto sample = [&](std::vector<std::size_t>& pool) {
    for (std::size_t i = 0; i < m; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(m);
  };
  sample(keys);
  sample(values);
  const std::size_t target = std::uniform_int_distribution<std::size_t>(0, m - 1)(rng);

  std::vector<std::string> words;
  for (std::size_t i = 0; i < m; ++i) {
    words.push_back("k" + std::to_string(keys[i]));
    words.push_back("v" + std::to_string(values[i]));
  }

  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < m; ++i)
    if (i != target) others.push_back(i);
  std::shuffle(others.begin(), others.end(), rng);
  std::vector<std::size_t> chosen = {target};
  chosen.insert(chosen.end(), others.begin(), others.begin() + (cfg.options - 1));
  std::shuffle(chosen.begin(), chosen.end(), rng);

  Drawn d;
  d.example.id = id;
  d.example.passage = detokenize(words);
  d.example.question = "k" + std::to_string(keys[target]) + " ?";
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    d.example.options.push_back("v" + std::to_string(values[chosen[i]]));
    if (chosen[i] == target) d.example.gold = i;
  }

  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < m; ++i) pairs.emplace_back(keys[i], values[i]);
  std::sort(pairs.begin(), pairs.end());
  std::ostringstream sig;
  for (auto [k, v] : pairs) sig << k << ':' << v << ',';
  sig << '?' << keys[target];
  d.signature = sig.str();
  return d;
}

}  // namespace

DatasetSplits gen_synthetic(const SyntheticTaskConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  constexpr int kMaxRedraws = 64;
  std::mt19937_64 rng(seed);
  std::set<std::string> used;
  auto fill = [&](std::size_t n, const std::string& split, bool avoid_used) {
    std::vector<McExample> out;
    out.reserve(n);
    std::vector<std::string> signatures;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string id = "syn-" + split + "-" + std::to_string(i);
      Drawn d = draw_example(cfg, rng, id);
      for (int attempt = 0; avoid_used && used.count(d.signature) && attempt < kMaxRedraws; ++attempt)
        d = draw_example(cfg, rng, id);
      signatures.push_back(d.signature);
      out.push_back(std::move(d.example));
    }
    used.insert(signatures.begin(), signatures.end());
    return out;
  };
  DatasetSplits splits;
  splits.train = fill(cfg.n_train, "train", false);
  splits.dev = fill(cfg.n_dev, "dev", true);
  splits.test = fill(cfg.n_test, "test", true);
  return splits;
}

// ---------------------------------------------------------------------------
// Encoding

EncodedExample encode_example(const McExample& example, const Vocab& vocab, std::size_t max_len) {
  example.validate();
  auto ids = [&](const std::string& text) {
    std::vector<int> out;
    for (const auto& t : tokenize(text)) out.push_back(vocab.id(t));
    return out;
  };
  const auto passage = ids(example.passage);
  const auto question = ids(example.question);
  EncodedExample enc;
  enc.id = example.id;
  enc.gold = example.gold;
  for (const auto& option : example.options) {
    const auto answer = ids(option);
    const std::size_t fixed = 4 + question.size() + answer.size();
    if (fixed > max_len)
      throw ValidationError("example '" + example.id + "': question and answer need " +
                            std::to_string(fixed) + " positions, max length is " +
                            std::to_string(max_len));
    const std::size_t keep = std::min(passage.size(), max_len - fixed);
    EncodedOption o;
    o.token_ids.push_back(Vocab::kCls);
    o.token_ids.insert(o.token_ids.end(), passage.begin(), passage.begin() + keep);
    o.token_ids.push_back(Vocab::kSep);
    o.seg_ids.assign(o.token_ids.size(), 0);
    o.token_ids.insert(o.token_ids.end(), question.begin(), question.end());
    o.token_ids.push_back(Vocab::kSep);
    o.token_ids.insert(o.token_ids.end(), answer.begin(), answer.end());
    o.token_ids.push_back(Vocab::kSep);
    o.seg_ids.resize(o.token_ids.size(), 1);
    o.pad_mask.assign(o.token_ids.size(), 1);
    enc.options.push_back(std::move(o));
  }
  return enc;
}

std::vector<EncodedExample> encode_all(std::span<const McExample> examples, const Vocab& vocab,
                                       std::size_t max_len) {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(encode_example(ex, vocab, max_len));
  return out;
}

}  // namespace duma
