// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace duma {

// One multi-choice reading comprehension instance.
struct McExample {
  std::string id;
  std::string passage;
  std::string question;
  std::vector<std::string> options;
  std::size_t gold = 0;

  // At least two options, gold in range, no empty text.
  void validate() const;
  bool operator==(const McExample&) const = default;
};

// Lowercases, splits on whitespace and detaches ASCII punctuation.
std::vector<std::string> tokenize(std::string_view text);
std::string detokenize(std::span<const std::string> tokens);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;

  Vocab();  // specials only
  // Specials followed by every token seen in the examples, sorted.
  static Vocab build(std::span<const McExample> examples);
  // Inverse of tokens(); the first four entries must be the specials.
  static Vocab from_tokens(std::vector<std::string> tokens);

  int id(std::string_view token) const;  // kUnk when absent
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// Reads a DREAM release file: a JSON list of [turns, questions, id] triples,
// each question object holding "question", "choice" and "answer". One example
// per question, turns joined with '\n'. expected_choices = 0 accepts any count.
std::vector<McExample> load_dream(const std::filesystem::path& path,
                                  std::size_t expected_choices = 3);
std::vector<McExample> parse_dream(std::string_view json_text, std::size_t expected_choices = 3);

// Canonical format: one JSON object per line with passage, question,
// options, gold and id.
std::vector<McExample> load_jsonl(const std::filesystem::path& path);
void save_jsonl(const std::filesystem::path& path, std::span<const McExample> examples);

// Key-value retrieval task. Each passage lists `pairs_per_passage` pairs
// "k<i> v<j>"; the question names one key and the options are values from
// the same passage, exactly one of them paired with the key.
struct SyntheticTaskConfig {
  std::size_t n_keys = 24;
  std::size_t n_values = 24;
  std::size_t pairs_per_passage = 6;
  std::size_t options = 4;
  std::size_t n_train = 8000;
  std::size_t n_dev = 1000;
  std::size_t n_test = 1000;

  void validate() const;
};

struct DatasetSplits {
  std::vector<McExample> train;
  std::vector<McExample> dev;
  std::vector<McExample> test;
};

// Deterministic in (cfg, seed). Dev and test passages whose key-value pairing
// (plus queried key) already occurs in an earlier split are redrawn.
DatasetSplits gen_synthetic(const SyntheticTaskConfig& cfg, std::uint64_t seed);

// Token ids of one [CLS] P [SEP] Q [SEP] A [SEP] sequence.
struct EncodedOption {
  std::vector<int> token_ids;
  std::vector<int> seg_ids;           // 0 through the first [SEP], 1 after
  std::vector<std::uint8_t> pad_mask;  // 1 for real tokens
};

struct EncodedExample {
  std::string id;
  std::vector<EncodedOption> options;
  std::size_t gold = 0;
};

// The passage is truncated from the right to fit max_len; question and
// answer are never cut (ValidationError if they alone overflow).
EncodedExample encode_example(const McExample& example, const Vocab& vocab, std::size_t max_len);
std::vector<EncodedExample> encode_all(std::span<const McExample> examples, const Vocab& vocab,
                                       std::size_t max_len);

}  // namespace duma
