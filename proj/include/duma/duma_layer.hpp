// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

// Dual multi-head co-attention between the passage segment and the
// question-answer segment of one encoded option sequence.
//
// Branch naming follows the two halves of the layer:
//   passage-query branch (MHA_1): passage rows attend over question-answer rows;
//   qa-query branch      (MHA_2): question-answer rows attend over passage rows.
// Direction::p2q_only keeps only the passage-query branch, Direction::q2p_only
// only the qa-query branch.

#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "duma/attention.hpp"
#include "duma/layers.hpp"
#include "duma/tensor.hpp"

namespace duma {

enum class FuseMode { mul, sum, concat };
enum class Direction { both, p2q_only, q2p_only };
enum class Variant { plain, tb };

std::string to_string(FuseMode mode);
std::string to_string(Direction direction);
std::string to_string(Variant variant);
FuseMode parse_fuse_mode(std::string_view text);
Direction parse_direction(std::string_view text);
Variant parse_variant(std::string_view text);

struct DumaConfig {
  FuseMode fuse = FuseMode::concat;
  Direction direction = Direction::both;
  std::size_t layers = 2;  // stacking depth k
  Variant variant = Variant::plain;
  bool share_directions = true;  // both branches use one parameter set
  bool share_layers = true;      // all k layers use one parameter set

  void validate() const;
  // 2 * d_model for concat over both branches, d_model otherwise.
  std::size_t output_width(std::size_t d_model) const;
  // Number of branches that run (1 or 2).
  std::size_t active_branches() const { return direction == Direction::both ? 2 : 1; }
  // Number of distinct attention units after sharing.
  std::size_t distinct_blocks() const;
};

// FFN inner width of the transformer-block variant.
inline constexpr std::size_t kTbFfnMultiplier = 4;

struct DumaBlock {
  MhaParams mha;
  std::optional<BlockSublayers> tb;  // present iff variant == tb

  std::vector<Tensor> tensors() const;
};

struct DumaParams {
  std::vector<DumaBlock> blocks;  // cfg.distinct_blocks() entries

  static DumaParams init(const DumaConfig& cfg, std::size_t d_model, std::size_t heads,
                         double stddev, std::mt19937_64& rng);

  enum class Branch { passage_query, qa_query };
  const DumaBlock& block(const DumaConfig& cfg, std::size_t layer, Branch branch) const;
  std::vector<Tensor> tensors() const;
};

struct SegmentedEncoding {
  Tensor e_p;   // [l_p, d_model]
  Tensor e_qa;  // [l_qa, d_model]
  Mask mask_p;
  Mask mask_qa;
  // Row of the full sequence each segment row came from.
  std::vector<std::size_t> rows_p;
  std::vector<std::size_t> rows_qa;
};

// Routes unpadded rows to the passage (segment 0) or question-answer
// (segment 1) segment. Padding rows (pad_mask 0) are carried in both
// segments with mask 0. Throws ValidationError on a segment with no
// unmasked row, an id outside {0, 1}, or passage rows after QA rows.
SegmentedEncoding split_segments(const Tensor& e, std::span<const int> seg_ids,
                                 std::span<const std::uint8_t> pad_mask);

// mul -> u * v, sum -> u + v, concat -> [u; v]
Tensor fuse(const Tensor& u, const Tensor& v, FuseMode mode);

// Runs cfg.layers synchronous co-attention layers, masked-mean-pools the
// final sequences and fuses them. Single-branch directions return the pooled
// active branch; the inactive stream is carried unchanged between layers.
Tensor duma_forward(const SegmentedEncoding& seg, const DumaParams& params,
                    const DumaConfig& cfg, AttentionDropout drop = {});

}  // namespace duma
