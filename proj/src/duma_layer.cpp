// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#include "duma/duma_layer.hpp"

#include <algorithm>

namespace duma {

std::string to_string(FuseMode mode) {
  switch (mode) {
    case FuseMode::mul: return "mul";
    case FuseMode::sum: return "sum";
    case FuseMode::concat: return "concat";
  }
  return "?";
}

std::string to_string(Direction direction) {
  switch (direction) {
    case Direction::both: return "both";
    case Direction::p2q_only: return "p2q_only";
    case Direction::q2p_only: return "q2p_only";
  }
  return "?";
}

std::string to_string(Variant variant) {
  return variant == Variant::plain ? "plain" : "tb";
}

FuseMode parse_fuse_mode(std::string_view text) {
  if (text == "mul") return FuseMode::mul;
  if (text == "sum") return FuseMode::sum;
  if (text == "concat") return FuseMode::concat;
  throw ValidationError("unknown fuse mode '" + std::string(text) + "' (mul|sum|concat)");
}

Direction parse_direction(std::string_view text) {
  if (text == "both") return Direction::both;
  if (text == "p2q_only") return Direction::p2q_only;
  if (text == "q2p_only") return Direction::q2p_only;
  throw ValidationError("unknown direction '" + std::string(text) +
                        "' (both|p2q_only|q2p_only)");
}

Variant parse_variant(std::string_view text) {
  if (text == "plain") return Variant::plain;
  if (text == "tb") return Variant::tb;
  throw ValidationError("unknown variant '" + std::string(text) + "' (plain|tb)");
}

void DumaConfig::validate() const {
  if (layers < 1) throw ValidationError("duma: layer count must be at least 1");
}

std::size_t DumaConfig::output_width(std::size_t d_model) const {
  return (fuse == FuseMode::concat && direction == Direction::both) ? 2 * d_model : d_model;
}

std::size_t DumaConfig::distinct_blocks() const {
  return (share_layers ? 1 : layers) * (share_directions ? 1 : active_branches());
}

std::vector<Tensor> DumaBlock::tensors() const {
  auto out = mha.tensors();
  if (tb) {
    auto extra = tb->tensors();
    out.insert(out.end(), extra.begin(), extra.end());
  }
  return out;
}

DumaParams DumaParams::init(const DumaConfig& cfg, std::size_t d_model, std::size_t heads,
                            double stddev, std::mt19937_64& rng) {
  cfg.validate();
  DumaParams params;
  for (std::size_t i = 0; i < cfg.distinct_blocks(); ++i) {
    DumaBlock block{MhaParams::init(d_model, heads, stddev, rng), std::nullopt};
    if (cfg.variant == Variant::tb)
      block.tb = BlockSublayers::init(d_model, kTbFfnMultiplier * d_model, stddev, rng);
    params.blocks.push_back(std::move(block));
  }
  return params;
}

const DumaBlock& DumaParams::block(const DumaConfig& cfg, std::size_t layer, Branch branch) const {
  const std::size_t per_layer = cfg.share_directions ? 1 : cfg.active_branches();
  std::size_t side = 0;
  if (!cfg.share_directions && cfg.direction == Direction::both)
    side = branch == Branch::passage_query ? 0 : 1;
  const std::size_t index = (cfg.share_layers ? 0 : layer) * per_layer + side;
  if (index >= blocks.size())
    throw ValidationError("duma: parameters hold " + std::to_string(blocks.size()) +
                          " blocks, config needs " + std::to_string(cfg.distinct_blocks()));
  return blocks[index];
}

std::vector<Tensor> DumaParams::tensors() const {
  std::vector<Tensor> out;
  for (const auto& b : blocks) {
    auto t = b.tensors();
    out.insert(out.end(), t.begin(), t.end());
  }
  return out;
}

SegmentedEncoding split_segments(const Tensor& e, std::span<const int> seg_ids,
                                 std::span<const std::uint8_t> pad_mask) {
  if (e.rank() != 2 || seg_ids.size() != e.dim(0) || pad_mask.size() != e.dim(0))
    throw DimensionError("split_segments: encoding " + shape_str(e.shape()) + " with " +
                         std::to_string(seg_ids.size()) + " segment ids and " +
                         std::to_string(pad_mask.size()) + " mask entries");
  SegmentedEncoding seg;
  bool seen_qa = false;
  std::size_t live_p = 0, live_qa = 0;
  for (std::size_t i = 0; i < seg_ids.size(); ++i) {
    const int id = seg_ids[i];
    if (id != 0 && id != 1)
      throw ValidationError("split_segments: segment id " + std::to_string(id) + " at row " +
                            std::to_string(i));
    if (!pad_mask[i]) {
      seg.rows_p.push_back(i);
      seg.mask_p.push_back(0);
      seg.rows_qa.push_back(i);
      seg.mask_qa.push_back(0);
    } else if (id == 0) {
      if (seen_qa)
        throw ValidationError("split_segments: passage row " + std::to_string(i) +
                              " follows question-answer rows");
      seg.rows_p.push_back(i);
      seg.mask_p.push_back(1);
      ++live_p;
    } else {
      seen_qa = true;
      seg.rows_qa.push_back(i);
      seg.mask_qa.push_back(1);
      ++live_qa;
    }
  }
  if (live_p == 0) throw ValidationError("empty passage segment");
  if (live_qa == 0) throw ValidationError("empty QA segment");
  seg.e_p = gather_rows(e, seg.rows_p);
  seg.e_qa = gather_rows(e, seg.rows_qa);
  return seg;
}

Tensor fuse(const Tensor& u, const Tensor& v, FuseMode mode) {
  if (u.shape() != v.shape())
    throw DimensionError("fuse: width mismatch " + shape_str(u.shape()) + " vs " +
                         shape_str(v.shape()));
  switch (mode) {
    case FuseMode::mul: return mul(u, v);
    case FuseMode::sum: return add(u, v);
    case FuseMode::concat: return concat_last(u, v);
  }
  throw ValidationError("fuse: unknown mode");
}

namespace {

Tensor attend(const DumaBlock& block, const Tensor& query, const Tensor& kv,
              std::span<const std::uint8_t> kv_mask, AttentionDropout drop) {
  Tensor out = multi_head_attention(block.mha, query, kv, kv_mask, drop);
  return block.tb ? block.tb->apply(query, out) : out;
}

}  // namespace

Tensor duma_forward(const SegmentedEncoding& seg, const DumaParams& params,
                    const DumaConfig& cfg, AttentionDropout drop) {
  cfg.validate();
  const bool run_p = cfg.direction != Direction::q2p_only;
  const bool run_qa = cfg.direction != Direction::p2q_only;
  Tensor p = seg.e_p;
  Tensor qa = seg.e_qa;
  for (std::size_t layer = 0; layer < cfg.layers; ++layer) {
    Tensor next_p = run_p ? attend(params.block(cfg, layer, DumaParams::Branch::passage_query),
                                   p, qa, seg.mask_qa, drop)
                          : p;
    Tensor next_qa = run_qa ? attend(params.block(cfg, layer, DumaParams::Branch::qa_query), qa,
                                     p, seg.mask_p, drop)
                            : qa;
    p = std::move(next_p);
    qa = std::move(next_qa);
  }
  if (!run_qa) return mean_pool_rows(p, seg.mask_p);
  if (!run_p) return mean_pool_rows(qa, seg.mask_qa);
  return fuse(mean_pool_rows(p, seg.mask_p), mean_pool_rows(qa, seg.mask_qa), cfg.fuse);
}

}  // namespace duma
