// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#include "duma/model.hpp"

#include <algorithm>
#include <numeric>

namespace duma {

std::string to_string(HeadMode mode) {
  switch (mode) {
    case HeadMode::duma: return "duma";
    case HeadMode::vanilla_sa: return "vanilla_sa";
    case HeadMode::sa_plus_ca: return "sa_plus_ca";
  }
  return "?";
}

HeadMode parse_head_mode(std::string_view text) {
  if (text == "duma") return HeadMode::duma;
  if (text == "vanilla_sa") return HeadMode::vanilla_sa;
  if (text == "sa_plus_ca") return HeadMode::sa_plus_ca;
  throw ValidationError("unknown head mode '" + std::string(text) +
                        "' (duma|vanilla_sa|sa_plus_ca)");
}

void ModelConfig::validate() const {
  if (d_model == 0 || heads == 0 || d_model % heads != 0)
    throw ValidationError("model: d_model " + std::to_string(d_model) +
                          " must be a positive multiple of heads " + std::to_string(heads));
  if (n_enc == 0) throw ValidationError("model: n_enc must be at least 1");
  if (ffn_multiplier == 0) throw ValidationError("model: ffn_multiplier must be at least 1");
  if (vocab_size < 4) throw ValidationError("model: vocab_size must cover the 4 special tokens");
  if (max_len < 6) throw ValidationError("model: max_len must be at least 6");
  if (init_std <= 0.0) throw ValidationError("model: init_std must be positive");
  if (attention_dropout < 0.0 || attention_dropout >= 1.0)
    throw ValidationError("model: attention_dropout must lie in [0, 1)");
  duma.validate();
}

std::size_t ModelConfig::head_width() const {
  return head_mode == HeadMode::duma ? duma.output_width(d_model) : d_model;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = cfg_.d_model;
  const double sd = cfg_.init_std;
  encoder.tok_emb = Tensor::randn({cfg_.vocab_size, d}, sd, rng, true);
  encoder.pos_emb = Tensor::randn({cfg_.max_len, d}, sd, rng, true);
  encoder.seg_emb = Tensor::randn({2, d}, sd, rng, true);
  const std::size_t n_blocks = cfg_.share_encoder_layers ? 1 : cfg_.n_enc;
  for (std::size_t i = 0; i < n_blocks; ++i) {
    EncoderBlock block{MhaParams::init(d, cfg_.heads, sd, rng), {}};
    block.sub = BlockSublayers::init(d, cfg_.ffn_multiplier * d, sd, rng);
    encoder.blocks.push_back(std::move(block));
  }
  if (cfg_.head_mode == HeadMode::duma) duma = DumaParams::init(cfg_.duma, d, cfg_.heads, sd, rng);
  if (cfg_.head_mode == HeadMode::vanilla_sa) vanilla = MhaParams::init(d, cfg_.heads, sd, rng);
  decoder.w = Tensor::randn({cfg_.head_width()}, sd, rng, true);
}

Tensor Model::encode(std::span<const int> token_ids, std::span<const int> seg_ids,
                     std::span<const std::uint8_t> pad_mask, AttentionDropout drop) const {
  const std::size_t len = token_ids.size();
  if (len == 0) throw ValidationError("encode: empty sequence");
  if (len > cfg_.max_len)
    throw ValidationError("encode: sequence length " + std::to_string(len) + " exceeds max_len " +
                          std::to_string(cfg_.max_len));
  if (seg_ids.size() != len || pad_mask.size() != len)
    throw DimensionError("encode: token, segment and mask lengths differ");
  std::vector<std::size_t> tok(len), pos(len), seg(len);
  for (std::size_t i = 0; i < len; ++i) {
    if (token_ids[i] < 0 || static_cast<std::size_t>(token_ids[i]) >= cfg_.vocab_size)
      throw ValidationError("encode: token id " + std::to_string(token_ids[i]) +
                            " outside vocabulary of " + std::to_string(cfg_.vocab_size));
    if (seg_ids[i] != 0 && seg_ids[i] != 1)
      throw ValidationError("encode: segment id " + std::to_string(seg_ids[i]));
    tok[i] = static_cast<std::size_t>(token_ids[i]);
    pos[i] = i;
    seg[i] = static_cast<std::size_t>(seg_ids[i]);
  }
  Tensor x = add(add(gather_rows(encoder.tok_emb, tok), gather_rows(encoder.pos_emb, pos)),
                 gather_rows(encoder.seg_emb, seg));

  for (std::size_t layer = 0; layer < cfg_.n_enc; ++layer) {
    const EncoderBlock& block = encoder.blocks[cfg_.share_encoder_layers ? 0 : layer];
    Tensor attended;
    if (cfg_.head_mode == HeadMode::sa_plus_ca) {
      SegmentedEncoding s = split_segments(x, seg_ids, pad_mask);
      Tensor ap = multi_head_attention(block.attn, s.e_p, s.e_qa, s.mask_qa, drop);
      Tensor aqa = multi_head_attention(block.attn, s.e_qa, s.e_p, s.mask_p, drop);
      // Reassemble sequence order; padding rows are taken from the passage side.
      std::vector<std::size_t> source(len);
      for (std::size_t i = 0; i < s.rows_p.size(); ++i) source[s.rows_p[i]] = i;
      for (std::size_t i = 0; i < s.rows_qa.size(); ++i)
        if (s.mask_qa[i]) source[s.rows_qa[i]] = s.rows_p.size() + i;
      const Tensor parts[] = {ap, aqa};
      attended = gather_rows(concat_rows(parts), source);
    } else {
      attended = multi_head_attention(block.attn, x, x, pad_mask, drop);
    }
    x = block.sub.apply(x, attended);
  }
  return x;
}

Tensor Model::option_vector(const EncodedOption& option, AttentionDropout drop) const {
  Tensor e = encode(option.token_ids, option.seg_ids, option.pad_mask, drop);
  switch (cfg_.head_mode) {
    case HeadMode::duma:
      return duma_forward(split_segments(e, option.seg_ids, option.pad_mask), *duma, cfg_.duma,
                          drop);
    case HeadMode::vanilla_sa:
      return mean_pool_rows(multi_head_attention(*vanilla, e, e, option.pad_mask, drop),
                            option.pad_mask);
    case HeadMode::sa_plus_ca:
      return mean_pool_rows(e, option.pad_mask);
  }
  throw ValidationError("unknown head mode");
}

Tensor Model::score_options(const EncodedExample& example, AttentionDropout drop) const {
  if (example.options.empty()) throw ValidationError("score_options: example has no options");
  std::vector<Tensor> logits;
  logits.reserve(example.options.size());
  for (const auto& option : example.options) logits.push_back(dot(decoder.w, option_vector(option, drop)));
  return stack_scalars(logits);
}

std::vector<NamedTensor> Model::named_parameters() const {
  std::vector<NamedTensor> out;
  auto add_mha = [&](const std::string& prefix, const MhaParams& p) {
    out.emplace_back(prefix + ".w_q", p.w_q);
    out.emplace_back(prefix + ".w_k", p.w_k);
    out.emplace_back(prefix + ".w_v", p.w_v);
    out.emplace_back(prefix + ".w_o", p.w_o);
  };
  auto add_sub = [&](const std::string& prefix, const BlockSublayers& s) {
    out.emplace_back(prefix + ".ln1.gamma", s.ln1.gamma);
    out.emplace_back(prefix + ".ln1.beta", s.ln1.beta);
    out.emplace_back(prefix + ".ffn.w1", s.ffn.w1);
    out.emplace_back(prefix + ".ffn.b1", s.ffn.b1);
    out.emplace_back(prefix + ".ffn.w2", s.ffn.w2);
    out.emplace_back(prefix + ".ffn.b2", s.ffn.b2);
    out.emplace_back(prefix + ".ln2.gamma", s.ln2.gamma);
    out.emplace_back(prefix + ".ln2.beta", s.ln2.beta);
  };
  out.emplace_back("encoder.tok_emb", encoder.tok_emb);
  out.emplace_back("encoder.pos_emb", encoder.pos_emb);
  out.emplace_back("encoder.seg_emb", encoder.seg_emb);
  for (std::size_t i = 0; i < encoder.blocks.size(); ++i) {
    const std::string prefix = "encoder.block" + std::to_string(i);
    add_mha(prefix + ".attn", encoder.blocks[i].attn);
    add_sub(prefix, encoder.blocks[i].sub);
  }
  if (duma) {
    for (std::size_t i = 0; i < duma->blocks.size(); ++i) {
      const std::string prefix = "duma.block" + std::to_string(i);
      add_mha(prefix + ".mha", duma->blocks[i].mha);
      if (duma->blocks[i].tb) add_sub(prefix + ".tb", *duma->blocks[i].tb);
    }
  }
  if (vanilla) add_mha("vanilla.mha", *vanilla);
  out.emplace_back("decoder.w", decoder.w);
  return out;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

Tensor loss(const Tensor& logits, std::size_t gold) { return cross_entropy(logits, gold); }

std::size_t predict(std::span<const double> logits) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

ParamCount count_params(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d_model, f = cfg.ffn_multiplier * d;
  const std::size_t blocks = cfg.share_encoder_layers ? 1 : cfg.n_enc;
  ParamCount c;
  c.encoder = cfg.vocab_size * d + cfg.max_len * d + 2 * d +
              blocks * (4 * d * d + 2 * d * f + f + d + 4 * d);
  switch (cfg.head_mode) {
    case HeadMode::duma: {
      std::size_t per_block = 4 * d * d;
      if (cfg.duma.variant == Variant::tb) per_block += 8 * d * d + 4 * d + d + 4 * d;
      c.head = cfg.duma.distinct_blocks() * per_block;
      break;
    }
    case HeadMode::vanilla_sa: c.head = 4 * d * d; break;
    case HeadMode::sa_plus_ca: c.head = 0; break;
  }
  c.decoder = cfg.head_width();
  return c;
}

ParamCount count_params(const Model& model) {
  ParamCount c;
  for (const auto& [name, t] : model.named_parameters()) {
    if (name.rfind("encoder.", 0) == 0) c.encoder += t.numel();
    else if (name.rfind("decoder.", 0) == 0) c.decoder += t.numel();
    else c.head += t.numel();
  }
  return c;
}

}  // namespace duma
