// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

#include "duma/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "duma/errors.hpp"

namespace duma {

double evaluate(const Model& model, std::span<const EncodedExample> data) {
  if (data.empty()) throw ValidationError("evaluate: empty dataset");
  NoGradGuard no_grad;
  std::size_t correct = 0;
  for (const auto& ex : data) {
    const Tensor logits = model.score_options(ex);
    if (predict(logits.data()) == ex.gold) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double evaluate(const Checkpoint& ckpt, std::span<const McExample> data) {
  if (data.empty()) throw ValidationError("evaluate: empty dataset");
  const Vocab vocab = Vocab::from_tokens(ckpt.vocab);
  const Model model = model_from_checkpoint(ckpt);
  return evaluate(model, encode_all(data, vocab, ckpt.config.model.max_len));
}

namespace {

std::mt19937_64 loop_rng(std::uint64_t seed) {
  // Separate stream from the one that initialises the weights.
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    0x5eedu};
  return std::mt19937_64(seq);
}

TrainConfig with_vocab(TrainConfig cfg, const Vocab& vocab) {
  cfg.validate();
  if (cfg.model.vocab_size == 0) cfg.model.vocab_size = vocab.size();
  if (cfg.model.vocab_size != vocab.size())
    throw ValidationError("train: model vocab_size " + std::to_string(cfg.model.vocab_size) +
                          " does not match vocabulary of " + std::to_string(vocab.size()));
  return cfg;
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg, const Vocab& vocab, std::uint64_t seed,
                 std::string config_hash)
    : cfg_(with_vocab(cfg, vocab)),
      vocab_(vocab),
      seed_(seed),
      model_(cfg_.model, seed),
      params_(model_.parameters()),
      rng_(loop_rng(seed)) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
  log_.seed = seed;
  log_.config_hash = std::move(config_hash);
}

Trainer::Trainer(const Checkpoint& ck)
    : cfg_(with_vocab(ck.config, Vocab::from_tokens(ck.vocab))),
      vocab_(Vocab::from_tokens(ck.vocab)),
      seed_(ck.seed),
      model_(cfg_.model, ck.seed),
      params_(model_.parameters()),
      best_(ck.best),
      step_(ck.step),
      epoch_(ck.epoch),
      order_(ck.order),
      cursor_(ck.cursor),
      best_dev_(ck.best_dev),
      best_step_(ck.best_step),
      evals_since_best_(ck.evals_since_best),
      finished_(ck.finished),
      log_(ck.log) {
  load_parameters(model_, ck.params);
  if (ck.adam_m.size() != params_.size() || ck.adam_v.size() != params_.size())
    throw ValidationError("checkpoint: optimizer state does not match the model");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (ck.adam_m[i].values.size() != params_[i].numel() ||
        ck.adam_v[i].values.size() != params_[i].numel())
      throw ValidationError("checkpoint: optimizer state for " + ck.adam_m[i].name +
                            " has the wrong size");
    m_.push_back(ck.adam_m[i].values);
    v_.push_back(ck.adam_v[i].values);
  }
  std::istringstream in(ck.rng_state);
  in >> rng_;
  if (!in) throw ValidationError("checkpoint: unreadable RNG state");
  if (!log_.wall_seconds.empty()) elapsed_before_ = log_.wall_seconds.back().second;
}

void Trainer::reshuffle(std::size_t n) {
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

double Trainer::step(std::span<const EncodedExample> batch, std::span<const std::size_t> ids) {
  const std::size_t t = step_ + 1;
  const double lr = lr_at(t, cfg_);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  AttentionDropout drop{cfg_.model.attention_dropout, &rng_};
  double total = 0.0;
  for (const auto& ex : batch) {
    Tensor l = loss(model_.score_options(ex, drop), ex.gold);
    if (!std::isfinite(l.item())) {
      std::ostringstream os;
      os << "non-finite loss at step " << t << " (lr " << lr << ", batch ids";
      for (auto id : ids) os << ' ' << id;
      os << ")";
      throw TrainingError(os.str());
    }
    total += l.item();
    backward(scale(l, inv_b));
  }

  double clip = 1.0;
  if (cfg_.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& p : params_)
      if (p.has_grad())
        for (double g : p.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > cfg_.grad_clip) clip = cfg_.grad_clip / norm;
  }

  const auto& a = cfg_.adam;
  const double bc1 = 1.0 - std::pow(a.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(a.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    auto w = p.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    const bool has = p.has_grad();
    const std::span<const double> g = has ? p.grad() : std::span<const double>{};
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = has ? g[j] * clip : 0.0;
      m[j] = a.beta1 * m[j] + (1.0 - a.beta1) * gj;
      v[j] = a.beta2 * v[j] + (1.0 - a.beta2) * gj * gj;
      w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + a.eps);
    }
    p.zero_grad();
  }
  step_ = t;
  const double mean = total * inv_b;
  log_.steps.push_back({t, mean, lr});
  return mean;
}

void Trainer::evaluate_dev(std::span<const EncodedExample> dev) {
  const double acc = evaluate(model_, dev);
  log_.evals.push_back({step_, acc});
  const double secs =
      elapsed_before_ +
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  log_.wall_seconds.emplace_back(step_, secs);
  if (acc > best_dev_) {
    best_dev_ = acc;
    best_step_ = step_;
    best_ = snapshot_parameters(model_);
    evals_since_best_ = 0;
  } else {
    ++evals_since_best_;
  }
}

void Trainer::run(std::span<const EncodedExample> train, std::span<const EncodedExample> dev,
                  std::optional<std::size_t> pause_at) {
  if (train.empty()) throw ValidationError("train: empty training set");
  started_ = std::chrono::steady_clock::now();
  if (!order_.empty() && order_.size() != train.size())
    throw ValidationError("train: resumed order covers " + std::to_string(order_.size()) +
                          " examples, training set has " + std::to_string(train.size()));
  std::vector<EncodedExample> batch;
  std::vector<std::size_t> ids;
  while (!finished_ && !(pause_at && step_ >= *pause_at)) {
    batch.clear();
    ids.clear();
    while (batch.size() < cfg_.batch_size) {
      if (cursor_ >= order_.size()) {
        if (!order_.empty()) {
          if (cfg_.epochs > 0 && epoch_ + 1 >= cfg_.epochs) break;
          ++epoch_;
        }
        reshuffle(train.size());
      }
      ids.push_back(order_[cursor_]);
      batch.push_back(train[order_[cursor_++]]);
    }
    if (batch.empty()) {
      finished_ = true;
      break;
    }
    step(batch, ids);
    const bool last = step_ >= cfg_.max_steps;
    if (!dev.empty() && (step_ % cfg_.eval_every == 0 || last)) {
      evaluate_dev(dev);
      if (cfg_.patience > 0 && evals_since_best_ >= cfg_.patience) finished_ = true;
    }
    if (last) finished_ = true;
  }
  elapsed_before_ +=
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  if (finished_ && !log_.final) log_.final = FinalRecord{best_step_, std::max(best_dev_, 0.0), {}};
}

Model Trainer::best_model() const {
  Model m(cfg_.model, seed_);
  load_parameters(m, best_.empty() ? snapshot_parameters(model_) : best_);
  return m;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.config = cfg_;
  c.vocab = vocab_.tokens();
  c.seed = seed_;
  c.params = snapshot_parameters(model_);
  c.best = best_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& name = c.params[i].name;
    c.adam_m.push_back({name, params_[i].shape(), m_[i]});
    c.adam_v.push_back({name, params_[i].shape(), v_[i]});
  }
  c.step = step_;
  c.epoch = epoch_;
  c.order = order_;
  c.cursor = cursor_;
  std::ostringstream os;
  os << rng_;
  c.rng_state = os.str();
  c.best_dev = best_dev_;
  c.best_step = best_step_;
  c.evals_since_best = evals_since_best_;
  c.finished = finished_;
  c.log = log_;
  c.log.wall_seconds.clear();
  return c;
}

TrainResult train(const TrainConfig& cfg, const DatasetSplits& data, std::uint64_t seed,
                  const std::string& config_hash) {
  const Vocab vocab = Vocab::build(data.train);
  Trainer trainer(cfg, vocab, seed, config_hash);
  const std::size_t max_len = trainer.model().config().max_len;
  const auto train_enc = encode_all(data.train, vocab, max_len);
  const auto dev_enc = encode_all(data.dev, vocab, max_len);
  trainer.run(train_enc, dev_enc);
  TrainResult r;
  if (!data.test.empty()) {
    r.test_acc = evaluate(trainer.best_model(), encode_all(data.test, vocab, max_len));
    trainer.log().final->test_acc = r.test_acc;
  }
  r.checkpoint = trainer.checkpoint();
  r.log = trainer.log();
  return r;
}

}  // namespace duma
