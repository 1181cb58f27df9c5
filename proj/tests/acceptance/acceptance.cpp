// Copyright 2026 The DUMA Authors
// SPDX-License-Identifier: Apache-2.0

// Runs the ten acceptance criteria and prints one PASS/FAIL line for each,
// followed by the numbers behind it. Exit status is 0 only if all pass.
//
// Criteria 4 to 6 train 12 models at the full synthetic-task size and take
// most of the runtime.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "duma/ablation.hpp"
#include "duma/attention.hpp"
#include "duma/checkpoint.hpp"
#include "duma/config.hpp"
#include "duma/data.hpp"
#include "duma/duma_layer.hpp"
#include "duma/grad_check.hpp"
#include "duma/model.hpp"
#include "duma/train.hpp"
#include "test_util.hpp"

using namespace duma;
using duma::testing::bit_equal;
using duma::testing::max_abs_diff;
using duma::testing::weighted_sum;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << "  failed: " << what << '\n';
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double x, int prec = 4) {
  std::ostringstream os;
  os << std::setprecision(prec) << x;
  return os.str();
}

Tensor randn(Shape s, std::mt19937_64& rng, bool grad = true) {
  return Tensor::randn(std::move(s), 1.0, rng, grad);
}

// ---------------------------------------------------------------------------
// 1. Gradient suite

void criterion_gradients(Verdict& v) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(11);
  double worst = 0.0;
  std::string worst_name;
  std::size_t n_checks = 0;
  auto check = [&](const std::string& name, std::vector<Tensor> params,
                   const std::function<Tensor()>& f) {
    const double e = grad_check(f, params, 1e-5);
    ++n_checks;
    if (e > worst) {
      worst = e;
      worst_name = name;
    }
    v.require(e <= 1e-4, name + " relative error " + fmt(e));
  };

  {
    Tensor a = randn({3, 4}, rng), b = randn({4, 5}, rng);
    check("matmul", {a, b}, [&] { return weighted_sum(matmul(a, b)); });
    check("transpose", {a}, [&] { return weighted_sum(transpose(a)); });
  }
  {
    Tensor a = randn({3, 4}, rng), b = randn({3, 4}, rng), bias = randn({4}, rng);
    check("add", {a, b}, [&] { return weighted_sum(add(a, b)); });
    check("sub", {a, b}, [&] { return weighted_sum(sub(a, b)); });
    check("mul", {a, b}, [&] { return weighted_sum(mul(a, b)); });
    check("scale", {a}, [&] { return weighted_sum(scale(a, -1.7)); });
    check("add_bias", {a, bias}, [&] { return weighted_sum(add_bias(a, bias)); });
    check("relu", {a}, [&] { return weighted_sum(relu(a)); });
    check("reshape", {a}, [&] { return weighted_sum(reshape(a, {2, 6})); });
    check("softmax_last", {a}, [&] { return weighted_sum(softmax_last(a)); });
    check("sum", {a}, [&] { return sum(mul(a, a)); });
    check("concat_last", {a, b}, [&] { return weighted_sum(concat_last(a, b)); });
    check("slice_last", {a}, [&] { return weighted_sum(slice_last(a, 1, 2)); });
    check("concat_rows", {a, b}, [&] {
      const std::vector<Tensor> parts{a, b};
      return weighted_sum(concat_rows(parts));
    });
    check("gather_rows", {a}, [&] {
      const std::vector<std::size_t> rows{2, 0, 2};
      return weighted_sum(gather_rows(a, rows));
    });
    const Mask mask{1, 0, 1};
    check("mean_pool_rows", {a}, [&] { return weighted_sum(mean_pool_rows(a, mask)); });
    const std::vector<std::uint8_t> keys{1, 1, 0, 1};
    check("mask_keys", {a}, [&] { return weighted_sum(softmax_last(mask_keys(a, keys))); });
    check("dropout", {a}, [&] {
      std::mt19937_64 r(5);
      return weighted_sum(dropout(a, 0.3, r));
    });
    Tensor gamma = randn({4}, rng), beta = randn({4}, rng);
    check("layer_norm", {a, gamma, beta},
          [&] { return weighted_sum(layer_norm(a, gamma, beta)); });
  }
  {
    Tensor a = randn({6}, rng), b = randn({6}, rng);
    check("dot", {a, b}, [&] { return dot(a, b); });
    check("cross_entropy", {a}, [&] { return cross_entropy(a, 4); });
    check("stack_scalars", {a, b}, [&] {
      const std::vector<Tensor> parts{dot(a, b), sum(a), dot(a, a)};
      return weighted_sum(stack_scalars(parts));
    });
    for (FuseMode mode : {FuseMode::mul, FuseMode::sum, FuseMode::concat})
      check("fuse " + to_string(mode), {a, b}, [&] { return weighted_sum(fuse(a, b, mode)); });
  }
  {
    Tensor q = randn({2, 4}, rng), k = randn({3, 4}, rng), val = randn({3, 5}, rng);
    const std::vector<std::uint8_t> mask{1, 0, 1};
    check("scaled_dot_attention", {q, k, val},
          [&] { return weighted_sum(scaled_dot_attention(q, k, val, mask).context); });
    MhaParams p = MhaParams::init(8, 2, 0.5, rng);
    Tensor xq = randn({3, 8}, rng), xkv = randn({4, 8}, rng);
    const std::vector<std::uint8_t> kv_mask{1, 1, 0, 1};
    std::vector<Tensor> ps = p.tensors();
    ps.push_back(xq);
    ps.push_back(xkv);
    check("multi_head_attention", ps,
          [&] { return weighted_sum(multi_head_attention(p, xq, xkv, kv_mask)); });
  }
  {
    DumaConfig cfg;
    cfg.share_layers = false;
    DumaParams dp = DumaParams::init(cfg, 8, 2, 0.5, rng);
    SegmentedEncoding seg;
    seg.e_p = randn({4, 8}, rng);
    seg.e_qa = randn({3, 8}, rng);
    seg.mask_p = {1, 1, 1, 0};
    seg.mask_qa = {1, 1, 1};
    std::vector<Tensor> ps = dp.tensors();
    ps.push_back(seg.e_p);
    ps.push_back(seg.e_qa);
    check("duma_forward", ps, [&] { return weighted_sum(duma_forward(seg, dp, cfg)); });
  }
  {
    // End-to-end: d_model 8, 2 heads, k = 2, one 2-option example.
    const McExample ex{"grad", "k1 v2 k3 v4", "k3 ?", {"v2", "v4"}, 1};
    const Vocab vocab = Vocab::build(std::span(&ex, 1));
    ModelConfig mc;
    mc.d_model = 8;
    mc.heads = 2;
    mc.duma.layers = 2;
    mc.max_len = 16;
    mc.vocab_size = vocab.size();
    mc.init_std = 0.5;
    const EncodedExample enc = encode_example(ex, vocab, mc.max_len);
    for (FuseMode mode : {FuseMode::mul, FuseMode::sum, FuseMode::concat}) {
      mc.duma.fuse = mode;
      Model m(mc, 1);
      check("end-to-end loss, fuse " + to_string(mode), m.parameters(),
            [&] { return loss(m.score_options(enc), enc.gold); });
    }
  }
  const double secs = seconds_since(t0);
  v.require(secs < 60.0, "runtime " + fmt(secs) + " s");
  v.detail << "  " << n_checks << " checks, max relative error " << fmt(worst, 3) << " ("
           << worst_name << "), " << fmt(secs, 3) << " s\n";
}

// ---------------------------------------------------------------------------
// 2. Attention oracles

// Per-head loop over plain doubles, sharing no code with the library.
std::vector<double> brute_mha(const MhaParams& p, const std::vector<double>& xq, std::size_t lq,
                              const std::vector<double>& xkv, std::size_t lk,
                              const std::vector<std::uint8_t>& mask) {
  const std::size_t d = p.d_model(), h = p.heads, dh = p.d_head;
  const auto wq = p.w_q.data(), wk = p.w_k.data(), wv = p.w_v.data(), wo = p.w_o.data();
  auto proj = [&](const std::vector<double>& x, std::size_t rows, std::span<const double> w,
                  std::size_t col0) {
    std::vector<double> out(rows * dh, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < dh; ++c)
        for (std::size_t i = 0; i < d; ++i) out[r * dh + c] += x[r * d + i] * w[i * h * dh + col0 + c];
    return out;
  };
  std::vector<double> concat(lq * h * dh, 0.0);
  for (std::size_t head = 0; head < h; ++head) {
    const auto q = proj(xq, lq, wq, head * dh), k = proj(xkv, lk, wk, head * dh),
               val = proj(xkv, lk, wv, head * dh);
    for (std::size_t i = 0; i < lq; ++i) {
      std::vector<double> s(lk);
      double mx = -1e300;
      for (std::size_t j = 0; j < lk; ++j) {
        if (!mask[j]) continue;
        double acc = 0.0;
        for (std::size_t c = 0; c < dh; ++c) acc += q[i * dh + c] * k[j * dh + c];
        s[j] = acc / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, s[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < lk; ++j) z += mask[j] ? std::exp(s[j] - mx) : 0.0;
      for (std::size_t j = 0; j < lk; ++j) {
        if (!mask[j]) continue;
        const double w = std::exp(s[j] - mx) / z;
        for (std::size_t c = 0; c < dh; ++c) concat[i * h * dh + head * dh + c] += w * val[j * dh + c];
      }
    }
  }
  std::vector<double> out(lq * d, 0.0);
  for (std::size_t i = 0; i < lq; ++i)
    for (std::size_t c = 0; c < d; ++c)
      for (std::size_t r = 0; r < h * dh; ++r) out[i * d + c] += concat[i * h * dh + r] * wo[r * d + c];
  return out;
}

void criterion_attention(Verdict& v) {
  std::mt19937_64 rng(21);
  double worst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t heads = 1 + inst % 4, d = heads * (2 + inst % 3);
    const std::size_t lq = 1 + inst % 5, lk = 2 + (inst * 7) % 6;
    MhaParams p = MhaParams::init(d, heads, 0.7, rng);
    Tensor xq = randn({lq, d}, rng, false), xkv = randn({lk, d}, rng, false);
    std::vector<std::uint8_t> mask(lk, 1);
    if (lk > 2) mask[inst % lk] = 0;
    const Tensor got_t = multi_head_attention(p, xq, xkv, mask);
    const auto got = got_t.data();
    const auto want = brute_mha(p, {xq.data().begin(), xq.data().end()}, lq,
                                {xkv.data().begin(), xkv.data().end()}, lk, mask);
    worst = std::max(worst, max_abs_diff(got, want));
  }
  v.require(worst <= 1e-10, "per-head oracle deviation " + fmt(worst));

  bool hull = true, rows_sum = true, masked_zero = true, perm = true, bits = true;
  double perm_dev = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t lq = 3, lk = 6, dk = 4, dv = 5;
    Tensor q = randn({lq, dk}, rng, false), k = randn({lk, dk}, rng, false),
           val = randn({lk, dv}, rng, false);
    std::vector<std::uint8_t> mask{1, 0, 1, 1, 0, 1};
    const auto r = scaled_dot_attention(q, k, val, mask);
    const auto ctx = r.context.data(), w = r.weights.data(), vd = val.data();
    for (std::size_t i = 0; i < lq; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < lk; ++j) {
        row += w[i * lk + j];
        if (!mask[j]) masked_zero = masked_zero && w[i * lk + j] == 0.0;
      }
      rows_sum = rows_sum && std::fabs(row - 1.0) <= 1e-9;
      for (std::size_t c = 0; c < dv; ++c) {
        double lo = 1e300, hi = -1e300;
        for (std::size_t j = 0; j < lk; ++j)
          if (mask[j]) lo = std::min(lo, vd[j * dv + c]), hi = std::max(hi, vd[j * dv + c]);
        hull = hull && ctx[i * dv + c] >= lo && ctx[i * dv + c] <= hi;
      }
    }
    // Arbitrary data in masked key/value rows.
    Tensor k2 = Tensor::from(k.shape(), {k.data().begin(), k.data().end()});
    Tensor v2 = Tensor::from(val.shape(), {vd.begin(), vd.end()});
    for (std::size_t c = 0; c < dk; ++c) k2.mutable_data()[1 * dk + c] = 1e6 * (c + 1);
    for (std::size_t c = 0; c < dv; ++c) v2.mutable_data()[4 * dv + c] = -3e7;
    const auto r2 = scaled_dot_attention(q, k2, v2, mask);
    bits = bits && bit_equal(r2.context.data(), ctx) && bit_equal(r2.weights.data(), w);
    // Key/value row permutation, mask permuted alongside.
    std::vector<std::size_t> order(lk);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::uint8_t> pmask(lk);
    for (std::size_t j = 0; j < lk; ++j) pmask[j] = mask[order[j]];
    const auto r3 = scaled_dot_attention(q, gather_rows(k, order), gather_rows(val, order), pmask);
    perm_dev = std::max(perm_dev, max_abs_diff(r3.context.data(), ctx));
    for (std::size_t i = 0; i < lq; ++i)
      for (std::size_t j = 0; j < lk; ++j)
        perm_dev = std::max(perm_dev,
                            std::fabs(r3.weights.data()[i * lk + j] - w[i * lk + order[j]]));
  }
  perm = perm_dev <= 1e-12;
  v.require(hull, "context outside the convex hull of unmasked values");
  v.require(rows_sum, "weight rows do not sum to 1");
  v.require(masked_zero, "masked weights not exactly 0");
  v.require(bits, "masked rows changed the output");
  v.require(perm, "key permutation deviation " + fmt(perm_dev));
  v.detail << "  per-head oracle max deviation " << fmt(worst, 3)
           << " over 20 instances; permutation deviation " << fmt(perm_dev, 3) << '\n';
}

// ---------------------------------------------------------------------------
// 3. DUMA structure

void criterion_structure(Verdict& v) {
  const std::size_t d = 16;
  std::mt19937_64 rng(31);
  SegmentedEncoding seg;
  seg.e_p = randn({5, d}, rng, false);
  seg.e_qa = randn({3, d}, rng, false);
  seg.mask_p = {1, 1, 1, 0, 0};
  seg.mask_qa = {1, 1, 1};
  std::ostringstream widths;
  for (FuseMode fm : {FuseMode::mul, FuseMode::sum, FuseMode::concat})
    for (Direction dir : {Direction::both, Direction::p2q_only, Direction::q2p_only}) {
      DumaConfig cfg;
      cfg.fuse = fm;
      cfg.direction = dir;
      const std::size_t want = (fm == FuseMode::concat && dir == Direction::both) ? 2 * d : d;
      const DumaParams p = DumaParams::init(cfg, d, 4, 0.3, rng);
      const Tensor out = duma_forward(seg, p, cfg);
      v.require(out.rank() == 1 && out.dim(0) == want && cfg.output_width(d) == want,
                "width for " + to_string(fm) + "/" + to_string(dir));
      widths << ' ' << to_string(fm) << '/' << to_string(dir) << '=' << out.dim(0);

      // Passage padding rows replaced with arbitrary values.
      SegmentedEncoding alt = seg;
      std::vector<double> ep(seg.e_p.data().begin(), seg.e_p.data().end());
      for (std::size_t i = 3 * d; i < ep.size(); ++i) ep[i] = 1e4 * std::sin(double(i));
      alt.e_p = Tensor::from(seg.e_p.shape(), ep);
      v.require(bit_equal(duma_forward(alt, p, cfg).data(), out.data()),
                "padding perturbation changed " + to_string(fm) + "/" + to_string(dir));
    }

  std::vector<std::size_t> totals;
  ModelConfig mc;
  mc.vocab_size = 40;
  for (std::size_t k = 1; k <= 6; ++k) {
    mc.duma.layers = k;
    const std::size_t formula = count_params(mc).total();
    totals.push_back(count_params(Model(mc, 1)).total());
    v.require(formula == totals.back(), "closed-form count differs from the model at k=" +
                                            std::to_string(k));
  }
  v.require(std::all_of(totals.begin(), totals.end(), [&](auto t) { return t == totals[0]; }),
            "parameter count varies with k under sharing");
  v.detail << "  widths (d=16):" << widths.str() << "\n  params k=1..6 shared: " << totals[0]
           << " each\n";
}

// ---------------------------------------------------------------------------
// 4 to 6. Training on the synthetic task

struct Runs {
  std::string label;
  std::size_t params = 0;
  std::vector<double> test;
  std::vector<std::size_t> steps;
  double seconds = 0.0;
  double median() const { return duma::median(test); }
};

Runs train_variant(const std::string& label, const TrainConfig& cfg, const DatasetSplits& data) {
  Runs r;
  r.label = label;
  ModelConfig mc = cfg.model;
  mc.vocab_size = Vocab::build(data.train).size();
  r.params = count_params(mc).total();
  for (std::uint64_t seed : cfg.seeds) {
    const auto t0 = Clock::now();
    const TrainResult res = train(cfg, data, seed, config_hash(to_json(cfg)));
    const double secs = seconds_since(t0);
    r.seconds = std::max(r.seconds, secs);
    r.test.push_back(res.test_acc);
    r.steps.push_back(res.checkpoint.step);
    std::cerr << "  trained " << label << " seed " << seed << ": " << res.checkpoint.step
              << " steps, best dev " << fmt(res.checkpoint.best_dev) << ", test "
              << fmt(res.test_acc) << ", " << fmt(secs, 3) << " s\n";
  }
  return r;
}

std::string describe(const Runs& r) {
  std::ostringstream os;
  os << "  " << std::left << std::setw(12) << r.label << " params " << std::setw(8) << r.params
     << " median test " << fmt(r.median()) << "  per seed";
  for (std::size_t i = 0; i < r.test.size(); ++i)
    os << ' ' << fmt(r.test[i]) << " (" << r.steps[i] << " steps)";
  os << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// 8. Loss and accuracy formulas

void criterion_formulas(Verdict& v) {
  double worst = 0.0;
  for (std::size_t s = 2; s <= 8; ++s)
    for (double level : {0.0, 3.5, -120.0}) {
      const Tensor logits = Tensor::full({s}, level);
      for (std::size_t g = 0; g < s; ++g)
        worst = std::max(worst, std::fabs(loss(logits, g).item() - std::log(double(s))));
    }
  v.require(worst <= 1e-12, "uniform-logit loss deviates from ln s by " + fmt(worst));

  // A zero decoder gives equal logits, so every prediction is option 0.
  const std::vector<McExample> raw{{"a", "k1 v1", "k1 ?", {"v1", "v2"}, 0},
                                   {"b", "k2 v2", "k2 ?", {"v2", "v1"}, 0},
                                   {"c", "k1 v2", "k1 ?", {"v2", "v1", "v3"}, 0},
                                   {"d", "k2 v1", "k2 ?", {"v2", "v1"}, 1}};
  const Vocab vocab = Vocab::build(raw);
  ModelConfig mc;
  mc.d_model = 8;
  mc.heads = 2;
  mc.max_len = 16;
  mc.vocab_size = vocab.size();
  Model m(mc, 1);
  for (double& w : m.decoder.w.mutable_data()) w = 0.0;
  const auto data = encode_all(raw, vocab, mc.max_len);
  const double acc = evaluate(m, data);
  v.require(acc == 0.75, "3-of-4 dataset scored " + fmt(acc, 17));
  std::vector<EncodedExample> all_right(data.begin(), data.begin() + 3);
  v.require(evaluate(m, all_right) == 1.0, "3-of-3 dataset");
  std::vector<EncodedExample> none(data.begin() + 3, data.end());
  v.require(evaluate(m, none) == 0.0, "0-of-1 dataset");
  v.detail << "  max |loss - ln s| over s=2..8: " << fmt(worst, 3) << "; 3-of-4 -> " << acc
           << '\n';
}

// ---------------------------------------------------------------------------
// 9. Determinism

void criterion_determinism(Verdict& v) {
  SyntheticTaskConfig task;
  task.n_train = 200;
  task.n_dev = 50;
  task.n_test = 50;
  const DatasetSplits data = gen_synthetic(task, 3);
  const Vocab vocab = Vocab::build(data.train);
  const auto train_set = encode_all(data.train, vocab, 64);
  const auto dev_set = encode_all(data.dev, vocab, 64);
  TrainConfig cfg;
  cfg.model.d_model = 32;
  cfg.max_steps = 60;
  cfg.eval_every = 20;
  cfg.model.attention_dropout = 0.1;

  Trainer a(cfg, vocab, 7, "det"), b(cfg, vocab, 7, "det");
  a.run(train_set, dev_set);
  b.run(train_set, dev_set);
  const std::string ca = serialize_checkpoint(a.checkpoint()),
                    cb = serialize_checkpoint(b.checkpoint());
  v.require(a.log().to_jsonl() == b.log().to_jsonl(), "metrics logs differ");
  v.require(ca == cb, "checkpoints differ");

  Trainer first(cfg, vocab, 7, "det");
  first.run(train_set, dev_set, 27);
  Trainer resumed(deserialize_checkpoint(serialize_checkpoint(first.checkpoint())));
  resumed.run(train_set, dev_set);
  v.require(resumed.log().to_jsonl() == a.log().to_jsonl(), "resumed metrics log differs");
  v.require(serialize_checkpoint(resumed.checkpoint()) == ca, "resumed checkpoint differs");
  v.detail << "  " << a.steps_done() << " steps, metrics log " << a.log().to_jsonl().size()
           << " bytes, checkpoint " << ca.size() << " bytes; resumed at step 27\n";
}

// ---------------------------------------------------------------------------
// 10. DREAM loader

void criterion_dream(Verdict& v) {
  const char* movie = R"([
    [
      ["Woman: So, you have three days off, what are you going to do?",
       "Man: Well, I probably will rent some movies with my friend Bob."],
      [{"question": "What will the man probably do?",
        "choice": ["Ask for a three-day leave.", "Go out with his friend.",
                   "Watch films at home."],
        "answer": "Watch films at home."}],
      "5-510"
    ]
  ])";
  const auto ex = parse_dream(movie);
  v.require(ex.size() == 1, "expected one question");
  if (ex.empty()) return;
  v.require(ex[0].options.size() == 3, "s = " + std::to_string(ex[0].options.size()));
  v.require(ex[0].gold == 2, "gold index " + std::to_string(ex[0].gold));
  v.require(ex[0].question == "What will the man probably do?", "question text");
  v.detail << "  s=" << ex[0].options.size() << ", gold=" << ex[0].gold << " (\""
           << ex[0].options[ex[0].gold] << "\")\n";
}

}  // namespace

int main() {
  std::vector<std::pair<std::string, bool>> summary;
  auto report = [&](int n, const std::string& name, Verdict& v) {
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << n << ". " << name << '\n'
              << v.detail.str() << std::flush;
    summary.emplace_back(name, v.pass);
  };
  auto guarded = [&](int n, const std::string& name, const std::function<void(Verdict&)>& body) {
    Verdict v;
    try {
      body(v);
    } catch (const std::exception& e) {
      v.require(false, std::string("exception: ") + e.what());
    }
    report(n, name, v);
  };

  guarded(1, "gradient suite", criterion_gradients);
  guarded(2, "attention oracles", criterion_attention);
  guarded(3, "DUMA structure", criterion_structure);

  // Shared data and training runs for 4 to 6. Default TrainConfig: lr 1e-3,
  // batch 8, at most 5000 steps, dev check every 250 with patience 3.
  const DatasetSplits data = gen_synthetic(SyntheticTaskConfig{}, 1);
  const TrainConfig base;
  Runs duma_runs, vanilla_runs, p2q_runs, q2p_runs;
  Verdict v4, v5, v6;
  try {
    const auto t0 = Clock::now();
    duma_runs = train_variant("duma", base, data);
    TrainConfig vanilla = base;
    vanilla.model.head_mode = HeadMode::vanilla_sa;
    vanilla_runs = train_variant("vanilla_sa", vanilla, data);
    TrainConfig p2q = base, q2p = base;
    p2q.model.duma.direction = Direction::p2q_only;
    q2p.model.duma.direction = Direction::q2p_only;
    p2q_runs = train_variant("p2q_only", p2q, data);
    q2p_runs = train_variant("q2p_only", q2p, data);
    std::cerr << "  training for criteria 4-6: " << fmt(seconds_since(t0), 4) << " s\n";

    ModelConfig mc = base.model;
    mc.vocab_size = Vocab::build(data.train).size();
    Model untrained(mc, 1);
    const double chance = evaluate(untrained, encode_all(data.test, Vocab::build(data.train),
                                                         mc.max_len));
    const double n = static_cast<double>(data.test.size()), p = 1.0 / 4.0;
    const double sigma3 = 3.0 * std::sqrt(p * (1 - p) / n);
    v4.require(duma_runs.median() >= 0.90,
               "median test accuracy " + fmt(duma_runs.median()) + " < 0.90");
    v4.require(std::fabs(chance - p) <= sigma3, "untrained accuracy " + fmt(chance) +
                                                    " outside 0.25 +- " + fmt(sigma3));
    const std::size_t max_steps = *std::max_element(duma_runs.steps.begin(), duma_runs.steps.end());
    v4.require(max_steps <= 5000, "used " + std::to_string(max_steps) + " steps");
    v4.detail << describe(duma_runs) << "  untrained model: " << fmt(chance) << " (0.25 +- "
              << fmt(sigma3, 3) << ")\n  slowest seed " << fmt(duma_runs.seconds, 3) << " s\n";

    const bool ordered5 = duma_runs.median() >= vanilla_runs.median();
    v5.require(ordered5, "REGRESSION: duma median below vanilla_sa median");
    v5.detail << describe(duma_runs) << describe(vanilla_runs);

    const double best_uni = std::max(p2q_runs.median(), q2p_runs.median());
    v6.require(duma_runs.median() >= best_uni - 0.01,
               "REGRESSION: both " + fmt(duma_runs.median()) + " < best uni " + fmt(best_uni) +
                   " - 0.01");
    v6.detail << "  both = duma row above\n" << describe(p2q_runs) << describe(q2p_runs);
  } catch (const std::exception& e) {
    for (Verdict* v : {&v4, &v5, &v6}) v->require(false, std::string("exception: ") + e.what());
  }
  report(4, "synthetic task learning", v4);
  report(5, "head-mode ordering (duma >= vanilla_sa)", v5);
  report(6, "direction ordering (both >= best uni - 0.01)", v6);

  guarded(7, "layer sweep table", [&](Verdict& v) {
    // Presence and completeness of the table is the criterion; a short budget
    // on a reduced task keeps this step to a few minutes.
    SyntheticTaskConfig task;
    task.n_train = 2000;
    task.n_dev = 200;
    task.n_test = 200;
    const DatasetSplits small = gen_synthetic(task, 1);
    TrainConfig cfg = base;
    cfg.max_steps = 200;
    cfg.eval_every = 100;
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    const AblationReport rep = run_ablation(Suite::layer_sweep, cfg, small, seeds, 1, "sweep");
    v.require(rep.rows.size() == 6, std::to_string(rep.rows.size()) + " rows");
    for (std::size_t k = 1; k <= 6; ++k) {
      const auto& row = rep.row("k=" + std::to_string(k));
      v.require(row.test.size() == 3 && row.dev.size() == 3, "incomplete row k=" + std::to_string(k));
    }
    v.require(rep.runs.size() == 18, std::to_string(rep.runs.size()) + " runs");
    std::istringstream tsv(rep.to_tsv());
    for (std::string line; std::getline(tsv, line);) v.detail << "  " << line << '\n';
  });
  guarded(8, "loss and accuracy formulas", criterion_formulas);
  guarded(9, "determinism and resume", criterion_determinism);
  guarded(10, "DREAM loader", criterion_dream);

  std::size_t passed = 0;
  for (const auto& [name, ok] : summary) passed += ok;
  std::cout << passed << "/" << summary.size() << " criteria passed\n";
  return passed == summary.size() ? 0 : 1;
}
