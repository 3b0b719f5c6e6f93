// include/semb/encoder.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SEMB_ENCODER_HPP
#define SEMB_ENCODER_HPP

#include <algorithm>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "semb/sequence.hpp"
#include "semb/tensor.hpp"

namespace semb {

struct EncoderConfig {
  std::size_t input_dim = 59;
  std::size_t hidden_dim = 16;    // per direction
  std::size_t embedding_dim = 16;
  std::uint64_t seed = 0;

  void validate() const {
    if (input_dim < 1 || hidden_dim < 1 || embedding_dim < 1)
      throw std::invalid_argument("encoder config: all dims must be >= 1");
  }
};

enum class Direction { Forward, Backward };

/// BiLSTM + FC parameters. Gate rows are laid out [i; f; g; o], H rows each.
struct EncoderParams {
  EncoderConfig cfg;
  Tensor wx_fwd, wh_fwd, b_fwd;  // [4H x D], [4H x H], [4H]
  Tensor wx_bwd, wh_bwd, b_bwd;
  Tensor fc_w, fc_b;             // [M x 2H], [M]

  // Declaration order; also the checkpoint serialization order.
  std::vector<Tensor> all() const {
    return {wx_fwd, wh_fwd, b_fwd, wx_bwd, wh_bwd, b_bwd, fc_w, fc_b};
  }

  static const std::vector<std::string>& names() {
    static const std::vector<std::string> n = {
        "wx_fwd", "wh_fwd", "b_fwd", "wx_bwd",
        "wh_bwd", "b_bwd",  "fc_w",  "fc_b"};
    return n;
  }

  void zero_grad() {
    for (auto t : all()) t.zero_grad();
  }

  EncoderParams clone() const {
    EncoderParams out;
    out.cfg = cfg;
    auto copy = [](const Tensor& t) {
      return Tensor(t.shape(), t.data(), t.requires_grad());
    };
    out.wx_fwd = copy(wx_fwd);
    out.wh_fwd = copy(wh_fwd);
    out.b_fwd = copy(b_fwd);
    out.wx_bwd = copy(wx_bwd);
    out.wh_bwd = copy(wh_bwd);
    out.b_bwd = copy(b_bwd);
    out.fc_w = copy(fc_w);
    out.fc_b = copy(fc_b);
    return out;
  }
};

namespace detail {

// Deterministic uniform in [0,1) from raw 64-bit output; avoids reliance on
// std::uniform_real_distribution internals for bit-reproducibility.
inline double next_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  std::vector<double> d(shape_numel(shape));
  for (double& v : d) v = (2.0 * next_uniform(rng) - 1.0) * bound;
  return Tensor(std::move(shape), std::move(d), /*requires_grad=*/true);
}

}  // namespace detail

/// Weights uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)]; forget-gate bias 1.
inline EncoderParams init_params(const EncoderConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.input_dim, h = cfg.hidden_dim,
                    m = cfg.embedding_dim;
  std::mt19937_64 rng(cfg.seed);
  EncoderParams p;
  p.cfg = cfg;
  const double bx = 1.0 / std::sqrt(static_cast<double>(d));
  const double bh = 1.0 / std::sqrt(static_cast<double>(h));
  const double bf = 1.0 / std::sqrt(static_cast<double>(2 * h));
  auto gate_bias = [h] {
    std::vector<double> b(4 * h, 0.0);
    for (std::size_t i = h; i < 2 * h; ++i) b[i] = 1.0;  // forget gate
    return b;
  };
  p.wx_fwd = detail::uniform_tensor({4 * h, d}, bx, rng);
  p.wh_fwd = detail::uniform_tensor({4 * h, h}, bh, rng);
  p.b_fwd = Tensor({4 * h}, gate_bias(), true);
  p.wx_bwd = detail::uniform_tensor({4 * h, d}, bx, rng);
  p.wh_bwd = detail::uniform_tensor({4 * h, h}, bh, rng);
  p.b_bwd = Tensor({4 * h}, gate_bias(), true);
  p.fc_w = detail::uniform_tensor({m, 2 * h}, bf, rng);
  p.fc_b = Tensor({m}, std::vector<double>(m, 0.0), true);
  return p;
}

/// One LSTM cell step built from taped elementwise ops. Used directly in unit
/// tests; the sequence path below fuses the recurrence for speed.
inline std::pair<Tensor, Tensor> lstm_step(const EncoderParams& p,
                                           Direction dir, const Tensor& x_t,
                                           const Tensor& h_prev,
                                           const Tensor& c_prev) {
  const std::size_t h = p.cfg.hidden_dim;
  if (h_prev.numel() != h || c_prev.numel() != h)
    throw std::invalid_argument("lstm_step: state dims must equal hidden_dim");
  const Tensor& wx = dir == Direction::Forward ? p.wx_fwd : p.wx_bwd;
  const Tensor& wh = dir == Direction::Forward ? p.wh_fwd : p.wh_bwd;
  const Tensor& b = dir == Direction::Forward ? p.b_fwd : p.b_bwd;
  Tensor z = add(add(matvec(wx, x_t), matvec(wh, h_prev)), b);
  Tensor gi = sigmoid_op(slice(z, 0, h));
  Tensor gf = sigmoid_op(slice(z, h, h));
  Tensor gg = tanh_op(slice(z, 2 * h, h));
  Tensor go = sigmoid_op(slice(z, 3 * h, h));
  Tensor c = add(mul(gf, c_prev), mul(gi, gg));
  Tensor h_new = mul(go, tanh_op(c));
  return {h_new, c};
}

namespace detail {

// Fused LSTM pass over a whole sequence with temporal mean pooling of the
// hidden states. Forward caches gate activations; backward is hand-rolled
// BPTT. One graph node per (sequence, direction).
inline Tensor lstm_direction_pooled(const EncoderParams& p, Direction dir,
                                    const FeatureSequence& seq) {
  const std::size_t d = p.cfg.input_dim, h = p.cfg.hidden_dim;
  const std::size_t t_len = seq.num_frames;
  if (seq.dim != d)
    throw std::invalid_argument("encode: feature dim " +
                                std::to_string(seq.dim) +
                                " does not match encoder input_dim " +
                                std::to_string(d));
  const Tensor& wx = dir == Direction::Forward ? p.wx_fwd : p.wx_bwd;
  const Tensor& wh = dir == Direction::Forward ? p.wh_fwd : p.wh_bwd;
  const Tensor& b = dir == Direction::Forward ? p.b_fwd : p.b_bwd;

  // Frames in processing order.
  auto xs = std::make_shared<std::vector<double>>(t_len * d);
  for (std::size_t s = 0; s < t_len; ++s) {
    const std::size_t t = dir == Direction::Forward ? s : t_len - 1 - s;
    for (std::size_t j = 0; j < d; ++j)
      (*xs)[s * d + j] = seq.at(t, j);
  }

  struct Cache {
    std::vector<double> gi, gf, gg, go, c, tc, hs;  // each t_len * h
  };
  auto cache = std::make_shared<Cache>();
  cache->gi.resize(t_len * h);
  cache->gf.resize(t_len * h);
  cache->gg.resize(t_len * h);
  cache->go.resize(t_len * h);
  cache->c.resize(t_len * h);
  cache->tc.resize(t_len * h);
  cache->hs.resize(t_len * h);

  const auto& wxd = wx.data();
  const auto& whd = wh.data();
  const auto& bd = b.data();
  std::vector<double> hprev(h, 0.0), cprev(h, 0.0), z(4 * h);
  std::vector<double> pooled(h, 0.0);
  for (std::size_t s = 0; s < t_len; ++s) {
    for (std::size_t r = 0; r < 4 * h; ++r) {
      double acc = bd[r];
      const double* wxr = &wxd[r * d];
      const double* xr = &(*xs)[s * d];
      for (std::size_t j = 0; j < d; ++j) acc += wxr[j] * xr[j];
      const double* whr = &whd[r * h];
      for (std::size_t j = 0; j < h; ++j) acc += whr[j] * hprev[j];
      z[r] = acc;
    }
    for (std::size_t j = 0; j < h; ++j) {
      const double gi = 1.0 / (1.0 + std::exp(-z[j]));
      const double gf = 1.0 / (1.0 + std::exp(-z[h + j]));
      const double gg = std::tanh(z[2 * h + j]);
      const double go = 1.0 / (1.0 + std::exp(-z[3 * h + j]));
      const double c = gf * cprev[j] + gi * gg;
      const double tc = std::tanh(c);
      const double hv = go * tc;
      cache->gi[s * h + j] = gi;
      cache->gf[s * h + j] = gf;
      cache->gg[s * h + j] = gg;
      cache->go[s * h + j] = go;
      cache->c[s * h + j] = c;
      cache->tc[s * h + j] = tc;
      cache->hs[s * h + j] = hv;
      hprev[j] = hv;
      cprev[j] = c;
      pooled[j] += hv;
    }
  }
  for (double& v : pooled) v /= static_cast<double>(t_len);

  auto wxn = wx.node();
  auto whn = wh.node();
  auto bn = b.node();
  return Tensor::from_op(
      Shape{h}, std::move(pooled), {wx, wh, b},
      [wxn, whn, bn, xs, cache, t_len, d, h](TensorNode& self) {
        std::vector<double> dh(h), dc(h, 0.0), dhnext(h, 0.0), dz(4 * h);
        const double inv_t = 1.0 / static_cast<double>(t_len);
        for (std::size_t s = t_len; s-- > 0;) {
          const std::size_t off = s * h;
          for (std::size_t j = 0; j < h; ++j) {
            dh[j] = self.grad[j] * inv_t + dhnext[j];
            const double go = cache->go[off + j];
            const double tc = cache->tc[off + j];
            const double dcj = dc[j] + dh[j] * go * (1.0 - tc * tc);
            const double gi = cache->gi[off + j];
            const double gf = cache->gf[off + j];
            const double gg = cache->gg[off + j];
            const double cprev = s > 0 ? cache->c[off - h + j] : 0.0;
            dz[j] = dcj * gg * gi * (1.0 - gi);
            dz[h + j] = dcj * cprev * gf * (1.0 - gf);
            dz[2 * h + j] = dcj * gi * (1.0 - gg * gg);
            dz[3 * h + j] = dh[j] * tc * go * (1.0 - go);
            dc[j] = dcj * gf;
          }
          const double* hprev = s > 0 ? &cache->hs[off - h] : nullptr;
          for (std::size_t r = 0; r < 4 * h; ++r) {
            const double g = dz[r];
            if (wxn->requires_grad) {
              double* wxg = &wxn->grad[r * d];
              const double* xr = &(*xs)[s * d];
              for (std::size_t j = 0; j < d; ++j) wxg[j] += g * xr[j];
            }
            if (whn->requires_grad && hprev)
              for (std::size_t j = 0; j < h; ++j)
                whn->grad[r * h + j] += g * hprev[j];
            if (bn->requires_grad) bn->grad[r] += g;
          }
          // dh_prev = Wh^T dz
          std::fill(dhnext.begin(), dhnext.end(), 0.0);
          if (s > 0)
            for (std::size_t r = 0; r < 4 * h; ++r) {
              const double g = dz[r];
              const double* whr = &whn->data[r * h];
              for (std::size_t j = 0; j < h; ++j) dhnext[j] += g * whr[j];
            }
        }
      });
}

}  // namespace detail

/// Full embedding path: BiLSTM, temporal mean pooling per direction,
/// concatenation, FC with tanh, L2 normalization. Output is unit-norm.
inline Tensor encode(const EncoderParams& p, const FeatureSequence& seq) {
  seq.validate();
  Tensor hf = detail::lstm_direction_pooled(p, Direction::Forward, seq);
  Tensor hb = detail::lstm_direction_pooled(p, Direction::Backward, seq);
  Tensor pooled = concat(hf, hb);
  Tensor fc = tanh_op(add(matvec(p.fc_w, pooled), p.fc_b));
  return l2_normalize(fc);
}

/// Tape-free embedding for evaluation; identical arithmetic to encode().
inline std::vector<double> encode_values(const EncoderParams& p,
                                         const FeatureSequence& seq) {
  seq.validate();
  const std::size_t h = p.cfg.hidden_dim, m = p.cfg.embedding_dim;
  std::vector<double> pooled(2 * h);
  for (Direction dir : {Direction::Forward, Direction::Backward}) {
    Tensor t = detail::lstm_direction_pooled(p, dir, seq);
    const std::size_t base = dir == Direction::Forward ? 0 : h;
    for (std::size_t j = 0; j < h; ++j) pooled[base + j] = t[j];
  }
  std::vector<double> fc(m);
  const auto& w = p.fc_w.data();
  const auto& b = p.fc_b.data();
  double nsq = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double acc = b[i];
    for (std::size_t j = 0; j < 2 * h; ++j) acc += w[i * 2 * h + j] * pooled[j];
    fc[i] = std::tanh(acc);
    nsq += fc[i] * fc[i];
  }
  const double norm = std::sqrt(nsq);
  if (norm <= kNormEps)
    throw std::domain_error("encode: embedding norm below epsilon");
  for (double& v : fc) v /= norm;
  return fc;
}

inline std::vector<Tensor> encode_batch(const EncoderParams& p,
                                        const std::vector<FeatureSequence>& seqs) {
  if (seqs.empty()) throw std::invalid_argument("encode_batch: empty batch");
  std::vector<Tensor> out;
  out.reserve(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    try {
      out.push_back(encode(p, seqs[i]));
    } catch (const std::exception& e) {
      throw std::runtime_error("encode_batch: item " + std::to_string(i) +
                               ": " + e.what());
    }
  }
  return out;
}

inline std::vector<std::vector<double>> encode_values_batch(
    const EncoderParams& p, const std::vector<FeatureSequence>& seqs,
    std::size_t n_threads = 1) {
  std::vector<std::vector<double>> out(seqs.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      out[i] = encode_values(p, seqs[i]);
  };
  if (n_threads <= 1 || seqs.size() < 2) {
    work(0, seqs.size());
    return out;
  }
  const std::size_t nt = std::min<std::size_t>(n_threads, seqs.size());
  std::vector<std::thread> workers;
  const std::size_t chunk = (seqs.size() + nt - 1) / nt;
  for (std::size_t w = 0; w < nt; ++w) {
    const std::size_t b = w * chunk;
    const std::size_t e = std::min(seqs.size(), b + chunk);
    if (b < e) workers.emplace_back(work, b, e);
  }
  for (auto& t : workers) t.join();
  return out;
}

}  // namespace semb

#endif  // SEMB_ENCODER_HPP
