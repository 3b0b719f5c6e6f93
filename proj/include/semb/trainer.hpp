// include/semb/trainer.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SEMB_TRAINER_HPP
#define SEMB_TRAINER_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "semb/data.hpp"
#include "semb/encoder.hpp"
#include "semb/eval.hpp"
#include "semb/losses.hpp"
#include "semb/sampler.hpp"

namespace semb {

enum class LossKind { PNL, TLNaive, TLSemihard };

inline const char* loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::PNL: return "pnl";
    case LossKind::TLNaive: return "tl-naive";
    case LossKind::TLSemihard: return "tl-semi";
  }
  throw std::invalid_argument("bad loss kind");
}

inline LossKind loss_kind_from_name(const std::string& s) {
  if (s == "pnl") return LossKind::PNL;
  if (s == "tl-naive") return LossKind::TLNaive;
  if (s == "tl-semi") return LossKind::TLSemihard;
  throw std::invalid_argument("unknown loss kind: " + s);
}

struct ValidationSpec {
  std::size_t k_way = 5;
  std::size_t n_enroll = 3;
  std::size_t n_query = 5;
  std::size_t repeats = 5;
};

struct TrainConfig {
  LossKind loss_kind = LossKind::PNL;
  DistanceKind dist = DistanceKind::SquaredEuclidean;
  EpisodeSpec episode;
  Margin margin{0.2};
  double learning_rate = 1e-3;
  std::size_t epochs = 100;
  // Unset: one approximate pass over the training segments per epoch.
  std::optional<std::size_t> episodes_per_epoch;
  std::uint64_t seed = 0;
  ValidationSpec validation;

  void validate() const {
    if (learning_rate <= 0.0)
      throw std::invalid_argument("train config: learning_rate must be > 0");
    if (epochs < 1)
      throw std::invalid_argument("train config: epochs must be >= 1");
    episode.validate();
  }
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::vector<std::vector<double>> m, v;

  void init(const std::vector<Tensor>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.numel(), 0.0);
      v.emplace_back(p.numel(), 0.0);
    }
    step = 0;
  }
};

/// Standard Adam update with bias correction, in place.
inline void adam_step(std::vector<Tensor>& params, AdamState& state,
                      double lr) {
  if (state.m.size() != params.size())
    throw std::invalid_argument("adam_step: state not initialized for params");
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto& g = params[p].grad();
    if (g.size() != params[p].numel())
      throw std::invalid_argument("adam_step: parameter " + std::to_string(p) +
                                  " has no gradient");
    auto& data = params[p].mutable_data();
    auto& m = state.m[p];
    auto& v = state.v[p];
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!std::isfinite(g[i]))
        throw std::runtime_error("adam_step: non-finite gradient in parameter " +
                                 std::to_string(p) + " at element " +
                                 std::to_string(i));
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      data[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + state.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct EpochStat {
  std::size_t epoch;
  double train_loss;  // mean episode loss
  double val_metric;  // SI accuracy on the validation split
};

struct TrainResult {
  EncoderParams params;  // from the best validation epoch
  std::vector<EpochStat> history;
  std::size_t best_epoch = 0;
};

inline Tensor episode_loss(const EncoderParams& params, const Episode& ep,
                           const TrainConfig& cfg) {
  if (cfg.loss_kind == LossKind::PNL) {
    auto support = encode_batch(params, ep.support);
    auto query = encode_batch(params, ep.query);
    return pnl_batch(support, batch_labels(ep.support), query,
                     batch_labels(ep.query), cfg.dist);
  }
  auto batch = episode_to_tl_batch(ep);
  auto embeddings = encode_batch(params, batch);
  auto labels = batch_labels(batch);
  return cfg.loss_kind == LossKind::TLNaive
             ? tl_batch_naive(embeddings, labels, cfg.margin, cfg.dist)
             : tl_batch_semihard(embeddings, labels, cfg.margin, cfg.dist);
}

/// Episodic training with Adam and best-validation-epoch selection. Fully
/// deterministic given (seed, config, dataset).
inline TrainResult train(const Dataset& dataset,
                         const DatasetManifest& manifest,
                         const EncoderConfig& encoder_cfg,
                         const TrainConfig& cfg) {
  cfg.validate();
  auto train_pools = split_view(manifest, Split::Train);
  auto val_pools = split_view(manifest, Split::Validation);

  EncoderParams params = init_params(encoder_cfg);
  std::vector<Tensor> tensors = params.all();
  AdamState adam;
  adam.init(tensors);

  std::size_t train_segments = 0;
  for (const auto& [id, utts] : train_pools) train_segments += utts.size();
  const std::size_t episodes =
      cfg.episodes_per_epoch.value_or(
          (train_segments + cfg.episode.batch_size() - 1) /
          cfg.episode.batch_size());

  std::mt19937_64 train_rng(cfg.seed);
  const std::uint64_t val_seed = cfg.seed ^ 0x9e3779b97f4a7c15ull;

  TrainResult result;
  result.params = params.clone();
  double best_metric = -1.0;

  Embedder embedder = [&params](const FeatureSequence& s) {
    return encode_values(params, s);
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    for (std::size_t e = 0; e < episodes; ++e) {
      Episode ep = sample_episode(dataset, train_pools, cfg.episode, train_rng);
      Tensor loss;
      try {
        loss = episode_loss(params, ep, cfg);
        backward(loss);
      } catch (const std::exception& err) {
        throw std::runtime_error("train: epoch " + std::to_string(epoch) +
                                 " episode " + std::to_string(e) + ": " +
                                 err.what());
      }
      loss_sum += loss.value();
      adam_step(tensors, adam, cfg.learning_rate);
      params.zero_grad();
    }
    const double mean_loss =
        episodes > 0 ? loss_sum / static_cast<double>(episodes) : 0.0;

    double val_metric = 0.0;
    if (!val_pools.empty()) {
      // Same validation tasks every epoch, for comparable model selection.
      std::mt19937_64 val_rng(val_seed);
      val_metric = si_task(dataset, val_pools, cfg.validation.k_way,
                           cfg.validation.n_enroll, cfg.validation.n_query,
                           embedder, cfg.dist, cfg.episode.crop_frames,
                           cfg.validation.repeats, val_rng)
                       .mean;
    }
    result.history.push_back({epoch, mean_loss, val_metric});
    if (val_metric > best_metric) {
      best_metric = val_metric;
      result.best_epoch = epoch;
      result.params = params.clone();
    }
  }
  if (val_pools.empty()) result.params = params.clone();
  return result;
}

inline void history_to_csv(std::ostream& os,
                           const std::vector<EpochStat>& history) {
  os << "epoch,train_loss,val_metric\n";
  for (const auto& h : history)
    os << h.epoch << "," << h.train_loss << "," << h.val_metric << "\n";
}

// ---------------------------------------------------------------------------
// Checkpoints: magic "SEMC", version u32, length-prefixed JSON config, then
// parameter tensors in declaration order (rank u32, dims u32s, float64 LE).
// ---------------------------------------------------------------------------

constexpr std::uint32_t kCheckpointVersion = 1;

inline void checkpoint_save(const std::string& path,
                            const EncoderParams& params,
                            const nlohmann::json& extra = nlohmann::json::object()) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write("SEMC", 4);
  detail::write_raw<std::uint32_t>(os, kCheckpointVersion);
  nlohmann::json cfg = {{"encoder",
                         {{"input_dim", params.cfg.input_dim},
                          {"hidden_dim", params.cfg.hidden_dim},
                          {"embedding_dim", params.cfg.embedding_dim},
                          {"seed", params.cfg.seed}}},
                        {"extra", extra}};
  const std::string payload = cfg.dump();
  detail::write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(payload.size()));
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  for (const auto& t : params.all()) {
    detail::write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape())
      detail::write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : t.data()) detail::write_raw<double>(os, v);
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline std::pair<EncoderParams, nlohmann::json> checkpoint_load(
    const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SEMC", 4) != 0)
    throw FormatError("checkpoint: bad magic");
  const auto version = detail::read_raw<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " +
                      std::to_string(version));
  const auto len = detail::read_raw<std::uint32_t>(is, "config length");
  std::string payload(len, '\0');
  is.read(payload.data(), len);
  if (!is) throw FormatError("checkpoint: truncated config");
  nlohmann::json cfg;
  try {
    cfg = nlohmann::json::parse(payload);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad config JSON: ") + e.what());
  }

  EncoderConfig ec;
  try {
    const auto& enc = cfg.at("encoder");
    ec.input_dim = enc.at("input_dim").get<std::size_t>();
    ec.hidden_dim = enc.at("hidden_dim").get<std::size_t>();
    ec.embedding_dim = enc.at("embedding_dim").get<std::size_t>();
    ec.seed = enc.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad encoder config: ") +
                      e.what());
  }

  EncoderParams params = init_params(ec);
  for (auto t : params.all()) {
    const auto rank = detail::read_raw<std::uint32_t>(is, "tensor rank");
    if (rank != t.rank()) throw FormatError("checkpoint: tensor rank mismatch");
    Shape shape(rank);
    for (auto& d : shape)
      d = detail::read_raw<std::uint32_t>(is, "tensor dim");
    if (shape != t.shape())
      throw FormatError("checkpoint: tensor shape mismatch");
    for (double& v : t.mutable_data())
      v = detail::read_raw<double>(is, "tensor data");
  }
  return {std::move(params), cfg.at("extra")};
}

}  // namespace semb

#endif  // SEMB_TRAINER_HPP
