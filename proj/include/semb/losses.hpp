// include/semb/losses.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SEMB_LOSSES_HPP
#define SEMB_LOSSES_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "semb/tensor.hpp"

namespace semb {

enum class DistanceKind { SquaredEuclidean, Cosine };

inline DistanceKind distance_kind_from_name(const std::string& name) {
  if (name == "euc" || name == "sqeuclidean") return DistanceKind::SquaredEuclidean;
  if (name == "cos" || name == "cosine") return DistanceKind::Cosine;
  throw std::invalid_argument("unknown distance kind: " + name);
}

inline const char* distance_kind_name(DistanceKind k) {
  return k == DistanceKind::SquaredEuclidean ? "euc" : "cos";
}

inline Tensor distance(const Tensor& a, const Tensor& b, DistanceKind kind) {
  return kind == DistanceKind::SquaredEuclidean ? sq_euclidean(a, b)
                                                : cosine_distance(a, b);
}

inline double distance_value(const std::vector<double>& a,
                             const std::vector<double>& b, DistanceKind kind) {
  return kind == DistanceKind::SquaredEuclidean ? sq_euclidean_value(a, b)
                                                : cosine_distance_value(a, b);
}

struct Margin {
  double alpha = 0.2;

  Margin() = default;
  explicit Margin(double a) : alpha(a) {
    if (a < 0.0) throw std::invalid_argument("margin must be non-negative");
  }
};

struct Triplet {
  std::size_t anchor, positive, negative;
  bool operator==(const Triplet&) const = default;
};

struct Prototype {
  int speaker_id;
  std::vector<double> center;
};

// ---------------------------------------------------------------------------
// Triplet loss
// ---------------------------------------------------------------------------

/// Hinge over precomputed distances: max(0, d_ap - d_an + alpha).
inline Tensor triplet_loss(const Tensor& d_ap, const Tensor& d_an,
                           const Margin& margin) {
  return relu(add_const(sub(d_ap, d_an), margin.alpha));
}

inline double triplet_loss_value(double d_ap, double d_an,
                                 const Margin& margin) {
  return std::max(0.0, d_ap - d_an + margin.alpha);
}

/// All valid (anchor, positive, negative) index triples. (a,p) and (p,a) are
/// distinct anchors.
inline std::vector<Triplet> enumerate_triplets(const std::vector<int>& labels) {
  std::vector<Triplet> out;
  const std::size_t n = labels.size();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t p = 0; p < n; ++p) {
      if (a == p || labels[a] != labels[p]) continue;
      for (std::size_t neg = 0; neg < n; ++neg)
        if (labels[neg] != labels[a]) out.push_back({a, p, neg});
    }
  return out;
}

namespace detail {

// Distance tensors for exactly the index pairs the selected triplets touch.
class PairDistanceCache {
 public:
  PairDistanceCache(const std::vector<Tensor>& embeddings, DistanceKind kind)
      : embeddings_(embeddings), kind_(kind) {}

  const Tensor& get(std::size_t i, std::size_t j) {
    auto key = std::minmax(i, j);
    auto it = cache_.find(key);
    if (it == cache_.end())
      it = cache_
               .emplace(key, distance(embeddings_[key.first],
                                      embeddings_[key.second], kind_))
               .first;
    return it->second;
  }

 private:
  const std::vector<Tensor>& embeddings_;
  DistanceKind kind_;
  std::map<std::pair<std::size_t, std::size_t>, Tensor> cache_;
};

inline std::vector<std::vector<double>> pairwise_values(
    const std::vector<Tensor>& embeddings, DistanceKind kind) {
  const std::size_t n = embeddings.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      d[i][j] = d[j][i] =
          distance_value(embeddings[i].data(), embeddings[j].data(), kind);
  return d;
}

}  // namespace detail

/// J_TL over every valid triplet in the batch.
inline Tensor tl_batch_naive(const std::vector<Tensor>& embeddings,
                             const std::vector<int>& labels,
                             const Margin& margin, DistanceKind kind) {
  if (embeddings.size() != labels.size())
    throw std::invalid_argument("tl_batch: embeddings/labels size mismatch");
  auto triplets = enumerate_triplets(labels);
  if (triplets.empty())
    throw std::invalid_argument("batch contains no valid triplet");
  detail::PairDistanceCache dists(embeddings, kind);
  Tensor loss = Tensor::scalar(0.0);
  for (const auto& t : triplets)
    loss = add(loss, triplet_loss(dists.get(t.anchor, t.positive),
                                  dists.get(t.anchor, t.negative), margin));
  return loss;
}

/// Semi-hard selection over a precomputed distance matrix: for each ordered
/// positive pair, the closest negative farther than the positive; if none,
/// the farthest negative. Ties break to the lowest index.
inline std::vector<Triplet> semihard_selection(
    const std::vector<std::vector<double>>& dist,
    const std::vector<int>& labels) {
  const std::size_t n = labels.size();
  std::vector<Triplet> out;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t p = 0; p < n; ++p) {
      if (a == p || labels[a] != labels[p]) continue;
      const double d_ap = dist[a][p];
      std::size_t best = n, fallback = n;
      double best_d = std::numeric_limits<double>::infinity();
      double fallback_d = -std::numeric_limits<double>::infinity();
      for (std::size_t neg = 0; neg < n; ++neg) {
        if (labels[neg] == labels[a]) continue;
        const double d_an = dist[a][neg];
        if (d_an > d_ap && d_an < best_d) {
          best_d = d_an;
          best = neg;
        }
        if (d_an > fallback_d) {
          fallback_d = d_an;
          fallback = neg;
        }
      }
      if (fallback == n)
        throw std::invalid_argument(
            "semihard selection: no negative exists for anchor " +
            std::to_string(a));
      out.push_back({a, p, best != n ? best : fallback});
    }
  if (out.empty())
    throw std::invalid_argument("batch contains no valid triplet");
  return out;
}

/// J_TL over one selected negative per ordered positive pair.
inline Tensor tl_batch_semihard(const std::vector<Tensor>& embeddings,
                                const std::vector<int>& labels,
                                const Margin& margin, DistanceKind kind) {
  if (embeddings.size() != labels.size())
    throw std::invalid_argument("tl_batch: embeddings/labels size mismatch");
  auto dist = detail::pairwise_values(embeddings, kind);
  auto triplets = semihard_selection(dist, labels);
  detail::PairDistanceCache dists(embeddings, kind);
  Tensor loss = Tensor::scalar(0.0);
  for (const auto& t : triplets)
    loss = add(loss, triplet_loss(dists.get(t.anchor, t.positive),
                                  dists.get(t.anchor, t.negative), margin));
  return loss;
}

// ---------------------------------------------------------------------------
// Prototypical network loss
// ---------------------------------------------------------------------------

/// Per-speaker centroids of the support embeddings, in ascending label order.
inline std::vector<std::pair<int, Tensor>> compute_prototypes(
    const std::vector<Tensor>& support_embeddings,
    const std::vector<int>& support_labels) {
  if (support_embeddings.empty())
    throw std::invalid_argument("compute_prototypes: empty support set");
  if (support_embeddings.size() != support_labels.size())
    throw std::invalid_argument("compute_prototypes: size mismatch");
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < support_labels.size(); ++i)
    by_label[support_labels[i]].push_back(i);
  std::vector<std::pair<int, Tensor>> out;
  for (const auto& [label, idxs] : by_label) {
    Tensor acc = support_embeddings[idxs[0]];
    for (std::size_t i = 1; i < idxs.size(); ++i)
      acc = add(acc, support_embeddings[idxs[i]]);
    out.emplace_back(label, scale(acc, 1.0 / static_cast<double>(idxs.size())));
  }
  return out;
}

/// Value-only centroids for the evaluation protocols.
inline std::vector<Prototype> compute_prototypes_values(
    const std::vector<std::vector<double>>& support_embeddings,
    const std::vector<int>& support_labels) {
  if (support_embeddings.empty())
    throw std::invalid_argument("compute_prototypes: empty support set");
  if (support_embeddings.size() != support_labels.size())
    throw std::invalid_argument("compute_prototypes: size mismatch");
  std::map<int, std::pair<std::vector<double>, std::size_t>> acc;
  for (std::size_t i = 0; i < support_labels.size(); ++i) {
    auto& [sum, cnt] = acc[support_labels[i]];
    if (sum.empty()) sum.assign(support_embeddings[i].size(), 0.0);
    for (std::size_t j = 0; j < sum.size(); ++j)
      sum[j] += support_embeddings[i][j];
    ++cnt;
  }
  std::vector<Prototype> out;
  for (auto& [label, sc] : acc) {
    for (double& v : sc.first) v /= static_cast<double>(sc.second);
    out.push_back({label, std::move(sc.first)});
  }
  return out;
}

/// Softmax over negative distances to each prototype (max-subtracted).
inline std::vector<double> pnl_posterior(const std::vector<double>& query,
                                         const std::vector<Prototype>& protos,
                                         DistanceKind kind) {
  if (protos.empty())
    throw std::invalid_argument("pnl_posterior: no prototypes");
  std::vector<double> neg_d(protos.size());
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < protos.size(); ++k) {
    neg_d[k] = -distance_value(query, protos[k].center, kind);
    m = std::max(m, neg_d[k]);
  }
  double z = 0.0;
  for (double& v : neg_d) {
    v = std::exp(v - m);
    z += v;
  }
  for (double& v : neg_d) v /= z;
  return neg_d;
}

/// J_PNL = sum over queries of -log p(true speaker). Differentiable.
inline Tensor pnl_batch(const std::vector<Tensor>& support_embeddings,
                        const std::vector<int>& support_labels,
                        const std::vector<Tensor>& query_embeddings,
                        const std::vector<int>& query_labels,
                        DistanceKind kind) {
  if (query_embeddings.size() != query_labels.size())
    throw std::invalid_argument("pnl_batch: query size mismatch");
  auto protos = compute_prototypes(support_embeddings, support_labels);
  std::map<int, std::size_t> label_to_k;
  for (std::size_t k = 0; k < protos.size(); ++k)
    label_to_k[protos[k].first] = k;

  Tensor loss = Tensor::scalar(0.0);
  for (std::size_t j = 0; j < query_embeddings.size(); ++j) {
    auto it = label_to_k.find(query_labels[j]);
    if (it == label_to_k.end())
      throw std::invalid_argument("pnl_batch: query label " +
                                  std::to_string(query_labels[j]) +
                                  " has no prototype in the support set");
    std::vector<Tensor> d;
    d.reserve(protos.size());
    double d_min = std::numeric_limits<double>::infinity();
    for (const auto& [label, center] : protos) {
      d.push_back(distance(query_embeddings[j], center, kind));
      d_min = std::min(d_min, d.back().value());
    }
    // -log p = d_true + log sum_k exp(-d_k); stabilized by the detached
    // minimum distance (a constant shift leaves gradients unchanged).
    Tensor z = Tensor::scalar(0.0);
    for (const auto& dk : d) z = add(z, exp_op(scale(add_const(dk, -d_min), -1.0)));
    Tensor lse = add_const(log_op(z), -d_min);  // log-sum-exp(-d)
    loss = add(loss, add(d[it->second], lse));
  }
  return loss;
}

}  // namespace semb

#endif  // SEMB_LOSSES_HPP
