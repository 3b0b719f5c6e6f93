// tests/test_eval.cpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "semb/data.hpp"
#include "semb/eval.hpp"

using namespace semb;

namespace {

TrialSet make_trials(const std::vector<double>& pos,
                     const std::vector<double>& neg) {
  TrialSet t;
  for (double s : pos) t.trials.emplace_back(s, true);
  for (double s : neg) t.trials.emplace_back(s, false);
  return t;
}

// Exhaustive threshold-sweep oracle: considers every candidate threshold,
// computes FAR/FRR directly, and interpolates at the sign change.
double oracle_eer(const TrialSet& trials) {
  std::vector<double> cand;
  for (const auto& [s, l] : trials.trials) cand.push_back(s);
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  cand.insert(cand.begin(), cand.front() - 1.0);

  double np = 0, nn = 0;
  for (const auto& [s, l] : trials.trials) (l ? np : nn)++;
  double pf = 0.0, pr = 1.0;
  for (double th : cand) {
    double fa = 0, fr = 0;
    for (const auto& [s, l] : trials.trials) {
      if (!l && s <= th) fa++;
      if (l && s > th) fr++;
    }
    const double far = fa / nn, frr = fr / np;
    if (far - frr >= 0.0) {
      const double d1 = pf - pr, d2 = far - frr;
      if (d2 == d1) return far;
      const double lam = -d1 / (d2 - d1);
      return pf + lam * (far - pf);
    }
    pf = far;
    pr = frr;
  }
  return 1.0;
}

// Brute-force ROC for small trial sets.
RocCurve oracle_roc(const TrialSet& trials) {
  std::vector<double> cand;
  for (const auto& [s, l] : trials.trials) cand.push_back(s);
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  cand.insert(cand.begin(), cand.front() - 1.0);
  double np = 0, nn = 0;
  for (const auto& [s, l] : trials.trials) (l ? np : nn)++;
  RocCurve c;
  for (double th : cand) {
    double tp = 0, fp = 0;
    for (const auto& [s, l] : trials.trials)
      if (s <= th) (l ? tp : fp)++;
    c.points.push_back({th, fp / nn, tp / np});
  }
  for (std::size_t i = 1; i < c.points.size(); ++i)
    c.auc += (c.points[i].fpr - c.points[i - 1].fpr) *
             (c.points[i].tpr + c.points[i - 1].tpr) * 0.5;
  return c;
}

}  // namespace

TEST_CASE("roc basics") {
  SECTION("perfect separation gives AUC 1") {
    auto t = make_trials({0.1, 0.2, 0.3}, {0.7, 0.8, 0.9});
    CHECK(roc(t).auc == Catch::Approx(1.0));
  }
  SECTION("constant scores give AUC 0.5") {
    auto t = make_trials({0.5, 0.5}, {0.5, 0.5});
    CHECK(roc(t).auc == Catch::Approx(0.5));
  }
  SECTION("single class raises") {
    auto t = make_trials({0.1, 0.2}, {});
    REQUIRE_THROWS_AS(roc(t), std::invalid_argument);
  }
  SECTION("endpoints and monotonicity") {
    std::mt19937_64 rng(3);
    auto t = make_trials({0.4, 0.1, 0.35, 0.9}, {0.3, 0.6, 0.8});
    auto c = roc(t);
    CHECK(c.points.front().fpr == 0.0);
    CHECK(c.points.front().tpr == 0.0);
    CHECK(c.points.back().fpr == 1.0);
    CHECK(c.points.back().tpr == 1.0);
    for (std::size_t i = 1; i < c.points.size(); ++i) {
      CHECK(c.points[i].fpr >= c.points[i - 1].fpr);
      CHECK(c.points[i].tpr >= c.points[i - 1].tpr);
    }
  }
  SECTION("hand-listed trials match brute-force sweep") {
    auto t = make_trials({0.15, 0.3, 0.45}, {0.2, 0.5, 0.6});
    auto got = roc(t);
    auto want = oracle_roc(t);
    REQUIRE(got.points.size() == want.points.size());
    for (std::size_t i = 0; i < got.points.size(); ++i) {
      CHECK(got.points[i].fpr == want.points[i].fpr);
      CHECK(got.points[i].tpr == want.points[i].tpr);
    }
    CHECK(got.auc == Catch::Approx(want.auc));
  }
}

TEST_CASE("eer basics") {
  CHECK(eer(make_trials({0.1, 0.2}, {0.8, 0.9})) == 0.0);
  CHECK(eer(make_trials({0.5, 0.5, 0.5}, {0.5, 0.5})) ==
        Catch::Approx(0.5));
  REQUIRE_THROWS_AS(eer(make_trials({}, {0.3})), std::invalid_argument);

  SECTION("fixed example matches sweep oracle") {
    auto t = make_trials({0.1, 0.2, 0.4}, {0.3, 0.5, 0.6});
    CHECK(std::abs(eer(t) - oracle_eer(t)) <= 1e-9);
  }
}

TEST_CASE("eer matches exhaustive oracle on random trial sets") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> pos, neg;
    const std::size_t np = 1 + rng() % 25, nn = 1 + rng() % 25;
    for (std::size_t i = 0; i < np; ++i) pos.push_back(u(rng));
    for (std::size_t i = 0; i < nn; ++i) neg.push_back(0.2 + 0.7 * u(rng));
    auto t = make_trials(pos, neg);
    CHECK(std::abs(eer(t) - oracle_eer(t)) <= 1e-9);
  }
}

TEST_CASE("roc and eer are rank statistics") {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> pos, neg;
    for (int i = 0; i < 8; ++i) pos.push_back(u(rng));
    for (int i = 0; i < 8; ++i) neg.push_back(u(rng) * 1.2);
    auto t = make_trials(pos, neg);
    // strictly increasing transform: x -> exp(3x) + x
    TrialSet warped;
    for (auto [s, l] : t.trials)
      warped.trials.emplace_back(std::exp(3.0 * s) + s, l);
    CHECK(std::abs(eer(t) - eer(warped)) <= 1e-9);
    CHECK(std::abs(roc(t).auc - roc(warped).auc) <= 1e-9);
  }
}

TEST_CASE("eer label-flip symmetry") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    TrialSet t;
    for (int i = 0; i < 10; ++i) t.trials.emplace_back(u(rng), i % 2 == 0);
    TrialSet flipped;
    for (auto [s, l] : t.trials) flipped.trials.emplace_back(-s, !l);
    CHECK(std::abs(eer(t) - eer(flipped)) <= 1e-9);
  }
}

TEST_CASE("identify") {
  std::vector<Prototype> protos = {{0, {1, 0}}, {1, {0, 1}}, {2, {-1, 0}}};
  SECTION("single prototype") {
    CHECK(identify({0.3, 0.3}, {{5, {0, 0}}},
                   DistanceKind::SquaredEuclidean) == 5);
  }
  SECTION("query at a prototype") {
    CHECK(identify({0, 1}, protos, DistanceKind::SquaredEuclidean) == 1);
  }
  SECTION("equidistant tie breaks to lowest id") {
    CHECK(identify({0, 0}, protos, DistanceKind::SquaredEuclidean) == 0);
  }
  SECTION("invariant under strictly increasing distance transforms") {
    // squared Euclidean on unit-ish vectors vs cosine on the same data give
    // the same argmin when embeddings are unit norm
    std::vector<Prototype> unit = {{0, {1, 0}}, {1, {0, 1}}};
    std::vector<double> q = {0.8, 0.6};
    CHECK(identify(q, unit, DistanceKind::SquaredEuclidean) ==
          identify(q, unit, DistanceKind::Cosine));
  }
}

namespace {

// Corpus whose first feature value is the speaker id; lets us build an
// analytic oracle encoder (one-hot of speaker).
std::pair<Dataset, SpeakerPools> labeled_dataset(std::size_t n_speakers,
                                                 std::size_t n_utts,
                                                 std::size_t frames) {
  Dataset ds;
  ds.feature_dim = 1;
  SpeakerPools pools;
  for (std::size_t s = 0; s < n_speakers; ++s)
    for (std::size_t u = 0; u < n_utts; ++u) {
      FeatureSequence seq;
      seq.speaker_id = static_cast<int>(s);
      seq.source_id = static_cast<std::int64_t>(ds.utterances.size());
      seq.dim = 1;
      seq.num_frames = frames;
      seq.frames.assign(frames, static_cast<double>(s));
      pools[seq.speaker_id].push_back(ds.utterances.size());
      ds.utterances.push_back(std::move(seq));
    }
  return {std::move(ds), std::move(pools)};
}

Embedder one_hot_oracle(std::size_t n_speakers) {
  return [n_speakers](const FeatureSequence& s) {
    std::vector<double> e(n_speakers, 0.0);
    e[static_cast<std::size_t>(s.frames[0])] = 1.0;
    return e;
  };
}

}  // namespace

TEST_CASE("same_different_trials") {
  auto [ds, pools] = labeled_dataset(4, 5, 10);
  std::mt19937_64 rng(19);

  SECTION("constant encoder gives all-zero scores") {
    Embedder constant = [](const FeatureSequence&) {
      return std::vector<double>{1.0, 0.0};
    };
    auto t = same_different_trials(ds, pools, 20, constant,
                                   DistanceKind::SquaredEuclidean, 0, rng);
    CHECK(t.trials.size() == 40);
    for (const auto& [s, l] : t.trials) CHECK(s == 0.0);
  }
  SECTION("oracle encoder separates perfectly") {
    auto t = same_different_trials(ds, pools, 25, one_hot_oracle(4),
                                   DistanceKind::SquaredEuclidean, 0, rng);
    CHECK(t.positives() == 25);
    CHECK(t.negatives() == 25);
    for (const auto& [s, l] : t.trials) CHECK(s == (l ? 0.0 : 2.0));
    CHECK(roc(t).auc == 1.0);
    CHECK(eer(t) == 0.0);
  }
}

TEST_CASE("si_task") {
  auto [ds, pools] = labeled_dataset(8, 10, 6);
  std::mt19937_64 rng(23);

  SECTION("oracle encoder gives perfect accuracy with zero std") {
    auto report = si_task(ds, pools, 5, 3, 4, one_hot_oracle(8),
                          DistanceKind::SquaredEuclidean, 0, 10, rng);
    CHECK(report.mean == 1.0);
    CHECK(report.stddev == 0.0);
    CHECK(report.values.size() == 10);
  }
  SECTION("constant encoder converges to chance within 3 sigma") {
    Embedder constant = [](const FeatureSequence&) {
      return std::vector<double>{0.5, 0.5};
    };
    const std::size_t k = 4, repeats = 500, n_query = 2;
    auto report = si_task(ds, pools, k, 2, n_query, constant,
                          DistanceKind::SquaredEuclidean, 0, repeats, rng);
    // constant embeddings make every query a k-way tie broken to the lowest
    // id; correctness is then hitting that speaker, probability 1/k per query
    const double p = 1.0 / k;
    const std::size_t n_trials = repeats * k * n_query;
    const double sigma = std::sqrt(p * (1 - p) / n_trials);
    CHECK(std::abs(report.mean - p) < 3 * sigma + 1e-12);
  }
}

TEST_CASE("sv_task with oracle encoder gives zero EER") {
  auto [ds, pools] = labeled_dataset(5, 12, 8);
  std::mt19937_64 rng(29);
  auto report = sv_task(ds, pools, 16, 8, 5, 5, one_hot_oracle(5),
                        DistanceKind::SquaredEuclidean, 5, rng);
  CHECK(report.mean == 0.0);
  CHECK(report.stddev == 0.0);
}

TEST_CASE("report statistics") {
  auto r = make_report("t", "m", {0.5});
  CHECK(r.stddev == 0.0);
  auto r2 = make_report("t", "m", {0.4, 0.6, 0.5});
  CHECK(r2.mean == Catch::Approx(0.5));
  CHECK(r2.mean >= 0.4);
  CHECK(r2.mean <= 0.6);
  auto j = report_to_json(r2);
  CHECK(j["repeats"] == 3);
  CHECK(j["values"].size() == 3);
}
