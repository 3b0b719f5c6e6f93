// include/semb/eval.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SEMB_EVAL_HPP
#define SEMB_EVAL_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "semb/data.hpp"
#include "semb/losses.hpp"
#include "semb/sampler.hpp"
#include "semb/sequence.hpp"

namespace semb {

/// Anything that maps a sequence to an embedding; lets tests substitute
/// oracle or constant encoders for the real model.
using Embedder = std::function<std::vector<double>(const FeatureSequence&)>;

/// Scored verification trials. Scores are distances: smaller means "same".
struct TrialSet {
  std::vector<std::pair<double, bool>> trials;  // (score, is_same_speaker)

  std::size_t positives() const {
    std::size_t n = 0;
    for (const auto& t : trials) n += t.second;
    return n;
  }
  std::size_t negatives() const { return trials.size() - positives(); }
};

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

struct EvalReport {
  std::string task;
  std::string metric;
  std::vector<double> values;  // one per repeat
  double mean = 0.0;
  double stddev = 0.0;
};

inline EvalReport make_report(std::string task, std::string metric,
                              std::vector<double> values) {
  EvalReport r{std::move(task), std::move(metric), std::move(values)};
  const std::size_t n = r.values.size();
  if (n == 0) throw std::invalid_argument("report: no repeats");
  for (double v : r.values) r.mean += v;
  r.mean /= static_cast<double>(n);
  if (n > 1) {
    double ss = 0.0;
    for (double v : r.values) ss += (v - r.mean) * (v - r.mean);
    r.stddev = std::sqrt(ss / static_cast<double>(n - 1));
  }
  return r;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  return {{"task", r.task},
          {"metric", r.metric},
          {"repeats", r.values.size()},
          {"mean", r.mean},
          {"std", r.stddev},
          {"values", r.values}};
}

// ---------------------------------------------------------------------------
// ROC / EER
// ---------------------------------------------------------------------------

namespace detail {

inline void require_two_classes(const TrialSet& trials, const char* what) {
  if (trials.positives() == 0 || trials.negatives() == 0)
    throw std::invalid_argument(std::string(what) +
                                ": trials must contain both classes");
}

// Sorted unique scores, preceded by a sentinel below the minimum so the
// sweep starts at the (0,0) operating point.
inline std::vector<double> sweep_thresholds(const TrialSet& trials) {
  std::vector<double> s;
  s.reserve(trials.trials.size() + 1);
  for (const auto& t : trials.trials) s.push_back(t.first);
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  s.insert(s.begin(), s.front() - 1.0);
  return s;
}

}  // namespace detail

/// Threshold sweep; a trial is predicted "same" when score <= threshold.
inline RocCurve roc(const TrialSet& trials) {
  detail::require_two_classes(trials, "roc");
  const double np = static_cast<double>(trials.positives());
  const double nn = static_cast<double>(trials.negatives());
  RocCurve curve;
  for (double th : detail::sweep_thresholds(trials)) {
    std::size_t tp = 0, fp = 0;
    for (const auto& [score, same] : trials.trials)
      if (score <= th) (same ? tp : fp)++;
    curve.points.push_back({th, fp / nn, tp / np});
  }
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    curve.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return curve;
}

/// EER: the rate where false-acceptance equals false-rejection, linearly
/// interpolated between the adjacent sweep points where FAR-FRR changes sign.
inline double eer(const TrialSet& trials) {
  detail::require_two_classes(trials, "eer");
  const double np = static_cast<double>(trials.positives());
  const double nn = static_cast<double>(trials.negatives());
  double prev_far = 0.0, prev_frr = 1.0;  // below every score
  for (double th : detail::sweep_thresholds(trials)) {
    std::size_t fa = 0, fr = 0;
    for (const auto& [score, same] : trials.trials) {
      if (!same && score <= th) ++fa;   // accepted impostor
      if (same && score > th) ++fr;     // rejected target
    }
    const double far = fa / nn, frr = fr / np;
    const double d_prev = prev_far - prev_frr, d_cur = far - frr;
    if (d_cur >= 0.0) {
      if (d_cur == d_prev) return far;
      const double lambda = -d_prev / (d_cur - d_prev);
      return prev_far + lambda * (far - prev_far);
    }
    prev_far = far;
    prev_frr = frr;
  }
  return 1.0;  // unreachable: FAR-FRR is +1 at the max threshold
}

// ---------------------------------------------------------------------------
// Identification / verification protocols
// ---------------------------------------------------------------------------

/// Closest prototype; ties break to the lowest speaker id.
inline int identify(const std::vector<double>& query_embedding,
                    const std::vector<Prototype>& prototypes,
                    DistanceKind kind) {
  if (prototypes.empty()) throw std::invalid_argument("identify: no prototypes");
  int best_id = prototypes.front().speaker_id;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& p : prototypes) {
    const double d = distance_value(query_embedding, p.center, kind);
    if (d < best_d || (d == best_d && p.speaker_id < best_id)) {
      best_d = d;
      best_id = p.speaker_id;
    }
  }
  return best_id;
}

/// Same/different trials: n_pairs positive and n_pairs negative pairs drawn
/// uniformly; score = embedding distance.
inline TrialSet same_different_trials(const Dataset& dataset,
                                      const SpeakerPools& pools,
                                      std::size_t n_pairs,
                                      const Embedder& embedder,
                                      DistanceKind kind,
                                      std::size_t crop_frames,
                                      std::mt19937_64& rng) {
  std::vector<int> speakers;
  std::vector<const std::vector<std::size_t>*> utts;
  std::vector<std::size_t> multi;  // speakers with >= 2 segments
  for (const auto& [id, u] : pools) {
    speakers.push_back(id);
    utts.push_back(&u);
    if (u.size() >= 2) multi.push_back(speakers.size() - 1);
  }
  if (speakers.size() < 2 || multi.empty())
    throw std::invalid_argument(
        "same_different_trials: need >= 2 speakers and a speaker with >= 2 "
        "segments");

  auto draw = [&](std::size_t spk, std::size_t utt_idx) {
    const FeatureSequence& full = dataset.utterances[(*utts[spk])[utt_idx]];
    FeatureSequence seg = crop_frames == 0 || full.num_frames <= crop_frames
                              ? full
                              : crop_segment(full, crop_frames, rng);
    return embedder(seg);
  };

  TrialSet out;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const std::size_t spk = multi[rng_index(rng, multi.size())];
    auto pick = rng_choose(rng, utts[spk]->size(), 2);
    out.trials.emplace_back(
        distance_value(draw(spk, pick[0]), draw(spk, pick[1]), kind), true);
  }
  for (std::size_t i = 0; i < n_pairs; ++i) {
    auto pick = rng_choose(rng, speakers.size(), 2);
    const std::size_t u0 = rng_index(rng, utts[pick[0]]->size());
    const std::size_t u1 = rng_index(rng, utts[pick[1]]->size());
    out.trials.emplace_back(
        distance_value(draw(pick[0], u0), draw(pick[1], u1), kind), false);
  }
  return out;
}

/// K-way speaker identification: per repeat, enroll prototypes from n_enroll
/// segments per speaker and classify n_query queries each.
inline EvalReport si_task(const Dataset& dataset, const SpeakerPools& pools,
                          std::size_t k_way, std::size_t n_enroll,
                          std::size_t n_query, const Embedder& embedder,
                          DistanceKind kind, std::size_t crop_frames,
                          std::size_t repeats, std::mt19937_64& rng) {
  EpisodeSpec spec{k_way, n_enroll, n_query, crop_frames};
  std::vector<double> acc;
  for (std::size_t r = 0; r < repeats; ++r) {
    Episode task = sample_episode(dataset, pools, spec, rng);
    std::vector<std::vector<double>> enroll;
    std::vector<int> enroll_labels;
    for (const auto& s : task.support) {
      enroll.push_back(embedder(s));
      enroll_labels.push_back(s.speaker_id);
    }
    auto protos = compute_prototypes_values(enroll, enroll_labels);
    std::size_t correct = 0;
    for (const auto& q : task.query)
      correct += identify(embedder(q), protos, kind) == q.speaker_id;
    acc.push_back(static_cast<double>(correct) /
                  static_cast<double>(task.query.size()));
  }
  return make_report(std::to_string(k_way) + "-way " +
                         std::to_string(n_enroll) + "-shot SI",
                     "accuracy", std::move(acc));
}

/// Enrollment-based verification: prototypes from enrollment segments
/// totaling enroll_duration_frames, then positive/negative query scoring and
/// EER per repeat.
inline EvalReport sv_task(const Dataset& dataset, const SpeakerPools& pools,
                          std::size_t enroll_duration_frames,
                          std::size_t crop_frames, std::size_t n_pos,
                          std::size_t n_neg, const Embedder& embedder,
                          DistanceKind kind, std::size_t repeats,
                          std::mt19937_64& rng) {
  if (crop_frames == 0)
    throw std::invalid_argument("sv_task: crop_frames must be > 0");
  const std::size_t n_enroll =
      (enroll_duration_frames + crop_frames - 1) / crop_frames;

  std::vector<int> speakers;
  std::vector<const std::vector<std::size_t>*> utts;
  for (const auto& [id, u] : pools) {
    std::size_t ok = 0;
    for (std::size_t ui : u)
      ok += dataset.utterances[ui].num_frames >= crop_frames;
    if (ok >= n_enroll + 1) {
      speakers.push_back(id);
      utts.push_back(&u);
    }
  }
  if (speakers.size() < 2)
    throw std::invalid_argument(
        "sv_task: need >= 2 speakers with enough segments for enrollment");

  auto embed_utt = [&](std::size_t spk, std::size_t utt_idx) {
    const FeatureSequence& full = dataset.utterances[(*utts[spk])[utt_idx]];
    return embedder(full.num_frames <= crop_frames
                        ? full
                        : crop_segment(full, crop_frames, rng));
  };

  std::vector<double> eers;
  for (std::size_t r = 0; r < repeats; ++r) {
    TrialSet trials;
    for (std::size_t spk = 0; spk < speakers.size(); ++spk) {
      auto order = rng_choose(rng, utts[spk]->size(), utts[spk]->size());
      std::vector<std::vector<double>> enroll;
      for (std::size_t i = 0; i < n_enroll; ++i)
        enroll.push_back(embed_utt(spk, order[i]));
      auto proto = compute_prototypes_values(
          enroll, std::vector<int>(enroll.size(), speakers[spk]));
      const auto& center = proto.front().center;

      for (std::size_t i = 0; i < n_pos; ++i) {
        const std::size_t j =
            n_enroll + rng_index(rng, utts[spk]->size() - n_enroll);
        trials.trials.emplace_back(
            distance_value(embed_utt(spk, order[j]), center, kind), true);
      }
      for (std::size_t i = 0; i < n_neg; ++i) {
        std::size_t other = rng_index(rng, speakers.size() - 1);
        if (other >= spk) ++other;
        const std::size_t j = rng_index(rng, utts[other]->size());
        trials.trials.emplace_back(
            distance_value(embed_utt(other, j), center, kind), false);
      }
    }
    eers.push_back(eer(trials));
  }
  return make_report("SV enroll " + std::to_string(enroll_duration_frames) +
                         " frames",
                     "eer", std::move(eers));
}

// ---------------------------------------------------------------------------
// CSV export
// ---------------------------------------------------------------------------

inline void roc_to_csv(std::ostream& os, const RocCurve& curve) {
  os << "threshold,fpr,tpr\n";
  for (const auto& p : curve.points)
    os << p.threshold << "," << p.fpr << "," << p.tpr << "\n";
}

inline void report_values_to_csv(std::ostream& os, const EvalReport& r) {
  os << "repeat," << r.metric << "\n";
  for (std::size_t i = 0; i < r.values.size(); ++i)
    os << i << "," << r.values[i] << "\n";
}

}  // namespace semb

#endif  // SEMB_EVAL_HPP
