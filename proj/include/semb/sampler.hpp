// include/semb/sampler.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SEMB_SAMPLER_HPP
#define SEMB_SAMPLER_HPP

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "semb/data.hpp"
#include "semb/sequence.hpp"

namespace semb {

struct EpisodeSpec {
  std::size_t k_way = 15;
  std::size_t n_shot = 3;
  std::size_t n_query = 5;
  std::size_t crop_frames = 200;  // 0 = use whole utterances

  void validate() const {
    if (k_way < 2) throw std::invalid_argument("episode spec: k_way must be >= 2");
    if (n_shot < 1 || n_query < 1)
      throw std::invalid_argument("episode spec: n_shot and n_query must be >= 1");
  }

  std::size_t batch_size() const { return k_way * (n_shot + n_query); }
};

struct Episode {
  std::vector<FeatureSequence> support;
  std::vector<FeatureSequence> query;
};

/// Contiguous window of exactly `frames` rows at a uniformly random offset.
inline FeatureSequence crop_segment(const FeatureSequence& seq,
                                    std::size_t frames, std::mt19937_64& rng) {
  if (frames < 1) throw std::invalid_argument("crop_segment: frames must be >= 1");
  if (seq.num_frames < frames)
    throw std::invalid_argument("crop_segment: sequence has " +
                                std::to_string(seq.num_frames) +
                                " frames, need " + std::to_string(frames));
  const std::size_t offset = rng_index(rng, seq.num_frames - frames + 1);
  FeatureSequence out;
  out.dim = seq.dim;
  out.num_frames = frames;
  out.speaker_id = seq.speaker_id;
  out.source_id = seq.source_id;
  out.frames.assign(seq.frames.begin() + offset * seq.dim,
                    seq.frames.begin() + (offset + frames) * seq.dim);
  return out;
}

/// K-way episode: speakers uniformly without replacement, then per speaker
/// n_shot + n_query distinct segments split into support and query. Segments
/// shorter than the crop window are excluded from sampling.
inline Episode sample_episode(const Dataset& dataset, const SpeakerPools& pools,
                              const EpisodeSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  const std::size_t per_speaker = spec.n_shot + spec.n_query;

  std::vector<int> speakers;
  std::vector<std::vector<std::size_t>> eligible;
  for (const auto& [id, utts] : pools) {
    std::vector<std::size_t> ok;
    for (std::size_t u : utts)
      if (spec.crop_frames == 0 ||
          dataset.utterances[u].num_frames >= spec.crop_frames)
        ok.push_back(u);
    if (ok.size() >= per_speaker) {
      speakers.push_back(id);
      eligible.push_back(std::move(ok));
    }
  }
  if (speakers.size() < spec.k_way)
    throw std::invalid_argument(
        "sample_episode: need " + std::to_string(spec.k_way) +
        " speakers with >= " + std::to_string(per_speaker) +
        " usable segments, have " + std::to_string(speakers.size()));

  Episode ep;
  for (std::size_t si : rng_choose(rng, speakers.size(), spec.k_way)) {
    const auto& pool = eligible[si];
    auto picks = rng_choose(rng, pool.size(), per_speaker);
    for (std::size_t i = 0; i < per_speaker; ++i) {
      const FeatureSequence& full = dataset.utterances[pool[picks[i]]];
      FeatureSequence seg = spec.crop_frames == 0
                                ? full
                                : crop_segment(full, spec.crop_frames, rng);
      (i < spec.n_shot ? ep.support : ep.query).push_back(std::move(seg));
    }
  }
  return ep;
}

/// Support and query flattened into one labeled batch of size
/// k_way * (n_shot + n_query); keeps mini-batch size parity with PNL.
inline std::vector<FeatureSequence> episode_to_tl_batch(const Episode& ep) {
  std::vector<FeatureSequence> out;
  out.reserve(ep.support.size() + ep.query.size());
  out.insert(out.end(), ep.support.begin(), ep.support.end());
  out.insert(out.end(), ep.query.begin(), ep.query.end());
  return out;
}

inline std::vector<int> batch_labels(const std::vector<FeatureSequence>& batch) {
  std::vector<int> out;
  out.reserve(batch.size());
  for (const auto& s : batch) out.push_back(s.speaker_id);
  return out;
}

}  // namespace semb

#endif  // SEMB_SAMPLER_HPP
