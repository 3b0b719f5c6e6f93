// include/semb/data.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SEMB_DATA_HPP
#define SEMB_DATA_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "semb/sequence.hpp"

namespace semb {

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Split { Train, Validation, Test, Unseen };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
    case Split::Unseen: return "unseen";
  }
  throw std::invalid_argument("bad split");
}

inline Split split_from_name(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "validation") return Split::Validation;
  if (s == "test") return Split::Test;
  if (s == "unseen") return Split::Unseen;
  throw std::invalid_argument("unknown split: " + s);
}

struct Dataset {
  std::size_t feature_dim = 0;
  std::vector<FeatureSequence> utterances;
};

/// One (speaker, split) slice: which utterance indices belong to it. A seen
/// speaker appears once per split that holds some of its utterances; unseen
/// speakers appear exactly once.
struct ManifestEntry {
  int speaker_id;
  Split split;
  std::vector<std::size_t> utterances;
};

struct DatasetManifest {
  std::size_t feature_dim = 0;
  std::vector<ManifestEntry> entries;
};

/// speaker id -> utterance indices, for one split.
using SpeakerPools = std::map<int, std::vector<std::size_t>>;

inline SpeakerPools split_view(const DatasetManifest& manifest, Split split) {
  SpeakerPools pools;
  for (const auto& e : manifest.entries)
    if (e.split == split && !e.utterances.empty())
      pools[e.speaker_id].insert(pools[e.speaker_id].end(),
                                 e.utterances.begin(), e.utterances.end());
  return pools;
}

// ---------------------------------------------------------------------------
// Deterministic RNG helpers (shared by sampler/eval as well)
// ---------------------------------------------------------------------------

inline double rng_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double rng_gaussian(std::mt19937_64& rng) {
  // Box-Muller; one sample per call keeps the stream position predictable.
  double u1 = rng_uniform(rng);
  while (u1 <= 0.0) u1 = rng_uniform(rng);
  const double u2 = rng_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

inline std::size_t rng_index(std::mt19937_64& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("rng_index: empty range");
  const std::uint64_t lim = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t v;
  do v = rng();
  while (v >= lim);
  return static_cast<std::size_t>(v % n);
}

/// First k of a deterministic Fisher-Yates shuffle of 0..n-1.
inline std::vector<std::size_t> rng_choose(std::mt19937_64& rng, std::size_t n,
                                           std::size_t k) {
  if (k > n) throw std::invalid_argument("rng_choose: k > n");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i)
    std::swap(idx[i], idx[i + rng_index(rng, n - i)]);
  idx.resize(k);
  return idx;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

/// A synthetic speaker: an offset in feature space plus a stable linear
/// dynamical system that gives utterances temporal structure.
struct SyntheticSpeakerModel {
  int speaker_id;
  std::vector<double> base;       // feature_dim
  std::vector<double> dynamics;   // feature_dim x feature_dim, radius < 1
  double noise_scale;
  std::uint64_t seed;
};

namespace detail {

inline std::vector<double> stable_dynamics(std::size_t d, double radius,
                                           std::mt19937_64& rng) {
  std::vector<double> a(d * d);
  for (double& v : a) v = rng_gaussian(rng) / std::sqrt(static_cast<double>(d));
  // Spectral radius estimate by power iteration on A^T A (largest singular
  // value bounds the radius), then rescale.
  std::vector<double> x(d, 1.0), y(d);
  double s = 1.0;
  for (int it = 0; it < 30; ++it) {
    for (std::size_t i = 0; i < d; ++i) {
      y[i] = 0.0;
      for (std::size_t j = 0; j < d; ++j) y[i] += a[i * d + j] * x[j];
    }
    s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = 0.0;
      for (std::size_t j = 0; j < d; ++j) x[i] += a[j * d + i] * y[j];
      s += x[i] * x[i];
    }
    s = std::sqrt(std::sqrt(s));
    for (double& v : x) v /= (s * s);
  }
  const double scale = radius / std::max(s, 1e-9);
  for (double& v : a) v *= scale;
  return a;
}

}  // namespace detail

/// Generates n_speakers x utterances_per_speaker sequences. Each frame is the
/// speaker base vector plus a per-utterance offset, an LDS trajectory, and
/// white noise; all noise amplitudes scale with `difficulty`. Values are
/// quantized to float32 so the on-disk feature format is lossless.
inline std::pair<Dataset, DatasetManifest> generate_corpus(
    std::size_t n_speakers, std::size_t utterances_per_speaker,
    std::size_t frames_per_utterance, std::size_t feature_dim,
    double difficulty, std::uint64_t seed) {
  if (n_speakers < 1 || utterances_per_speaker < 1 ||
      frames_per_utterance < 1 || feature_dim < 1)
    throw std::invalid_argument("generate_corpus: all counts must be >= 1");
  if (!(difficulty > 0.0) || difficulty > 1.0)
    throw std::invalid_argument("generate_corpus: difficulty must be in (0,1]");

  std::mt19937_64 master(seed);
  Dataset ds;
  ds.feature_dim = feature_dim;
  DatasetManifest manifest;
  manifest.feature_dim = feature_dim;

  const double offset_scale = 1.4 * difficulty;  // per-utterance channel shift
  const double state_scale = 1.0 * difficulty;   // LDS process noise
  const double white_scale = 0.8 * difficulty;   // per-frame noise

  for (std::size_t s = 0; s < n_speakers; ++s) {
    SyntheticSpeakerModel model;
    model.speaker_id = static_cast<int>(s);
    model.seed = master();
    model.noise_scale = white_scale;
    std::mt19937_64 rng(model.seed);
    model.base.resize(feature_dim);
    for (double& v : model.base) v = rng_gaussian(rng);
    model.dynamics = detail::stable_dynamics(feature_dim, 0.7, rng);

    ManifestEntry entry{model.speaker_id, Split::Train, {}};
    for (std::size_t u = 0; u < utterances_per_speaker; ++u) {
      FeatureSequence seq;
      seq.speaker_id = model.speaker_id;
      seq.source_id = static_cast<std::int64_t>(s * utterances_per_speaker + u);
      seq.dim = feature_dim;
      seq.num_frames = frames_per_utterance;
      seq.frames.resize(frames_per_utterance * feature_dim);

      std::vector<double> offset(feature_dim), state(feature_dim), next(feature_dim);
      for (double& v : offset) v = offset_scale * rng_gaussian(rng);
      for (double& v : state) v = state_scale * rng_gaussian(rng);
      for (std::size_t t = 0; t < frames_per_utterance; ++t) {
        for (std::size_t i = 0; i < feature_dim; ++i) {
          double v = 0.0;
          for (std::size_t j = 0; j < feature_dim; ++j)
            v += model.dynamics[i * feature_dim + j] * state[j];
          next[i] = v + state_scale * rng_gaussian(rng);
        }
        state.swap(next);
        for (std::size_t i = 0; i < feature_dim; ++i) {
          const double v = model.base[i] + offset[i] + state[i] +
                           model.noise_scale * rng_gaussian(rng);
          seq.frames[t * feature_dim + i] = static_cast<float>(v);
        }
      }
      entry.utterances.push_back(ds.utterances.size());
      ds.utterances.push_back(std::move(seq));
    }
    manifest.entries.push_back(std::move(entry));
  }
  return {std::move(ds), std::move(manifest)};
}

/// Marks n_unseen whole speakers as unseen; partitions each remaining
/// speaker's utterances into train/validation/test (roughly 70/15/15).
inline DatasetManifest split_speakers(const DatasetManifest& manifest,
                                      std::size_t n_unseen,
                                      std::uint64_t seed) {
  // Collect per-speaker utterances across existing entries.
  std::map<int, std::vector<std::size_t>> per_speaker;
  for (const auto& e : manifest.entries)
    per_speaker[e.speaker_id].insert(per_speaker[e.speaker_id].end(),
                                     e.utterances.begin(), e.utterances.end());
  const std::size_t total = per_speaker.size();
  if (n_unseen != 0 && n_unseen + 2 >= total)
    throw std::invalid_argument("split_speakers: too few speakers for " +
                                std::to_string(n_unseen) + " unseen");

  std::vector<int> ids;
  for (const auto& [id, _] : per_speaker) ids.push_back(id);
  std::mt19937_64 rng(seed);
  auto unseen_pick = rng_choose(rng, ids.size(), n_unseen);
  std::vector<bool> is_unseen(ids.size(), false);
  for (auto i : unseen_pick) is_unseen[i] = true;

  DatasetManifest out;
  out.feature_dim = manifest.feature_dim;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& utts = per_speaker[ids[i]];
    if (is_unseen[i]) {
      out.entries.push_back({ids[i], Split::Unseen, utts});
      continue;
    }
    const std::size_t n = utts.size();
    auto order = rng_choose(rng, n, n);
    std::size_t n_val = n >= 7 ? n * 15 / 100 : (n >= 3 ? 1 : 0);
    std::size_t n_test = n_val;
    if (n_val == 0 && n >= 3) n_val = n_test = 1;
    ManifestEntry train{ids[i], Split::Train, {}};
    ManifestEntry val{ids[i], Split::Validation, {}};
    ManifestEntry test{ids[i], Split::Test, {}};
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t u = utts[order[j]];
      if (j < n_val)
        val.utterances.push_back(u);
      else if (j < n_val + n_test)
        test.utterances.push_back(u);
      else
        train.utterances.push_back(u);
    }
    out.entries.push_back(std::move(train));
    if (!val.utterances.empty()) out.entries.push_back(std::move(val));
    if (!test.utterances.empty()) out.entries.push_back(std::move(test));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature file format (binary, little-endian)
// ---------------------------------------------------------------------------
// magic "SEQF", version u32 = 1, feature_dim u32, utterance_count u32; then
// per utterance: speaker_id u32, frame_count u32, frame_count*feature_dim
// float32 values row-major.

namespace detail {

template <class T>
void write_raw(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::istream& is, const char* what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError(std::string("feature file: truncated at ") + what);
  return v;
}

}  // namespace detail

constexpr std::uint32_t kFeatureVersion = 1;

inline void write_features(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write("SEQF", 4);
  detail::write_raw<std::uint32_t>(os, kFeatureVersion);
  detail::write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(ds.feature_dim));
  detail::write_raw<std::uint32_t>(os,
                                   static_cast<std::uint32_t>(ds.utterances.size()));
  for (const auto& u : ds.utterances) {
    if (u.dim != ds.feature_dim)
      throw std::invalid_argument("write_features: utterance dim mismatch");
    detail::write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(u.speaker_id));
    detail::write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(u.num_frames));
    for (double v : u.frames)
      detail::write_raw<float>(os, static_cast<float>(v));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline Dataset load_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SEQF", 4) != 0)
    throw FormatError("feature file: bad magic");
  const auto version = detail::read_raw<std::uint32_t>(is, "version");
  if (version != kFeatureVersion)
    throw FormatError("feature file: unsupported version " +
                      std::to_string(version));
  const auto dim = detail::read_raw<std::uint32_t>(is, "feature_dim");
  if (dim == 0) throw FormatError("feature file: feature_dim is zero");
  const auto count = detail::read_raw<std::uint32_t>(is, "utterance_count");

  Dataset ds;
  ds.feature_dim = dim;
  std::map<int, int> dense;  // original -> dense speaker ids
  for (std::uint32_t u = 0; u < count; ++u) {
    FeatureSequence seq;
    seq.dim = dim;
    const auto raw_id = detail::read_raw<std::uint32_t>(is, "speaker_id");
    seq.num_frames = detail::read_raw<std::uint32_t>(is, "frame_count");
    if (seq.num_frames == 0)
      throw FormatError("feature file: utterance with zero frames");
    seq.frames.resize(seq.num_frames * dim);
    for (double& v : seq.frames) v = detail::read_raw<float>(is, "frame data");
    seq.source_id = static_cast<std::int64_t>(u);
    dense.emplace(static_cast<int>(raw_id), 0);
    seq.speaker_id = static_cast<int>(raw_id);
    ds.utterances.push_back(std::move(seq));
  }
  int next = 0;
  for (auto& [orig, d] : dense) d = next++;
  for (auto& u : ds.utterances) u.speaker_id = dense[u.speaker_id];
  return ds;
}

// ---------------------------------------------------------------------------
// Manifest JSON: {feature_dim, speakers: [{id, split, utterances: [indices]}]}
// ---------------------------------------------------------------------------

inline void write_manifest(const std::string& path,
                           const DatasetManifest& manifest) {
  nlohmann::json j;
  j["feature_dim"] = manifest.feature_dim;
  j["speakers"] = nlohmann::json::array();
  for (const auto& e : manifest.entries)
    j["speakers"].push_back({{"id", e.speaker_id},
                             {"split", split_name(e.split)},
                             {"utterances", e.utterances}});
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << j.dump(2) << "\n";
}

inline DatasetManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: invalid JSON: ") + e.what());
  }
  DatasetManifest m;
  try {
    m.feature_dim = j.at("feature_dim").get<std::size_t>();
    for (const auto& s : j.at("speakers")) {
      ManifestEntry e;
      e.speaker_id = s.at("id").get<int>();
      e.split = split_from_name(s.at("split").get<std::string>());
      e.utterances = s.at("utterances").get<std::vector<std::size_t>>();
      m.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: missing or bad field: ") +
                      e.what());
  }
  return m;
}

}  // namespace semb

#endif  // SEMB_DATA_HPP
