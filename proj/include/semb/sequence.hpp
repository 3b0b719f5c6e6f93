// include/semb/sequence.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SEMB_SEQUENCE_HPP
#define SEMB_SEQUENCE_HPP

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace semb {

/// A variable-length sequence of fixed-dimension feature vectors with a
/// speaker label. Frames are stored row-major, T x dim.
struct FeatureSequence {
  std::vector<double> frames;
  std::size_t num_frames = 0;
  std::size_t dim = 0;
  int speaker_id = -1;
  std::int64_t source_id = -1;  // optional utterance identifier

  double at(std::size_t t, std::size_t j) const { return frames[t * dim + j]; }

  void validate() const {
    if (num_frames < 1) throw std::invalid_argument("sequence: T must be >= 1");
    if (frames.size() != num_frames * dim)
      throw std::invalid_argument("sequence: frame buffer size mismatch");
  }
};

}  // namespace semb

#endif  // SEMB_SEQUENCE_HPP
