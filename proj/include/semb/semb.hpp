// include/semb/semb.hpp
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0

#ifndef SEMB_SEMB_HPP
#define SEMB_SEMB_HPP

#include "semb/data.hpp"
#include "semb/encoder.hpp"
#include "semb/eval.hpp"
#include "semb/losses.hpp"
#include "semb/sampler.hpp"
#include "semb/sequence.hpp"
#include "semb/tensor.hpp"
#include "semb/trainer.hpp"

#endif  // SEMB_SEMB_HPP
