// Copyright 2026 The SSSL Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SSSL_SSSL_HPP
#define SSSL_SSSL_HPP

#include "sssl/aggregate.hpp"
#include "sssl/audio.hpp"
#include "sssl/commands.hpp"
#include "sssl/config.hpp"
#include "sssl/core.hpp"
#include "sssl/dataset.hpp"
#include "sssl/feature_cache.hpp"
#include "sssl/metrics.hpp"
#include "sssl/nn.hpp"
#include "sssl/noise_partition.hpp"
#include "sssl/ssl_train.hpp"
#include "sssl/synth.hpp"

#endif  // SSSL_SSSL_HPP
