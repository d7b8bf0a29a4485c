// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Umbrella header pulling in the whole library.

#pragma once

#include "lscodec/autodiff.hpp"
#include "lscodec/checkpoint.hpp"
#include "lscodec/common.hpp"
#include "lscodec/config.hpp"
#include "lscodec/container.hpp"
#include "lscodec/f0.hpp"
#include "lscodec/fft.hpp"
#include "lscodec/kmeans.hpp"
#include "lscodec/layers.hpp"
#include "lscodec/losses.hpp"
#include "lscodec/mel.hpp"
#include "lscodec/metrics.hpp"
#include "lscodec/model.hpp"
#include "lscodec/optim.hpp"
#include "lscodec/perturb.hpp"
#include "lscodec/probe.hpp"
#include "lscodec/quantizer.hpp"
#include "lscodec/resample.hpp"
#include "lscodec/rng.hpp"
#include "lscodec/ssl.hpp"
#include "lscodec/synthcorpus.hpp"
#include "lscodec/tokenstream.hpp"
#include "lscodec/trainer.hpp"
#include "lscodec/vocoder.hpp"
#include "lscodec/wave.hpp"
#include "lscodec/wsola.hpp"
