/* Copyright 2026 The implicit-align Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include "implicit_align/config.hpp"
#include "implicit_align/data.hpp"
#include "implicit_align/divergence.hpp"
#include "implicit_align/error.hpp"
#include "implicit_align/metrics.hpp"
#include "implicit_align/nn.hpp"
#include "implicit_align/objectives.hpp"
#include "implicit_align/rng.hpp"
#include "implicit_align/sampler.hpp"
#include "implicit_align/tensor.hpp"
#include "implicit_align/train.hpp"
