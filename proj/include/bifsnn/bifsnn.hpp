// Copyright 2026 The bifsnn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Umbrella header.

#include "bifsnn/altopt.hpp"
#include "bifsnn/analysis.hpp"
#include "bifsnn/checkpoint.hpp"
#include "bifsnn/config.hpp"
#include "bifsnn/core.hpp"
#include "bifsnn/dynamics.hpp"
#include "bifsnn/eigen.hpp"
#include "bifsnn/encoding.hpp"
#include "bifsnn/error.hpp"
#include "bifsnn/experiment.hpp"
#include "bifsnn/filter.hpp"
#include "bifsnn/idx.hpp"
#include "bifsnn/matrix.hpp"
#include "bifsnn/network.hpp"
#include "bifsnn/random.hpp"
#include "bifsnn/training.hpp"
