//
// Copyright 2026 The dpmf Authors
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
//
#ifndef DPMF_DPMF_HPP_
#define DPMF_DPMF_HPP_

#include "dpmf/block_io.hpp"
#include "dpmf/dataset.hpp"
#include "dpmf/errors.hpp"
#include "dpmf/model.hpp"
#include "dpmf/noise.hpp"
#include "dpmf/pipeline.hpp"
#include "dpmf/preprocess.hpp"
#include "dpmf/privacy.hpp"
#include "dpmf/recommend.hpp"
#include "dpmf/rng.hpp"
#include "dpmf/sgd_solver.hpp"
#include "dpmf/sgld_solver.hpp"
#include "dpmf/synthetic.hpp"

#endif  // DPMF_DPMF_HPP_
