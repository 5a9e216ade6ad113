// Copyright 2026 The tclif-eprop Authors
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

#include "tclif/bptt.hpp"
#include "tclif/config.hpp"
#include "tclif/data.hpp"
#include "tclif/eprop.hpp"
#include "tclif/errors.hpp"
#include "tclif/network.hpp"
#include "tclif/neurons.hpp"
#include "tclif/online.hpp"
#include "tclif/optim.hpp"
#include "tclif/tensor.hpp"
#include "tclif/train.hpp"
#include "tclif/verify.hpp"
