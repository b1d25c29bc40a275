// Copyright 2026 The linrec authors
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
#pragma once

#include "linrec/closed_form.hpp"
#include "linrec/common.hpp"
#include "linrec/eval.hpp"
#include "linrec/interactions.hpp"
#include "linrec/metrics.hpp"
#include "linrec/model.hpp"
#include "linrec/nearby.hpp"
#include "linrec/persist.hpp"
#include "linrec/rng.hpp"
#include "linrec/search.hpp"
#include "linrec/spectral.hpp"
#include "linrec/wmf.hpp"
