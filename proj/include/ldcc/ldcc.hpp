// Copyright 2026 The ldcc Authors.
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

#include "ldcc/csv.hpp"
#include "ldcc/data.hpp"
#include "ldcc/error.hpp"
#include "ldcc/inference.hpp"
#include "ldcc/learning.hpp"
#include "ldcc/model.hpp"
#include "ldcc/parallel.hpp"
#include "ldcc/random.hpp"
#include "ldcc/similarity.hpp"
#include "ldcc/specfn.hpp"
#include "ldcc/task.hpp"
