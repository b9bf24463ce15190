// Copyright 2026 The UAST Authors.
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

#include "uast/basis.hpp"
#include "uast/checkpoint.hpp"
#include "uast/config.hpp"
#include "uast/data_io.hpp"
#include "uast/dataset.hpp"
#include "uast/em.hpp"
#include "uast/error.hpp"
#include "uast/gradcheck.hpp"
#include "uast/matrix.hpp"
#include "uast/model.hpp"
#include "uast/rng.hpp"
#include "uast/selftrain.hpp"
