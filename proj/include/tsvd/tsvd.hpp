/* Copyright 2026 the tsvd authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License. */

#pragma once

#include "tsvd/convmap.hpp"
#include "tsvd/costmodel.hpp"
#include "tsvd/decompose.hpp"
#include "tsvd/io.hpp"
#include "tsvd/linalg.hpp"
#include "tsvd/qat.hpp"
#include "tsvd/rng.hpp"
#include "tsvd/studies.hpp"
#include "tsvd/ternarize.hpp"
#include "tsvd/ternary.hpp"
