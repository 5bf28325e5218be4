// Copyright 2026-present the nann project
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

#include <cstdint>
#include <optional>

namespace nann::fp16 {

inline constexpr double kMaxFinite = 65504.0;

/// Rounds to the nearest IEEE binary16 value (ties to even). Returns nullopt
/// when the rounded magnitude is not representable as a finite half.
std::optional<double>
round(double value);

/// Encodes a value that is already binary16-representable.
std::uint16_t
encode(double representable);

double
decode(std::uint16_t bits);

}  // namespace nann::fp16
