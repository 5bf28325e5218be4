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

#include "nann/fp16.h"

#include <cmath>

#include "nann/error.h"

namespace nann::fp16 {

namespace {

constexpr int kMantissaBits = 10;
constexpr int kMinNormalExp = -14;

}  // namespace

std::optional<double>
round(double value) {
    if (!std::isfinite(value)) {
        return std::nullopt;
    }
    if (value == 0.0) {
        return value;
    }
    int exp = std::ilogb(value);
    if (exp < kMinNormalExp) {
        exp = kMinNormalExp;
    }
    // Spacing of representable halves around |value|; scaling by a power of
    // two is exact, so nearbyint applies round-half-to-even on the mantissa.
    const double ulp = std::ldexp(1.0, exp - kMantissaBits);
    const double rounded = std::nearbyint(value / ulp) * ulp;
    if (std::fabs(rounded) > kMaxFinite) {
        return std::nullopt;
    }
    return rounded;
}

std::uint16_t
encode(double representable) {
    const std::uint16_t sign = std::signbit(representable) ? 0x8000 : 0;
    const double mag = std::fabs(representable);
    if (mag == 0.0) {
        return sign;
    }
    NANN_CHECK_ARG(mag <= kMaxFinite, "value exceeds binary16 range");
    int exp = std::ilogb(mag);
    if (exp < kMinNormalExp) {
        const double mant = std::ldexp(mag, -(kMinNormalExp - kMantissaBits));
        NANN_CHECK_ARG(mant == std::floor(mant), "value is not binary16-representable");
        return static_cast<std::uint16_t>(sign | static_cast<std::uint16_t>(mant));
    }
    const double mant = std::ldexp(mag, kMantissaBits - exp) - 1024.0;
    NANN_CHECK_ARG(mant == std::floor(mant), "value is not binary16-representable");
    return static_cast<std::uint16_t>(sign | static_cast<std::uint16_t>((exp + 15) << kMantissaBits) |
                                      static_cast<std::uint16_t>(mant));
}

double
decode(std::uint16_t bits) {
    const bool negative = (bits & 0x8000) != 0;
    const int exp_field = (bits >> kMantissaBits) & 0x1f;
    const int mant = bits & 0x3ff;
    double mag;
    if (exp_field == 0) {
        mag = std::ldexp(static_cast<double>(mant), kMinNormalExp - kMantissaBits);
    } else if (exp_field == 0x1f) {
        mag = mant == 0 ? INFINITY : NAN;
    } else {
        mag = std::ldexp(static_cast<double>(mant + 1024), exp_field - 15 - kMantissaBits);
    }
    return negative ? -mag : mag;
}

}  // namespace nann::fp16
