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

#include <stdexcept>
#include <string>

namespace nann {

enum class ErrorType {
    kInvalidArgument,
    kParse,
    kNumeric,
    kOverflow,
    kDegenerateVariance,
    kDivergence,
    kQueueClosed,
    kVersionMismatch,
    kIo,
    kEngine,
};

const char*
error_type_name(ErrorType type);

/// Base exception for every failure raised by the library.
class Error : public std::runtime_error {
public:
    Error(ErrorType type, const std::string& message)
        : std::runtime_error(std::string(error_type_name(type)) + ": " + message), type_(type) {
    }

    ErrorType
    type() const noexcept {
        return type_;
    }

private:
    ErrorType type_;
};

inline const char*
error_type_name(ErrorType type) {
    switch (type) {
        case ErrorType::kInvalidArgument:
            return "invalid-argument";
        case ErrorType::kParse:
            return "parse-error";
        case ErrorType::kNumeric:
            return "numeric-error";
        case ErrorType::kOverflow:
            return "overflow";
        case ErrorType::kDegenerateVariance:
            return "degenerate-variance";
        case ErrorType::kDivergence:
            return "divergence";
        case ErrorType::kQueueClosed:
            return "queue-closed";
        case ErrorType::kVersionMismatch:
            return "version-mismatch";
        case ErrorType::kIo:
            return "io-error";
        case ErrorType::kEngine:
            return "engine-error";
    }
    return "unknown";
}

#define NANN_CHECK_ARG(cond, msg)                                      \
    do {                                                               \
        if (!(cond)) {                                                 \
            throw ::nann::Error(::nann::ErrorType::kInvalidArgument, (msg)); \
        }                                                              \
    } while (0)

}  // namespace nann
