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

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "nann/error.h"

namespace nann {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;

inline constexpr ItemId kInvalidItem = static_cast<ItemId>(-1);

using Embedding = std::vector<double>;

/// Dense row-major table of equal-length embeddings addressed by id.
class EmbeddingTable {
public:
    EmbeddingTable() = default;

    EmbeddingTable(std::size_t rows, std::size_t dim) : dim_(dim), data_(rows * dim, 0.0) {
    }

    std::size_t
    size() const noexcept {
        return dim_ == 0 ? 0 : data_.size() / dim_;
    }

    std::size_t
    dim() const noexcept {
        return dim_;
    }

    std::span<const double>
    row(std::size_t i) const {
        return {data_.data() + i * dim_, dim_};
    }

    std::span<double>
    row(std::size_t i) {
        return {data_.data() + i * dim_, dim_};
    }

    void
    append(std::span<const double> values) {
        NANN_CHECK_ARG(dim_ == 0 || values.size() == dim_, "embedding dimension mismatch");
        if (dim_ == 0) {
            dim_ = values.size();
        }
        data_.insert(data_.end(), values.begin(), values.end());
    }

    const std::vector<double>&
    data() const noexcept {
        return data_;
    }

    bool
    operator==(const EmbeddingTable&) const = default;

private:
    std::size_t dim_{0};
    std::vector<double> data_;
};

/// An item with its relevance score; higher scores are better.
struct ScoredItem {
    ItemId id{kInvalidItem};
    double score{0.0};

    bool
    operator==(const ScoredItem&) const = default;
};

/// Global ordering: higher score first, lower id wins ties.
inline bool
ranks_before(const ScoredItem& a, const ScoredItem& b) noexcept {
    if (a.score != b.score) {
        return a.score > b.score;
    }
    return a.id < b.id;
}

}  // namespace nann
