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

#include <future>
#include <span>
#include <vector>

#include "nann/metric.h"
#include "nann/types.h"

namespace nann {

/// Query-bound relevance evaluator used by every search routine. Higher
/// scores are better. Implementations must be safe to call concurrently.
class Scorer {
public:
    virtual ~Scorer() = default;

    virtual std::vector<double>
    score(std::span<const ItemId> items) = 0;

    /// Defaults to a synchronous evaluation wrapped in a ready future.
    virtual std::future<std::vector<double>>
    score_async(std::vector<ItemId> items) {
        std::promise<std::vector<double>> p;
        try {
            p.set_value(score(items));
        } catch (...) {
            p.set_exception(std::current_exception());
        }
        return p.get_future();
    }
};

/// Learned relevance of one user against the item table, evaluated pair by
/// pair with no batching.
class RelevanceScorer : public Scorer {
public:
    RelevanceScorer(const MetricModel& model, std::span<const double> user, const EmbeddingTable& items)
        : model_(model), user_(user.begin(), user.end()), items_(items) {
    }

    std::vector<double>
    score(std::span<const ItemId> ids) override {
        std::vector<double> out(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            out[i] = relevance(model_, user_, items_.row(ids[i]));
        }
        return out;
    }

private:
    const MetricModel& model_;
    Embedding user_;
    const EmbeddingTable& items_;
};

/// Negated euclidean distance, so nearer items score higher.
class EuclideanScorer : public Scorer {
public:
    EuclideanScorer(std::span<const double> query, const EmbeddingTable& items)
        : query_(query.begin(), query.end()), items_(items) {
    }

    std::vector<double>
    score(std::span<const ItemId> ids) override {
        std::vector<double> out(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            out[i] = -euclidean_distance(query_, items_.row(ids[i]));
        }
        return out;
    }

private:
    Embedding query_;
    const EmbeddingTable& items_;
};

class CosineScorer : public Scorer {
public:
    CosineScorer(std::span<const double> query, const EmbeddingTable& items)
        : query_(query.begin(), query.end()), items_(items) {
    }

    std::vector<double>
    score(std::span<const ItemId> ids) override {
        std::vector<double> out(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            out[i] = cosine_similarity(query_, items_.row(ids[i]));
        }
        return out;
    }

private:
    Embedding query_;
    const EmbeddingTable& items_;
};

}  // namespace nann
