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

#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "nann/graph_index.h"
#include "nann/scorer.h"
#include "nann/types.h"

namespace nann {

struct SearchParams {
    std::size_t k{10};           ///< result count and pool capacity
    std::size_t k_parallel{8};   ///< concurrent searchers per layer
    std::size_t hops{3};         ///< hop budget per searcher per layer
    std::size_t ef{0};           ///< frontier width; 0 selects 2k
    bool deterministic{true};    ///< merge concurrent pushes in seed order

    std::size_t
    effective_ef() const {
        return ef == 0 ? 2 * k : ef;
    }
};

struct SearchStats {
    std::size_t nodes_visited{0};
    std::size_t metric_evaluations{0};
    std::vector<std::size_t> visited_per_layer;  ///< index 0 = base layer
    std::size_t hops_to_best{0};  ///< evaluation rounds before the final best item was first scored
    std::size_t k_parallel{1};
    double wall_seconds{0.0};
};

struct SearchResult {
    std::vector<ScoredItem> items;  ///< best first
    SearchStats stats;
};

/// Exact top-k over `candidates` in one evaluation batch.
SearchResult
brute_force(Scorer& scorer, std::span<const ItemId> candidates, std::size_t k);

/// Layered best-first descent from the entry point with an ef-wide result
/// set per layer; each layer's results seed the next one down.
SearchResult
greedy_search(const GraphIndex& index, Scorer& scorer, const SearchParams& params);

/// Inter-candidate parallel search: per layer, the best k_parallel pool
/// entries each walk up to `hops` neighbor rings around themselves, keeping
/// the ef best nodes of each ring as the next frontier. All searchers feed
/// one shared pool, and an item is scored at most once per query.
SearchResult
c_hipanns(const GraphIndex& index, Scorer& scorer, const SearchParams& params);

nlohmann::json
to_json(const SearchStats& stats);

}  // namespace nann
