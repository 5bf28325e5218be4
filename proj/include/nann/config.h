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
#include <filesystem>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "nann/batch_executor.h"
#include "nann/datamodel.h"
#include "nann/graph_index.h"
#include "nann/metric.h"
#include "nann/search.h"
#include "nann/training.h"

namespace nann {

/// Every tunable of a pipeline run. Serialized as flat `key = value` text;
/// `#` starts a comment.
struct RunConfig {
    std::uint64_t seed{1};

    // dataset
    std::size_t users{200};
    std::size_t items{5000};
    std::size_t feature_dim{16};
    std::uint32_t behaviors{3};
    double density{0.002};

    // model and training
    std::size_t embed_dim{16};
    std::vector<std::size_t> hidden{64, 64};
    double serendipity_sigma{1.0};
    std::size_t epochs{30};
    std::size_t train_batch{64};
    double learning_rate{1e-3};
    std::size_t scl_pairs{32};
    double lambda_scl{1.0};
    double negative_ratio{1.0};
    Precision precision{Precision::kFp32};

    // index
    std::size_t max_degree{16};
    std::size_t ef_construction{100};
    double level_prob{1.0 / 17.0};
    std::size_t max_layers{4};
    bool diversity_heuristic{false};

    // search
    std::size_t k{100};
    std::size_t k_parallel{8};
    std::size_t hops{3};
    std::size_t ef{0};
    bool deterministic{true};
    std::size_t queries{0};  ///< 0 = every user
    std::size_t query_threads{8};

    // batching
    std::size_t engine_batch{256};
    std::size_t flush_timeout_us{1000};
    std::size_t max_pending_pairs{1u << 20};
    bool pipelining{false};
    double engine_fixed_us{0.0};
    double engine_per_pair_us{0.0};

    // ablations
    bool no_scl{false};
    bool no_multirel{false};
    bool no_parallel{false};
    bool no_batching{false};

    /// Sets one key from its text form; throws parse on an unknown key or a
    /// malformed value.
    void
    set(std::string_view key, std::string_view value);

    void
    validate() const;

    SyntheticSpec
    synthetic_spec() const;

    /// Training configuration with ablations applied.
    TrainConfig
    train_config() const;

    IndexParams
    index_params() const;

    SearchParams
    search_params() const;

    BatchQueueConfig
    queue_config() const;

    EngineCost
    engine_cost() const;

    /// Canonical ordered echo of every key.
    nlohmann::json
    to_json() const;

    void
    write(std::ostream& out) const;

    bool
    operator==(const RunConfig&) const = default;
};

/// Applies `key = value` lines on top of `base`. Errors carry the line number.
RunConfig
parse_config(std::istream& in, RunConfig base = {});

RunConfig
load_config(const std::filesystem::path& path, RunConfig base = {});

/// 16 hex digits of a 64-bit FNV-1a hash over the canonical config echo.
std::string
run_id(const RunConfig& config);

}  // namespace nann
