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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nann/batch_executor.h"
#include "nann/config.h"
#include "nann/datamodel.h"
#include "nann/graph_index.h"
#include "nann/metric.h"
#include "nann/search.h"

namespace nann {

/// Fraction of the ground-truth list found anywhere in `retrieved`; the
/// denominator is the ground-truth length (100 in standard use).
double
coverage(std::span<const ItemId> retrieved, std::span<const ItemId> ground_truth);

/// Overlap of the first k retrieved and first k ground-truth ids, over k.
double
recall_at(std::size_t k, std::span<const ItemId> retrieved, std::span<const ItemId> ground_truth);

/// Items scored per second; throws invalid-argument for a non-positive time.
double
measure_speed(std::size_t metric_evaluations, double wall_seconds);

std::vector<ItemId>
ids_of(std::span<const ScoredItem> items);

struct QueryRow {
    UserId user{0};
    double cov{0.0};
    double rec10{0.0};
    double rec100{0.0};
    SearchStats stats;
};

struct EvalReport {
    std::string run_id;
    nlohmann::json config;
    std::vector<QueryRow> rows;
    double mean_cov{0.0};
    double mean_rec10{0.0};
    double mean_rec100{0.0};
    double mean_hops_to_best{0.0};
    double mean_nodes_visited{0.0};
    std::size_t metric_evaluations{0};
    double search_seconds{0.0};
    double speed{0.0};  ///< items scored per second over the query batch
    double rank_alignment{0.0};  ///< held-out correlation of relevance with negated distance
    double train_loss_start{0.0};
    double train_loss_end{0.0};
    std::size_t model_bytes{0};
    nlohmann::json dispatch;
    std::optional<std::string> error_stage;
    std::string error_message;

    bool
    ok() const {
        return !error_stage.has_value();
    }

    /// Quality metrics only; equal across deterministic reruns.
    nlohmann::json
    quality_json() const;

    nlohmann::json
    to_json() const;

    void
    write_tsv(std::ostream& out) const;

    void
    print_table(std::ostream& out) const;

    void
    save(const std::filesystem::path& dir) const;
};

/// Every intermediate product of a run.
struct Artifacts {
    Dataset data;
    Model model;
    std::vector<LossRecord> history;
    EmbeddingTable users;
    EmbeddingTable items;
    GraphIndex index;
};

Dataset
make_dataset(const RunConfig& config);

/// Trains, then applies the configured precision. fp32 models are rounded
/// to their stored form so saved files reload bit-identically.
TrainState
train_model(const RunConfig& config, const Dataset& data);

void
embed(const Model& model, const Dataset& data, Artifacts& out);

GraphIndex
build_index(const RunConfig& config, const EmbeddingTable& items);

/// Query users in evaluation order.
std::vector<UserId>
query_users(const RunConfig& config, std::size_t user_count);

/// Runs every query concurrently through the configured search and
/// evaluation path and scores it against learned-metric brute force.
EvalReport
evaluate(const RunConfig& config, const Artifacts& artifacts);

/// Builds the artifacts for `config` from scratch.
Artifacts
prepare(const RunConfig& config);

/// Full pipeline. Stage failures are captured in the report.
EvalReport
run_experiment(const RunConfig& config);

/// Randomized many-producer load on the batch queue, checked against
/// direct evaluation and against per-request dispatch.
struct StressConfig {
    std::uint64_t seed{11};
    std::size_t requests{1000};
    std::size_t min_size{1};
    std::size_t max_size{64};
    std::size_t batch_size{256};
    std::size_t producers{8};
    std::size_t items{4096};
    std::size_t users{64};
    std::chrono::microseconds flush_timeout{1000};
    bool pipelining{false};
    EngineCost cost{};  ///< accounted, never slept on
};

struct StressReport {
    std::size_t total_pairs{0};
    std::size_t batched_invocations{0};
    std::size_t per_request_invocations{0};
    std::size_t timeout_flushes{0};
    std::size_t shutdown_flushes{0};
    std::size_t pairs_dispatched{0};
    std::size_t mismatched_scores{0};  ///< bitwise differences from direct evaluation
    std::size_t failed_requests{0};
    double batched_simulated_seconds{0.0};
    double per_request_simulated_seconds{0.0};
    double wall_seconds{0.0};
    nlohmann::json dispatch;

    /// ceil(total_pairs / batch_size) + timeout_flushes.
    std::size_t
    invocation_bound(std::size_t batch_size) const;

    double
    reduction() const;

    nlohmann::json
    to_json(std::size_t batch_size) const;
};

StressReport
run_batch_stress(const StressConfig& config);

}  // namespace nann
