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

#include "nann/eval.h"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstring>
#include <fstream>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "nann/batch_executor.h"

namespace nann {

namespace {

constexpr std::size_t kGroundTruthDepth = 100;

double
mean_of(const std::vector<QueryRow>& rows, double QueryRow::*field) {
    if (rows.empty()) {
        return 0.0;
    }
    double total = 0.0;
    for (const auto& row : rows) {
        total += row.*field;
    }
    return total / static_cast<double>(rows.size());
}

std::size_t
overlap(std::span<const ItemId> a, std::span<const ItemId> b) {
    std::unordered_set<ItemId> lookup(b.begin(), b.end());
    std::size_t hits = 0;
    std::unordered_set<ItemId> seen;
    for (auto id : a) {
        if (lookup.contains(id) && seen.insert(id).second) {
            ++hits;
        }
    }
    return hits;
}

std::size_t
serialized_size(const Model& model) {
    std::ostringstream out;
    write_model(model, out);
    return out.str().size();
}

}  // namespace

double
coverage(std::span<const ItemId> retrieved, std::span<const ItemId> ground_truth) {
    NANN_CHECK_ARG(!ground_truth.empty(), "coverage needs a nonempty ground truth");
    return static_cast<double>(overlap(retrieved, ground_truth)) / static_cast<double>(ground_truth.size());
}

double
recall_at(std::size_t k, std::span<const ItemId> retrieved, std::span<const ItemId> ground_truth) {
    NANN_CHECK_ARG(k >= 1, "recall depth must be positive");
    const auto r = retrieved.first(std::min(k, retrieved.size()));
    const auto g = ground_truth.first(std::min(k, ground_truth.size()));
    return static_cast<double>(overlap(r, g)) / static_cast<double>(k);
}

double
measure_speed(std::size_t metric_evaluations, double wall_seconds) {
    NANN_CHECK_ARG(wall_seconds > 0.0, "speed needs a positive wall time");
    return static_cast<double>(metric_evaluations) / wall_seconds;
}

std::vector<ItemId>
ids_of(std::span<const ScoredItem> items) {
    std::vector<ItemId> out(items.size());
    std::transform(items.begin(), items.end(), out.begin(), [](const ScoredItem& s) { return s.id; });
    return out;
}

nlohmann::json
EvalReport::quality_json() const {
    nlohmann::json rows_json = nlohmann::json::array();
    for (const auto& row : rows) {
        rows_json.push_back({{"user", row.user},
                             {"cov", row.cov},
                             {"rec10", row.rec10},
                             {"rec100", row.rec100},
                             {"nodes_visited", row.stats.nodes_visited},
                             {"metric_evaluations", row.stats.metric_evaluations},
                             {"hops_to_best", row.stats.hops_to_best}});
    }
    return {
        {"mean_cov", mean_cov},
        {"mean_rec10", mean_rec10},
        {"mean_rec100", mean_rec100},
        {"mean_hops_to_best", mean_hops_to_best},
        {"mean_nodes_visited", mean_nodes_visited},
        {"metric_evaluations", metric_evaluations},
        {"rank_alignment", rank_alignment},
        {"train_loss_start", train_loss_start},
        {"train_loss_end", train_loss_end},
        {"model_bytes", model_bytes},
        {"queries", rows_json},
    };
}

nlohmann::json
EvalReport::to_json() const {
    nlohmann::json out = quality_json();
    out["run_id"] = run_id;
    out["config"] = config;
    out["search_seconds"] = search_seconds;
    out["speed_items_per_second"] = speed;
    out["dispatch"] = dispatch;
    if (error_stage) {
        out["error"] = {{"stage", *error_stage}, {"message", error_message}};
    }
    return out;
}

void
EvalReport::write_tsv(std::ostream& out) const {
    out << "user\tcov\trec10\trec100\tnodes_visited\tmetric_evaluations\thops_to_best\tk_parallel\twall_seconds\n";
    for (const auto& row : rows) {
        fmt::print(out, "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n", row.user, row.cov, row.rec10, row.rec100,
                   row.stats.nodes_visited, row.stats.metric_evaluations, row.stats.hops_to_best,
                   row.stats.k_parallel, row.stats.wall_seconds);
    }
}

void
EvalReport::print_table(std::ostream& out) const {
    fmt::print(out, "run {}\n", run_id);
    if (error_stage) {
        fmt::print(out, "  failed in {}: {}\n", *error_stage, error_message);
        return;
    }
    fmt::print(out, "  queries           {}\n", rows.size());
    fmt::print(out, "  Cov               {:.4f}\n", mean_cov);
    fmt::print(out, "  Rec@10            {:.4f}\n", mean_rec10);
    fmt::print(out, "  Rec@100           {:.4f}\n", mean_rec100);
    fmt::print(out, "  items/s           {:.0f}\n", speed);
    fmt::print(out, "  evaluations       {}\n", metric_evaluations);
    fmt::print(out, "  mean visited      {:.1f}\n", mean_nodes_visited);
    fmt::print(out, "  mean hops-to-best {:.2f}\n", mean_hops_to_best);
    fmt::print(out, "  rank alignment    {:.4f}\n", rank_alignment);
    fmt::print(out, "  train loss        {:.4f} -> {:.4f}\n", train_loss_start, train_loss_end);
}

void
EvalReport::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream json(dir / "report.json");
    std::ofstream tsv(dir / "queries.tsv");
    if (!json || !tsv) {
        throw Error(ErrorType::kIo, fmt::format("cannot write report into {}", dir.string()));
    }
    json << to_json().dump(2) << '\n';
    write_tsv(tsv);
}

Dataset
make_dataset(const RunConfig& config) {
    return generate_synthetic(config.synthetic_spec());
}

TrainState
train_model(const RunConfig& config, const Dataset& data) {
    auto state = fit(data, config.train_config());
    state.model = config.precision == Precision::kFp16 ? quantize(state.model) : round_to_fp32(state.model);
    return state;
}

void
embed(const Model& model, const Dataset& data, Artifacts& out) {
    out.users = project_all_users(model, data);
    out.items = project_all_items(model, data);
}

GraphIndex
build_index(const RunConfig& config, const EmbeddingTable& items) {
    return GraphIndex::build(items, config.index_params());
}

std::vector<UserId>
query_users(const RunConfig& config, std::size_t user_count) {
    const std::size_t n = config.queries == 0 ? user_count : std::min(config.queries, user_count);
    std::vector<UserId> out(n);
    std::iota(out.begin(), out.end(), UserId{0});
    return out;
}

EvalReport
evaluate(const RunConfig& config, const Artifacts& a) {
    const auto params = config.search_params();
    const auto users = query_users(config, a.users.size());
    const auto& metric = a.model.metric;
    NANN_CHECK_ARG(a.items.size() >= params.k, "fewer items than the retrieval depth");

    EvalReport report;
    report.run_id = run_id(config);
    report.config = config.to_json();
    report.rows.resize(users.size());

    MetricEngine engine(metric, a.items, config.engine_batch, config.engine_cost());
    std::unique_ptr<BatchExecutor> executor;
    if (!config.no_batching) {
        executor = std::make_unique<BatchExecutor>(engine, config.queue_config());
    }

    std::vector<SearchResult> results(users.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(config.query_threads);
    const auto start = std::chrono::steady_clock::now();
    {
        std::vector<std::thread> workers;
        for (std::size_t w = 0; w < config.query_threads; ++w) {
            workers.emplace_back([&, w] {
                try {
                    for (std::size_t q = next++; q < users.size(); q = next++) {
                        const auto query = a.users.row(users[q]);
                        std::unique_ptr<Scorer> scorer;
                        if (executor) {
                            scorer = std::make_unique<BatchedScorer>(*executor, query);
                        } else {
                            scorer = std::make_unique<EngineScorer>(engine, query);
                        }
                        results[q] = config.no_parallel ? greedy_search(a.index, *scorer, params)
                                                        : c_hipanns(a.index, *scorer, params);
                    }
                } catch (...) {
                    errors[w] = std::current_exception();
                    next = users.size();
                }
            });
        }
        for (auto& t : workers) {
            t.join();
        }
    }
    report.search_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (executor) {
        executor->shutdown();
        report.dispatch = to_json(executor->stats(), config.engine_batch);
    } else {
        report.dispatch = {{"batch_size", config.engine_batch}};
    }
    report.dispatch["engine_invocations"] = engine.invocations();
    report.dispatch["engine_simulated_seconds"] = engine.simulated_seconds();
    for (auto& e : errors) {
        if (e) {
            std::rethrow_exception(e);
        }
    }

    std::vector<ItemId> all(a.items.size());
    std::iota(all.begin(), all.end(), ItemId{0});
    const std::size_t depth = std::min(kGroundTruthDepth, all.size());
    for (std::size_t q = 0; q < users.size(); ++q) {
        RelevanceScorer direct(metric, a.users.row(users[q]), a.items);
        const auto truth = ids_of(brute_force(direct, all, depth).items);
        const auto found = ids_of(results[q].items);
        auto& row = report.rows[q];
        row.user = users[q];
        row.cov = coverage(found, truth);
        row.rec10 = recall_at(10, found, truth);
        row.rec100 = recall_at(100, found, truth);
        row.stats = results[q].stats;
        report.metric_evaluations += row.stats.metric_evaluations;
    }

    report.mean_cov = mean_of(report.rows, &QueryRow::cov);
    report.mean_rec10 = mean_of(report.rows, &QueryRow::rec10);
    report.mean_rec100 = mean_of(report.rows, &QueryRow::rec100);
    if (!report.rows.empty()) {
        double hops = 0.0;
        double visited = 0.0;
        for (const auto& row : report.rows) {
            hops += static_cast<double>(row.stats.hops_to_best);
            visited += static_cast<double>(row.stats.nodes_visited);
        }
        report.mean_hops_to_best = hops / static_cast<double>(report.rows.size());
        report.mean_nodes_visited = visited / static_cast<double>(report.rows.size());
    }
    report.speed = report.search_seconds > 0.0 ? measure_speed(report.metric_evaluations, report.search_seconds) : 0.0;
    report.rank_alignment = rank_alignment(a.model, a.data, 2000, config.seed + 3);
    if (!a.history.empty()) {
        std::tie(report.train_loss_start, report.train_loss_end) = smoothed_loss_endpoints(a.history);
    }
    report.model_bytes = serialized_size(a.model);
    return report;
}

Artifacts
prepare(const RunConfig& config) {
    Artifacts a;
    a.data = make_dataset(config);
    auto state = train_model(config, a.data);
    a.model = std::move(state.model);
    a.history = std::move(state.history);
    embed(a.model, a.data, a);
    a.index = build_index(config, a.items);
    return a;
}

EvalReport
run_experiment(const RunConfig& config) {
    EvalReport failed;
    failed.config = config.to_json();
    failed.run_id = run_id(config);
    auto stage = [&](const char* name, auto&& fn) -> bool {
        try {
            fn();
            return true;
        } catch (const std::exception& e) {
            failed.error_stage = name;
            failed.error_message = e.what();
            return false;
        }
    };

    Artifacts a;
    EvalReport report;
    TrainState state;
    const bool ok = stage("config", [&] { config.validate(); }) &&
                    stage("gen", [&] { a.data = make_dataset(config); }) &&
                    stage("train", [&] { state = train_model(config, a.data); }) &&
                    stage("build", [&] {
                        a.model = std::move(state.model);
                        a.history = std::move(state.history);
                        embed(a.model, a.data, a);
                        a.index = build_index(config, a.items);
                    }) &&
                    stage("search", [&] { report = evaluate(config, a); });
    return ok ? report : failed;
}

std::size_t
StressReport::invocation_bound(std::size_t batch_size) const {
    return (total_pairs + batch_size - 1) / batch_size + timeout_flushes;
}

double
StressReport::reduction() const {
    return batched_invocations == 0 ? 0.0
                                    : static_cast<double>(per_request_invocations) /
                                          static_cast<double>(batched_invocations);
}

nlohmann::json
StressReport::to_json(std::size_t batch_size) const {
    return {
        {"total_pairs", total_pairs},
        {"batched_invocations", batched_invocations},
        {"per_request_invocations", per_request_invocations},
        {"invocation_bound", invocation_bound(batch_size)},
        {"reduction", reduction()},
        {"timeout_flushes", timeout_flushes},
        {"shutdown_flushes", shutdown_flushes},
        {"pairs_dispatched", pairs_dispatched},
        {"mismatched_scores", mismatched_scores},
        {"failed_requests", failed_requests},
        {"batched_simulated_seconds", batched_simulated_seconds},
        {"per_request_simulated_seconds", per_request_simulated_seconds},
        {"wall_seconds", wall_seconds},
        {"dispatch", dispatch},
    };
}

StressReport
run_batch_stress(const StressConfig& config) {
    NANN_CHECK_ARG(config.min_size >= 1 && config.min_size <= config.max_size, "bad request size range");
    NANN_CHECK_ARG(config.producers >= 1 && config.items >= 1 && config.users >= 1, "bad stress shape");
    std::mt19937_64 rng(config.seed);
    Model model = make_model(ModelShape{});
    randomize(model, rng);
    const auto& metric = model.metric;
    const std::size_t dim = metric.embed_dim();
    std::normal_distribution<double> gauss(0.0, 1.0);
    EmbeddingTable items(config.items, dim);
    EmbeddingTable users(config.users, dim);
    for (auto* table : {&items, &users}) {
        for (std::size_t r = 0; r < table->size(); ++r) {
            for (auto& x : table->row(r)) {
                x = gauss(rng);
            }
        }
    }

    std::uniform_int_distribution<std::size_t> size_dist(config.min_size, config.max_size);
    std::uniform_int_distribution<std::size_t> user_dist(0, config.users - 1);
    std::uniform_int_distribution<ItemId> item_dist(0, static_cast<ItemId>(config.items - 1));
    std::vector<std::vector<EvalPair>> requests(config.requests);
    StressReport report;
    for (auto& request : requests) {
        const auto user = users.row(user_dist(rng));
        request.resize(size_dist(rng));
        for (auto& pair : request) {
            pair = {user, item_dist(rng)};
        }
        report.total_pairs += request.size();
    }

    EngineCost cost = config.cost;
    cost.sleep = false;
    MetricEngine batched(metric, items, config.batch_size, cost);
    std::vector<std::future<std::vector<double>>> futures(requests.size());
    const auto start = std::chrono::steady_clock::now();
    {
        BatchQueueConfig qc;
        qc.batch_size = config.batch_size;
        qc.flush_timeout = config.flush_timeout;
        qc.pipelining = config.pipelining;
        BatchExecutor executor(batched, qc);
        std::vector<std::thread> producers;
        for (std::size_t p = 0; p < config.producers; ++p) {
            producers.emplace_back([&, p] {
                std::mt19937_64 jitter(config.seed ^ (p + 1));
                for (std::size_t i = p; i < requests.size(); i += config.producers) {
                    futures[i] = executor.submit(requests[i]);
                    if (jitter() % 4 == 0) {
                        std::this_thread::yield();
                    }
                }
            });
        }
        for (auto& t : producers) {
            t.join();
        }
        for (std::size_t i = 0; i < requests.size(); ++i) {
            std::vector<double> scores;
            try {
                scores = futures[i].get();
            } catch (const std::exception&) {
                ++report.failed_requests;
                continue;
            }
            for (std::size_t j = 0; j < requests[i].size(); ++j) {
                const double direct = relevance(metric, requests[i][j].user, items.row(requests[i][j].item));
                if (j >= scores.size() || std::memcmp(&direct, &scores[j], sizeof(double)) != 0) {
                    ++report.mismatched_scores;
                }
            }
        }
        executor.shutdown();
        const auto stats = executor.stats();
        report.timeout_flushes = stats.timeout_flushes;
        report.shutdown_flushes = stats.shutdown_flushes;
        report.pairs_dispatched = stats.pairs_dispatched;
        report.dispatch = nann::to_json(stats, config.batch_size);
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    report.batched_invocations = batched.invocations();
    report.batched_simulated_seconds = batched.simulated_seconds();

    MetricEngine direct(metric, items, config.batch_size, cost);
    for (const auto& request : requests) {
        for (std::size_t b = 0; b < request.size(); b += config.batch_size) {
            const std::size_t n = std::min(config.batch_size, request.size() - b);
            direct.run(std::span<const EvalPair>(request).subspan(b, n));
        }
    }
    report.per_request_invocations = direct.invocations();
    report.per_request_simulated_seconds = direct.simulated_seconds();
    return report;
}

}  // namespace nann
