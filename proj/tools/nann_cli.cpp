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

#include <fmt/format.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "nann/batch_executor.h"
#include "nann/config.h"
#include "nann/eval.h"
#include "nann/graph_index.h"
#include "nann/metric.h"
#include "nann/search.h"
#include "nann/training.h"

namespace fs = std::filesystem;
using namespace nann;

namespace {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kConfigFailed = 2,
    kGenFailed = 3,
    kTrainFailed = 4,
    kBuildFailed = 5,
    kSearchFailed = 6,
    kEvalFailed = 7,
    kBenchFailed = 8,
};

struct StageFailure {
    std::string stage;
    int code;
    std::string message;
};

struct Globals {
    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed{0};
    bool seed_set{false};
    fs::path out{"out"};
};

template <typename Fn>
auto
in_stage(const char* stage, int code, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw StageFailure{stage, code, e.what()};
    }
}

RunConfig
resolve_config(const Globals& g) {
    return in_stage("config", kConfigFailed, [&] {
        RunConfig config;
        if (!g.config_path.empty()) {
            config = load_config(g.config_path, config);
        }
        for (const auto& kv : g.overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                throw Error(ErrorType::kParse, fmt::format("override '{}' is not key=value", kv));
            }
            config.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (g.seed_set) {
            config.seed = g.seed;
        }
        config.validate();
        return config;
    });
}

fs::path
dataset_path(const Globals& g) {
    return g.out / "dataset.tsv";
}

fs::path
model_path(const Globals& g) {
    return g.out / "model.bin";
}

fs::path
index_path(const Globals& g) {
    return g.out / "index.bin";
}

void
write_echo(const RunConfig& config, const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream out(dir / "config.txt");
    config.write(out);
}

void
cmd_gen(const Globals& g) {
    const auto config = resolve_config(g);
    in_stage("gen", kGenFailed, [&] {
        const auto data = make_dataset(config);
        fs::create_directories(g.out);
        save_dataset(data, dataset_path(g));
        write_echo(config, g.out);
        fmt::print("wrote {} ({} users, {} items, {} interactions)\n", dataset_path(g).string(), data.users.size(),
                   data.items.size(), data.interactions.size());
    });
}

void
cmd_train(const Globals& g) {
    const auto config = resolve_config(g);
    in_stage("train", kTrainFailed, [&] {
        const auto data = load_dataset(dataset_path(g));
        const auto state = train_model(config, data);
        save_model(state.model, model_path(g));
        std::ofstream loss(g.out / "loss.tsv");
        write_loss_history(state.history, loss);
        const auto [first, last] = smoothed_loss_endpoints(state.history);
        fmt::print("wrote {} ({} steps, loss {:.4f} -> {:.4f})\n", model_path(g).string(), state.history.size(),
                   first, last);
    });
}

void
cmd_build(const Globals& g) {
    const auto config = resolve_config(g);
    in_stage("build", kBuildFailed, [&] {
        const auto data = load_dataset(dataset_path(g));
        const auto model = load_model(model_path(g));
        const auto items = project_all_items(model, data);
        const auto index = build_index(config, items);
        index.save(index_path(g));
        std::string pops;
        for (auto p : index.layer_populations()) {
            pops += fmt::format(" {}", p);
        }
        fmt::print("wrote {} ({} items, layers:{})\n", index_path(g).string(), index.size(), pops);
    });
}

void
cmd_search(const Globals& g, const std::vector<UserId>& users, bool with_truth) {
    const auto config = resolve_config(g);
    in_stage("search", kSearchFailed, [&] {
        const auto data = load_dataset(dataset_path(g));
        const auto model = load_model(model_path(g));
        const auto index = GraphIndex::load(index_path(g));
        const auto user_table = project_all_users(model, data);
        const auto items = project_all_items(model, data);
        const auto params = config.search_params();
        std::vector<ItemId> all(items.size());
        for (std::size_t i = 0; i < all.size(); ++i) {
            all[i] = static_cast<ItemId>(i);
        }
        nlohmann::json out = nlohmann::json::array();
        for (auto u : users) {
            NANN_CHECK_ARG(u < user_table.size(), fmt::format("unknown user {}", u));
            RelevanceScorer scorer(model.metric, user_table.row(u), items);
            const auto result =
                config.no_parallel ? greedy_search(index, scorer, params) : c_hipanns(index, scorer, params);
            nlohmann::json entry = {{"user", u}, {"stats", to_json(result.stats)}};
            nlohmann::json hits = nlohmann::json::array();
            for (const auto& item : result.items) {
                hits.push_back({{"item", item.id}, {"score", item.score}});
            }
            entry["items"] = hits;
            if (with_truth) {
                const auto truth = ids_of(brute_force(scorer, all, std::min<std::size_t>(100, all.size())).items);
                const auto found = ids_of(result.items);
                entry["cov"] = coverage(found, truth);
                entry["rec10"] = recall_at(10, found, truth);
                entry["rec100"] = recall_at(100, found, truth);
            }
            out.push_back(entry);
        }
        std::cout << out.dump(2) << '\n';
    });
}

void
cmd_eval(const Globals& g) {
    const auto config = resolve_config(g);
    const auto report = run_experiment(config);
    in_stage("eval", kEvalFailed, [&] {
        report.save(g.out);
        write_echo(config, g.out);
    });
    report.print_table(std::cout);
    if (!report.ok()) {
        const std::string stage = *report.error_stage;
        const int code = stage == "config" ? kConfigFailed
                         : stage == "gen"  ? kGenFailed
                         : stage == "train" ? kTrainFailed
                         : stage == "build" ? kBuildFailed
                                            : kSearchFailed;
        throw StageFailure{stage, code, report.error_message};
    }
}

void
cmd_bench(const Globals& g, StressConfig stress) {
    const auto config = resolve_config(g);
    in_stage("bench", kBenchFailed, [&] {
        stress.seed = config.seed;
        stress.batch_size = config.engine_batch;
        stress.flush_timeout = std::chrono::microseconds(config.flush_timeout_us);
        stress.pipelining = config.pipelining;
        stress.cost = config.engine_cost();
        if (stress.cost.fixed_seconds == 0.0 && stress.cost.per_pair_seconds == 0.0) {
            stress.cost.fixed_seconds = 50e-6;
            stress.cost.per_pair_seconds = 0.1e-6;
        }
        const auto report = run_batch_stress(stress);
        fs::create_directories(g.out);
        std::ofstream out(g.out / "bench.json");
        out << report.to_json(stress.batch_size).dump(2) << '\n';
        fmt::print("pairs {}  batched invocations {}  per-request invocations {}  reduction {:.2f}x\n",
                   report.total_pairs, report.batched_invocations, report.per_request_invocations,
                   report.reduction());
        fmt::print("simulated engine time: batched {:.4f}s  per-request {:.4f}s\n", report.batched_simulated_seconds,
                   report.per_request_simulated_seconds);
        fmt::print("mismatched scores {}  timeout flushes {}\n", report.mismatched_scores, report.timeout_flushes);
    });
}

}  // namespace

int
main(int argc, char** argv) {
    CLI::App app{"nann: learned-metric graph retrieval toolkit"};
    app.require_subcommand(1);
    Globals g;
    std::string out_dir = g.out.string();
    app.add_option("--config", g.config_path, "flat key=value config file")->check(CLI::ExistingFile);
    app.add_option("--set", g.overrides, "override one config key (key=value); repeatable");
    auto* seed_opt = app.add_option("--seed", g.seed, "master seed");
    app.add_option("--out", out_dir, "artifact directory");

    auto* gen = app.add_subcommand("gen", "generate the synthetic dataset");
    auto* train = app.add_subcommand("train", "train the relevance model");
    auto* build = app.add_subcommand("build", "build the graph index");
    auto* search = app.add_subcommand("search", "query saved artifacts");
    std::vector<UserId> users{0};
    bool with_truth = false;
    search->add_option("--user", users, "user ids to query");
    search->add_flag("--truth", with_truth, "score results against brute force");
    auto* eval = app.add_subcommand("eval", "run the full pipeline and write a report");
    auto* bench = app.add_subcommand("bench", "stress the batch queue against per-request dispatch");
    StressConfig stress;
    bench->add_option("--requests", stress.requests, "request count");
    bench->add_option("--min-size", stress.min_size, "smallest request");
    bench->add_option("--max-size", stress.max_size, "largest request");
    bench->add_option("--producers", stress.producers, "submitting threads");

    CLI11_PARSE(app, argc, argv);
    g.seed_set = seed_opt->count() > 0;
    g.out = out_dir;

    try {
        if (*gen) {
            cmd_gen(g);
        } else if (*train) {
            cmd_train(g);
        } else if (*build) {
            cmd_build(g);
        } else if (*search) {
            cmd_search(g, users, with_truth);
        } else if (*eval) {
            cmd_eval(g);
        } else if (*bench) {
            cmd_bench(g, stress);
        }
    } catch (const StageFailure& f) {
        std::cerr << fmt::format("error [{}]: {}\n", f.stage, f.message);
        return f.code;
    }
    return kOk;
}
