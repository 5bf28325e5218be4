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

#include "nann/config.h"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>

namespace nann {

namespace {

std::string_view
trim(std::string_view s) {
    const auto* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

template <typename T>
T
parse_number(std::string_view key, std::string_view text) {
    T value{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        throw Error(ErrorType::kParse, fmt::format("bad value '{}' for {}", text, key));
    }
    return value;
}

bool
parse_bool(std::string_view key, std::string_view text) {
    if (text == "true" || text == "1" || text == "yes" || text == "on") {
        return true;
    }
    if (text == "false" || text == "0" || text == "no" || text == "off") {
        return false;
    }
    throw Error(ErrorType::kParse, fmt::format("bad boolean '{}' for {}", text, key));
}

std::vector<std::size_t>
parse_list(std::string_view key, std::string_view text) {
    std::vector<std::size_t> out;
    while (!text.empty()) {
        const auto comma = text.find(',');
        out.push_back(parse_number<std::size_t>(key, trim(text.substr(0, comma))));
        if (comma == std::string_view::npos) {
            break;
        }
        text.remove_prefix(comma + 1);
    }
    return out;
}

std::string
list_text(const std::vector<std::size_t>& xs) {
    return fmt::format("{}", fmt::join(xs, ","));
}

struct Field {
    const char* name;
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<nlohmann::json(const RunConfig&)> get;
};

template <typename T>
Field
field(const char* name, T RunConfig::*member) {
    return {name,
            [name, member](RunConfig& c, std::string_view v) {
                if constexpr (std::is_same_v<T, bool>) {
                    c.*member = parse_bool(name, v);
                } else {
                    c.*member = parse_number<T>(name, v);
                }
            },
            [member](const RunConfig& c) { return nlohmann::json(c.*member); }};
}

const std::vector<Field>&
fields() {
    static const std::vector<Field> table = {
        field("seed", &RunConfig::seed),
        field("users", &RunConfig::users),
        field("items", &RunConfig::items),
        field("feature_dim", &RunConfig::feature_dim),
        field("behaviors", &RunConfig::behaviors),
        field("density", &RunConfig::density),
        field("embed_dim", &RunConfig::embed_dim),
        {"hidden", [](RunConfig& c, std::string_view v) { c.hidden = parse_list("hidden", v); },
         [](const RunConfig& c) { return nlohmann::json(list_text(c.hidden)); }},
        field("serendipity_sigma", &RunConfig::serendipity_sigma),
        field("epochs", &RunConfig::epochs),
        field("train_batch", &RunConfig::train_batch),
        field("learning_rate", &RunConfig::learning_rate),
        field("scl_pairs", &RunConfig::scl_pairs),
        field("lambda_scl", &RunConfig::lambda_scl),
        field("negative_ratio", &RunConfig::negative_ratio),
        {"precision",
         [](RunConfig& c, std::string_view v) {
             if (v == "fp32") {
                 c.precision = Precision::kFp32;
             } else if (v == "fp16") {
                 c.precision = Precision::kFp16;
             } else {
                 throw Error(ErrorType::kParse, fmt::format("bad precision '{}'", v));
             }
         },
         [](const RunConfig& c) { return nlohmann::json(c.precision == Precision::kFp16 ? "fp16" : "fp32"); }},
        field("max_degree", &RunConfig::max_degree),
        field("ef_construction", &RunConfig::ef_construction),
        field("level_prob", &RunConfig::level_prob),
        field("max_layers", &RunConfig::max_layers),
        field("diversity_heuristic", &RunConfig::diversity_heuristic),
        field("k", &RunConfig::k),
        field("k_parallel", &RunConfig::k_parallel),
        field("hops", &RunConfig::hops),
        field("ef", &RunConfig::ef),
        field("deterministic", &RunConfig::deterministic),
        field("queries", &RunConfig::queries),
        field("query_threads", &RunConfig::query_threads),
        field("engine_batch", &RunConfig::engine_batch),
        field("flush_timeout_us", &RunConfig::flush_timeout_us),
        field("max_pending_pairs", &RunConfig::max_pending_pairs),
        field("pipelining", &RunConfig::pipelining),
        field("engine_fixed_us", &RunConfig::engine_fixed_us),
        field("engine_per_pair_us", &RunConfig::engine_per_pair_us),
        field("no_scl", &RunConfig::no_scl),
        field("no_multirel", &RunConfig::no_multirel),
        field("no_parallel", &RunConfig::no_parallel),
        field("no_batching", &RunConfig::no_batching),
    };
    return table;
}

}  // namespace

void
RunConfig::set(std::string_view key, std::string_view value) {
    for (const auto& f : fields()) {
        if (key == f.name) {
            f.set(*this, trim(value));
            return;
        }
    }
    throw Error(ErrorType::kParse, fmt::format("unknown config key '{}'", key));
}

void
RunConfig::validate() const {
    NANN_CHECK_ARG(users > 0 && items > 0, "users and items must be positive");
    NANN_CHECK_ARG(feature_dim > 0 && embed_dim > 0, "dimensions must be positive");
    NANN_CHECK_ARG(behaviors > 0, "behaviors must be positive");
    NANN_CHECK_ARG(density > 0.0 && density <= 1.0, "density must lie in (0, 1]");
    NANN_CHECK_ARG(k >= 1 && k <= items, "k must lie in [1, items]");
    NANN_CHECK_ARG(k_parallel >= 1 && k_parallel <= k, "k_parallel must lie in [1, k]");
    NANN_CHECK_ARG(hops >= 1, "hops must be positive");
    NANN_CHECK_ARG(query_threads >= 1, "query_threads must be positive");
    NANN_CHECK_ARG(engine_batch >= 1, "engine_batch must be positive");
    NANN_CHECK_ARG(engine_fixed_us >= 0.0 && engine_per_pair_us >= 0.0, "engine cost must be nonnegative");
    NANN_CHECK_ARG(max_degree >= 1 && max_layers >= 1, "index shape must be positive");
    NANN_CHECK_ARG(level_prob > 0.0 && level_prob < 1.0, "level_prob must lie in (0, 1)");
    train_config().validate();
}

SyntheticSpec
RunConfig::synthetic_spec() const {
    SyntheticSpec spec;
    spec.seed = seed;
    spec.users = users;
    spec.items = items;
    spec.feature_dim = feature_dim;
    spec.behaviors = behaviors;
    spec.density = density;
    return spec;
}

TrainConfig
RunConfig::train_config() const {
    TrainConfig config;
    config.epochs = epochs;
    config.batch_size = train_batch;
    config.learning_rate = learning_rate;
    config.scl_pairs = scl_pairs;
    config.lambda_scl = no_scl ? 0.0 : lambda_scl;
    config.negative_ratio = negative_ratio;
    config.seed = seed + 1;
    if (no_multirel) {
        config.single_behavior = 0;
    }
    config.shape.feature_dim = feature_dim;
    config.shape.embed_dim = embed_dim;
    config.shape.hidden = hidden;
    config.shape.behaviors = behaviors;
    config.shape.serendipity_sigma = serendipity_sigma;
    return config;
}

IndexParams
RunConfig::index_params() const {
    IndexParams params;
    params.max_degree = max_degree;
    params.ef_construction = ef_construction;
    params.level_prob = level_prob;
    params.max_layers = max_layers;
    params.seed = seed + 2;
    params.diversity_heuristic = diversity_heuristic;
    return params;
}

SearchParams
RunConfig::search_params() const {
    SearchParams params;
    params.k = k;
    params.k_parallel = no_parallel ? 1 : k_parallel;
    params.hops = hops;
    params.ef = ef;
    params.deterministic = deterministic;
    return params;
}

BatchQueueConfig
RunConfig::queue_config() const {
    BatchQueueConfig config;
    config.batch_size = engine_batch;
    config.flush_timeout = std::chrono::microseconds(flush_timeout_us);
    config.max_pending_pairs = max_pending_pairs;
    config.pipelining = pipelining;
    return config;
}

EngineCost
RunConfig::engine_cost() const {
    EngineCost cost;
    cost.fixed_seconds = engine_fixed_us * 1e-6;
    cost.per_pair_seconds = engine_per_pair_us * 1e-6;
    cost.sleep = engine_fixed_us > 0.0 || engine_per_pair_us > 0.0;
    return cost;
}

nlohmann::json
RunConfig::to_json() const {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& f : fields()) {
        out[f.name] = f.get(*this);
    }
    return out;
}

void
RunConfig::write(std::ostream& out) const {
    for (const auto& f : fields()) {
        const auto value = f.get(*this);
        out << f.name << " = " << (value.is_string() ? value.get<std::string>() : value.dump()) << '\n';
    }
}

RunConfig
parse_config(std::istream& in, RunConfig base) {
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        std::string_view view = line;
        if (const auto hash = view.find('#'); hash != std::string_view::npos) {
            view = view.substr(0, hash);
        }
        view = trim(view);
        if (view.empty()) {
            continue;
        }
        const auto eq = view.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorType::kParse, fmt::format("line {}: expected key = value", number));
        }
        try {
            base.set(trim(view.substr(0, eq)), trim(view.substr(eq + 1)));
        } catch (const Error& e) {
            throw Error(ErrorType::kParse, fmt::format("line {}: {}", number, e.what()));
        }
    }
    return base;
}

RunConfig
load_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorType::kIo, fmt::format("cannot open config {}", path.string()));
    }
    return parse_config(in, std::move(base));
}

std::string
run_id(const RunConfig& config) {
    const std::string text = config.to_json().dump();
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", hash);
}

}  // namespace nann
