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

#include "nann/datamodel.h"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <tuple>

namespace nann {

namespace {

constexpr const char* kDataMagic = "NANN-DATA v1";
constexpr std::size_t kLatentDim = 4;

void
append_double(std::string& out, double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, ptr);
}

std::vector<std::string_view>
split_tabs(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

[[noreturn]] void
parse_fail(std::size_t line_no, const std::string& what) {
    throw Error(ErrorType::kParse, fmt::format("line {}: {}", line_no, what));
}

template <typename T>
T
parse_number(std::string_view field, std::size_t line_no) {
    T value{};
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
        parse_fail(line_no, fmt::format("malformed number '{}'", field));
    }
    return value;
}

double
sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

}  // namespace

void
Dataset::validate() const {
    NANN_CHECK_ARG(behavior_count > 0, "behavior count must be positive");
    const std::size_t dim = feature_dim();
    for (std::size_t i = 0; i < users.size(); ++i) {
        NANN_CHECK_ARG(users[i].id == i, "user ids must be dense and ordered");
        NANN_CHECK_ARG(users[i].features.size() == dim, "user feature dimension mismatch");
    }
    for (std::size_t i = 0; i < items.size(); ++i) {
        NANN_CHECK_ARG(items[i].id == i, "item ids must be dense and ordered");
        NANN_CHECK_ARG(items[i].features.size() == dim, "item feature dimension mismatch");
    }
    std::set<std::tuple<UserId, ItemId, std::uint32_t>> seen;
    for (const auto& r : interactions) {
        NANN_CHECK_ARG(r.user < users.size(), fmt::format("interaction references unknown user {}", r.user));
        NANN_CHECK_ARG(r.item < items.size(), fmt::format("interaction references unknown item {}", r.item));
        NANN_CHECK_ARG(r.behavior < behavior_count, "behavior type out of range");
        NANN_CHECK_ARG(r.value >= 0.0, "interaction value must be nonnegative");
        NANN_CHECK_ARG(seen.emplace(r.user, r.item, r.behavior).second, "duplicate interaction record");
    }
}

Dataset
generate_synthetic(const SyntheticSpec& spec) {
    NANN_CHECK_ARG(spec.users > 0 && spec.items > 0, "user and item counts must be positive");
    NANN_CHECK_ARG(spec.feature_dim > 0 && spec.behaviors > 0, "dimensions must be positive");
    NANN_CHECK_ARG(spec.density > 0.0 && spec.density <= 1.0, "density must lie in (0, 1]");

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t latent = std::min(kLatentDim, spec.feature_dim);
    const double latent_scale = 1.0 / std::sqrt(static_cast<double>(latent));

    auto draw_matrix = [&](std::size_t rows, std::size_t cols, double scale) {
        std::vector<double> m(rows * cols);
        for (auto& v : m) {
            v = normal(rng) * scale;
        }
        return m;
    };
    auto draw_latents = [&](std::size_t n) { return draw_matrix(n, latent, 1.0); };

    const auto user_latent = draw_latents(spec.users);
    const auto item_latent = draw_latents(spec.items);
    const auto user_map = draw_matrix(spec.feature_dim, latent, latent_scale);
    const auto item_map = draw_matrix(spec.feature_dim, latent, latent_scale);

    auto make_features = [&](const std::vector<double>& latents, const std::vector<double>& map, std::size_t row) {
        std::vector<double> x(spec.feature_dim);
        for (std::size_t f = 0; f < spec.feature_dim; ++f) {
            double acc = 0.0;
            for (std::size_t k = 0; k < latent; ++k) {
                acc += map[f * latent + k] * latents[row * latent + k];
            }
            x[f] = acc + 0.1 * normal(rng);
        }
        return x;
    };

    Dataset data;
    data.behavior_count = spec.behaviors;
    data.users.reserve(spec.users);
    for (std::size_t u = 0; u < spec.users; ++u) {
        data.users.push_back({static_cast<UserId>(u), make_features(user_latent, user_map, u)});
    }
    data.items.reserve(spec.items);
    for (std::size_t v = 0; v < spec.items; ++v) {
        data.items.push_back({static_cast<ItemId>(v), make_features(item_latent, item_map, v)});
    }

    // Per-behavior diagonal reweighting of the latent inner product.
    std::vector<double> behavior_gain(spec.behaviors * latent);
    for (auto& g : behavior_gain) {
        g = 1.0 + 0.3 * normal(rng);
    }

    const std::size_t z_dim = spec.behaviors;
    const std::size_t total = spec.users * spec.items * z_dim;
    const auto count = static_cast<std::size_t>(std::floor(spec.density * static_cast<double>(total)));
    std::vector<double> values(total);
    for (std::size_t u = 0; u < spec.users; ++u) {
        for (std::size_t v = 0; v < spec.items; ++v) {
            for (std::size_t z = 0; z < z_dim; ++z) {
                double affinity = 0.0;
                for (std::size_t k = 0; k < latent; ++k) {
                    affinity += user_latent[u * latent + k] * behavior_gain[z * latent + k] *
                                item_latent[v * latent + k];
                }
                affinity *= latent_scale;
                const double offset = -0.5 * static_cast<double>(z);
                values[(u * spec.items + v) * z_dim + z] =
                    sigmoid(2.0 * affinity + offset + 0.3 * normal(rng));
            }
        }
    }

    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto stronger = [&](std::size_t a, std::size_t b) {
        return values[a] != values[b] ? values[a] > values[b] : a < b;
    };
    if (count < total) {
        std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count), order.end(), stronger);
    }
    order.resize(count);
    std::sort(order.begin(), order.end());

    data.interactions.reserve(count);
    for (auto idx : order) {
        const auto z = static_cast<std::uint32_t>(idx % z_dim);
        const auto pair = idx / z_dim;
        data.interactions.push_back({static_cast<UserId>(pair / spec.items),
                                     static_cast<ItemId>(pair % spec.items), z, values[idx]});
    }
    return data;
}

std::vector<ObservedPair>
group_interactions(const Dataset& data) {
    std::map<std::pair<UserId, ItemId>, InteractionVector> grouped;
    for (const auto& r : data.interactions) {
        auto [it, inserted] = grouped.try_emplace({r.user, r.item});
        if (inserted) {
            it->second.assign(data.behavior_count, 0.0);
        }
        it->second[r.behavior] = r.value;
    }
    std::vector<ObservedPair> out;
    out.reserve(grouped.size());
    for (auto& [key, vec] : grouped) {
        out.push_back({key.first, key.second, std::move(vec)});
    }
    return out;
}

void
write_dataset(const Dataset& data, std::ostream& out) {
    std::string buf;
    buf += kDataMagic;
    buf += '\n';
    buf += fmt::format("users\t{}\titems\t{}\tfeature_dim\t{}\tbehaviors\t{}\tinteractions\t{}\n",
                       data.users.size(), data.items.size(), data.feature_dim(), data.behavior_count,
                       data.interactions.size());
    auto write_features = [&](char tag, std::uint32_t id, const std::vector<double>& f) {
        buf += tag;
        buf += '\t';
        buf += std::to_string(id);
        for (double v : f) {
            buf += '\t';
            append_double(buf, v);
        }
        buf += '\n';
    };
    for (const auto& u : data.users) {
        write_features('U', u.id, u.features);
    }
    for (const auto& v : data.items) {
        write_features('I', v.id, v.features);
    }
    for (const auto& r : data.interactions) {
        buf += fmt::format("R\t{}\t{}\t{}\t", r.user, r.item, r.behavior);
        append_double(buf, r.value);
        buf += '\n';
    }
    out << buf;
}

Dataset
read_dataset(std::istream& in) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) {
        parse_fail(line_no, "missing header");
    }
    if (line != kDataMagic) {
        if (line.rfind("NANN-DATA", 0) == 0) {
            throw Error(ErrorType::kVersionMismatch, fmt::format("unsupported dataset version '{}'", line));
        }
        parse_fail(line_no, "bad magic, expected 'NANN-DATA v1'");
    }
    ++line_no;
    if (!std::getline(in, line)) {
        parse_fail(line_no, "missing counts line");
    }
    auto header = split_tabs(line);
    const char* keys[] = {"users", "items", "feature_dim", "behaviors", "interactions"};
    if (header.size() != 10) {
        parse_fail(line_no, "counts line must hold 5 key/value pairs");
    }
    std::size_t counts[5];
    for (std::size_t k = 0; k < 5; ++k) {
        if (header[2 * k] != keys[k]) {
            parse_fail(line_no, fmt::format("expected key '{}'", keys[k]));
        }
        counts[k] = parse_number<std::size_t>(header[2 * k + 1], line_no);
    }
    const auto [n_users, n_items, dim, behaviors, n_records] =
        std::tuple{counts[0], counts[1], counts[2], counts[3], counts[4]};

    Dataset data;
    data.behavior_count = static_cast<std::uint32_t>(behaviors);
    data.users.reserve(n_users);
    data.items.reserve(n_items);
    data.interactions.reserve(n_records);

    auto read_features = [&](char tag, std::size_t expected_id) {
        ++line_no;
        if (!std::getline(in, line)) {
            parse_fail(line_no, fmt::format("unexpected end of file, expected '{}' record", tag));
        }
        auto fields = split_tabs(line);
        if (fields.size() != dim + 2 || fields[0].size() != 1 || fields[0][0] != tag) {
            parse_fail(line_no, fmt::format("malformed '{}' record", tag));
        }
        auto id = parse_number<std::uint32_t>(fields[1], line_no);
        if (id != expected_id) {
            parse_fail(line_no, fmt::format("expected id {}, found {}", expected_id, id));
        }
        std::vector<double> f(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            f[i] = parse_number<double>(fields[i + 2], line_no);
        }
        return std::pair{id, std::move(f)};
    };
    for (std::size_t u = 0; u < n_users; ++u) {
        auto [id, f] = read_features('U', u);
        data.users.push_back({id, std::move(f)});
    }
    for (std::size_t v = 0; v < n_items; ++v) {
        auto [id, f] = read_features('I', v);
        data.items.push_back({id, std::move(f)});
    }
    for (std::size_t r = 0; r < n_records; ++r) {
        ++line_no;
        if (!std::getline(in, line)) {
            parse_fail(line_no, "unexpected end of file, expected 'R' record");
        }
        auto fields = split_tabs(line);
        if (fields.size() != 5 || fields[0] != "R") {
            parse_fail(line_no, "malformed 'R' record");
        }
        data.interactions.push_back({parse_number<UserId>(fields[1], line_no),
                                     parse_number<ItemId>(fields[2], line_no),
                                     parse_number<std::uint32_t>(fields[3], line_no),
                                     parse_number<double>(fields[4], line_no)});
    }
    ++line_no;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            parse_fail(line_no, "trailing content after declared records");
        }
        ++line_no;
    }
    try {
        data.validate();
    } catch (const Error& e) {
        throw Error(ErrorType::kParse, e.what());
    }
    return data;
}

void
save_dataset(const Dataset& data, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorType::kIo, fmt::format("cannot open '{}' for writing", path.string()));
    }
    write_dataset(data, out);
    if (!out) {
        throw Error(ErrorType::kIo, fmt::format("write to '{}' failed", path.string()));
    }
}

Dataset
load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorType::kIo, fmt::format("cannot open '{}' for reading", path.string()));
    }
    return read_dataset(in);
}

}  // namespace nann
