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

#include "nann/graph_index.h"

#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <queue>

#include "binary_io.h"
#include "nann/metric.h"

namespace nann {

namespace {

constexpr std::string_view kIndexMagic = "NANN-IDX";
constexpr std::uint32_t kIndexVersion = 1;

std::uint64_t
splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

GraphIndex::GraphIndex(IndexParams params) : params_(params) {
    NANN_CHECK_ARG(params_.max_degree >= 2, "max_degree must be at least 2");
    NANN_CHECK_ARG(params_.ef_construction >= 1, "ef_construction must be positive");
    NANN_CHECK_ARG(params_.level_prob >= 0.0 && params_.level_prob < 1.0, "level_prob must lie in [0, 1)");
    NANN_CHECK_ARG(params_.max_layers >= 1 && params_.max_layers <= 64, "max_layers must lie in [1, 64]");
}

GraphIndex
GraphIndex::build(const EmbeddingTable& items, const IndexParams& params) {
    std::vector<ItemId> ids(items.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        ids[i] = static_cast<ItemId>(i);
    }
    return build(items, ids, params);
}

GraphIndex
GraphIndex::build(const EmbeddingTable& items, std::span<const ItemId> ids, const IndexParams& params) {
    NANN_CHECK_ARG(!ids.empty(), "build needs at least one item");
    std::vector<ItemId> sorted(ids.begin(), ids.end());
    std::sort(sorted.begin(), sorted.end());
    NANN_CHECK_ARG(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), "duplicate item id in build");
    GraphIndex index(params);
    for (auto id : ids) {
        index.insert(items, id);
    }
    return index;
}

int
GraphIndex::draw_level(ItemId id) const {
    std::uint64_t state = params_.seed ^ (static_cast<std::uint64_t>(id) * 0xd1b54a32d192ed03ULL);
    int level = 0;
    const int cap = static_cast<int>(params_.max_layers) - 1;
    while (level < cap) {
        const double u = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
        if (u >= params_.level_prob) {
            break;
        }
        ++level;
    }
    return level;
}

void
GraphIndex::ensure_capacity(ItemId id) {
    if (id < level_of_.size()) {
        return;
    }
    const std::size_t n = static_cast<std::size_t>(id) + 1;
    level_of_.resize(n, -1);
    for (auto& layer : layers_) {
        layer.resize(n);
    }
}

std::span<const ItemId>
GraphIndex::neighbors(std::size_t layer, ItemId id) const {
    if (layer >= layers_.size() || id >= layers_[layer].size()) {
        return {};
    }
    return layers_[layer][id];
}

std::vector<GraphIndex::Candidate>
GraphIndex::search_layer(const EmbeddingTable& items, std::span<const double> query,
                         const std::vector<ItemId>& entries, std::size_t ef, std::size_t layer) const {
    auto closer = [](const Candidate& a, const Candidate& b) {
        return a.dist != b.dist ? a.dist < b.dist : a.id < b.id;
    };
    auto farther = [&](const Candidate& a, const Candidate& b) { return closer(b, a); };
    // candidates: closest on top; results: farthest on top.
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(farther)> candidates(farther);
    std::priority_queue<Candidate, std::vector<Candidate>, decltype(closer)> results(closer);
    std::vector<bool> visited(level_of_.size(), false);

    for (auto e : entries) {
        if (visited[e]) {
            continue;
        }
        visited[e] = true;
        Candidate c{euclidean_distance(query, items.row(e)), e};
        candidates.push(c);
        results.push(c);
        if (results.size() > ef) {
            results.pop();
        }
    }
    const auto& adjacency = layers_[layer];
    while (!candidates.empty()) {
        const Candidate current = candidates.top();
        if (results.size() >= ef && closer(results.top(), current)) {
            break;
        }
        candidates.pop();
        for (auto n : adjacency[current.id]) {
            if (visited[n]) {
                continue;
            }
            visited[n] = true;
            Candidate c{euclidean_distance(query, items.row(n)), n};
            if (results.size() < ef || closer(c, results.top())) {
                candidates.push(c);
                results.push(c);
                if (results.size() > ef) {
                    results.pop();
                }
            }
        }
    }
    std::vector<Candidate> out;
    out.reserve(results.size());
    while (!results.empty()) {
        out.push_back(results.top());
        results.pop();
    }
    std::reverse(out.begin(), out.end());
    return out;
}

std::vector<ItemId>
GraphIndex::select_neighbors(const EmbeddingTable& items, std::vector<Candidate> candidates,
                             std::size_t limit) const {
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        return a.dist != b.dist ? a.dist < b.dist : a.id < b.id;
    });
    std::vector<ItemId> selected;
    selected.reserve(std::min(limit, candidates.size()));
    for (const auto& c : candidates) {
        if (selected.size() >= limit) {
            break;
        }
        if (params_.diversity_heuristic) {
            const bool dominated = std::any_of(selected.begin(), selected.end(), [&](ItemId s) {
                return euclidean_distance(items.row(c.id), items.row(s)) < c.dist;
            });
            if (dominated) {
                continue;
            }
        }
        selected.push_back(c.id);
    }
    return selected;
}

void
GraphIndex::remove_edge(std::size_t layer, ItemId from, ItemId to) {
    auto& adj = layers_[layer][from];
    adj.erase(std::remove(adj.begin(), adj.end(), to), adj.end());
}

void
GraphIndex::shrink(const EmbeddingTable& items, std::size_t layer, ItemId node) {
    auto& adj = layers_[layer][node];
    std::vector<Candidate> candidates;
    candidates.reserve(adj.size());
    for (auto n : adj) {
        candidates.push_back({euclidean_distance(items.row(node), items.row(n)), n});
    }
    auto keep = select_neighbors(items, candidates, degree_cap(layer));
    std::vector<ItemId> dropped;
    for (auto n : adj) {
        if (std::find(keep.begin(), keep.end(), n) == keep.end()) {
            dropped.push_back(n);
        }
    }
    adj = std::move(keep);
    for (auto n : dropped) {
        remove_edge(layer, n, node);
    }
}

void
GraphIndex::insert(const EmbeddingTable& items, ItemId id) {
    NANN_CHECK_ARG(id != kInvalidItem && id < items.size(), fmt::format("item {} has no embedding", id));
    NANN_CHECK_ARG(!contains(id), fmt::format("item {} is already indexed", id));
    const int level = draw_level(id);
    ensure_capacity(id);
    level_of_[id] = static_cast<std::int8_t>(level);
    ++count_;

    if (count_ == 1) {
        layers_.assign(static_cast<std::size_t>(level) + 1, std::vector<std::vector<ItemId>>(level_of_.size()));
        entry_point_ = id;
        return;
    }

    const int old_top = static_cast<int>(layers_.size()) - 1;
    while (static_cast<int>(layers_.size()) <= level) {
        layers_.emplace_back(level_of_.size());
    }

    const auto query = items.row(id);
    std::vector<ItemId> entries{entry_point_};
    for (int l = old_top; l > level; --l) {
        auto best = search_layer(items, query, entries, 1, static_cast<std::size_t>(l));
        entries = {best.front().id};
    }
    for (int l = std::min(level, old_top); l >= 0; --l) {
        const auto layer = static_cast<std::size_t>(l);
        auto candidates = search_layer(items, query, entries, params_.ef_construction, layer);
        auto chosen = select_neighbors(items, candidates, params_.max_degree);
        auto& own = layers_[layer][id];
        for (auto n : chosen) {
            own.push_back(n);
            layers_[layer][n].push_back(id);
        }
        for (auto n : chosen) {
            if (layers_[layer][n].size() > degree_cap(layer)) {
                shrink(items, layer, n);
            }
        }
        entries.clear();
        for (const auto& c : candidates) {
            entries.push_back(c.id);
        }
    }
    if (level > old_top) {
        entry_point_ = id;
    }
}

std::vector<ItemId>
GraphIndex::layer_nodes(std::size_t layer) const {
    std::vector<ItemId> out;
    for (std::size_t i = 0; i < level_of_.size(); ++i) {
        if (level_of_[i] >= static_cast<int>(layer)) {
            out.push_back(static_cast<ItemId>(i));
        }
    }
    return out;
}

std::vector<std::size_t>
GraphIndex::layer_populations() const {
    std::vector<std::size_t> pop(layers_.size(), 0);
    for (auto lv : level_of_) {
        for (int l = 0; l <= lv; ++l) {
            ++pop[static_cast<std::size_t>(l)];
        }
    }
    return pop;
}

std::vector<std::string>
GraphIndex::violations() const {
    std::vector<std::string> out;
    std::size_t present = 0;
    int top = -1;
    for (auto lv : level_of_) {
        if (lv >= 0) {
            ++present;
            top = std::max(top, static_cast<int>(lv));
        }
    }
    if (present != count_) {
        out.push_back(fmt::format("node count {} disagrees with level table ({})", count_, present));
    }
    if (count_ == 0) {
        if (!layers_.empty() || entry_point_ != kInvalidItem) {
            out.emplace_back("empty index carries layers or an entry point");
        }
        return out;
    }
    if (layers_.size() != static_cast<std::size_t>(top) + 1) {
        out.push_back(fmt::format("layer count {} but top level {}", layers_.size(), top));
    }
    if (layers_.size() > params_.max_layers) {
        out.push_back(fmt::format("layer count {} exceeds cap {}", layers_.size(), params_.max_layers));
    }
    if (!contains(entry_point_) || level_of_[entry_point_] != top) {
        out.push_back(fmt::format("entry point {} is not on the top layer", entry_point_));
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& layer = layers_[l];
        if (layer.size() != level_of_.size()) {
            out.push_back(fmt::format("layer {} adjacency table has wrong size", l));
            continue;
        }
        for (std::size_t a = 0; a < layer.size(); ++a) {
            const auto& adj = layer[a];
            if (adj.empty()) {
                continue;
            }
            if (level_of_[a] < static_cast<int>(l)) {
                out.push_back(fmt::format("node {} has edges on layer {} above its level", a, l));
            }
            if (adj.size() > degree_cap(l)) {
                out.push_back(fmt::format("node {} degree {} exceeds cap on layer {}", a, adj.size(), l));
            }
            std::vector<ItemId> sorted = adj;
            std::sort(sorted.begin(), sorted.end());
            if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
                out.push_back(fmt::format("node {} has duplicate neighbors on layer {}", a, l));
            }
            for (auto b : adj) {
                if (b == a) {
                    out.push_back(fmt::format("node {} has a self loop on layer {}", a, l));
                    continue;
                }
                if (b >= layer.size() || level_of_[b] < static_cast<int>(l)) {
                    out.push_back(fmt::format("edge {}->{} on layer {} leaves the layer", a, b, l));
                    continue;
                }
                const auto& back = layer[b];
                if (std::find(back.begin(), back.end(), static_cast<ItemId>(a)) == back.end()) {
                    out.push_back(fmt::format("edge {}->{} on layer {} is not symmetric", a, b, l));
                }
            }
        }
    }
    return out;
}

void
GraphIndex::validate() const {
    auto v = violations();
    if (!v.empty()) {
        std::string msg = fmt::format("{} index invariant violation(s): {}", v.size(), v.front());
        throw Error(ErrorType::kInvalidArgument, msg);
    }
}

std::size_t
GraphIndex::unreachable_base_nodes() const {
    if (count_ == 0) {
        return 0;
    }
    std::vector<bool> seen(level_of_.size(), false);
    std::vector<ItemId> stack{entry_point_};
    seen[entry_point_] = true;
    std::size_t reached = 0;
    while (!stack.empty()) {
        auto n = stack.back();
        stack.pop_back();
        ++reached;
        for (auto m : layers_[0][n]) {
            if (!seen[m]) {
                seen[m] = true;
                stack.push_back(m);
            }
        }
    }
    return count_ - reached;
}

// Layout: magic, u32 version, u32 layer count, u32 M, f64 level_prob,
// u32 entry point, u32 ef_construction, u32 max_layers, u64 seed,
// u8 diversity flag, u32 id capacity N, N x i8 levels, then per layer a CSR
// block: (N + 1) x u32 offsets followed by the u32 neighbor ids.
void
GraphIndex::write(std::ostream& out) const {
    detail::BinaryWriter w(out);
    w.bytes(kIndexMagic);
    w.uint<std::uint32_t>(kIndexVersion);
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(layers_.size()));
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(params_.max_degree));
    w.f64(params_.level_prob);
    w.uint<std::uint32_t>(entry_point_);
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(params_.ef_construction));
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(params_.max_layers));
    w.uint<std::uint64_t>(params_.seed);
    w.uint<std::uint8_t>(params_.diversity_heuristic ? 1 : 0);
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(level_of_.size()));
    for (auto lv : level_of_) {
        w.uint<std::uint8_t>(static_cast<std::uint8_t>(lv));
    }
    for (const auto& layer : layers_) {
        std::uint32_t offset = 0;
        w.uint<std::uint32_t>(offset);
        for (const auto& adj : layer) {
            offset += static_cast<std::uint32_t>(adj.size());
            w.uint<std::uint32_t>(offset);
        }
        for (const auto& adj : layer) {
            for (auto n : adj) {
                w.uint<std::uint32_t>(n);
            }
        }
    }
}

GraphIndex
GraphIndex::read(std::istream& in) {
    detail::BinaryReader r(in, "index file");
    if (r.bytes(kIndexMagic.size()) != kIndexMagic) {
        throw Error(ErrorType::kParse, "index file: bad magic");
    }
    const auto version = r.uint<std::uint32_t>();
    if (version != kIndexVersion) {
        throw Error(ErrorType::kVersionMismatch, fmt::format("index file version {} is not supported", version));
    }
    const auto layer_count = r.uint<std::uint32_t>();
    IndexParams params;
    params.max_degree = r.uint<std::uint32_t>();
    params.level_prob = r.f64();
    const auto entry = r.uint<std::uint32_t>();
    params.ef_construction = r.uint<std::uint32_t>();
    params.max_layers = r.uint<std::uint32_t>();
    params.seed = r.uint<std::uint64_t>();
    params.diversity_heuristic = r.uint<std::uint8_t>() != 0;
    const auto capacity = r.uint<std::uint32_t>();
    if (layer_count > params.max_layers) {
        throw Error(ErrorType::kParse, "index file: layer count exceeds max_layers");
    }

    GraphIndex index(params);
    index.entry_point_ = entry;
    index.level_of_.resize(capacity);
    for (auto& lv : index.level_of_) {
        lv = static_cast<std::int8_t>(r.uint<std::uint8_t>());
        if (lv >= 0) {
            ++index.count_;
        }
    }
    index.layers_.assign(layer_count, std::vector<std::vector<ItemId>>(capacity));
    for (auto& layer : index.layers_) {
        std::vector<std::uint32_t> offsets(static_cast<std::size_t>(capacity) + 1);
        for (auto& o : offsets) {
            o = r.uint<std::uint32_t>();
        }
        for (std::size_t n = 0; n < capacity; ++n) {
            if (offsets[n + 1] < offsets[n]) {
                throw Error(ErrorType::kParse, "index file: offsets are not monotone");
            }
            layer[n].resize(offsets[n + 1] - offsets[n]);
            for (auto& nb : layer[n]) {
                nb = r.uint<std::uint32_t>();
            }
        }
    }
    auto problems = index.violations();
    if (!problems.empty()) {
        throw Error(ErrorType::kParse, "index file: " + problems.front());
    }
    return index;
}

void
GraphIndex::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorType::kIo, fmt::format("cannot open '{}' for writing", path.string()));
    }
    write(out);
    if (!out) {
        throw Error(ErrorType::kIo, fmt::format("write to '{}' failed", path.string()));
    }
}

GraphIndex
GraphIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorType::kIo, fmt::format("cannot open '{}' for reading", path.string()));
    }
    return read(in);
}

}  // namespace nann
