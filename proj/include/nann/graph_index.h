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
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "nann/types.h"

namespace nann {

struct IndexParams {
    std::size_t max_degree{16};  ///< M; the base layer allows 2M
    std::size_t ef_construction{100};
    double level_prob{1.0 / 17.0};
    std::size_t max_layers{4};
    std::uint64_t seed{0};
    /// Prune candidates dominated by an already selected neighbor instead of
    /// keeping the M closest.
    bool diversity_heuristic{false};

    bool
    operator==(const IndexParams&) const = default;
};

/// Multi-layer navigable small-world graph over item ids. Layer 0 is the
/// base layer and holds every indexed item; adjacency is symmetric within a
/// layer. Vectors live outside the index in an EmbeddingTable addressed by
/// item id, and construction uses euclidean distance between them.
class GraphIndex {
public:
    GraphIndex() = default;
    explicit GraphIndex(IndexParams params);

    /// Inserts every row of `items` in id order.
    static GraphIndex
    build(const EmbeddingTable& items, const IndexParams& params);

    /// Inserts the given ids in order; duplicates are rejected.
    static GraphIndex
    build(const EmbeddingTable& items, std::span<const ItemId> ids, const IndexParams& params);

    void
    insert(const EmbeddingTable& items, ItemId id);

    bool
    contains(ItemId id) const {
        return id < level_of_.size() && level_of_[id] >= 0;
    }

    std::size_t
    size() const noexcept {
        return count_;
    }

    bool
    empty() const noexcept {
        return count_ == 0;
    }

    /// One past the largest id the index has seen; bounds per-query arrays.
    std::size_t
    id_capacity() const noexcept {
        return level_of_.size();
    }

    /// Number of layers currently in use (top level + 1).
    std::size_t
    layer_count() const noexcept {
        return layers_.size();
    }

    int
    level_of(ItemId id) const {
        return contains(id) ? level_of_[id] : -1;
    }

    ItemId
    entry_point() const noexcept {
        return entry_point_;
    }

    const IndexParams&
    params() const noexcept {
        return params_;
    }

    std::size_t
    degree_cap(std::size_t layer) const noexcept {
        return layer == 0 ? 2 * params_.max_degree : params_.max_degree;
    }

    std::span<const ItemId>
    neighbors(std::size_t layer, ItemId id) const;

    /// Ids present on `layer`, ascending.
    std::vector<ItemId>
    layer_nodes(std::size_t layer) const;

    std::vector<std::size_t>
    layer_populations() const;

    /// Level drawn for `id`: successes of a geometric trial with
    /// probability level_prob, capped at max_layers - 1. Pure in (seed, id).
    int
    draw_level(ItemId id) const;

    /// Human-readable list of broken invariants; empty when consistent.
    std::vector<std::string>
    violations() const;

    /// Throws invalid-argument listing the first violations.
    void
    validate() const;

    /// Nodes unreachable from the entry point on the base layer.
    std::size_t
    unreachable_base_nodes() const;

    void
    write(std::ostream& out) const;

    static GraphIndex
    read(std::istream& in);

    void
    save(const std::filesystem::path& path) const;

    static GraphIndex
    load(const std::filesystem::path& path);

    bool
    operator==(const GraphIndex&) const = default;

private:
    struct Candidate {
        double dist;
        ItemId id;
    };

    std::vector<Candidate>
    search_layer(const EmbeddingTable& items, std::span<const double> query, const std::vector<ItemId>& entries,
                 std::size_t ef, std::size_t layer) const;

    std::vector<ItemId>
    select_neighbors(const EmbeddingTable& items, std::vector<Candidate> candidates, std::size_t limit) const;

    void
    shrink(const EmbeddingTable& items, std::size_t layer, ItemId node);

    void
    remove_edge(std::size_t layer, ItemId from, ItemId to);

    void
    ensure_capacity(ItemId id);

    IndexParams params_{};
    std::vector<std::int8_t> level_of_;
    std::vector<std::vector<std::vector<ItemId>>> layers_;
    ItemId entry_point_{kInvalidItem};
    std::size_t count_{0};
};

/// Copy-on-write holder giving searches a frozen snapshot while a single
/// writer prepares the next version.
class IndexStore {
public:
    explicit IndexStore(GraphIndex index) : current_(std::make_shared<const GraphIndex>(std::move(index))) {
    }

    std::shared_ptr<const GraphIndex>
    snapshot() const {
        std::lock_guard lock(mutex_);
        return current_;
    }

    template <typename Fn>
    void
    update(Fn&& fn) {
        std::lock_guard writer(write_mutex_);
        auto next = std::make_shared<GraphIndex>(*snapshot());
        fn(*next);
        std::lock_guard lock(mutex_);
        current_ = std::move(next);
    }

private:
    mutable std::mutex mutex_;
    std::mutex write_mutex_;
    std::shared_ptr<const GraphIndex> current_;
};

}  // namespace nann
