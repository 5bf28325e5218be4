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

#include "nann/search.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <memory>
#include <optional>
#include <queue>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "nann/candidate_pool.h"

namespace nann {

namespace {

using Clock = std::chrono::steady_clock;

double
seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<ScoredItem>
zip_scores(const std::vector<ItemId>& ids, const std::vector<double>& scores) {
    NANN_CHECK_ARG(ids.size() == scores.size(), "scorer returned the wrong number of scores");
    std::vector<ScoredItem> out(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out[i] = {ids[i], scores[i]};
    }
    return out;
}

void
validate_params(const GraphIndex& index, const SearchParams& params) {
    NANN_CHECK_ARG(!index.empty(), "search needs a nonempty index");
    NANN_CHECK_ARG(params.k >= 1, "k must be at least 1");
    NANN_CHECK_ARG(params.k_parallel >= 1, "k_parallel must be at least 1");
    NANN_CHECK_ARG(params.hops >= 1, "hop budget must be at least 1");
}

// Records, per item, the evaluation round in which it was first scored.
class RoundTracker {
public:
    explicit RoundTracker(std::size_t capacity) : rounds_(capacity, 0) {
    }

    void
    mark(std::span<const ItemId> ids, std::size_t round) {
        for (auto id : ids) {
            rounds_[id] = round;
        }
    }

    std::size_t
    of(ItemId id) const {
        return rounds_[id];
    }

private:
    std::vector<std::size_t> rounds_;
};

// Scores published by whichever searcher evaluated an item first. Readers
// wait on items that another searcher has claimed but not yet scored.
class ScoreBoard {
public:
    explicit ScoreBoard(std::size_t capacity)
        : scores_(capacity, 0.0), ready_(std::make_unique<std::atomic<std::uint8_t>[]>(capacity)) {
        for (std::size_t i = 0; i < capacity; ++i) {
            ready_[i].store(0, std::memory_order_relaxed);
        }
    }

    void
    publish(std::span<const ScoredItem> items) {
        for (const auto& s : items) {
            scores_[s.id] = s.score;
            ready_[s.id].store(1, std::memory_order_release);
        }
    }

    /// Empty once `abort` is raised while still waiting.
    std::optional<double>
    wait(ItemId id, const std::atomic<bool>& abort) const {
        while (ready_[id].load(std::memory_order_acquire) == 0) {
            if (abort.load(std::memory_order_acquire)) {
                return std::nullopt;
            }
            std::this_thread::yield();
        }
        return scores_[id];
    }

private:
    std::vector<double> scores_;
    std::unique_ptr<std::atomic<std::uint8_t>[]> ready_;
};

}  // namespace

SearchResult
brute_force(Scorer& scorer, std::span<const ItemId> candidates, std::size_t k) {
    NANN_CHECK_ARG(k >= 1 && k <= candidates.size(), "brute force needs 1 <= k <= candidate count");
    const auto start = Clock::now();
    std::vector<ItemId> ids(candidates.begin(), candidates.end());
    auto items = zip_scores(ids, scorer.score(ids));
    std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(k), items.end(), ranks_before);
    items.resize(k);
    SearchResult result;
    result.items = std::move(items);
    result.stats.nodes_visited = candidates.size();
    result.stats.metric_evaluations = candidates.size();
    result.stats.visited_per_layer = {candidates.size()};
    result.stats.hops_to_best = 1;
    result.stats.wall_seconds = seconds_since(start);
    return result;
}

SearchResult
greedy_search(const GraphIndex& index, Scorer& scorer, const SearchParams& params) {
    validate_params(index, params);
    const auto start = Clock::now();
    const std::size_t ef = std::max(params.k, params.effective_ef());

    SearchResult result;
    auto& stats = result.stats;
    stats.k_parallel = 1;
    stats.visited_per_layer.assign(index.layer_count(), 0);

    std::unordered_map<ItemId, double> cache;
    RoundTracker rounds(index.id_capacity());
    std::size_t round = 0;
    auto evaluate = [&](const std::vector<ItemId>& ids) {
        std::vector<ItemId> fresh;
        for (auto id : ids) {
            if (!cache.contains(id)) {
                fresh.push_back(id);
            }
        }
        if (!fresh.empty()) {
            ++round;
            auto scores = scorer.score(fresh);
            NANN_CHECK_ARG(scores.size() == fresh.size(), "scorer returned the wrong number of scores");
            for (std::size_t i = 0; i < fresh.size(); ++i) {
                cache.emplace(fresh[i], scores[i]);
            }
            rounds.mark(fresh, round);
            stats.metric_evaluations += fresh.size();
        }
        std::vector<ScoredItem> out(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            out[i] = {ids[i], cache.at(ids[i])};
        }
        return out;
    };

    auto worse = [](const ScoredItem& a, const ScoredItem& b) { return ranks_before(b, a); };
    std::vector<ItemId> entries{index.entry_point()};
    std::vector<ScoredItem> layer_results;
    for (std::size_t l = index.layer_count(); l-- > 0;) {
        // best candidate on top / worst result on top
        std::priority_queue<ScoredItem, std::vector<ScoredItem>, decltype(worse)> candidates(worse);
        std::priority_queue<ScoredItem, std::vector<ScoredItem>, decltype(&ranks_before)> results(ranks_before);
        std::vector<bool> visited(index.id_capacity(), false);
        std::size_t visited_here = 0;

        auto consider = [&](const ScoredItem& item) {
            if (results.size() < ef || ranks_before(item, results.top())) {
                candidates.push(item);
                results.push(item);
                if (results.size() > ef) {
                    results.pop();
                }
            }
        };
        std::vector<ItemId> seeds;
        for (auto e : entries) {
            if (!visited[e]) {
                visited[e] = true;
                seeds.push_back(e);
            }
        }
        visited_here += seeds.size();
        for (const auto& item : evaluate(seeds)) {
            consider(item);
        }
        while (!candidates.empty()) {
            const ScoredItem current = candidates.top();
            if (results.size() >= ef && ranks_before(results.top(), current)) {
                break;
            }
            candidates.pop();
            std::vector<ItemId> fresh;
            for (auto n : index.neighbors(l, current.id)) {
                if (!visited[n]) {
                    visited[n] = true;
                    fresh.push_back(n);
                }
            }
            visited_here += fresh.size();
            for (const auto& item : evaluate(fresh)) {
                consider(item);
            }
        }
        stats.visited_per_layer[l] = visited_here;

        layer_results.clear();
        while (!results.empty()) {
            layer_results.push_back(results.top());
            results.pop();
        }
        std::reverse(layer_results.begin(), layer_results.end());
        entries.clear();
        for (const auto& item : layer_results) {
            entries.push_back(item.id);
        }
    }
    if (layer_results.size() > params.k) {
        layer_results.resize(params.k);
    }
    result.items = std::move(layer_results);
    stats.nodes_visited = cache.size();
    stats.hops_to_best = result.items.empty() ? 0 : rounds.of(result.items.front().id);
    stats.wall_seconds = seconds_since(start);
    return result;
}

SearchResult
c_hipanns(const GraphIndex& index, Scorer& scorer, const SearchParams& params) {
    validate_params(index, params);
    NANN_CHECK_ARG(params.k_parallel <= params.k, "k_parallel must not exceed k");
    const auto start = Clock::now();
    const std::size_t ef = params.effective_ef();

    SearchResult result;
    auto& stats = result.stats;
    stats.k_parallel = params.k_parallel;
    stats.visited_per_layer.assign(index.layer_count(), 0);

    CandidatePool pool(params.k);
    VisitedSet visited(index.id_capacity());
    RoundTracker rounds(index.id_capacity());
    std::atomic<std::size_t> evaluations{0};
    std::vector<std::atomic<std::size_t>> per_layer(index.layer_count());

    ScoreBoard board(index.id_capacity());
    std::atomic<bool> abort{false};

    // Seed the top layer with the entry point and its neighborhood.
    const std::size_t top = index.layer_count() - 1;
    const ItemId entry = index.entry_point();
    {
        std::vector<ItemId> init;
        if (visited.try_claim(entry)) {
            init.push_back(entry);
        }
        for (auto n : index.neighbors(top, entry)) {
            if (visited.try_claim(n)) {
                init.push_back(n);
            }
        }
        per_layer[top] += init.size();
        evaluations += init.size();
        rounds.mark(init, 0);
        const auto scored = zip_scores(init, scorer.score_async(init).get());
        board.publish(scored);
        pool.push(scored);
    }

    // One searcher walks the successive hop rings around its seed. Every ring
    // member is a traversal candidate; only unclaimed ones cost an evaluation.
    struct Walker {
        std::vector<ItemId> frontier;
        std::unordered_set<ItemId> seen;
        std::vector<ItemId> ring;
        std::vector<ItemId> claimed;
    };

    std::size_t round_base = 0;
    for (std::size_t l = top + 1; l-- > 0;) {
        std::vector<ItemId> seeds;
        for (const auto& item : pool.top(params.k_parallel)) {
            seeds.push_back(item.id);
        }
        while (seeds.size() < params.k_parallel) {
            seeds.push_back(entry);
        }

        auto start_walker = [&](ItemId seed) {
            Walker w;
            w.frontier = {seed};
            w.seen.insert(seed);
            return w;
        };
        // Next ring: unseen neighbors of the current frontier.
        auto step = [&](Walker& w) {
            w.ring.clear();
            w.claimed.clear();
            for (auto f : w.frontier) {
                for (auto n : index.neighbors(l, f)) {
                    if (w.seen.insert(n).second) {
                        w.ring.push_back(n);
                        if (visited.try_claim(n)) {
                            w.claimed.push_back(n);
                        }
                    }
                }
            }
        };
        // Keeps the ef best ring members; false when a score never arrives.
        auto prune = [&](Walker& w) {
            std::vector<ScoredItem> scored;
            scored.reserve(w.ring.size());
            for (auto id : w.ring) {
                const auto score = board.wait(id, abort);
                if (!score) {
                    return false;
                }
                scored.push_back({id, *score});
            }
            const std::size_t keep = std::min(ef, scored.size());
            std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                              ranks_before);
            w.frontier.resize(keep);
            for (std::size_t i = 0; i < keep; ++i) {
                w.frontier[i] = scored[i].id;
            }
            return true;
        };
        auto absorb = [&](Walker& w, const std::vector<double>& scores, std::size_t round) {
            const auto scored = zip_scores(w.claimed, scores);
            rounds.mark(w.claimed, round);
            per_layer[l] += w.claimed.size();
            board.publish(scored);
            pool.push(scored);
        };

        std::size_t rounds_used = 0;
        if (params.deterministic || params.k_parallel == 1) {
            std::vector<Walker> walkers;
            for (auto seed : seeds) {
                walkers.push_back(start_walker(seed));
            }
            for (std::size_t t = 1; t <= params.hops; ++t) {
                bool any_ring = false;
                bool any_claim = false;
                for (auto& w : walkers) {
                    step(w);
                    any_ring = any_ring || !w.ring.empty();
                    any_claim = any_claim || !w.claimed.empty();
                }
                if (!any_ring) {
                    break;
                }
                if (any_claim) {
                    rounds_used = t;
                }
                std::vector<std::future<std::vector<double>>> pending(walkers.size());
                for (std::size_t i = 0; i < walkers.size(); ++i) {
                    if (!walkers[i].claimed.empty()) {
                        evaluations += walkers[i].claimed.size();
                        pending[i] = scorer.score_async(walkers[i].claimed);
                    }
                }
                for (std::size_t i = 0; i < walkers.size(); ++i) {
                    if (!walkers[i].claimed.empty()) {
                        absorb(walkers[i], pending[i].get(), round_base + t);
                    }
                }
                for (auto& w : walkers) {
                    prune(w);
                }
            }
        } else {
            std::vector<std::size_t> used(seeds.size(), 0);
            std::vector<std::exception_ptr> errors(seeds.size());
            std::vector<std::thread> workers;
            workers.reserve(seeds.size());
            for (std::size_t i = 0; i < seeds.size(); ++i) {
                workers.emplace_back([&, i] {
                    try {
                        auto w = start_walker(seeds[i]);
                        for (std::size_t t = 1; t <= params.hops; ++t) {
                            step(w);
                            if (w.ring.empty()) {
                                break;
                            }
                            if (!w.claimed.empty()) {
                                used[i] = t;
                                evaluations += w.claimed.size();
                                absorb(w, scorer.score_async(w.claimed).get(), round_base + t);
                            }
                            if (!prune(w)) {
                                return;
                            }
                        }
                    } catch (...) {
                        errors[i] = std::current_exception();
                        abort.store(true, std::memory_order_release);
                    }
                });
            }
            for (auto& w : workers) {
                w.join();
            }
            for (auto& e : errors) {
                if (e) {
                    std::rethrow_exception(e);
                }
            }
            rounds_used = *std::max_element(used.begin(), used.end());
        }
        round_base += rounds_used;
    }

    result.items = pool.top();
    stats.metric_evaluations = evaluations.load();
    for (std::size_t l = 0; l < per_layer.size(); ++l) {
        stats.visited_per_layer[l] = per_layer[l].load();
        stats.nodes_visited += stats.visited_per_layer[l];
    }
    stats.hops_to_best = result.items.empty() ? 0 : rounds.of(result.items.front().id);
    stats.wall_seconds = seconds_since(start);
    return result;
}

nlohmann::json
to_json(const SearchStats& stats) {
    return {
        {"nodes_visited", stats.nodes_visited},
        {"metric_evaluations", stats.metric_evaluations},
        {"visited_per_layer", stats.visited_per_layer},
        {"hops_to_best", stats.hops_to_best},
        {"k_parallel", stats.k_parallel},
        {"wall_seconds", stats.wall_seconds},
    };
}

}  // namespace nann
