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

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <future>
#include <memory>
#include <mutex>
#include <nlohmann/json.hpp>
#include <span>
#include <thread>
#include <vector>

#include "nann/metric.h"
#include "nann/scorer.h"
#include "nann/types.h"

namespace nann {

/// One relevance evaluation. The user embedding is borrowed and must outlive
/// the request's completion.
struct EvalPair {
    std::span<const double> user;
    ItemId item{kInvalidItem};
};

/// Simulated accelerator cost: every invocation costs fixed + per_pair * n.
struct EngineCost {
    double fixed_seconds{0.0};
    double per_pair_seconds{0.0};
    bool sleep{false};  ///< actually wait out the simulated time
};

/// Batched evaluator with a fixed batch capacity. run() is thread-safe.
class BatchEngine {
public:
    explicit BatchEngine(std::size_t batch_size, EngineCost cost = {});
    virtual ~BatchEngine() = default;

    std::size_t
    batch_size() const noexcept {
        return batch_size_;
    }

    /// Scores `batch` in pair order; counts one invocation.
    std::vector<double>
    run(std::span<const EvalPair> batch);

    std::size_t
    invocations() const noexcept {
        return invocations_.load();
    }

    std::size_t
    pairs_evaluated() const noexcept {
        return pairs_.load();
    }

    /// Accumulated simulated cost over all invocations.
    double
    simulated_seconds() const;

    const EngineCost&
    cost() const noexcept {
        return cost_;
    }

protected:
    virtual std::vector<double>
    evaluate(std::span<const EvalPair> batch) = 0;

private:
    std::size_t batch_size_;
    EngineCost cost_;
    std::atomic<std::size_t> invocations_{0};
    std::atomic<std::size_t> pairs_{0};
};

/// Evaluates the learned relevance pair by pair; identical to calling
/// relevance() directly.
class MetricEngine : public BatchEngine {
public:
    MetricEngine(const MetricModel& model, const EmbeddingTable& items, std::size_t batch_size,
                 EngineCost cost = {})
        : BatchEngine(batch_size, cost), model_(model), items_(items) {
    }

protected:
    std::vector<double>
    evaluate(std::span<const EvalPair> batch) override;

private:
    const MetricModel& model_;
    const EmbeddingTable& items_;
};

struct BatchQueueConfig {
    std::size_t batch_size{256};  ///< N_U; must equal the engine's
    std::chrono::microseconds flush_timeout{1000};
    std::size_t max_pending_pairs{1u << 20};  ///< submit blocks beyond this
    bool pipelining{false};  ///< assemble the next batch while one executes
};

struct DispatchStats {
    std::size_t invocations{0};
    std::size_t pairs_dispatched{0};
    std::size_t requests_submitted{0};
    std::size_t requests_completed{0};
    std::size_t requests_failed{0};
    std::size_t timeout_flushes{0};
    std::size_t shutdown_flushes{0};
    std::vector<std::size_t> batch_fills;
    std::vector<double> request_latency_seconds;  ///< submit to completion, completion order

    double
    mean_fill(std::size_t batch_size) const;
};

nlohmann::json
to_json(const DispatchStats& stats, std::size_t batch_size);

/// FIFO aggregation of irregular evaluation requests into fixed-capacity
/// engine batches. Requests straddling a batch boundary are sliced; the
/// remainder opens the next batch. Partial batches are flushed when the
/// timeout elapses or on shutdown.
class BatchQueue {
public:
    explicit BatchQueue(BatchQueueConfig config);
    ~BatchQueue();

    BatchQueue(const BatchQueue&) = delete;
    BatchQueue&
    operator=(const BatchQueue&) = delete;

    /// Scores arrive in pair order. Throws queue-closed after shutdown and
    /// invalid-argument for an empty request.
    std::future<std::vector<double>>
    submit(std::vector<EvalPair> pairs);

    /// Serves batches until shutdown, then drains everything still queued.
    void
    run_dispatcher(BatchEngine& engine);

    void
    shutdown();

    bool
    closed() const;

    DispatchStats
    stats() const;

    const BatchQueueConfig&
    config() const noexcept {
        return config_;
    }

private:
    struct Request;
    struct Fragment {
        std::shared_ptr<Request> request;
        std::size_t offset;
        std::size_t length;
    };
    struct Batch {
        std::vector<EvalPair> pairs;
        std::vector<Fragment> fragments;
        std::chrono::steady_clock::time_point opened;
    };
    enum class FillStatus { kFull, kTimeout, kShutdown, kNotReady, kDone };

    FillStatus
    fill(Batch& batch, std::unique_lock<std::mutex>& lock, bool may_wait);

    void
    complete(Batch& batch, std::vector<double> scores, std::exception_ptr error);

    BatchQueueConfig config_;
    mutable std::mutex mutex_;
    std::condition_variable arrivals_;
    std::condition_variable space_;
    std::deque<std::shared_ptr<Request>> queue_;
    std::size_t pending_pairs_{0};
    std::uint64_t next_id_{0};
    bool closed_{false};
    DispatchStats stats_;
};

/// Owns a queue and its dispatcher thread; the destructor drains and joins.
class BatchExecutor {
public:
    BatchExecutor(BatchEngine& engine, BatchQueueConfig config);
    ~BatchExecutor();

    BatchExecutor(const BatchExecutor&) = delete;
    BatchExecutor&
    operator=(const BatchExecutor&) = delete;

    std::future<std::vector<double>>
    submit(std::vector<EvalPair> pairs) {
        return queue_.submit(std::move(pairs));
    }

    /// Idempotent; rethrows a dispatcher failure.
    void
    shutdown();

    DispatchStats
    stats() const {
        return queue_.stats();
    }

    BatchEngine&
    engine() noexcept {
        return engine_;
    }

private:
    BatchEngine& engine_;
    BatchQueue queue_;
    std::thread dispatcher_;
    std::exception_ptr failure_;
};

/// Routes one user's evaluations through a shared executor.
class BatchedScorer : public Scorer {
public:
    BatchedScorer(BatchExecutor& executor, std::span<const double> user)
        : executor_(executor), user_(user.begin(), user.end()) {
    }

    std::vector<double>
    score(std::span<const ItemId> items) override {
        return score_async({items.begin(), items.end()}).get();
    }

    std::future<std::vector<double>>
    score_async(std::vector<ItemId> items) override;

private:
    BatchExecutor& executor_;
    Embedding user_;
};

/// Per-request dispatch straight to the engine, one invocation per request
/// chunk of at most batch_size pairs.
class EngineScorer : public Scorer {
public:
    EngineScorer(BatchEngine& engine, std::span<const double> user)
        : engine_(engine), user_(user.begin(), user.end()) {
    }

    std::vector<double>
    score(std::span<const ItemId> items) override;

private:
    BatchEngine& engine_;
    Embedding user_;
};

}  // namespace nann
