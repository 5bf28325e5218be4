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

#include "nann/batch_executor.h"

#include <algorithm>
#include <numeric>
#include <optional>

namespace nann {

using Clock = std::chrono::steady_clock;

BatchEngine::BatchEngine(std::size_t batch_size, EngineCost cost) : batch_size_(batch_size), cost_(cost) {
    NANN_CHECK_ARG(batch_size > 0, "engine batch size must be positive");
    NANN_CHECK_ARG(cost.fixed_seconds >= 0.0 && cost.per_pair_seconds >= 0.0, "engine cost must be non-negative");
}

std::vector<double>
BatchEngine::run(std::span<const EvalPair> batch) {
    NANN_CHECK_ARG(!batch.empty() && batch.size() <= batch_size_, "batch size out of range");
    invocations_.fetch_add(1);
    pairs_.fetch_add(batch.size());
    if (cost_.sleep) {
        const double seconds = cost_.fixed_seconds + cost_.per_pair_seconds * static_cast<double>(batch.size());
        std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
    }
    auto scores = evaluate(batch);
    if (scores.size() != batch.size()) {
        throw Error(ErrorType::kEngine, "engine returned the wrong number of scores");
    }
    return scores;
}

double
BatchEngine::simulated_seconds() const {
    return cost_.fixed_seconds * static_cast<double>(invocations()) +
           cost_.per_pair_seconds * static_cast<double>(pairs_evaluated());
}

std::vector<double>
MetricEngine::evaluate(std::span<const EvalPair> batch) {
    std::vector<double> out(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        out[i] = relevance(model_, batch[i].user, items_.row(batch[i].item));
    }
    return out;
}

double
DispatchStats::mean_fill(std::size_t batch_size) const {
    if (batch_fills.empty() || batch_size == 0) {
        return 0.0;
    }
    const double total = std::accumulate(batch_fills.begin(), batch_fills.end(), 0.0);
    return total / (static_cast<double>(batch_fills.size()) * static_cast<double>(batch_size));
}

nlohmann::json
to_json(const DispatchStats& stats, std::size_t batch_size) {
    double mean_latency = 0.0;
    double max_latency = 0.0;
    if (!stats.request_latency_seconds.empty()) {
        const auto& l = stats.request_latency_seconds;
        mean_latency = std::accumulate(l.begin(), l.end(), 0.0) / static_cast<double>(l.size());
        max_latency = *std::max_element(l.begin(), l.end());
    }
    return {
        {"batch_size", batch_size},
        {"invocations", stats.invocations},
        {"pairs_dispatched", stats.pairs_dispatched},
        {"requests_submitted", stats.requests_submitted},
        {"requests_completed", stats.requests_completed},
        {"requests_failed", stats.requests_failed},
        {"timeout_flushes", stats.timeout_flushes},
        {"shutdown_flushes", stats.shutdown_flushes},
        {"mean_fill", stats.mean_fill(batch_size)},
        {"mean_latency_seconds", mean_latency},
        {"max_latency_seconds", max_latency},
    };
}

struct BatchQueue::Request {
    std::uint64_t id;
    std::vector<EvalPair> pairs;
    std::vector<double> scores;
    std::size_t next{0};       // first pair not yet placed in a batch
    std::size_t completed{0};  // pairs whose scores came back
    bool failed{false};
    std::promise<std::vector<double>> promise;
    Clock::time_point submitted;
};

BatchQueue::BatchQueue(BatchQueueConfig config) : config_(config) {
    NANN_CHECK_ARG(config.batch_size > 0, "batch size must be positive");
    NANN_CHECK_ARG(config.max_pending_pairs > 0, "max pending pairs must be positive");
}

BatchQueue::~BatchQueue() {
    shutdown();
}

std::future<std::vector<double>>
BatchQueue::submit(std::vector<EvalPair> pairs) {
    NANN_CHECK_ARG(!pairs.empty(), "evaluation request must be nonempty");
    auto request = std::make_shared<Request>();
    request->pairs = std::move(pairs);
    request->scores.resize(request->pairs.size());
    auto future = request->promise.get_future();

    std::unique_lock lock(mutex_);
    const std::size_t n = request->pairs.size();
    // An oversized request is admitted once the queue is empty.
    space_.wait(lock, [&] {
        return closed_ || pending_pairs_ == 0 || pending_pairs_ + n <= config_.max_pending_pairs;
    });
    if (closed_) {
        throw Error(ErrorType::kQueueClosed, "batch queue is shut down");
    }
    request->id = next_id_++;
    request->submitted = Clock::now();
    pending_pairs_ += n;
    ++stats_.requests_submitted;
    queue_.push_back(std::move(request));
    lock.unlock();
    arrivals_.notify_all();
    return future;
}

void
BatchQueue::shutdown() {
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    arrivals_.notify_all();
    space_.notify_all();
}

bool
BatchQueue::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

DispatchStats
BatchQueue::stats() const {
    std::lock_guard lock(mutex_);
    return stats_;
}

BatchQueue::FillStatus
BatchQueue::fill(Batch& batch, std::unique_lock<std::mutex>& lock, bool may_wait) {
    const std::size_t capacity = config_.batch_size;
    while (true) {
        while (batch.pairs.size() < capacity && !queue_.empty()) {
            auto& front = queue_.front();
            if (front->failed) {
                pending_pairs_ -= front->pairs.size() - front->next;
                queue_.pop_front();
                continue;
            }
            if (batch.pairs.empty()) {
                batch.opened = Clock::now();
            }
            const std::size_t take = std::min(capacity - batch.pairs.size(), front->pairs.size() - front->next);
            batch.pairs.insert(batch.pairs.end(), front->pairs.begin() + static_cast<std::ptrdiff_t>(front->next),
                               front->pairs.begin() + static_cast<std::ptrdiff_t>(front->next + take));
            batch.fragments.push_back({front, front->next, take});
            front->next += take;
            pending_pairs_ -= take;
            if (front->next == front->pairs.size()) {
                queue_.pop_front();
            }
        }
        space_.notify_all();
        if (batch.pairs.size() == capacity) {
            return FillStatus::kFull;
        }
        if (closed_) {
            return batch.pairs.empty() ? FillStatus::kDone : FillStatus::kShutdown;
        }
        if (!batch.pairs.empty() && Clock::now() >= batch.opened + config_.flush_timeout) {
            return FillStatus::kTimeout;
        }
        if (!may_wait) {
            return FillStatus::kNotReady;
        }
        if (batch.pairs.empty()) {
            arrivals_.wait(lock, [&] { return closed_ || !queue_.empty(); });
        } else {
            arrivals_.wait_until(lock, batch.opened + config_.flush_timeout,
                                 [&] { return closed_ || !queue_.empty(); });
        }
    }
}

void
BatchQueue::complete(Batch& batch, std::vector<double> scores, std::exception_ptr error) {
    const auto now = Clock::now();
    std::vector<std::shared_ptr<Request>> finished;
    std::vector<std::shared_ptr<Request>> failed;
    {
        std::lock_guard lock(mutex_);
        ++stats_.invocations;
        stats_.pairs_dispatched += batch.pairs.size();
        stats_.batch_fills.push_back(batch.pairs.size());
        std::size_t offset = 0;
        for (auto& fragment : batch.fragments) {
            auto& request = *fragment.request;
            if (error) {
                if (!request.failed) {
                    request.failed = true;
                    failed.push_back(fragment.request);
                }
            } else if (!request.failed) {
                std::copy_n(scores.begin() + static_cast<std::ptrdiff_t>(offset), fragment.length,
                            request.scores.begin() + static_cast<std::ptrdiff_t>(fragment.offset));
                request.completed += fragment.length;
                if (request.completed == request.pairs.size()) {
                    finished.push_back(fragment.request);
                }
            }
            offset += fragment.length;
        }
        for (const auto& request : finished) {
            ++stats_.requests_completed;
            stats_.request_latency_seconds.push_back(std::chrono::duration<double>(now - request->submitted).count());
        }
        stats_.requests_failed += failed.size();
    }
    for (auto& request : finished) {
        request->promise.set_value(std::move(request->scores));
    }
    for (auto& request : failed) {
        request->promise.set_exception(error);
    }
}

void
BatchQueue::run_dispatcher(BatchEngine& engine) {
    NANN_CHECK_ARG(engine.batch_size() == config_.batch_size, "engine batch size must equal queue capacity");

    struct InFlight {
        Batch batch;
        std::future<std::vector<double>> scores;
    };
    std::optional<InFlight> in_flight;
    auto finish = [&](Batch& batch, std::future<std::vector<double>>& future) {
        std::vector<double> scores;
        std::exception_ptr error;
        try {
            scores = future.get();
        } catch (...) {
            error = std::current_exception();
        }
        complete(batch, std::move(scores), error);
    };
    auto launch = [&](Batch& batch) {
        return std::async(config_.pipelining ? std::launch::async : std::launch::deferred,
                          [&engine, &batch] { return engine.run(batch.pairs); });
    };

    Batch batch;
    while (true) {
        FillStatus status;
        {
            std::unique_lock lock(mutex_);
            status = fill(batch, lock, !in_flight.has_value());
            if (status == FillStatus::kTimeout) {
                ++stats_.timeout_flushes;
            } else if (status == FillStatus::kShutdown) {
                ++stats_.shutdown_flushes;
            }
        }
        if (status == FillStatus::kNotReady || status == FillStatus::kDone) {
            if (in_flight) {
                finish(in_flight->batch, in_flight->scores);
                in_flight.reset();
                continue;
            }
            return;
        }
        if (in_flight) {
            finish(in_flight->batch, in_flight->scores);
            in_flight.reset();
        }
        in_flight.emplace();
        in_flight->batch = std::move(batch);
        batch = Batch{};
        in_flight->scores = launch(in_flight->batch);
        if (!config_.pipelining) {
            finish(in_flight->batch, in_flight->scores);
            in_flight.reset();
        }
    }
}

BatchExecutor::BatchExecutor(BatchEngine& engine, BatchQueueConfig config) : engine_(engine), queue_(config) {
    NANN_CHECK_ARG(engine.batch_size() == config.batch_size, "engine batch size must equal queue capacity");
    dispatcher_ = std::thread([this] {
        try {
            queue_.run_dispatcher(engine_);
        } catch (...) {
            failure_ = std::current_exception();
        }
    });
}

BatchExecutor::~BatchExecutor() {
    try {
        shutdown();
    } catch (...) {
    }
}

void
BatchExecutor::shutdown() {
    queue_.shutdown();
    if (dispatcher_.joinable()) {
        dispatcher_.join();
    }
    if (failure_) {
        auto failure = failure_;
        failure_ = nullptr;
        std::rethrow_exception(failure);
    }
}

std::future<std::vector<double>>
BatchedScorer::score_async(std::vector<ItemId> items) {
    if (items.empty()) {
        std::promise<std::vector<double>> ready;
        ready.set_value({});
        return ready.get_future();
    }
    std::vector<EvalPair> pairs(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
        pairs[i] = {user_, items[i]};
    }
    return executor_.submit(std::move(pairs));
}

std::vector<double>
EngineScorer::score(std::span<const ItemId> items) {
    std::vector<double> out;
    out.reserve(items.size());
    const std::size_t cap = engine_.batch_size();
    std::vector<EvalPair> chunk;
    for (std::size_t begin = 0; begin < items.size(); begin += cap) {
        const std::size_t end = std::min(items.size(), begin + cap);
        chunk.clear();
        for (std::size_t i = begin; i < end; ++i) {
            chunk.push_back({user_, items[i]});
        }
        auto scores = engine_.run(chunk);
        out.insert(out.end(), scores.begin(), scores.end());
    }
    return out;
}

}  // namespace nann
