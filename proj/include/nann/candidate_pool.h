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

#include <algorithm>
#include <atomic>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "nann/types.h"

namespace nann {

/// Bounded top-K set shared by concurrent searchers. Holds the K best items
/// ever pushed under ranks_before; the worst retained item sits at the heap
/// root so admission is O(log K).
class CandidatePool {
public:
    explicit CandidatePool(std::size_t capacity) : capacity_(capacity) {
        NANN_CHECK_ARG(capacity > 0, "candidate pool capacity must be positive");
        heap_.reserve(capacity);
    }

    bool
    push(const ScoredItem& item) {
        std::lock_guard lock(mutex_);
        return push_locked(item);
    }

    void
    push(std::span<const ScoredItem> items) {
        std::lock_guard lock(mutex_);
        for (const auto& item : items) {
            push_locked(item);
        }
    }

    /// Retained items, best first.
    std::vector<ScoredItem>
    top() const {
        std::lock_guard lock(mutex_);
        std::vector<ScoredItem> out = heap_;
        std::sort(out.begin(), out.end(), ranks_before);
        return out;
    }

    std::vector<ScoredItem>
    top(std::size_t n) const {
        auto out = top();
        if (out.size() > n) {
            out.resize(n);
        }
        return out;
    }

    std::optional<ScoredItem>
    worst() const {
        std::lock_guard lock(mutex_);
        if (heap_.empty()) {
            return std::nullopt;
        }
        return heap_.front();
    }

    std::size_t
    size() const {
        std::lock_guard lock(mutex_);
        return heap_.size();
    }

    std::size_t
    capacity() const noexcept {
        return capacity_;
    }

private:
    bool
    push_locked(const ScoredItem& item) {
        if (heap_.size() < capacity_) {
            heap_.push_back(item);
            std::push_heap(heap_.begin(), heap_.end(), ranks_before);
            return true;
        }
        if (!ranks_before(item, heap_.front())) {
            return false;
        }
        std::pop_heap(heap_.begin(), heap_.end(), ranks_before);
        heap_.back() = item;
        std::push_heap(heap_.begin(), heap_.end(), ranks_before);
        return true;
    }

    std::size_t capacity_;
    mutable std::mutex mutex_;
    std::vector<ScoredItem> heap_;
};

/// Per-query visited flags with linearizable claim semantics.
class VisitedSet {
public:
    explicit VisitedSet(std::size_t capacity)
        : capacity_(capacity), flags_(std::make_unique<std::atomic<std::uint8_t>[]>(capacity)) {
        for (std::size_t i = 0; i < capacity; ++i) {
            flags_[i].store(0, std::memory_order_relaxed);
        }
    }

    /// True for exactly one caller per id.
    bool
    try_claim(ItemId id) {
        return id < capacity_ && flags_[id].exchange(1, std::memory_order_acq_rel) == 0;
    }

    bool
    contains(ItemId id) const {
        return id < capacity_ && flags_[id].load(std::memory_order_acquire) != 0;
    }

private:
    std::size_t capacity_;
    std::unique_ptr<std::atomic<std::uint8_t>[]> flags_;
};

}  // namespace nann
