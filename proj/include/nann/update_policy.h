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

#include <map>
#include <vector>

#include "nann/graph_index.h"
#include "nann/types.h"

namespace nann {

struct UpdatePolicyConfig {
    double decay{0.9};                   ///< per-time-unit multiplier on past activity
    double threshold_percentile{50.0};   ///< in (0, 100]
    std::size_t batch_flush_size{64};
};

struct ActivityEvent {
    ItemId item;
    double time;
    double weight{1.0};
};

class ActivityLog {
public:
    void
    record(const ActivityEvent& event) {
        events_[event.item].push_back(event);
    }

    /// sum(weight * decay^(now - time)) over the item's events.
    double
    decayed(ItemId item, double now, double decay) const;

private:
    std::map<ItemId, std::vector<ActivityEvent>> events_;
};

/// Buffer of items waiting to enter the index. Click-triggered items bypass
/// the activity threshold on the next flush.
class UpdatePolicy {
public:
    explicit UpdatePolicy(UpdatePolicyConfig config = {});

    void
    add_pending(ItemId id, bool click_triggered = false);

    std::size_t
    pending_count() const {
        return pending_.size();
    }

    bool
    is_pending(ItemId id) const {
        return pending_.contains(id);
    }

    /// True once the buffer reaches the flush size or holds a click.
    bool
    should_flush() const;

    const UpdatePolicyConfig&
    config() const {
        return config_;
    }

private:
    friend std::vector<ItemId>
    flush_pending(GraphIndex&, const EmbeddingTable&, UpdatePolicy&, const ActivityLog&, double);

    UpdatePolicyConfig config_;
    std::map<ItemId, bool> pending_;  ///< id -> click triggered
};

/// Admits click-triggered items plus the pending items ranked above the
/// threshold percentile of decayed activity (ties by lower id), inserting
/// them in one batch. Returns admitted ids in insertion order; the rest stay
/// buffered.
std::vector<ItemId>
flush_pending(GraphIndex& index, const EmbeddingTable& items, UpdatePolicy& policy, const ActivityLog& log,
              double now);

}  // namespace nann
