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

#include "nann/update_policy.h"

#include <algorithm>
#include <cmath>

namespace nann {

double
ActivityLog::decayed(ItemId item, double now, double decay) const {
    auto it = events_.find(item);
    if (it == events_.end()) {
        return 0.0;
    }
    double total = 0.0;
    for (const auto& e : it->second) {
        total += e.weight * std::pow(decay, std::max(0.0, now - e.time));
    }
    return total;
}

UpdatePolicy::UpdatePolicy(UpdatePolicyConfig config) : config_(config) {
    NANN_CHECK_ARG(config_.threshold_percentile > 0.0 && config_.threshold_percentile <= 100.0,
                   "threshold percentile must lie in (0, 100]");
    NANN_CHECK_ARG(config_.batch_flush_size >= 1, "flush size must be at least 1");
    NANN_CHECK_ARG(config_.decay > 0.0 && config_.decay <= 1.0, "decay must lie in (0, 1]");
}

void
UpdatePolicy::add_pending(ItemId id, bool click_triggered) {
    auto [it, inserted] = pending_.try_emplace(id, click_triggered);
    if (!inserted) {
        it->second = it->second || click_triggered;
    }
}

bool
UpdatePolicy::should_flush() const {
    if (pending_.size() >= config_.batch_flush_size) {
        return true;
    }
    return std::any_of(pending_.begin(), pending_.end(), [](const auto& p) { return p.second; });
}

std::vector<ItemId>
flush_pending(GraphIndex& index, const EmbeddingTable& items, UpdatePolicy& policy, const ActivityLog& log,
              double now) {
    std::vector<ItemId> admitted;
    std::vector<ScoredItem> ranked;
    for (auto it = policy.pending_.begin(); it != policy.pending_.end();) {
        if (index.contains(it->first)) {
            it = policy.pending_.erase(it);
            continue;
        }
        if (it->second) {
            admitted.push_back(it->first);
        } else {
            ranked.push_back({it->first, log.decayed(it->first, now, policy.config_.decay)});
        }
        ++it;
    }
    std::sort(ranked.begin(), ranked.end(), ranks_before);
    const double below =
        std::ceil(policy.config_.threshold_percentile / 100.0 * static_cast<double>(ranked.size()) - 1e-9);
    const auto admit_count = ranked.size() - std::min(ranked.size(), static_cast<std::size_t>(below));
    for (std::size_t i = 0; i < admit_count; ++i) {
        admitted.push_back(ranked[i].id);
    }
    for (auto id : admitted) {
        index.insert(items, id);
        policy.pending_.erase(id);
    }
    return admitted;
}

}  // namespace nann
