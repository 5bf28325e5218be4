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
#include <string>
#include <vector>

#include "nann/types.h"

namespace nann {

struct UserRecord {
    UserId id{0};
    std::vector<double> features;

    bool
    operator==(const UserRecord&) const = default;
};

struct ItemRecord {
    ItemId id{0};
    std::vector<double> features;

    bool
    operator==(const ItemRecord&) const = default;
};

/// One observed behavior of a user on an item. `value` is the interaction
/// strength in [0, 1].
struct InteractionRecord {
    UserId user{0};
    ItemId item{0};
    std::uint32_t behavior{0};
    double value{0.0};

    bool
    operator==(const InteractionRecord&) const = default;
};

/// Per-pair stack of behavior values; unobserved behaviors are exactly zero.
using InteractionVector = std::vector<double>;

struct Dataset {
    std::vector<UserRecord> users;
    std::vector<ItemRecord> items;
    std::vector<InteractionRecord> interactions;
    std::uint32_t behavior_count{0};

    std::size_t
    feature_dim() const {
        return users.empty() ? (items.empty() ? 0 : items.front().features.size())
                             : users.front().features.size();
    }

    /// Throws invalid-argument when any structural invariant fails.
    void
    validate() const;

    bool
    operator==(const Dataset&) const = default;
};

struct SyntheticSpec {
    std::uint64_t seed{1};
    std::size_t users{200};
    std::size_t items{5000};
    std::size_t feature_dim{16};
    std::uint32_t behaviors{3};
    double density{0.002};
};

/// Planted-affinity generator. Users and items carry hidden latent vectors;
/// raw features are noisy linear images of them, and each behavior value is
/// sigmoid(affinity + per-behavior offset + noise). The top
/// floor(density * users * items * behaviors) triples by value are kept.
Dataset
generate_synthetic(const SyntheticSpec& spec);

/// Groups the interaction records into one dense vector per observed pair.
struct ObservedPair {
    UserId user;
    ItemId item;
    InteractionVector target;
};

std::vector<ObservedPair>
group_interactions(const Dataset& data);

void
write_dataset(const Dataset& data, std::ostream& out);

Dataset
read_dataset(std::istream& in);

void
save_dataset(const Dataset& data, const std::filesystem::path& path);

Dataset
load_dataset(const std::filesystem::path& path);

}  // namespace nann
