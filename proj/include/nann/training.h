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
#include <iosfwd>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "nann/datamodel.h"
#include "nann/metric.h"

namespace nann {

enum class OptimizerKind { kAdam, kSgd };

struct TrainConfig {
    std::size_t epochs{30};
    std::size_t batch_size{64};
    double learning_rate{1e-3};
    std::size_t scl_pairs{32};  ///< sampled (user, item) pairs per rank-alignment term
    double lambda_scl{1.0};
    double negative_ratio{1.0};  ///< unobserved pairs sampled per observed pair
    double epsilon_rho{1e-3};
    std::uint64_t seed{7};
    OptimizerKind optimizer{OptimizerKind::kAdam};
    double adam_beta1{0.9};
    double adam_beta2{0.999};
    double adam_epsilon{1e-8};
    bool train_attention{false};
    /// When set, only this behavior is used as supervision and the metric
    /// predicts a single value.
    std::optional<std::uint32_t> single_behavior;
    ModelShape shape;

    void
    validate() const;
};

struct LossRecord {
    std::size_t step{0};
    double prediction{0.0};
    double scl{0.0};
    double total{0.0};
};

struct TrainState {
    Model model;
    std::vector<std::vector<double>> adam_m;
    std::vector<std::vector<double>> adam_v;
    std::size_t step{0};
    std::size_t epoch{0};
    std::vector<LossRecord> history;
};

/// Thrown when the loss turns non-finite; carries the last finite state.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& message, TrainState last)
        : Error(ErrorType::kDivergence, message), last_state_(std::move(last)) {
    }

    const TrainState&
    last_state() const {
        return last_state_;
    }

private:
    TrainState last_state_;
};

struct UserItemPair {
    UserId user;
    ItemId item;
};

/// One supervised example: target interaction vector plus the serendipity
/// draw applied to the user embedding (empty means none).
struct PredictionSample {
    UserId user;
    ItemId item;
    InteractionVector target;
    std::vector<double> serendipity;
};

/// Correlation as sum((x-mx)(y-my)) / (VAR(x) VAR(y)) with
/// VAR(x) = sqrt(sum((x-mx)^2)). Throws degenerate-variance when either list
/// is constant.
double
pearson_correlation(std::span<const double> xs, std::span<const double> ys);

/// 1 / (rho(deltas, -distances) + 1 + epsilon).
double
scl_from_values(std::span<const double> deltas, std::span<const double> distances, double epsilon_rho);

/// Mean L2 norm of (target - prediction) over the batch. Accumulates
/// d(loss)/d(parameters) into `grad` when given (same shape as `model`).
double
prediction_loss(const Model& model, const Dataset& data, std::span<const PredictionSample> batch,
                Model* grad = nullptr);

/// Rank-alignment loss over the sampled pairs: relevance with no
/// serendipity vs. euclidean distance between the projected embeddings.
double
scl_loss(const Model& model, const Dataset& data, std::span<const UserItemPair> pairs, double epsilon_rho,
         Model* grad = nullptr);

struct LossBreakdown {
    double prediction{0.0};
    double scl{0.0};
    double total{0.0};
};

LossBreakdown
total_loss(const Model& model, const Dataset& data, std::span<const PredictionSample> batch,
           std::span<const UserItemPair> scl_pairs, double lambda_scl, double epsilon_rho, Model* grad = nullptr);

/// Model with every parameter zeroed, shaped like `model`.
Model
zeros_like(const Model& model);

TrainState
init_state(const Dataset& data, const TrainConfig& config);

/// Minibatch training over observed pairs plus sampled negatives.
TrainState
fit(const Dataset& data, const TrainConfig& config);

/// Continues training an existing state for `config.epochs` more epochs.
void
train_epochs(TrainState& state, const Dataset& data, const TrainConfig& config);

/// Pearson correlation between relevance and negated euclidean distance over
/// `count` uniformly drawn pairs.
double
rank_alignment(const Model& model, const Dataset& data, std::size_t count, std::uint64_t seed);

/// Mean of the first and last `window` total-loss entries.
std::pair<double, double>
smoothed_loss_endpoints(const std::vector<LossRecord>& history, std::size_t window = 10);

void
write_loss_history(const std::vector<LossRecord>& history, std::ostream& out);

}  // namespace nann
