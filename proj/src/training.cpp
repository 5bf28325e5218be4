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

#include "nann/training.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <unordered_set>

namespace nann {

namespace {

struct PairForward {
    Embedding user;
    Embedding item;
    InteractionVector prediction;
    ForwardTrace trace;
};

PairForward
run_pair(const Model& model, const Dataset& data, UserId u, ItemId v, std::span<const double> serendipity) {
    NANN_CHECK_ARG(u < data.users.size() && v < data.items.size(), "pair references unknown user or item");
    PairForward f;
    f.user = project(model.user_projector, data.users[u].features);
    f.item = project(model.item_projector, data.items[v].features);
    std::optional<std::span<const double>> noise;
    if (!serendipity.empty()) {
        noise = serendipity;
    }
    f.prediction = forward(model.metric, f.user, f.item, noise, &f.trace);
    return f;
}

void
accumulate_projector(Projector& grad, std::span<const double> raw, std::span<const double> g_out) {
    for (std::size_t r = 0; r < grad.out_dim; ++r) {
        const double g = g_out[r];
        if (g == 0.0) {
            continue;
        }
        double* row = grad.weight.data() + r * grad.in_dim;
        for (std::size_t c = 0; c < grad.in_dim; ++c) {
            row[c] += g * raw[c];
        }
        grad.bias[r] += g;
    }
}

// Backpropagates d(loss)/d(prediction) through the MLP; returns the gradient
// with respect to the concatenated input.
std::vector<double>
backward_mlp(const MetricModel& model, const ForwardTrace& trace, std::vector<double> g, MetricModel& grad) {
    for (std::size_t m = model.layers.size(); m-- > 0;) {
        const auto& layer = model.layers[m];
        auto& glayer = grad.layers[m];
        const auto& input = trace.inputs[m];
        if (m + 1 < model.layers.size() && model.hidden_activation == Activation::kRelu) {
            const auto& pre = trace.pre_activations[m];
            for (std::size_t r = 0; r < layer.out_dim; ++r) {
                if (pre[r] <= 0.0) {
                    g[r] = 0.0;
                }
            }
        }
        std::vector<double> g_in(layer.in_dim, 0.0);
        for (std::size_t r = 0; r < layer.out_dim; ++r) {
            const double gr = g[r];
            if (gr == 0.0) {
                continue;
            }
            const double* wrow = layer.weight.data() + r * layer.in_dim;
            double* grow = glayer.weight.data() + r * layer.in_dim;
            for (std::size_t c = 0; c < layer.in_dim; ++c) {
                grow[c] += gr * input[c];
                g_in[c] += gr * wrow[c];
            }
            glayer.bias[r] += gr;
        }
        g.swap(g_in);
    }
    return g;
}

// Pushes gradients for one pair back through MLP and both projectors.
// `g_user_extra`/`g_item_extra` are direct contributions to the embeddings.
void
backward_pair(const Model& model, const Dataset& data, UserId u, ItemId v, const PairForward& f,
              std::vector<double> g_prediction, std::span<const double> g_user_extra,
              std::span<const double> g_item_extra, Model& grad) {
    const std::size_t d = model.metric.embed_dim();
    auto g_input = backward_mlp(model.metric, f.trace, std::move(g_prediction), grad.metric);
    std::vector<double> g_user(g_input.begin(), g_input.begin() + static_cast<std::ptrdiff_t>(d));
    std::vector<double> g_item(g_input.begin() + static_cast<std::ptrdiff_t>(d), g_input.end());
    for (std::size_t i = 0; i < g_user_extra.size(); ++i) {
        g_user[i] += g_user_extra[i];
    }
    for (std::size_t i = 0; i < g_item_extra.size(); ++i) {
        g_item[i] += g_item_extra[i];
    }
    accumulate_projector(grad.user_projector, data.users[u].features, g_user);
    accumulate_projector(grad.item_projector, data.items[v].features, g_item);
}

double
prediction_loss_scaled(const Model& model, const Dataset& data, std::span<const PredictionSample> batch,
                       Model* grad, double scale) {
    NANN_CHECK_ARG(!batch.empty(), "prediction loss needs a nonempty batch");
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& s : batch) {
        auto f = run_pair(model, data, s.user, s.item, s.serendipity);
        NANN_CHECK_ARG(s.target.size() == f.prediction.size(), "target length must equal behavior count");
        std::vector<double> diff(f.prediction.size());
        double sq = 0.0;
        for (std::size_t i = 0; i < diff.size(); ++i) {
            diff[i] = s.target[i] - f.prediction[i];
            sq += diff[i] * diff[i];
        }
        const double norm = std::sqrt(sq);
        loss += norm * inv_n;
        if (grad != nullptr && norm > 0.0) {
            std::vector<double> g(diff.size());
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] = -diff[i] / norm * inv_n * scale;
            }
            backward_pair(model, data, s.user, s.item, f, std::move(g), {}, {}, *grad);
        }
    }
    return loss;
}

double
scl_loss_scaled(const Model& model, const Dataset& data, std::span<const UserItemPair> pairs, double epsilon_rho,
                Model* grad, double scale) {
    NANN_CHECK_ARG(pairs.size() >= 2, "rank-alignment loss needs at least two pairs");
    NANN_CHECK_ARG(epsilon_rho > 0.0, "epsilon_rho must be positive");
    const auto& attention = model.metric.attention;
    std::vector<PairForward> forwards;
    forwards.reserve(pairs.size());
    std::vector<double> deltas(pairs.size());
    std::vector<double> distances(pairs.size());
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        forwards.push_back(run_pair(model, data, pairs[k].user, pairs[k].item, {}));
        const auto& f = forwards.back();
        double delta = 0.0;
        for (std::size_t i = 0; i < attention.size(); ++i) {
            delta += attention[i] * f.prediction[i];
        }
        deltas[k] = delta;
        distances[k] = euclidean_distance(f.user, f.item);
    }
    const double loss = scl_from_values(deltas, distances, epsilon_rho);
    if (grad == nullptr) {
        return loss;
    }

    const std::size_t n = pairs.size();
    std::vector<double> ys(n);
    for (std::size_t k = 0; k < n; ++k) {
        ys[k] = -distances[k];
    }
    const double mx = std::accumulate(deltas.begin(), deltas.end(), 0.0) / static_cast<double>(n);
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(n);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        sxy += (deltas[k] - mx) * (ys[k] - my);
        sxx += (deltas[k] - mx) * (deltas[k] - mx);
        syy += (ys[k] - my) * (ys[k] - my);
    }
    const double denom = std::sqrt(sxx) * std::sqrt(syy);
    const double rho = sxy / denom;
    const double dloss_drho = -loss * loss * scale;

    const std::size_t d = model.metric.embed_dim();
    for (std::size_t k = 0; k < n; ++k) {
        const double a = deltas[k] - mx;
        const double b = ys[k] - my;
        const double g_delta = dloss_drho * (b / denom - rho * a / sxx);
        const double g_y = dloss_drho * (a / denom - rho * b / syy);
        const auto& f = forwards[k];
        std::vector<double> g_pred(attention.size());
        for (std::size_t i = 0; i < attention.size(); ++i) {
            g_pred[i] = g_delta * attention[i];
            grad->metric.attention[i] += g_delta * f.prediction[i];
        }
        // y = -||h_u - h_v||
        std::vector<double> g_user(d, 0.0);
        std::vector<double> g_item(d, 0.0);
        if (distances[k] > 0.0) {
            for (std::size_t i = 0; i < d; ++i) {
                const double unit = (f.user[i] - f.item[i]) / distances[k];
                g_user[i] = -g_y * unit;
                g_item[i] = g_y * unit;
            }
        }
        backward_pair(model, data, pairs[k].user, pairs[k].item, f, std::move(g_pred), g_user, g_item, *grad);
    }
    return loss;
}

void
check_parameters_finite(const Model& model) {
    for (auto block : parameter_blocks(model)) {
        for (double v : block) {
            if (!std::isfinite(v)) {
                throw Error(ErrorType::kNumeric, "non-finite parameter");
            }
        }
    }
}

InteractionVector
select_target(const InteractionVector& full, const TrainConfig& config) {
    if (config.single_behavior) {
        return {full[*config.single_behavior]};
    }
    return full;
}

}  // namespace

void
TrainConfig::validate() const {
    NANN_CHECK_ARG(epochs > 0, "epochs must be positive");
    NANN_CHECK_ARG(batch_size > 0, "batch size must be positive");
    NANN_CHECK_ARG(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning rate must be nonnegative");
    NANN_CHECK_ARG(scl_pairs >= 2, "scl_pairs must be at least 2");
    NANN_CHECK_ARG(lambda_scl >= 0.0, "lambda_scl must be nonnegative");
    NANN_CHECK_ARG(negative_ratio >= 0.0, "negative ratio must be nonnegative");
    NANN_CHECK_ARG(epsilon_rho > 0.0, "epsilon_rho must be positive");
}

double
pearson_correlation(std::span<const double> xs, std::span<const double> ys) {
    NANN_CHECK_ARG(xs.size() == ys.size(), "correlation needs equal-length lists");
    NANN_CHECK_ARG(xs.size() >= 2, "correlation needs at least two values");
    const double n = static_cast<double>(xs.size());
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        sxy += (xs[k] - mx) * (ys[k] - my);
        sxx += (xs[k] - mx) * (xs[k] - mx);
        syy += (ys[k] - my) * (ys[k] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw Error(ErrorType::kDegenerateVariance, "correlation of a constant list is undefined");
    }
    return sxy / (std::sqrt(sxx) * std::sqrt(syy));
}

double
scl_from_values(std::span<const double> deltas, std::span<const double> distances, double epsilon_rho) {
    NANN_CHECK_ARG(epsilon_rho > 0.0, "epsilon_rho must be positive");
    std::vector<double> negated(distances.size());
    std::transform(distances.begin(), distances.end(), negated.begin(), [](double x) { return -x; });
    const double rho = pearson_correlation(deltas, negated);
    return 1.0 / (rho + 1.0 + epsilon_rho);
}

double
prediction_loss(const Model& model, const Dataset& data, std::span<const PredictionSample> batch, Model* grad) {
    return prediction_loss_scaled(model, data, batch, grad, 1.0);
}

double
scl_loss(const Model& model, const Dataset& data, std::span<const UserItemPair> pairs, double epsilon_rho,
         Model* grad) {
    return scl_loss_scaled(model, data, pairs, epsilon_rho, grad, 1.0);
}

LossBreakdown
total_loss(const Model& model, const Dataset& data, std::span<const PredictionSample> batch,
           std::span<const UserItemPair> scl_pairs, double lambda_scl, double epsilon_rho, Model* grad) {
    LossBreakdown out;
    out.prediction = prediction_loss_scaled(model, data, batch, grad, 1.0);
    if (lambda_scl > 0.0 && !scl_pairs.empty()) {
        out.scl = scl_loss_scaled(model, data, scl_pairs, epsilon_rho, grad, lambda_scl);
    }
    out.total = out.prediction + lambda_scl * out.scl;
    return out;
}

Model
zeros_like(const Model& model) {
    Model out = model;
    for (auto block : parameter_blocks(out)) {
        std::fill(block.begin(), block.end(), 0.0);
    }
    return out;
}

TrainState
init_state(const Dataset& data, const TrainConfig& config) {
    config.validate();
    NANN_CHECK_ARG(!data.users.empty() && !data.items.empty(), "training needs users and items");
    if (config.single_behavior) {
        NANN_CHECK_ARG(*config.single_behavior < data.behavior_count, "single behavior out of range");
    }
    ModelShape shape = config.shape;
    shape.feature_dim = data.feature_dim();
    shape.behaviors = config.single_behavior ? 1 : data.behavior_count;

    TrainState state;
    state.model = make_model(shape);
    std::mt19937_64 rng(config.seed);
    randomize(state.model, rng);
    for (auto block : parameter_blocks(state.model)) {
        state.adam_m.emplace_back(block.size(), 0.0);
        state.adam_v.emplace_back(block.size(), 0.0);
    }
    return state;
}

void
train_epochs(TrainState& state, const Dataset& data, const TrainConfig& config) {
    config.validate();
    const auto observed_all = group_interactions(data);
    std::vector<PredictionSample> positives;
    std::unordered_set<std::uint64_t> observed_keys;
    for (const auto& p : observed_all) {
        auto target = select_target(p.target, config);
        if (std::all_of(target.begin(), target.end(), [](double x) { return x == 0.0; })) {
            continue;
        }
        observed_keys.insert(static_cast<std::uint64_t>(p.user) * data.items.size() + p.item);
        positives.push_back({p.user, p.item, std::move(target), {}});
    }
    NANN_CHECK_ARG(!positives.empty(), "dataset has no usable interactions");

    const std::size_t n_users = data.users.size();
    const std::size_t n_items = data.items.size();
    const std::size_t behaviors = state.model.metric.behavior_count();
    const std::size_t embed_dim = state.model.metric.embed_dim();
    const double sigma = state.model.metric.serendipity_sigma;
    const std::size_t attention_block = parameter_blocks(state.model).size() - 1;
    const std::uint64_t total_pairs = static_cast<std::uint64_t>(n_users) * n_items;
    const auto negatives_per_epoch = static_cast<std::size_t>(
        std::min<double>(std::round(config.negative_ratio * static_cast<double>(positives.size())),
                         static_cast<double>(total_pairs - observed_keys.size())));

    for (std::size_t e = 0; e < config.epochs; ++e) {
        std::mt19937_64 rng(config.seed * 0x9e3779b97f4a7c15ULL + state.epoch + 1);
        std::uniform_int_distribution<UserId> pick_user(0, static_cast<UserId>(n_users - 1));
        std::uniform_int_distribution<ItemId> pick_item(0, static_cast<ItemId>(n_items - 1));
        std::normal_distribution<double> noise(0.0, sigma > 0.0 ? sigma : 1.0);

        std::vector<PredictionSample> examples = positives;
        examples.reserve(positives.size() + negatives_per_epoch);
        for (std::size_t k = 0; k < negatives_per_epoch; ++k) {
            UserId u;
            ItemId v;
            do {
                u = pick_user(rng);
                v = pick_item(rng);
            } while (observed_keys.contains(static_cast<std::uint64_t>(u) * n_items + v));
            examples.push_back({u, v, InteractionVector(behaviors, 0.0), {}});
        }
        std::shuffle(examples.begin(), examples.end(), rng);

        auto draw_scl_pairs = [&] {
            std::vector<UserItemPair> pairs(config.scl_pairs);
            for (auto& p : pairs) {
                p = {pick_user(rng), pick_item(rng)};
            }
            return pairs;
        };

        for (std::size_t start = 0; start < examples.size(); start += config.batch_size) {
            const std::size_t end = std::min(examples.size(), start + config.batch_size);
            std::span<PredictionSample> batch(examples.data() + start, end - start);
            for (auto& s : batch) {
                s.serendipity.clear();
                if (sigma > 0.0) {
                    s.serendipity.resize(embed_dim);
                    for (auto& x : s.serendipity) {
                        x = noise(rng);
                    }
                }
            }
            std::vector<UserItemPair> scl_pairs;
            if (config.lambda_scl > 0.0) {
                scl_pairs = draw_scl_pairs();
            }

            Model grad = zeros_like(state.model);
            LossBreakdown loss;
            try {
                loss = total_loss(state.model, data, batch, scl_pairs, config.lambda_scl, config.epsilon_rho, &grad);
            } catch (const Error& err) {
                if (err.type() == ErrorType::kDegenerateVariance) {
                    scl_pairs = draw_scl_pairs();
                    grad = zeros_like(state.model);
                    loss = total_loss(state.model, data, batch, scl_pairs, config.lambda_scl, config.epsilon_rho,
                                      &grad);
                } else if (err.type() == ErrorType::kNumeric) {
                    throw DivergenceError(fmt::format("step {}: {}", state.step, err.what()), state);
                } else {
                    throw;
                }
            }
            if (!std::isfinite(loss.total)) {
                throw DivergenceError(fmt::format("step {}: non-finite loss", state.step), state);
            }

            TrainState previous;
            previous.model = state.model;
            ++state.step;
            auto params = parameter_blocks(state.model);
            auto grads = parameter_blocks(grad);
            const double t = static_cast<double>(state.step);
            const double bias1 = 1.0 - std::pow(config.adam_beta1, t);
            const double bias2 = 1.0 - std::pow(config.adam_beta2, t);
            for (std::size_t b = 0; b < params.size(); ++b) {
                if (b == attention_block && !config.train_attention) {
                    continue;
                }
                auto& m = state.adam_m[b];
                auto& v = state.adam_v[b];
                for (std::size_t i = 0; i < params[b].size(); ++i) {
                    const double g = grads[b][i];
                    if (config.optimizer == OptimizerKind::kSgd) {
                        params[b][i] -= config.learning_rate * g;
                        continue;
                    }
                    m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * g;
                    v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * g * g;
                    params[b][i] -=
                        config.learning_rate * (m[i] / bias1) / (std::sqrt(v[i] / bias2) + config.adam_epsilon);
                }
            }
            try {
                check_parameters_finite(state.model);
            } catch (const Error&) {
                previous.adam_m = state.adam_m;
                previous.adam_v = state.adam_v;
                previous.step = state.step - 1;
                previous.epoch = state.epoch;
                previous.history = state.history;
                throw DivergenceError(fmt::format("step {}: parameters became non-finite", state.step),
                                      std::move(previous));
            }
            state.history.push_back({state.step, loss.prediction, loss.scl, loss.total});
        }
        ++state.epoch;
    }
}

TrainState
fit(const Dataset& data, const TrainConfig& config) {
    TrainState state = init_state(data, config);
    train_epochs(state, data, config);
    return state;
}

double
rank_alignment(const Model& model, const Dataset& data, std::size_t count, std::uint64_t seed) {
    NANN_CHECK_ARG(count >= 2, "rank alignment needs at least two pairs");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_user(0, data.users.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_item(0, data.items.size() - 1);
    std::vector<double> deltas(count);
    std::vector<double> neg_dist(count);
    for (std::size_t k = 0; k < count; ++k) {
        const auto u = pick_user(rng);
        const auto v = pick_item(rng);
        auto hu = project(model.user_projector, data.users[u].features);
        auto hv = project(model.item_projector, data.items[v].features);
        deltas[k] = relevance(model.metric, hu, hv);
        neg_dist[k] = -euclidean_distance(hu, hv);
    }
    return pearson_correlation(deltas, neg_dist);
}

std::pair<double, double>
smoothed_loss_endpoints(const std::vector<LossRecord>& history, std::size_t window) {
    NANN_CHECK_ARG(window > 0 && history.size() >= window, "history shorter than smoothing window");
    auto mean = [&](std::size_t from) {
        double s = 0.0;
        for (std::size_t i = from; i < from + window; ++i) {
            s += history[i].total;
        }
        return s / static_cast<double>(window);
    };
    return {mean(0), mean(history.size() - window)};
}

void
write_loss_history(const std::vector<LossRecord>& history, std::ostream& out) {
    out << "step\tpred_loss\tscl_loss\ttotal\n";
    for (const auto& r : history) {
        out << fmt::format("{}\t{:.9g}\t{:.9g}\t{:.9g}\n", r.step, r.prediction, r.scl, r.total);
    }
}

}  // namespace nann
