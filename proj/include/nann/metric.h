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
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nann/datamodel.h"
#include "nann/types.h"

namespace nann {

enum class Precision : std::uint8_t { kFp32 = 0, kFp16 = 1 };
enum class Activation : std::uint8_t { kIdentity = 0, kRelu = 1 };

/// Affine map `out = weight * in + bias`, weight stored row-major (out x in).
struct DenseLayer {
    std::size_t in_dim{0};
    std::size_t out_dim{0};
    std::vector<double> weight;
    std::vector<double> bias;

    DenseLayer() = default;
    DenseLayer(std::size_t in, std::size_t out) : in_dim(in), out_dim(out), weight(in * out, 0.0), bias(out, 0.0) {
    }

    void
    apply(std::span<const double> in, std::span<double> out) const;

    bool
    operator==(const DenseLayer&) const = default;
};

/// Raw-feature projector; users and items each own one.
using Projector = DenseLayer;

/// The learned relevance function: an MLP over concat(h_u + noise, h_v)
/// producing one prediction per behavior, reduced by the attention vector.
struct MetricModel {
    std::vector<DenseLayer> layers;
    std::vector<double> attention;
    double serendipity_sigma{1.0};
    Precision precision{Precision::kFp32};
    Activation hidden_activation{Activation::kRelu};

    MetricModel() = default;

    /// Zero-initialized layers; attention uniform at 1/behaviors.
    MetricModel(std::size_t embed_dim, const std::vector<std::size_t>& hidden, std::size_t behaviors,
                Activation activation = Activation::kRelu);

    std::size_t
    embed_dim() const {
        return layers.empty() ? 0 : layers.front().in_dim / 2;
    }

    std::size_t
    behavior_count() const {
        return attention.size();
    }

    bool
    operator==(const MetricModel&) const = default;
};

/// Projectors plus metric: everything needed to score a (user, item) pair
/// from raw features.
struct Model {
    Projector user_projector;
    Projector item_projector;
    MetricModel metric;

    bool
    operator==(const Model&) const = default;
};

struct ModelShape {
    std::size_t feature_dim{16};
    std::size_t embed_dim{16};
    std::vector<std::size_t> hidden{64, 64};
    std::size_t behaviors{3};
    Activation activation{Activation::kRelu};
    double serendipity_sigma{1.0};
};

/// Zero-initialized model of the given shape.
Model
make_model(const ModelShape& shape);

/// He-style random initialization of every weight; biases start at zero and
/// attention stays uniform.
void
randomize(Model& model, std::mt19937_64& rng);

Embedding
project(const Projector& projector, std::span<const double> raw_features);

EmbeddingTable
project_all_users(const Model& model, const Dataset& data);

EmbeddingTable
project_all_items(const Model& model, const Dataset& data);

/// Intermediate values kept for backpropagation. `inputs[m]` is the input
/// of layer m; `pre_activations[m]` its affine output.
struct ForwardTrace {
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> pre_activations;
};

/// Predicted interaction vector. `serendipity`, when given, is added to the
/// user embedding; when absent the pass is deterministic.
InteractionVector
forward(const MetricModel& model, std::span<const double> user_embedding, std::span<const double> item_embedding,
        std::optional<std::span<const double>> serendipity = std::nullopt, ForwardTrace* trace = nullptr);

/// attention . forward(...) with no serendipity.
double
relevance(const MetricModel& model, std::span<const double> user_embedding, std::span<const double> item_embedding);

double
euclidean_distance(std::span<const double> a, std::span<const double> b);

/// Cosine similarity; defined as 0 when either vector is zero.
double
cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Rounds every stored weight to the nearest binary16 value. Requires an
/// fp32 model; throws overflow naming the offending block.
MetricModel
quantize(const MetricModel& model);

Model
quantize(const Model& model);

/// Rounds every parameter to binary32, the storage precision of fp32 models.
Model
round_to_fp32(const Model& model);

std::size_t
parameter_count(const Model& model);

/// Mutable views over every parameter block in a fixed order (user
/// projector, item projector, layers, attention).
std::vector<std::span<double>>
parameter_blocks(Model& model);

std::vector<std::span<const double>>
parameter_blocks(const Model& model);

std::vector<std::string>
parameter_block_names(const Model& model);

void
write_model(const Model& model, std::ostream& out);

Model
read_model(std::istream& in);

void
save_model(const Model& model, const std::filesystem::path& path);

Model
load_model(const std::filesystem::path& path);

}  // namespace nann
