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

#include "nann/metric.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "binary_io.h"
#include "nann/fp16.h"

namespace nann {

namespace {

constexpr std::string_view kModelMagic = "NANN-MODEL";
constexpr std::uint16_t kModelVersion = 1;

void
check_finite(std::span<const double> values, std::size_t layer) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw Error(ErrorType::kNumeric, fmt::format("non-finite activation in layer {}", layer));
        }
    }
}

template <typename Fn>
Model
map_parameters(const Model& model, Fn&& fn) {
    Model out = model;
    auto names = parameter_block_names(out);
    auto blocks = parameter_blocks(out);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        for (double& v : blocks[b]) {
            v = fn(v, names[b]);
        }
    }
    return out;
}

double
round_half_or_throw(double v, const std::string& block) {
    auto r = fp16::round(v);
    if (!r) {
        throw Error(ErrorType::kOverflow,
                    fmt::format("value {} in {} exceeds the binary16 range", v, block));
    }
    return *r;
}

}  // namespace

void
DenseLayer::apply(std::span<const double> in, std::span<double> out) const {
    const double* w = weight.data();
    for (std::size_t r = 0; r < out_dim; ++r) {
        double acc = bias[r];
        const double* row = w + r * in_dim;
        for (std::size_t c = 0; c < in_dim; ++c) {
            acc += row[c] * in[c];
        }
        out[r] = acc;
    }
}

MetricModel::MetricModel(std::size_t embed_dim, const std::vector<std::size_t>& hidden, std::size_t behaviors,
                         Activation activation)
    : attention(behaviors, behaviors == 0 ? 0.0 : 1.0 / static_cast<double>(behaviors)),
      hidden_activation(activation) {
    NANN_CHECK_ARG(embed_dim > 0 && behaviors > 0, "metric dimensions must be positive");
    std::size_t in = 2 * embed_dim;
    for (auto width : hidden) {
        NANN_CHECK_ARG(width > 0, "hidden width must be positive");
        layers.emplace_back(in, width);
        in = width;
    }
    layers.emplace_back(in, behaviors);
}

Model
make_model(const ModelShape& shape) {
    NANN_CHECK_ARG(shape.feature_dim > 0, "feature dimension must be positive");
    Model m;
    m.user_projector = Projector(shape.feature_dim, shape.embed_dim);
    m.item_projector = Projector(shape.feature_dim, shape.embed_dim);
    m.metric = MetricModel(shape.embed_dim, shape.hidden, shape.behaviors, shape.activation);
    m.metric.serendipity_sigma = shape.serendipity_sigma;
    return m;
}

void
randomize(Model& model, std::mt19937_64& rng) {
    auto fill = [&](DenseLayer& layer, double gain) {
        std::normal_distribution<double> dist(0.0, std::sqrt(gain / static_cast<double>(layer.in_dim)));
        for (auto& w : layer.weight) {
            w = dist(rng);
        }
        std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    };
    fill(model.user_projector, 1.0);
    fill(model.item_projector, 1.0);
    for (auto& layer : model.metric.layers) {
        fill(layer, 2.0);
    }
}

Embedding
project(const Projector& projector, std::span<const double> raw_features) {
    NANN_CHECK_ARG(raw_features.size() == projector.in_dim,
                   fmt::format("projector expects {} features, got {}", projector.in_dim, raw_features.size()));
    Embedding out(projector.out_dim);
    projector.apply(raw_features, out);
    return out;
}

EmbeddingTable
project_all_users(const Model& model, const Dataset& data) {
    EmbeddingTable table(data.users.size(), model.user_projector.out_dim);
    for (std::size_t u = 0; u < data.users.size(); ++u) {
        NANN_CHECK_ARG(data.users[u].features.size() == model.user_projector.in_dim, "user feature dimension mismatch");
        model.user_projector.apply(data.users[u].features, table.row(u));
    }
    return table;
}

EmbeddingTable
project_all_items(const Model& model, const Dataset& data) {
    EmbeddingTable table(data.items.size(), model.item_projector.out_dim);
    for (std::size_t v = 0; v < data.items.size(); ++v) {
        NANN_CHECK_ARG(data.items[v].features.size() == model.item_projector.in_dim, "item feature dimension mismatch");
        model.item_projector.apply(data.items[v].features, table.row(v));
    }
    return table;
}

InteractionVector
forward(const MetricModel& model, std::span<const double> user_embedding, std::span<const double> item_embedding,
        std::optional<std::span<const double>> serendipity, ForwardTrace* trace) {
    const std::size_t d = model.embed_dim();
    NANN_CHECK_ARG(!model.layers.empty(), "metric model has no layers");
    NANN_CHECK_ARG(user_embedding.size() == d && item_embedding.size() == d,
                   fmt::format("embedding dimension mismatch: expected {}", d));
    NANN_CHECK_ARG(!serendipity || serendipity->size() == d, "serendipity dimension mismatch");

    std::vector<double> current(2 * d);
    for (std::size_t i = 0; i < d; ++i) {
        current[i] = user_embedding[i] + (serendipity ? (*serendipity)[i] : 0.0);
        current[d + i] = item_embedding[i];
    }
    if (trace) {
        trace->inputs.clear();
        trace->pre_activations.clear();
    }
    std::vector<double> next;
    const std::size_t last = model.layers.size() - 1;
    for (std::size_t m = 0; m <= last; ++m) {
        const auto& layer = model.layers[m];
        next.assign(layer.out_dim, 0.0);
        layer.apply(current, next);
        check_finite(next, m);
        if (trace) {
            trace->inputs.push_back(current);
            trace->pre_activations.push_back(next);
        }
        if (m < last && model.hidden_activation == Activation::kRelu) {
            for (auto& v : next) {
                v = v > 0.0 ? v : 0.0;
            }
        }
        current.swap(next);
    }
    return current;
}

double
relevance(const MetricModel& model, std::span<const double> user_embedding, std::span<const double> item_embedding) {
    const auto z = forward(model, user_embedding, item_embedding);
    NANN_CHECK_ARG(z.size() == model.attention.size(), "attention length must equal behavior count");
    double delta = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        delta += model.attention[i] * z[i];
    }
    if (!std::isfinite(delta)) {
        throw Error(ErrorType::kNumeric, "non-finite relevance");
    }
    return delta;
}

double
euclidean_distance(std::span<const double> a, std::span<const double> b) {
    NANN_CHECK_ARG(a.size() == b.size(), "euclidean distance needs equal dimensions");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

double
cosine_similarity(std::span<const double> a, std::span<const double> b) {
    NANN_CHECK_ARG(a.size() == b.size(), "cosine similarity needs equal dimensions");
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

MetricModel
quantize(const MetricModel& model) {
    NANN_CHECK_ARG(model.precision == Precision::kFp32, "quantize requires an fp32 model");
    MetricModel out = model;
    for (std::size_t m = 0; m < out.layers.size(); ++m) {
        for (auto& w : out.layers[m].weight) {
            w = round_half_or_throw(w, fmt::format("layer {} weight", m));
        }
        for (auto& b : out.layers[m].bias) {
            b = round_half_or_throw(b, fmt::format("layer {} bias", m));
        }
    }
    for (auto& a : out.attention) {
        a = round_half_or_throw(a, "attention");
    }
    out.precision = Precision::kFp16;
    return out;
}

Model
quantize(const Model& model) {
    NANN_CHECK_ARG(model.metric.precision == Precision::kFp32, "quantize requires an fp32 model");
    Model out = map_parameters(model, round_half_or_throw);
    out.metric.precision = Precision::kFp16;
    return out;
}

Model
round_to_fp32(const Model& model) {
    return map_parameters(model, [](double v, const std::string&) {
        return static_cast<double>(static_cast<float>(v));
    });
}

std::vector<std::span<double>>
parameter_blocks(Model& model) {
    std::vector<std::span<double>> blocks;
    for (auto* p : {&model.user_projector, &model.item_projector}) {
        blocks.emplace_back(p->weight);
        blocks.emplace_back(p->bias);
    }
    for (auto& layer : model.metric.layers) {
        blocks.emplace_back(layer.weight);
        blocks.emplace_back(layer.bias);
    }
    blocks.emplace_back(model.metric.attention);
    return blocks;
}

std::vector<std::span<const double>>
parameter_blocks(const Model& model) {
    auto mutable_blocks = parameter_blocks(const_cast<Model&>(model));
    return {mutable_blocks.begin(), mutable_blocks.end()};
}

std::vector<std::string>
parameter_block_names(const Model& model) {
    std::vector<std::string> names = {"user projector weight", "user projector bias", "item projector weight",
                                      "item projector bias"};
    for (std::size_t m = 0; m < model.metric.layers.size(); ++m) {
        names.push_back(fmt::format("layer {} weight", m));
        names.push_back(fmt::format("layer {} bias", m));
    }
    names.emplace_back("attention");
    return names;
}

std::size_t
parameter_count(const Model& model) {
    std::size_t n = 0;
    for (auto block : parameter_blocks(model)) {
        n += block.size();
    }
    return n;
}

// Layout: magic, u16 version, u8 precision, u8 activation, u32 feature_dim,
// u32 embed_dim, u32 behaviors, u32 layer count, u32 width per layer,
// f64 serendipity sigma, then every parameter block in parameter_blocks()
// order as f32 (fp32) or binary16 (fp16) payloads.
void
write_model(const Model& model, std::ostream& out) {
    detail::BinaryWriter w(out);
    const auto& metric = model.metric;
    w.bytes(kModelMagic);
    w.uint<std::uint16_t>(kModelVersion);
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(metric.precision));
    w.uint<std::uint8_t>(static_cast<std::uint8_t>(metric.hidden_activation));
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(model.user_projector.in_dim));
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(model.user_projector.out_dim));
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(metric.attention.size()));
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(metric.layers.size()));
    for (const auto& layer : metric.layers) {
        w.uint<std::uint32_t>(static_cast<std::uint32_t>(layer.out_dim));
    }
    w.f64(metric.serendipity_sigma);
    for (auto block : parameter_blocks(model)) {
        for (double v : block) {
            if (metric.precision == Precision::kFp16) {
                w.uint<std::uint16_t>(fp16::encode(v));
            } else {
                w.f32(static_cast<float>(v));
            }
        }
    }
}

Model
read_model(std::istream& in) {
    detail::BinaryReader r(in, "model file");
    if (r.bytes(kModelMagic.size()) != kModelMagic) {
        throw Error(ErrorType::kParse, "model file: bad magic");
    }
    const auto version = r.uint<std::uint16_t>();
    if (version != kModelVersion) {
        throw Error(ErrorType::kVersionMismatch, fmt::format("model file version {} is not supported", version));
    }
    const auto precision = r.uint<std::uint8_t>();
    const auto activation = r.uint<std::uint8_t>();
    if (precision > 1 || activation > 1) {
        throw Error(ErrorType::kParse, "model file: unknown precision or activation tag");
    }
    ModelShape shape;
    shape.feature_dim = r.uint<std::uint32_t>();
    shape.embed_dim = r.uint<std::uint32_t>();
    shape.behaviors = r.uint<std::uint32_t>();
    const auto layer_count = r.uint<std::uint32_t>();
    if (layer_count == 0 || layer_count > 64 || shape.embed_dim == 0 || shape.behaviors == 0 ||
        shape.feature_dim == 0) {
        throw Error(ErrorType::kParse, "model file: invalid dimensions");
    }
    shape.hidden.clear();
    for (std::uint32_t m = 0; m < layer_count; ++m) {
        const auto width = r.uint<std::uint32_t>();
        if (m + 1 < layer_count) {
            shape.hidden.push_back(width);
        } else if (width != shape.behaviors) {
            throw Error(ErrorType::kParse, "model file: final layer width must equal behavior count");
        }
    }
    shape.activation = static_cast<Activation>(activation);
    shape.serendipity_sigma = r.f64();
    Model model = make_model(shape);
    model.metric.precision = static_cast<Precision>(precision);
    for (auto block : parameter_blocks(model)) {
        for (double& v : block) {
            v = model.metric.precision == Precision::kFp16 ? fp16::decode(r.uint<std::uint16_t>())
                                                           : static_cast<double>(r.f32());
        }
    }
    return model;
}

void
save_model(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorType::kIo, fmt::format("cannot open '{}' for writing", path.string()));
    }
    write_model(model, out);
    if (!out) {
        throw Error(ErrorType::kIo, fmt::format("write to '{}' failed", path.string()));
    }
}

Model
load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorType::kIo, fmt::format("cannot open '{}' for reading", path.string()));
    }
    return read_model(in);
}

}  // namespace nann
