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

#include <catch_amalgamated.hpp>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "nann/fp16.h"
#include "nann/metric.h"
#include "test_support.h"

using namespace nann;
using Catch::Approx;
using nann::testing::error_type_of;

namespace {

std::vector<double>
random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> g(0.0, scale);
    std::vector<double> v(n);
    for (auto& x : v) {
        x = g(rng);
    }
    return v;
}

Model
random_model(std::uint64_t seed, ModelShape shape = {}) {
    Model m = make_model(shape);
    std::mt19937_64 rng(seed);
    randomize(m, rng);
    // Nonzero biases so every parameter block matters.
    std::normal_distribution<double> g(0.0, 0.1);
    for (auto* p : {&m.user_projector, &m.item_projector}) {
        for (auto& b : p->bias) {
            b = g(rng);
        }
    }
    for (auto& layer : m.metric.layers) {
        for (auto& b : layer.bias) {
            b = g(rng);
        }
    }
    return m;
}

// Independent reference: explicit loops over the stored row-major matrices.
std::vector<double>
naive_affine(const DenseLayer& layer, const std::vector<double>& in) {
    std::vector<double> out(layer.out_dim);
    for (std::size_t r = 0; r < layer.out_dim; ++r) {
        double s = layer.bias[r];
        for (std::size_t c = 0; c < layer.in_dim; ++c) {
            s += layer.weight[r * layer.in_dim + c] * in[c];
        }
        out[r] = s;
    }
    return out;
}

double
naive_relevance(const MetricModel& m, const std::vector<double>& hu, const std::vector<double>& hv) {
    std::vector<double> h = hu;
    h.insert(h.end(), hv.begin(), hv.end());
    for (std::size_t i = 0; i < m.layers.size(); ++i) {
        h = naive_affine(m.layers[i], h);
        if (i + 1 < m.layers.size()) {
            for (auto& x : h) {
                x = std::max(0.0, x);
            }
        }
    }
    double d = 0.0;
    for (std::size_t z = 0; z < h.size(); ++z) {
        d += m.attention[z] * h[z];
    }
    return d;
}

}  // namespace

TEST_CASE("projection is the stored affine map", "[metric]") {
    Projector zero(4, 3);
    CHECK(project(zero, std::vector<double>{1, -2, 3, 4}) == std::vector<double>(3, 0.0));

    Projector identity(4, 4);
    for (std::size_t i = 0; i < 4; ++i) {
        identity.weight[i * 4 + i] = 1.0;
    }
    const std::vector<double> x{0.5, -1.25, 3.0, 7.0};
    CHECK(project(identity, x) == x);

    std::mt19937_64 rng(3);
    Projector p(4, 5);
    p.weight = random_vector(20, rng);
    p.bias = random_vector(5, rng);
    for (int trial = 0; trial < 20; ++trial) {
        const auto in = random_vector(4, rng);
        const auto got = project(p, in);
        const auto want = naive_affine(p, in);
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(std::fabs(got[i] - want[i]) <= 1e-12);
        }
    }
    CHECK(error_type_of([&] { project(p, std::vector<double>{1, 2, 3}); }) == ErrorType::kInvalidArgument);
}

TEST_CASE("forward pass contracts", "[metric]") {
    MetricModel zero(4, {8}, 3);
    const std::vector<double> hu{1, 2, 3, 4};
    const std::vector<double> hv{-1, 0.5, 2, 0};
    CHECK(forward(zero, hu, hv) == std::vector<double>(3, 0.0));
    CHECK(relevance(zero, hu, hv) == 0.0);

    SECTION("single linear layer equals a hand matrix multiply") {
        MetricModel linear(4, {}, 2);
        std::mt19937_64 rng(5);
        linear.layers[0].weight = random_vector(16, rng);
        linear.layers[0].bias = random_vector(2, rng);
        std::vector<double> cat = hu;
        cat.insert(cat.end(), hv.begin(), hv.end());
        const auto want = naive_affine(linear.layers[0], cat);
        const auto got = forward(linear, hu, hv);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(got[i] == Approx(want[i]).margin(1e-12));
        }
    }

    SECTION("inference is deterministic and serendipity shifts the user side") {
        const auto m = random_model(9, ModelShape{4, 4, {8}, 3});
        const auto a = forward(m.metric, hu, hv);
        CHECK(forward(m.metric, hu, hv) == a);
        std::vector<double> noise{0.1, -0.2, 0.3, 0.0};
        std::vector<double> shifted(4);
        for (std::size_t i = 0; i < 4; ++i) {
            shifted[i] = hu[i] + noise[i];
        }
        const auto with_noise = forward(m.metric, hu, hv, std::span<const double>(noise));
        const auto reference = forward(m.metric, shifted, hv);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(with_noise[i] == Approx(reference[i]).margin(1e-12));
        }
    }

    SECTION("dimension mismatches and non-finite values are rejected") {
        CHECK(error_type_of([&] { forward(zero, std::vector<double>{1, 2}, hv); }) == ErrorType::kInvalidArgument);
        std::vector<double> bad_noise{1, 2};
        CHECK(error_type_of([&] { forward(zero, hu, hv, std::span<const double>(bad_noise)); }) ==
              ErrorType::kInvalidArgument);
        MetricModel huge(4, {}, 1);
        huge.layers[0].weight.assign(8, 1e308);
        const std::vector<double> big{10, 10, 10, 10};
        CHECK(error_type_of([&] { forward(huge, big, big); }) == ErrorType::kNumeric);
    }
}

TEST_CASE("relevance matches an independent scalar oracle", "[metric]") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto m = random_model(seed, ModelShape{6, 6, {10, 7}, 3});
        std::mt19937_64 rng(seed * 31);
        for (int trial = 0; trial < 10; ++trial) {
            const auto hu = random_vector(6, rng);
            const auto hv = random_vector(6, rng);
            CHECK(relevance(m.metric, hu, hv) == Approx(naive_relevance(m.metric, hu, hv)).margin(1e-10));
        }
    }
}

TEST_CASE("attention selects and combines behavior outputs linearly", "[metric]") {
    auto m = random_model(4, ModelShape{4, 4, {8}, 3});
    std::mt19937_64 rng(4);
    const auto hu = random_vector(4, rng);
    const auto hv = random_vector(4, rng);
    const auto z = forward(m.metric, hu, hv);
    for (std::size_t t = 0; t < 3; ++t) {
        auto one_hot = m.metric;
        one_hot.attention.assign(3, 0.0);
        one_hot.attention[t] = 1.0;
        CHECK(relevance(one_hot, hu, hv) == z[t]);
    }
    auto a1 = m.metric;
    auto a2 = m.metric;
    a1.attention = {0.2, -1.0, 0.7};
    a2.attention = {1.5, 0.3, -0.4};
    auto mix = m.metric;
    const double alpha = 2.5;
    const double beta = -0.75;
    for (std::size_t i = 0; i < 3; ++i) {
        mix.attention[i] = alpha * a1.attention[i] + beta * a2.attention[i];
    }
    CHECK(relevance(mix, hu, hv) ==
          Approx(alpha * relevance(a1, hu, hv) + beta * relevance(a2, hu, hv)).margin(1e-12));
}

TEST_CASE("attention starts uniform", "[metric]") {
    for (std::size_t z = 1; z <= 6; ++z) {
        MetricModel m(4, {8}, z);
        REQUIRE(m.attention.size() == z);
        CHECK(std::accumulate(m.attention.begin(), m.attention.end(), 0.0) == Approx(1.0).margin(1e-15));
        for (double a : m.attention) {
            CHECK(a == m.attention.front());
        }
        CHECK(m.layers.front().in_dim == 8);
        CHECK(m.layers.back().out_dim == z);
    }
}

TEST_CASE("euclidean and cosine baselines", "[metric]") {
    const std::vector<double> o{0, 0};
    const std::vector<double> p{3, 4};
    CHECK(euclidean_distance(o, p) == 5.0);
    CHECK(euclidean_distance(p, p) == 0.0);
    CHECK(cosine_similarity(p, p) == Approx(1.0).margin(1e-15));
    CHECK(cosine_similarity(o, o) == 0.0);
    CHECK(cosine_similarity(o, p) == 0.0);
    const std::vector<double> q{-3, -4};
    CHECK(cosine_similarity(p, q) == Approx(-1.0).margin(1e-15));
    CHECK(error_type_of([&] { euclidean_distance(o, std::vector<double>{1}); }) == ErrorType::kInvalidArgument);

    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 500; ++trial) {
        const auto a = random_vector(5, rng, 3.0);
        const auto b = random_vector(5, rng, 3.0);
        const auto c = random_vector(5, rng, 3.0);
        CHECK(euclidean_distance(a, c) <= euclidean_distance(a, b) + euclidean_distance(b, c) + 1e-9);
        CHECK(euclidean_distance(a, b) == Approx(nann::testing::naive_distance(a, b)).margin(1e-12));
        const double cs = cosine_similarity(a, b);
        CHECK(cs >= -1.0);
        CHECK(cs <= 1.0);
    }
}

TEST_CASE("binary16 rounding is exhaustive round-to-nearest-even", "[metric][fp16]") {
    std::vector<double> positives;
    for (std::uint32_t bits = 0; bits <= 0xffff; ++bits) {
        const double v = fp16::decode(static_cast<std::uint16_t>(bits));
        if (!std::isfinite(v)) {
            CHECK(!fp16::round(v).has_value());
            continue;
        }
        const auto r = fp16::round(v);
        REQUIRE(r.has_value());
        CHECK(std::memcmp(&*r, &v, sizeof v) == 0);
        CHECK(fp16::encode(v) == static_cast<std::uint16_t>(bits));
        if (bits < 0x7c00) {
            positives.push_back(v);
        }
    }
    REQUIRE(positives.size() == 0x7c00);
    CHECK(positives.back() == fp16::kMaxFinite);
    // Midpoints go to the neighbor with an even bit pattern; points just off
    // the midpoint go to the nearer neighbor.
    for (std::size_t i = 0; i + 1 < positives.size(); ++i) {
        const double lo = positives[i];
        const double hi = positives[i + 1];
        const double mid = lo + (hi - lo) / 2;
        const double even = (i % 2 == 0) ? lo : hi;
        CHECK(*fp16::round(mid) == even);
        CHECK(*fp16::round(-mid) == -even);
        CHECK(*fp16::round(std::nextafter(mid, 0.0)) == lo);
        CHECK(*fp16::round(std::nextafter(mid, 1e9)) == hi);
    }
    CHECK(*fp16::round(65519.0) == fp16::kMaxFinite);
    CHECK(!fp16::round(65520.0).has_value());
    CHECK(!fp16::round(1e6).has_value());
    CHECK(!fp16::round(std::nan("")).has_value());
}

TEST_CASE("quantize rounds every stored parameter to binary16", "[metric][fp16]") {
    CHECK(*fp16::round(0.5) == 0.5);
    const double third = *fp16::round(1.0 / 3.0);
    CHECK(std::fabs(third - 1.0 / 3.0) <= std::ldexp(1.0, -12) / 3.0 * (1 + 1e-9));

    auto model = round_to_fp32(random_model(21));
    const auto q = quantize(model);
    CHECK(q.metric.precision == Precision::kFp16);
    const auto before = parameter_blocks(model);
    const auto after = parameter_blocks(q);
    REQUIRE(before.size() == after.size());
    for (std::size_t b = 0; b < before.size(); ++b) {
        for (std::size_t i = 0; i < before[b].size(); ++i) {
            CHECK(after[b][i] == *fp16::round(before[b][i]));
        }
    }

    SECTION("idempotent on the stored weights") {
        auto again = q;
        again.metric.precision = Precision::kFp32;
        CHECK(quantize(again) == q);
    }

    SECTION("refuses an fp16 model and names overflowing blocks") {
        CHECK(error_type_of([&] { quantize(q); }) == ErrorType::kInvalidArgument);
        auto big = model;
        big.metric.layers[1].bias[0] = 1e5;
        try {
            quantize(big);
            FAIL("overflow not detected");
        } catch (const Error& e) {
            CHECK(e.type() == ErrorType::kOverflow);
            CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
        }
    }
}

TEST_CASE("fp16 relevance error stays within the propagated rounding bound", "[metric][fp16]") {
    // First-order bound: every parameter moves by at most u|w| + tiny, which
    // is pushed through |W| with ReLU treated as 1-Lipschitz.
    const double u = std::ldexp(1.0, -11);
    const double tiny = std::ldexp(1.0, -25);
    const auto full = round_to_fp32(random_model(33));
    const auto half = quantize(full);
    std::mt19937_64 rng(33);

    auto abs_affine_error = [&](const DenseLayer& layer, const std::vector<double>& in,
                                const std::vector<double>& in_err) {
        std::vector<double> out(layer.out_dim);
        for (std::size_t r = 0; r < layer.out_dim; ++r) {
            double e = u * std::fabs(layer.bias[r]) + tiny;
            for (std::size_t c = 0; c < layer.in_dim; ++c) {
                const double w = std::fabs(layer.weight[r * layer.in_dim + c]);
                e += (u * w + tiny) * (std::fabs(in[c]) + in_err[c]) + w * in_err[c];
            }
            out[r] = e;
        }
        return out;
    };

    double max_error = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto xu = random_vector(16, rng);
        const auto xv = random_vector(16, rng);
        const auto hu = project(full.user_projector, xu);
        const auto hv = project(full.item_projector, xv);
        const auto qu = project(half.user_projector, xu);
        const auto qv = project(half.item_projector, xv);
        const double delta = relevance(full.metric, hu, hv);
        const double delta_half = relevance(half.metric, qu, qv);
        const double err = std::fabs(delta - delta_half);
        max_error = std::max(max_error, err);

        auto eu = abs_affine_error(full.user_projector, xu, std::vector<double>(16, 0.0));
        auto ev = abs_affine_error(full.item_projector, xv, std::vector<double>(16, 0.0));
        std::vector<double> a = hu;
        a.insert(a.end(), hv.begin(), hv.end());
        std::vector<double> e = eu;
        e.insert(e.end(), ev.begin(), ev.end());
        for (std::size_t m = 0; m < full.metric.layers.size(); ++m) {
            e = abs_affine_error(full.metric.layers[m], a, e);
            a = naive_affine(full.metric.layers[m], a);
            if (m + 1 < full.metric.layers.size()) {
                for (auto& x : a) {
                    x = std::max(0.0, x);
                }
            }
        }
        double bound = 0.0;
        for (std::size_t z = 0; z < a.size(); ++z) {
            const double w = std::fabs(full.metric.attention[z]);
            bound += (u * w + tiny) * (std::fabs(a[z]) + e[z]) + w * e[z];
        }
        CHECK(err <= bound * 1.01 + 1e-12);
    }
    UNSCOPED_INFO("max |fp16 - fp32| relevance difference over 1000 pairs: " << max_error);
    CHECK(max_error > 0.0);
}

TEST_CASE("model files round-trip and fp16 files halve", "[metric]") {
    const auto model = round_to_fp32(random_model(8));
    std::stringstream a;
    write_model(model, a);
    const auto back = read_model(a);
    CHECK(back == model);

    const auto half = quantize(model);
    std::stringstream b;
    write_model(half, b);
    const auto size32 = static_cast<double>(a.str().size());
    const auto size16 = static_cast<double>(b.str().size());
    CHECK(read_model(b) == half);
    CHECK(std::fabs(size16 - size32 / 2) <= 64.0);
    CHECK(static_cast<double>(parameter_count(model)) * 2 == Approx(size32 - size16));

    const auto dir = nann::testing::scratch_dir("metric");
    save_model(half, dir / "m.bin");
    CHECK(load_model(dir / "m.bin") == half);

    const auto bytes = a.str();
    std::istringstream truncated(bytes.substr(0, bytes.size() - 3));
    CHECK(error_type_of([&] { read_model(truncated); }) == ErrorType::kParse);
    std::string other = bytes;
    other[0] = 'X';
    std::istringstream bad_magic(other);
    CHECK(error_type_of([&] { read_model(bad_magic); }) == ErrorType::kParse);
}
