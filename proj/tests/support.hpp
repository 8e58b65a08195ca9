// Copyright 2026 The hardshare Authors
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

// Oracles shared by the unit tests and the acceptance driver.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "hardshare/metrics.hpp"
#include "hardshare/network.hpp"
#include "hardshare/random.hpp"

namespace hardshare::testing {

inline void fill_uniform(Tensor& t, Rng& rng, double lo, double hi) {
    for (float& v : t.storage()) v = static_cast<float>(rng.uniform(lo, hi));
}

/// Uniform magnitude in [lo, hi] with a random sign; keeps values away from
/// the ReLU kink.
inline void fill_signed(Tensor& t, Rng& rng, double lo, double hi) {
    for (float& v : t.storage()) {
        const double m = rng.uniform(lo, hi);
        v = static_cast<float>(rng.uniform() < 0.5 ? -m : m);
    }
}

/// Scalar probe loss sum(R * net(x)), accumulated in double.
inline double probe_loss(const Network& net, const Tensor& x, const Tensor& r) {
    const Tensor y = net.predict(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += static_cast<double>(r[i]) * y[i];
    return acc;
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::max(std::sqrt(na), std::sqrt(nb));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

struct GradCheck {
    double max_rel_error = 0.0;  // over parameters and the input, norm-wise
    std::size_t checked = 0;
};

/// Central finite differences of the probe loss against backward(), for
/// every parameter tensor and for the input.
inline GradCheck gradient_check(Network& net, const Tensor& x, const Tensor& r, double h) {
    net.forward(x);
    const Gradients g = net.backward(r, true);
    GradCheck out;
    auto compare = [&](float* slot, std::size_t n, const Tensor& analytic) {
        std::vector<double> a(n), fd(n);
        for (std::size_t i = 0; i < n; ++i) {
            const float saved = slot[i];
            slot[i] = static_cast<float>(saved + h);
            const double up = probe_loss(net, x, r);
            const double hp = static_cast<double>(slot[i]) - saved;
            slot[i] = static_cast<float>(saved - h);
            const double down = probe_loss(net, x, r);
            const double hm = saved - static_cast<double>(slot[i]);
            slot[i] = saved;
            fd[i] = (up - down) / (hp + hm);
            a[i] = analytic[i];
        }
        out.max_rel_error = std::max(out.max_rel_error, relative_error(a, fd));
        out.checked += n;
    };
    for (std::size_t k = 0; k < net.parameters().size(); ++k) {
        Tensor& p = net.parameters()[k].value;
        compare(p.data(), p.size(), g.params[k]);
    }
    Tensor xin = x;
    {
        std::vector<double> a(x.size()), fd(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const float saved = xin[i];
            xin[i] = static_cast<float>(saved + h);
            const double up = probe_loss(net, xin, r);
            const double hp = static_cast<double>(xin[i]) - saved;
            xin[i] = static_cast<float>(saved - h);
            const double down = probe_loss(net, xin, r);
            const double hm = saved - static_cast<double>(xin[i]);
            xin[i] = saved;
            fd[i] = (up - down) / (hp + hm);
            a[i] = g.input[i];
        }
        out.max_rel_error = std::max(out.max_rel_error, relative_error(a, fd));
        out.checked += x.size();
    }
    return out;
}

/// Random single-layer instance of the given kind, ready for gradient_check.
struct LayerInstance {
    Network net;
    Tensor x;
    Tensor r;
    double h = 1e-2;
};

inline LayerInstance random_layer_instance(LayerKind kind, Activation act, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "layer_instance"));
    auto pick = [&](int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); };
    const int batch = pick(1, 3);
    LayerInstance li;
    Shape in_shape;
    std::vector<LayerSpec> specs;
    if (kind == LayerKind::dense) {
        in_shape = {pick(1, 7)};
        specs.push_back(LayerSpec::dense(pick(1, 6)));
    } else if (kind == LayerKind::activation) {
        in_shape = {pick(1, 3), pick(2, 5), pick(2, 5)};
        specs.push_back(LayerSpec::act(act));
    } else {
        for (;;) {
            const int c = pick(1, 3), hgt = pick(3, 7), wid = pick(3, 7);
            const int k = pick(1, 4), s = pick(1, 2), p = pick(0, 1), o = pick(1, 3);
            const int oh = kind == LayerKind::conv2d ? conv_output_size(hgt, k, s, p)
                                                     : conv_transpose_output_size(hgt, k, s, p);
            const int ow = kind == LayerKind::conv2d ? conv_output_size(wid, k, s, p)
                                                     : conv_transpose_output_size(wid, k, s, p);
            if (oh < 1 || ow < 1) continue;
            in_shape = {c, hgt, wid};
            specs.push_back(kind == LayerKind::conv2d ? LayerSpec::conv2d(o, k, s, p)
                                                      : LayerSpec::conv_transpose2d(o, k, s, p));
            break;
        }
    }
    li.net = Network(in_shape, specs, "instance");
    seeded_init(li.net, seed, InitScheme::fan_in_uniform);
    Shape xs = in_shape;
    xs.insert(xs.begin(), batch);
    li.x = Tensor(xs);
    fill_signed(li.x, rng, 0.05, 1.0);
    Shape ys = li.net.output_shape();
    ys.insert(ys.begin(), batch);
    li.r = Tensor(ys);
    fill_uniform(li.r, rng, -1.0, 1.0);
    // tanh is curved, so a smaller step keeps the truncation term small.
    li.h = act == Activation::tanh ? 1e-3 : 1e-2;
    return li;
}

/// Independent uniform factors with `levels[j]` levels each; factor 0 is
/// categorical when `first_categorical`.
inline RepresentationSample factor_sample(int n, const std::vector<int>& levels, std::uint64_t seed,
                                          bool first_categorical = false) {
    Rng rng(derive_seed(seed, "factor_sample"));
    const int m = static_cast<int>(levels.size());
    RepresentationSample s;
    s.factor_values = Matrix(n, m);
    s.factor_indices.resize(static_cast<std::size_t>(n) * m);
    for (int j = 0; j < m; ++j)
        s.kinds.push_back(first_categorical && j == 0 ? FactorKind::categorical : FactorKind::ordered);
    for (int r = 0; r < n; ++r)
        for (int j = 0; j < m; ++j) {
            const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(levels[j])));
            s.factor_indices[static_cast<std::size_t>(r) * m + j] = k;
            s.factor_values(r, j) = levels[j] == 1 ? 0.0 : -1.0 + 2.0 * k / (levels[j] - 1);
        }
    s.codes = s.factor_values;
    return s;
}

/// Replaces code column `dim` with seeded standard normal noise.
inline void noise_column(RepresentationSample& s, int dim, std::uint64_t seed) {
    Rng rng(derive_seed(seed, "noise_column", static_cast<std::uint64_t>(dim)));
    for (int r = 0; r < s.n(); ++r) s.codes(r, dim) = rng.normal();
}

inline RepresentationSample permute_columns(const RepresentationSample& s, const std::vector<int>& perm) {
    RepresentationSample out = s;
    for (int r = 0; r < s.n(); ++r)
        for (int j = 0; j < s.d(); ++j) out.codes(r, j) = s.codes(r, perm[static_cast<std::size_t>(j)]);
    return out;
}

}  // namespace hardshare::testing
