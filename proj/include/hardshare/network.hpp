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

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hardshare/tensor.hpp"

namespace hardshare {

enum class LayerKind { dense, conv2d, conv_transpose2d, activation };
enum class Activation { none, relu, tanh };

std::string to_string(LayerKind kind);
std::string to_string(Activation act);

struct LayerSpec {
    LayerKind kind = LayerKind::dense;
    int kernel = 1;
    int stride = 1;
    int padding = 0;
    int outputs = 0;  // out_features (dense) or out_channels (conv)
    Activation activation = Activation::none;

    static LayerSpec dense(int out_features);
    static LayerSpec conv2d(int out_channels, int kernel, int stride, int padding);
    static LayerSpec conv_transpose2d(int out_channels, int kernel, int stride, int padding);
    static LayerSpec act(Activation a);

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Output spatial size of a strided convolution; 0 when the geometry is invalid.
int conv_output_size(int in, int kernel, int stride, int padding);
/// Output spatial size of a transposed convolution; 0 when invalid.
int conv_transpose_output_size(int in, int kernel, int stride, int padding);

struct Parameter {
    std::string name;
    Tensor value;
    int fan_in = 1;
};

struct Gradients {
    std::vector<Tensor> params;  // aligned with Network::parameters()
    Tensor input;                // empty unless requested
};

enum class InitScheme { gaussian_unit, fan_in_uniform };

class Layer;

/// Feed-forward stack of layers over per-example shape `input_shape`.
/// Batches carry a leading batch axis. forward() caches what backward()
/// needs; predict() is const and cache-free, so a trained network can be
/// evaluated from several threads.
class Network {
public:
    Network();
    Network(Shape input_shape, std::vector<LayerSpec> layers, std::string name = "net");
    ~Network();
    Network(const Network&);
    Network& operator=(const Network&);
    Network(Network&&) noexcept;
    Network& operator=(Network&&) noexcept;

    const std::string& name() const noexcept { return name_; }
    const Shape& input_shape() const noexcept { return input_shape_; }
    const Shape& output_shape() const noexcept { return layer_shapes_.back(); }
    /// Per-example output shape after each layer (index 0 is the input).
    const std::vector<Shape>& layer_shapes() const noexcept { return layer_shapes_; }
    const std::vector<LayerSpec>& specs() const noexcept { return specs_; }

    std::vector<Parameter>& parameters() noexcept { return params_; }
    const std::vector<Parameter>& parameters() const noexcept { return params_; }
    std::size_t parameter_count() const;

    Tensor forward(const Tensor& batch);
    Tensor predict(const Tensor& batch) const;

    /// Reverse-mode gradients of a scalar loss given d(loss)/d(output) for the
    /// batch most recently passed to forward().
    Gradients backward(const Tensor& grad_output, bool want_input_gradient = false);

    bool has_cache() const noexcept { return cached_; }
    void clear_cache();

private:
    void check_input(const Tensor& batch) const;

    std::string name_;
    Shape input_shape_;
    std::vector<LayerSpec> specs_;
    std::vector<Shape> layer_shapes_;
    std::vector<Parameter> params_;
    std::vector<std::unique_ptr<Layer>> layers_;
    bool cached_ = false;
};

/// Deterministically (re)initializes every parameter of `net`.
void seeded_init(Network& net, std::uint64_t seed, InitScheme scheme);

struct LossResult {
    double value = 0.0;
    Tensor grad;  // d(value)/d(pred)
};

/// Batch mean of per-example squared L2 error:
/// (1/B) * sum_b ||pred_b - target_b||^2, gradient 2 (pred - target) / B.
LossResult mse_loss(const Tensor& pred, const Tensor& target);

/// Mean over all elements of the squared difference (reporting metric).
double mean_squared_error(const Tensor& a, const Tensor& b);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::int64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    static AdamState for_parameters(std::span<const Parameter> params, AdamConfig config = {});
};

/// One bias-corrected Adam update in place. Throws NumericError naming the
/// parameter if any gradient is non-finite; no parameter is touched then.
void adam_step(AdamState& state, std::span<Parameter> params, std::span<const Tensor> grads);

}  // namespace hardshare
