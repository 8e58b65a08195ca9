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

#include "hardshare/network.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>

#include "hardshare/errors.hpp"
#include "hardshare/random.hpp"

namespace hardshare {

namespace {

using MatR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

// Geometry of a strided 2-D correlation from an (C, H, W) image to (Ho, Wo).
struct ConvGeom {
    int channels, height, width, kernel, stride, padding, out_h, out_w;

    int rows() const { return channels * kernel * kernel; }
    int out_area() const { return out_h * out_w; }
};

// Patch-matrix expansion. cols is (C*k*k) x (B*Ho*Wo); column index runs over
// (b, oh, ow), row index over (c, ki, kj). Out-of-frame taps read as zero.
// This is the single hot loop of the engine, so it stays branch-light.
void im2col(const float* img, int batch, const ConvGeom& g, float* cols) {
    const int area = g.out_area();
    const std::size_t ncols = static_cast<std::size_t>(batch) * area;
    for (int c = 0; c < g.channels; ++c) {
        for (int ki = 0; ki < g.kernel; ++ki) {
            for (int kj = 0; kj < g.kernel; ++kj) {
                float* row = cols + static_cast<std::size_t>((c * g.kernel + ki) * g.kernel + kj) * ncols;
                for (int b = 0; b < batch; ++b) {
                    const float* plane =
                        img + (static_cast<std::size_t>(b) * g.channels + c) * g.height * g.width;
                    float* dst = row + static_cast<std::size_t>(b) * area;
                    for (int oh = 0; oh < g.out_h; ++oh) {
                        const int ih = oh * g.stride - g.padding + ki;
                        if (ih < 0 || ih >= g.height) {
                            std::fill(dst + oh * g.out_w, dst + (oh + 1) * g.out_w, 0.0f);
                            continue;
                        }
                        const float* src = plane + ih * g.width;
                        for (int ow = 0; ow < g.out_w; ++ow) {
                            const int iw = ow * g.stride - g.padding + kj;
                            dst[oh * g.out_w + ow] = (iw >= 0 && iw < g.width) ? src[iw] : 0.0f;
                        }
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds patch columns back into an image batch.
void col2im(const float* cols, int batch, const ConvGeom& g, float* img) {
    const int area = g.out_area();
    const std::size_t ncols = static_cast<std::size_t>(batch) * area;
    std::fill(img, img + static_cast<std::size_t>(batch) * g.channels * g.height * g.width, 0.0f);
    for (int c = 0; c < g.channels; ++c) {
        for (int ki = 0; ki < g.kernel; ++ki) {
            for (int kj = 0; kj < g.kernel; ++kj) {
                const float* row =
                    cols + static_cast<std::size_t>((c * g.kernel + ki) * g.kernel + kj) * ncols;
                for (int b = 0; b < batch; ++b) {
                    float* plane = img + (static_cast<std::size_t>(b) * g.channels + c) * g.height * g.width;
                    const float* src = row + static_cast<std::size_t>(b) * area;
                    for (int oh = 0; oh < g.out_h; ++oh) {
                        const int ih = oh * g.stride - g.padding + ki;
                        if (ih < 0 || ih >= g.height) continue;
                        float* dst = plane + ih * g.width;
                        for (int ow = 0; ow < g.out_w; ++ow) {
                            const int iw = ow * g.stride - g.padding + kj;
                            if (iw >= 0 && iw < g.width) dst[iw] += src[oh * g.out_w + ow];
                        }
                    }
                }
            }
        }
    }
}

// (B, C, HW) <-> (C, B*HW) layout shuffles around the GEMMs.
void batch_major_to_channel_major(const float* src, int batch, int channels, int area, float* dst) {
    for (int b = 0; b < batch; ++b)
        for (int c = 0; c < channels; ++c)
            std::copy_n(src + (static_cast<std::size_t>(b) * channels + c) * area, area,
                        dst + (static_cast<std::size_t>(c) * batch + b) * area);
}

void channel_major_to_batch_major(const float* src, int batch, int channels, int area, float* dst) {
    for (int c = 0; c < channels; ++c)
        for (int b = 0; b < batch; ++b)
            std::copy_n(src + (static_cast<std::size_t>(c) * batch + b) * area, area,
                        dst + (static_cast<std::size_t>(b) * channels + c) * area);
}

Shape batched(int batch, const Shape& per_example) {
    Shape s{batch};
    s.insert(s.end(), per_example.begin(), per_example.end());
    return s;
}

// Per-example shape as (C, H, W); flat vectors are read as (F, 1, 1).
std::array<int, 3> as_chw(const Shape& s) {
    if (s.size() == 3) return {s[0], s[1], s[2]};
    if (s.size() == 1) return {s[0], 1, 1};
    throw ConfigError("convolution needs a (C,H,W) or flat input, got " + shape_str(s));
}

}  // namespace

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::dense: return "dense";
        case LayerKind::conv2d: return "conv2d";
        case LayerKind::conv_transpose2d: return "conv_transpose2d";
        case LayerKind::activation: return "activation";
    }
    return "?";
}

std::string to_string(Activation act) {
    switch (act) {
        case Activation::none: return "none";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
    }
    return "?";
}

LayerSpec LayerSpec::dense(int out_features) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.outputs = out_features;
    return s;
}

LayerSpec LayerSpec::conv2d(int out_channels, int kernel, int stride, int padding) {
    return {LayerKind::conv2d, kernel, stride, padding, out_channels, Activation::none};
}

LayerSpec LayerSpec::conv_transpose2d(int out_channels, int kernel, int stride, int padding) {
    return {LayerKind::conv_transpose2d, kernel, stride, padding, out_channels, Activation::none};
}

LayerSpec LayerSpec::act(Activation a) {
    LayerSpec s;
    s.kind = LayerKind::activation;
    s.activation = a;
    return s;
}

int conv_output_size(int in, int kernel, int stride, int padding) {
    if (in <= 0 || kernel < 1 || stride < 1 || padding < 0) return 0;
    const int span = in + 2 * padding - kernel;
    if (span < 0) return 0;
    return span / stride + 1;
}

int conv_transpose_output_size(int in, int kernel, int stride, int padding) {
    if (in <= 0 || kernel < 1 || stride < 1 || padding < 0) return 0;
    const int out = (in - 1) * stride - 2 * padding + kernel;
    return out > 0 ? out : 0;
}

// ---------------------------------------------------------------------------
// Layers

class Layer {
public:
    virtual ~Layer() = default;
    virtual std::unique_ptr<Layer> clone() const = 0;
    virtual Tensor forward(const Tensor& in, const std::vector<Parameter>& params, bool cache) = 0;
    virtual Tensor apply(const Tensor& in, const std::vector<Parameter>& params) const = 0;
    // Writes parameter gradients into grads[first_param...]; returns d/d(input)
    // when need_input is set.
    virtual Tensor backward(const Tensor& grad_out, const std::vector<Parameter>& params,
                            std::vector<Tensor>& grads, bool need_input) = 0;
    virtual bool has_cache() const = 0;
    virtual void clear() = 0;

    std::size_t first_param = 0;
    Shape in_shape, out_shape;
};

namespace {

class DenseLayer final : public Layer {
public:
    std::unique_ptr<Layer> clone() const override { return std::make_unique<DenseLayer>(*this); }

    Tensor apply(const Tensor& in, const std::vector<Parameter>& p) const override {
        const int batch = in.dim(0);
        const Tensor& w = p[first_param].value;
        const Tensor& b = p[first_param + 1].value;
        const int n_out = w.dim(0), n_in = w.dim(1);
        Tensor out(batched(batch, out_shape));
        CMapR x(in.data(), batch, n_in);
        CMapR wm(w.data(), n_out, n_in);
        MapR y(out.data(), batch, n_out);
        y.noalias() = x * wm.transpose();
        y.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(b.data(), n_out);
        return out;
    }

    Tensor forward(const Tensor& in, const std::vector<Parameter>& p, bool cache) override {
        if (cache) input_ = in;
        return apply(in, p);
    }

    Tensor backward(const Tensor& g, const std::vector<Parameter>& p, std::vector<Tensor>& grads,
                    bool need_input) override {
        const int batch = g.dim(0);
        const Tensor& w = p[first_param].value;
        const int n_out = w.dim(0), n_in = w.dim(1);
        CMapR gy(g.data(), batch, n_out);
        CMapR x(input_.data(), batch, n_in);
        Tensor& gw = grads[first_param];
        Tensor& gb = grads[first_param + 1];
        gw = Tensor(w.shape());
        gb = Tensor({n_out});
        MapR(gw.data(), n_out, n_in).noalias() = gy.transpose() * x;
        Eigen::Map<Eigen::RowVectorXf>(gb.data(), n_out) = gy.colwise().sum();
        if (!need_input) return {};
        Tensor gx(input_.shape());
        MapR(gx.data(), batch, n_in).noalias() = gy * CMapR(w.data(), n_out, n_in);
        return gx;
    }

    bool has_cache() const override { return !input_.empty(); }
    void clear() override { input_ = Tensor(); }

private:
    Tensor input_;
};

class Conv2dLayer final : public Layer {
public:
    ConvGeom geom{};

    std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2dLayer>(*this); }

    Tensor run(const Tensor& in, const std::vector<Parameter>& p, FloatBuffer& cols) const {
        const int batch = in.dim(0);
        const Tensor& w = p[first_param].value;
        const Tensor& b = p[first_param + 1].value;
        const int cout = w.dim(0);
        const std::size_t ncols = static_cast<std::size_t>(batch) * geom.out_area();
        cols.resize(static_cast<std::size_t>(geom.rows()) * ncols);
        im2col(in.data(), batch, geom, cols.data());
        FloatBuffer ym(static_cast<std::size_t>(cout) * ncols);
        MapR y(ym.data(), cout, static_cast<Eigen::Index>(ncols));
        y.noalias() = CMapR(w.data(), cout, geom.rows()) *
                      CMapR(cols.data(), geom.rows(), static_cast<Eigen::Index>(ncols));
        y.colwise() += Eigen::Map<const Eigen::VectorXf>(b.data(), cout);
        Tensor out(batched(batch, out_shape));
        channel_major_to_batch_major(ym.data(), batch, cout, geom.out_area(), out.data());
        return out;
    }

    Tensor apply(const Tensor& in, const std::vector<Parameter>& p) const override {
        FloatBuffer cols;
        return run(in, p, cols);
    }

    Tensor forward(const Tensor& in, const std::vector<Parameter>& p, bool cache) override {
        FloatBuffer cols;
        Tensor out = run(in, p, cols);
        if (cache) {
            cols_ = std::move(cols);
            batch_ = in.dim(0);
        }
        return out;
    }

    Tensor backward(const Tensor& g, const std::vector<Parameter>& p, std::vector<Tensor>& grads,
                    bool need_input) override {
        const Tensor& w = p[first_param].value;
        const int cout = w.dim(0);
        const auto ncols = static_cast<Eigen::Index>(static_cast<std::size_t>(batch_) * geom.out_area());
        FloatBuffer gym(static_cast<std::size_t>(cout) * ncols);
        batch_major_to_channel_major(g.data(), batch_, cout, geom.out_area(), gym.data());
        CMapR gy(gym.data(), cout, ncols);
        CMapR cols(cols_.data(), geom.rows(), ncols);
        Tensor& gw = grads[first_param];
        Tensor& gb = grads[first_param + 1];
        gw = Tensor(w.shape());
        gb = Tensor({cout});
        MapR(gw.data(), cout, geom.rows()).noalias() = gy * cols.transpose();
        Eigen::Map<Eigen::VectorXf>(gb.data(), cout) = gy.rowwise().sum();
        if (!need_input) return {};
        FloatBuffer gcols(static_cast<std::size_t>(geom.rows()) * ncols);
        MapR(gcols.data(), geom.rows(), ncols).noalias() = CMapR(w.data(), cout, geom.rows()).transpose() * gy;
        Tensor gx(batched(batch_, in_shape));
        col2im(gcols.data(), batch_, geom, gx.data());
        return gx;
    }

    bool has_cache() const override { return !cols_.empty(); }
    void clear() override {
        cols_.clear();
        cols_.shrink_to_fit();
    }

private:
    FloatBuffer cols_;
    int batch_ = 0;
};

// Weight layout (C_in, C_out*k*k). The forward map is the adjoint of a
// Conv2d from the (C_out, H_out, W_out) image down to the input grid.
class ConvTranspose2dLayer final : public Layer {
public:
    ConvGeom geom{};  // correlation geometry: output image -> input grid
    int in_channels = 0;

    std::unique_ptr<Layer> clone() const override { return std::make_unique<ConvTranspose2dLayer>(*this); }

    Tensor run(const Tensor& in, const std::vector<Parameter>& p, FloatBuffer& xm) const {
        const int batch = in.dim(0);
        const Tensor& w = p[first_param].value;
        const Tensor& b = p[first_param + 1].value;
        const auto ncols = static_cast<Eigen::Index>(static_cast<std::size_t>(batch) * geom.out_area());
        xm.resize(static_cast<std::size_t>(in_channels) * ncols);
        batch_major_to_channel_major(in.data(), batch, in_channels, geom.out_area(), xm.data());
        FloatBuffer cols(static_cast<std::size_t>(geom.rows()) * ncols);
        MapR(cols.data(), geom.rows(), ncols).noalias() =
            CMapR(w.data(), in_channels, geom.rows()).transpose() * CMapR(xm.data(), in_channels, ncols);
        Tensor out(batched(batch, out_shape));
        col2im(cols.data(), batch, geom, out.data());
        const int plane = geom.height * geom.width;
        for (int n = 0; n < batch; ++n)
            for (int c = 0; c < geom.channels; ++c) {
                float* o = out.data() + (static_cast<std::size_t>(n) * geom.channels + c) * plane;
                const float bias = b[static_cast<std::size_t>(c)];
                for (int i = 0; i < plane; ++i) o[i] += bias;
            }
        return out;
    }

    Tensor apply(const Tensor& in, const std::vector<Parameter>& p) const override {
        FloatBuffer xm;
        return run(in, p, xm);
    }

    Tensor forward(const Tensor& in, const std::vector<Parameter>& p, bool cache) override {
        FloatBuffer xm;
        Tensor out = run(in, p, xm);
        if (cache) {
            xm_ = std::move(xm);
            batch_ = in.dim(0);
        }
        return out;
    }

    Tensor backward(const Tensor& g, const std::vector<Parameter>& p, std::vector<Tensor>& grads,
                    bool need_input) override {
        const Tensor& w = p[first_param].value;
        const auto ncols = static_cast<Eigen::Index>(static_cast<std::size_t>(batch_) * geom.out_area());
        FloatBuffer gcols(static_cast<std::size_t>(geom.rows()) * ncols);
        im2col(g.data(), batch_, geom, gcols.data());
        CMapR gc(gcols.data(), geom.rows(), ncols);
        Tensor& gw = grads[first_param];
        Tensor& gb = grads[first_param + 1];
        gw = Tensor(w.shape());
        gb = Tensor({geom.channels});
        MapR(gw.data(), in_channels, geom.rows()).noalias() = CMapR(xm_.data(), in_channels, ncols) * gc.transpose();
        const int plane = geom.height * geom.width;
        for (int n = 0; n < batch_; ++n)
            for (int c = 0; c < geom.channels; ++c) {
                const float* gp = g.data() + (static_cast<std::size_t>(n) * geom.channels + c) * plane;
                double acc = 0.0;
                for (int i = 0; i < plane; ++i) acc += gp[i];
                gb[static_cast<std::size_t>(c)] += static_cast<float>(acc);
            }
        if (!need_input) return {};
        FloatBuffer gxm(static_cast<std::size_t>(in_channels) * ncols);
        MapR(gxm.data(), in_channels, ncols).noalias() = CMapR(w.data(), in_channels, geom.rows()) * gc;
        Tensor gx(batched(batch_, in_shape));
        channel_major_to_batch_major(gxm.data(), batch_, in_channels, geom.out_area(), gx.data());
        return gx;
    }

    bool has_cache() const override { return !xm_.empty(); }
    void clear() override {
        xm_.clear();
        xm_.shrink_to_fit();
    }

private:
    FloatBuffer xm_;
    int batch_ = 0;
};

class ActivationLayer final : public Layer {
public:
    Activation fn = Activation::none;

    std::unique_ptr<Layer> clone() const override { return std::make_unique<ActivationLayer>(*this); }

    Tensor apply(const Tensor& in, const std::vector<Parameter>&) const override {
        Tensor out = in;
        switch (fn) {
            case Activation::relu:
                for (float& v : out.storage()) v = v > 0.0f ? v : 0.0f;
                break;
            case Activation::tanh:
                for (float& v : out.storage()) v = std::tanh(v);
                break;
            case Activation::none: break;
        }
        return out;
    }

    Tensor forward(const Tensor& in, const std::vector<Parameter>& p, bool cache) override {
        Tensor out = apply(in, p);
        if (cache) output_ = out;
        return out;
    }

    Tensor backward(const Tensor& g, const std::vector<Parameter>&, std::vector<Tensor>&, bool) override {
        Tensor gx = g;
        auto& gv = gx.storage();
        const auto& y = output_.storage();
        switch (fn) {
            case Activation::relu:
                for (std::size_t i = 0; i < gv.size(); ++i)
                    if (!(y[i] > 0.0f)) gv[i] = 0.0f;
                break;
            case Activation::tanh:
                for (std::size_t i = 0; i < gv.size(); ++i) gv[i] *= 1.0f - y[i] * y[i];
                break;
            case Activation::none: break;
        }
        return gx;
    }

    bool has_cache() const override { return !output_.empty(); }
    void clear() override { output_ = Tensor(); }

private:
    Tensor output_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Network

Network::Network() = default;
Network::~Network() = default;
Network::Network(Network&&) noexcept = default;
Network& Network::operator=(Network&&) noexcept = default;

Network::Network(const Network& other)
    : name_(other.name_),
      input_shape_(other.input_shape_),
      specs_(other.specs_),
      layer_shapes_(other.layer_shapes_),
      params_(other.params_),
      cached_(false) {
    for (const auto& l : other.layers_) {
        layers_.push_back(l->clone());
        layers_.back()->clear();
    }
}

Network& Network::operator=(const Network& other) {
    if (this != &other) {
        Network copy(other);
        *this = std::move(copy);
    }
    return *this;
}

Network::Network(Shape input_shape, std::vector<LayerSpec> layers, std::string name)
    : name_(std::move(name)), input_shape_(std::move(input_shape)), specs_(std::move(layers)) {
    if (input_shape_.empty()) throw ConfigError(name_ + ": empty input shape");
    shape_size(input_shape_);
    layer_shapes_.push_back(input_shape_);
    for (std::size_t li = 0; li < specs_.size(); ++li) {
        const LayerSpec& s = specs_[li];
        const Shape& in = layer_shapes_.back();
        const std::string where = name_ + " layer " + std::to_string(li) + " (" + to_string(s.kind) + ")";
        std::unique_ptr<Layer> layer;
        Shape out;
        switch (s.kind) {
            case LayerKind::dense: {
                if (s.outputs < 1) throw ConfigError(where + ": out_features must be >= 1");
                const int n_in = static_cast<int>(shape_size(in));
                params_.push_back({where + ".weight", Tensor({s.outputs, n_in}), n_in});
                params_.push_back({where + ".bias", Tensor({s.outputs}), n_in});
                out = {s.outputs};
                layer = std::make_unique<DenseLayer>();
                layer->first_param = params_.size() - 2;
                break;
            }
            case LayerKind::conv2d: {
                if (s.kernel < 1 || s.stride < 1 || s.padding < 0 || s.outputs < 1)
                    throw ConfigError(where + ": invalid kernel/stride/padding/out_channels");
                auto [c, h, w] = as_chw(in);
                const int oh = conv_output_size(h, s.kernel, s.stride, s.padding);
                const int ow = conv_output_size(w, s.kernel, s.stride, s.padding);
                if (oh < 1 || ow < 1)
                    throw ConfigError(where + ": input " + shape_str(in) + " yields no valid output");
                auto conv = std::make_unique<Conv2dLayer>();
                conv->geom = {c, h, w, s.kernel, s.stride, s.padding, oh, ow};
                const int fan_in = c * s.kernel * s.kernel;
                params_.push_back({where + ".weight", Tensor({s.outputs, fan_in}), fan_in});
                params_.push_back({where + ".bias", Tensor({s.outputs}), fan_in});
                conv->first_param = params_.size() - 2;
                out = {s.outputs, oh, ow};
                layer = std::move(conv);
                break;
            }
            case LayerKind::conv_transpose2d: {
                if (s.kernel < 1 || s.stride < 1 || s.padding < 0 || s.outputs < 1)
                    throw ConfigError(where + ": invalid kernel/stride/padding/out_channels");
                auto [c, h, w] = as_chw(in);
                const int oh = conv_transpose_output_size(h, s.kernel, s.stride, s.padding);
                const int ow = conv_transpose_output_size(w, s.kernel, s.stride, s.padding);
                if (oh < 1 || ow < 1 || conv_output_size(oh, s.kernel, s.stride, s.padding) != h ||
                    conv_output_size(ow, s.kernel, s.stride, s.padding) != w)
                    throw ConfigError(where + ": input " + shape_str(in) + " yields no valid output");
                auto conv = std::make_unique<ConvTranspose2dLayer>();
                conv->geom = {s.outputs, oh, ow, s.kernel, s.stride, s.padding, h, w};
                conv->in_channels = c;
                const int fan_in = c * s.kernel * s.kernel;
                params_.push_back({where + ".weight", Tensor({c, s.outputs * s.kernel * s.kernel}), fan_in});
                params_.push_back({where + ".bias", Tensor({s.outputs}), fan_in});
                conv->first_param = params_.size() - 2;
                out = {s.outputs, oh, ow};
                layer = std::move(conv);
                break;
            }
            case LayerKind::activation: {
                auto act = std::make_unique<ActivationLayer>();
                act->fn = s.activation;
                out = in;
                layer = std::move(act);
                break;
            }
        }
        layer->in_shape = in;
        layer->out_shape = out;
        layers_.push_back(std::move(layer));
        layer_shapes_.push_back(std::move(out));
    }
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

void Network::check_input(const Tensor& batch) const {
    const Shape& s = batch.shape();
    if (s.size() < 2 || Shape(s.begin() + 1, s.end()) != input_shape_) {
        const std::string first = specs_.empty() ? std::string("input") : to_string(specs_.front().kind);
        throw ConfigError(name_ + " layer 0 (" + first + "): expected batch of " + shape_str(input_shape_) +
                          ", got " + shape_str(s));
    }
}

Tensor Network::forward(const Tensor& batch) {
    check_input(batch);
    Tensor x = batch;
    for (auto& l : layers_) {
        Tensor next = l->forward(x, params_, true);
        x = std::move(next);
    }
    cached_ = true;
    return x;
}

Tensor Network::predict(const Tensor& batch) const {
    check_input(batch);
    Tensor x = batch;
    for (const auto& l : layers_) x = l->apply(x, params_);
    return x;
}

Gradients Network::backward(const Tensor& grad_output, bool want_input_gradient) {
    if (!cached_) throw StateError(name_ + ": backward called before forward");
    const Shape& gs = grad_output.shape();
    if (gs.size() < 2 || Shape(gs.begin() + 1, gs.end()) != output_shape())
        throw ConfigError(name_ + ": loss gradient shape " + shape_str(gs) + " does not match output " +
                          shape_str(output_shape()));
    Gradients out;
    out.params.resize(params_.size());
    Tensor g = grad_output;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        const bool need = i > 0 || want_input_gradient;
        Tensor next = layers_[i]->backward(g, params_, out.params, need);
        if (need) g = std::move(next);
    }
    if (want_input_gradient) out.input = std::move(g);
    return out;
}

void Network::clear_cache() {
    for (auto& l : layers_) l->clear();
    cached_ = false;
}

// ---------------------------------------------------------------------------

void seeded_init(Network& net, std::uint64_t seed, InitScheme scheme) {
    Rng rng(derive_seed(seed, "init"));
    for (auto& p : net.parameters()) {
        if (scheme == InitScheme::gaussian_unit) {
            for (float& v : p.value.storage()) v = static_cast<float>(rng.normal());
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(p.fan_in));
            for (float& v : p.value.storage()) v = static_cast<float>(rng.uniform(-bound, bound));
        }
    }
    net.clear_cache();
}

LossResult mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape() || pred.rank() == 0)
        throw ConfigError("mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                          shape_str(target.shape()));
    const double batch = pred.dim(0);
    LossResult r;
    r.grad = Tensor(pred.shape());
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        acc += d * d;
        r.grad[i] = static_cast<float>(2.0 * d / batch);
    }
    r.value = acc / batch;
    return r;
}

double mean_squared_error(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size() || a.empty()) throw ConfigError("mean_squared_error: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

AdamState AdamState::for_parameters(std::span<const Parameter> params, AdamConfig config) {
    AdamState s;
    s.config = config;
    for (const auto& p : params) {
        s.m.emplace_back(p.value.size(), 0.0);
        s.v.emplace_back(p.value.size(), 0.0);
    }
    return s;
}

void adam_step(AdamState& state, std::span<Parameter> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ConfigError("adam_step: parameter/gradient/state count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (grads[k].size() != params[k].value.size() || state.m[k].size() != params[k].value.size())
            throw ConfigError("adam_step: shape mismatch for " + params[k].name);
        if (!grads[k].all_finite()) throw NumericError("non-finite gradient for parameter " + params[k].name);
    }
    const AdamConfig& c = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        float* w = params[k].value.data();
        const float* g = grads[k].data();
        double* m = state.m[k].data();
        double* v = state.v[k].data();
        const std::size_t n = params[k].value.size();
        for (std::size_t i = 0; i < n; ++i) {
            const double gi = g[i];
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] = static_cast<float>(static_cast<double>(w[i]) - c.lr * mhat / (std::sqrt(vhat) + c.epsilon));
        }
    }
}

}  // namespace hardshare
