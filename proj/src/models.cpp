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

#include "hardshare/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "hardshare/errors.hpp"
#include "hardshare/random.hpp"

namespace hardshare {

namespace {

constexpr int kEncoderWidths[] = {32, 32, 64, 128, 256, 256};
constexpr int kDecoderWidths[] = {256, 256, 128, 128, 64, 64};

int halvings(int image_size) {
    int n = 0;
    for (int s = image_size; s > 1; s /= 2) {
        if (s % 2) throw ConfigError("image size " + std::to_string(image_size) + " is not a power of two");
        ++n;
    }
    if (n < 1 || n > 6) throw ConfigError("image size must be between 2 and 64");
    return n;
}

}  // namespace

std::vector<LayerSpec> encoder_layers(int image_size, int out_dim, Activation act) {
    const int n = halvings(image_size);
    std::vector<LayerSpec> specs;
    for (int i = 0; i < n; ++i) {
        specs.push_back(LayerSpec::conv2d(kEncoderWidths[i], 4, 2, 1));
        specs.push_back(LayerSpec::act(act));
    }
    specs.push_back(LayerSpec::dense(out_dim));
    return specs;
}

Network make_encoder(const Shape& image_shape, int out_dim, Activation act) {
    if (image_shape.size() != 3 || image_shape[1] != image_shape[2])
        throw ConfigError("encoder expects a square (C,H,W) image shape");
    return Network(image_shape, encoder_layers(image_shape[1], out_dim, act), "encoder");
}

std::vector<LayerSpec> head_layers(int out_dim, int hidden, Activation act) {
    return {LayerSpec::dense(hidden), LayerSpec::act(act), LayerSpec::dense(hidden), LayerSpec::act(act),
            LayerSpec::dense(hidden), LayerSpec::act(act), LayerSpec::dense(out_dim)};
}

Network make_head(int in_dim, int out_dim, int hidden, Activation act) {
    return Network({in_dim}, head_layers(out_dim, hidden, act), "head");
}

std::vector<LayerSpec> decoder_layers(int image_size, int channels, int width_divisor, Activation act) {
    const int n = halvings(image_size);
    if (width_divisor < 1 || 64 % width_divisor != 0) throw ConfigError("decoder width divisor must divide 64");
    std::vector<LayerSpec> specs{LayerSpec::conv2d(256 / width_divisor, 1, 2, 0), LayerSpec::act(act)};
    for (int i = 6 - n; i < 6; ++i) {
        specs.push_back(LayerSpec::conv_transpose2d(kDecoderWidths[i] / width_divisor, 4, 2, 1));
        specs.push_back(LayerSpec::act(act));
    }
    specs.push_back(LayerSpec::conv_transpose2d(channels, 3, 1, 1));
    return specs;
}

Network make_decoder(int latent_dim, const Shape& image_shape, int width_divisor, Activation act) {
    if (image_shape.size() != 3) throw ConfigError("decoder expects a (C,H,W) image shape");
    return Network({latent_dim, 1, 1}, decoder_layers(image_shape[1], image_shape[0], width_divisor, act), "decoder");
}

// ---------------------------------------------------------------------------

std::string to_string(Regime r) {
    switch (r) {
        case Regime::random: return "random";
        case Regime::single: return "single";
        case Regime::multi_head: return "multi_head";
        case Regime::one_head: return "one_head";
        case Regime::ae: return "ae";
        case Regime::vae: return "vae";
        case Regime::decoder_probe: return "decoder_probe";
        case Regime::latent_heads: return "latent_heads";
    }
    return "?";
}

Regime regime_from_string(const std::string& s) {
    for (Regime r : {Regime::random, Regime::single, Regime::multi_head, Regime::one_head, Regime::ae, Regime::vae,
                     Regime::decoder_probe, Regime::latent_heads})
        if (to_string(r) == s) return r;
    throw ConfigError("unknown regime '" + s +
                      "'; valid regimes: random, single, multi_head, one_head, ae, vae, decoder_probe, latent_heads");
}

nlohmann::json TrainingProfile::to_json() const {
    return {{"name", name}, {"epochs", epochs}, {"batch_size", batch_size}, {"lr", lr},
            {"lr_halving_every", lr_halving_every}};
}

TrainingProfile TrainingProfile::from_json(const nlohmann::json& j) {
    TrainingProfile p;
    p.name = j.value("name", p.name);
    p.epochs = j.value("epochs", p.epochs);
    p.batch_size = j.value("batch_size", p.batch_size);
    p.lr = j.value("lr", p.lr);
    p.lr_halving_every = j.value("lr_halving_every", p.lr_halving_every);
    if (p.epochs < 0 || p.batch_size < 1 || !(p.lr > 0.0) || p.lr_halving_every < 0)
        throw ConfigError("invalid training profile '" + p.name + "'");
    return p;
}

Tensor predict_batched(const Network& net, const Tensor& input, int batch_size) {
    const int n = input.dim(0);
    Shape out_shape{n};
    out_shape.insert(out_shape.end(), net.output_shape().begin(), net.output_shape().end());
    Tensor out(out_shape);
    const std::size_t row = out.row_size();
    for (int b = 0; b < n; b += batch_size) {
        const int e = std::min(n, b + batch_size);
        const Tensor y = net.predict(input.slice_rows(static_cast<std::size_t>(b), static_cast<std::size_t>(e)));
        std::copy(y.storage().begin(), y.storage().end(), out.data() + static_cast<std::size_t>(b) * row);
    }
    return out;
}

namespace {

Tensor first_columns(const Tensor& t, int k) {
    const int n = t.dim(0), w = t.dim(1);
    Tensor out({n, k});
    for (int r = 0; r < n; ++r)
        std::copy_n(t.data() + static_cast<std::size_t>(r) * w, k, out.data() + static_cast<std::size_t>(r) * k);
    return out;
}

Tensor column(const Tensor& t, int c) {
    const int n = t.dim(0), w = t.dim(1);
    Tensor out({n, 1});
    for (int r = 0; r < n; ++r) out[static_cast<std::size_t>(r)] = t[static_cast<std::size_t>(r) * w + c];
    return out;
}

void check_loss(double loss, const std::string& what, int epoch, int step) {
    if (!std::isfinite(loss))
        throw NumericError("non-finite loss in " + what + " at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(step));
}

// Shuffled minibatch index lists for one epoch.
std::vector<std::vector<std::size_t>> epoch_batches(std::vector<std::size_t> rows, int batch_size,
                                                    std::uint64_t seed, int epoch) {
    Rng rng(derive_seed(seed, "order", static_cast<std::uint64_t>(epoch)));
    rng.shuffle(rows.begin(), rows.end());
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t b = 0; b < rows.size(); b += static_cast<std::size_t>(batch_size))
        batches.emplace_back(rows.begin() + static_cast<std::ptrdiff_t>(b),
                             rows.begin() + static_cast<std::ptrdiff_t>(std::min(rows.size(), b + batch_size)));
    return batches;
}

double lr_at(const TrainingProfile& p, int epoch) {
    if (p.lr_halving_every <= 0) return p.lr;
    return p.lr * std::pow(0.5, epoch / p.lr_halving_every);
}

nlohmann::json base_manifest(Regime regime, const TrainingProfile& profile, std::uint64_t seed) {
    return {{"regime", to_string(regime)}, {"profile", profile.to_json()}, {"seed", seed}};
}

nlohmann::json history_json(const std::vector<EpochRecord>& h) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& r : h) a.push_back(r.train_loss);
    return a;
}

}  // namespace

// ---------------------------------------------------------------------------

Tensor TrainedModel::encode(const Tensor& images, int batch_size) const {
    if (!encoder) throw StateError("model has no encoder");
    Tensor out = predict_batched(*encoder, images, batch_size);
    if (out.dim(1) != latent_dim) out = first_columns(out, latent_dim);
    return out;
}

Tensor TrainedModel::decode(const Tensor& latents, int batch_size) const {
    if (!decoder) throw StateError("model has no decoder");
    return predict_batched(*decoder, latents.reshaped({latents.dim(0), latent_dim, 1, 1}), batch_size);
}

Tensor TrainedModel::predict_tasks(const Tensor& latents, int batch_size) const {
    if (heads.empty()) throw StateError("model has no task heads");
    if (heads.size() == 1 && regime == Regime::one_head) return predict_batched(heads[0], latents, batch_size);
    const int n = latents.dim(0);
    const int k = static_cast<int>(heads.size());
    Tensor out({n, k});
    for (int i = 0; i < k; ++i) {
        const Tensor y = predict_batched(heads[static_cast<std::size_t>(i)], latents, batch_size);
        for (int r = 0; r < n; ++r) out[static_cast<std::size_t>(r) * k + i] = y[static_cast<std::size_t>(r)];
    }
    return out;
}

namespace {

nlohmann::json layer_json(const LayerSpec& s) {
    return {{"kind", to_string(s.kind)}, {"kernel", s.kernel},   {"stride", s.stride},
            {"padding", s.padding},      {"outputs", s.outputs}, {"activation", to_string(s.activation)}};
}

LayerSpec layer_from_json(const nlohmann::json& j) {
    LayerSpec s;
    const auto kind = j.at("kind").get<std::string>();
    const auto act = j.at("activation").get<std::string>();
    if (kind == "dense") s.kind = LayerKind::dense;
    else if (kind == "conv2d") s.kind = LayerKind::conv2d;
    else if (kind == "conv_transpose2d") s.kind = LayerKind::conv_transpose2d;
    else if (kind == "activation") s.kind = LayerKind::activation;
    else throw DataError("unknown layer kind '" + kind + "'");
    if (act == "none") s.activation = Activation::none;
    else if (act == "relu") s.activation = Activation::relu;
    else if (act == "tanh") s.activation = Activation::tanh;
    else throw DataError("unknown activation '" + act + "'");
    s.kernel = j.at("kernel").get<int>();
    s.stride = j.at("stride").get<int>();
    s.padding = j.at("padding").get<int>();
    s.outputs = j.at("outputs").get<int>();
    return s;
}

nlohmann::json put_network(DtbContainer& c, const std::string& prefix, const Network& net) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& s : net.specs()) layers.push_back(layer_json(s));
    for (std::size_t k = 0; k < net.parameters().size(); ++k)
        c.add_f32(prefix + "/" + std::to_string(k), net.parameters()[k].value);
    return {{"name", net.name()}, {"input_shape", net.input_shape()}, {"layers", layers}};
}

Network get_network(const DtbContainer& c, const std::string& prefix, const nlohmann::json& arch) {
    std::vector<LayerSpec> specs;
    for (const auto& j : arch.at("layers")) specs.push_back(layer_from_json(j));
    Network net(arch.at("input_shape").get<Shape>(), specs, arch.at("name").get<std::string>());
    for (std::size_t k = 0; k < net.parameters().size(); ++k) {
        Tensor t = c.get_f32(prefix + "/" + std::to_string(k));
        if (t.shape() != net.parameters()[k].value.shape())
            throw DataError("parameter " + prefix + "/" + std::to_string(k) + " has shape " + shape_str(t.shape()));
        net.parameters()[k].value = std::move(t);
    }
    return net;
}

}  // namespace

DtbContainer TrainedModel::to_dtb() const {
    DtbContainer c;
    nlohmann::json arch;
    if (encoder) arch["encoder"] = put_network(c, "encoder", *encoder);
    nlohmann::json heads_arch = nlohmann::json::array();
    for (std::size_t i = 0; i < heads.size(); ++i)
        heads_arch.push_back(put_network(c, "head" + std::to_string(i), heads[i]));
    arch["heads"] = heads_arch;
    if (decoder) arch["decoder"] = put_network(c, "decoder", *decoder);
    c.manifest = {{"kind", "model"},
                  {"regime", to_string(regime)},
                  {"task_index", task_index},
                  {"latent_dim", latent_dim},
                  {"beta", beta},
                  {"architecture", arch},
                  {"training", manifest},
                  {"history", history_json(history)},
                  {"initial_loss", initial_loss}};
    return c;
}

TrainedModel TrainedModel::from_dtb(const DtbContainer& c) {
    const auto& m = c.manifest;
    if (m.value("kind", "") != "model") throw DataError("DTB container is not a trained model");
    TrainedModel t;
    try {
        t.regime = regime_from_string(m.at("regime").get<std::string>());
        t.task_index = m.at("task_index").get<int>();
        t.latent_dim = m.at("latent_dim").get<int>();
        t.beta = m.at("beta").get<double>();
        const auto& arch = m.at("architecture");
        if (arch.contains("encoder")) t.encoder = get_network(c, "encoder", arch["encoder"]);
        for (std::size_t i = 0; i < arch.at("heads").size(); ++i)
            t.heads.push_back(get_network(c, "head" + std::to_string(i), arch["heads"][i]));
        if (arch.contains("decoder")) t.decoder = get_network(c, "decoder", arch["decoder"]);
        t.manifest = m.at("training");
        for (const auto& v : m.at("history")) t.history.push_back({v.get<double>()});
        t.initial_loss = m.at("initial_loss").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed model manifest: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("model architecture is invalid: ") + e.what());
    }
    return t;
}

// ---------------------------------------------------------------------------

TrainedModel train_multitask(const LabeledDataset& ds, const Tensor& targets, MultitaskRegime spec,
                             const TrainingProfile& profile, std::uint64_t seed, int latent_dim,
                             const ProgressFn& progress) {
    if (targets.rank() != 2 || static_cast<std::size_t>(targets.dim(0)) != ds.size())
        throw ConfigError("targets must be (N, n_tasks) aligned with the dataset");
    const int n_tasks = targets.dim(1);
    if (spec.regime != Regime::random && spec.regime != Regime::single && spec.regime != Regime::multi_head &&
        spec.regime != Regime::one_head)
        throw ConfigError("train_multitask: regime must be random, single, multi_head or one_head");
    if (spec.regime == Regime::single && (spec.task_index < 0 || spec.task_index >= n_tasks))
        throw ConfigError("single-task regime needs a task index in [0, " + std::to_string(n_tasks) + ")");

    const Shape image_shape(ds.images.shape().begin() + 1, ds.images.shape().end());
    TrainedModel model;
    model.regime = spec.regime;
    model.task_index = spec.regime == Regime::single ? spec.task_index : -1;
    model.latent_dim = latent_dim;
    model.encoder = make_encoder(image_shape, latent_dim);
    seeded_init(*model.encoder, derive_seed(seed, "encoder"), InitScheme::fan_in_uniform);
    if (spec.regime == Regime::one_head) {
        model.heads.push_back(make_head(latent_dim, n_tasks));
        seeded_init(model.heads[0], derive_seed(seed, "head", 0), InitScheme::fan_in_uniform);
    } else {
        for (int i = 0; i < n_tasks; ++i) {
            model.heads.push_back(make_head(latent_dim, 1));
            seeded_init(model.heads.back(), derive_seed(seed, "head", static_cast<std::uint64_t>(i)),
                        InitScheme::fan_in_uniform);
        }
    }
    model.manifest = base_manifest(spec.regime, profile, seed);
    model.manifest["task_index"] = model.task_index;
    model.manifest["latent_dim"] = latent_dim;
    model.manifest["n_tasks"] = n_tasks;

    const auto train_rows = ds.rows(Split::train);
    std::vector<int> active;
    if (spec.regime == Regime::single) active = {spec.task_index};
    else if (spec.regime == Regime::one_head) active = {0};
    else
        for (int i = 0; i < n_tasks; ++i) active.push_back(i);

    auto loss_on = [&](const Tensor& pred_all, const Tensor& y) {
        double total = 0.0;
        if (spec.regime == Regime::one_head) return mse_loss(pred_all, y).value;
        for (int i : active) total += mse_loss(column(pred_all, i), column(y, i)).value;
        return total;
    };
    {
        const Tensor yt = targets.gather_rows(train_rows);
        const Tensor z = model.encode(ds.images.gather_rows(train_rows));
        model.initial_loss = loss_on(model.predict_tasks(z), yt);
    }
    if (spec.regime == Regime::random) {
        model.manifest["epochs"] = 0;
        return model;
    }

    Network& enc = *model.encoder;
    AdamConfig cfg{profile.lr};
    AdamState enc_state = AdamState::for_parameters(enc.parameters(), cfg);
    std::vector<AdamState> head_states;
    for (const auto& h : model.heads) head_states.push_back(AdamState::for_parameters(h.parameters(), cfg));

    int step = 0;
    for (int epoch = 0; epoch < profile.epochs; ++epoch) {
        const double lr = lr_at(profile, epoch);
        enc_state.config.lr = lr;
        for (auto& s : head_states) s.config.lr = lr;
        double sum = 0.0;
        const auto batches = epoch_batches(train_rows, profile.batch_size, seed, epoch);
        for (const auto& rows : batches) {
            const Tensor xb = ds.images.gather_rows(rows);
            const Tensor yb = targets.gather_rows(rows);
            const Tensor z = enc.forward(xb);
            Tensor gz(z.shape());
            double loss = 0.0;
            for (int i : active) {
                Network& head = model.heads[static_cast<std::size_t>(i)];
                const Tensor pred = head.forward(z);
                const LossResult l = spec.regime == Regime::one_head ? mse_loss(pred, yb) : mse_loss(pred, column(yb, i));
                loss += l.value;
                Gradients g = head.backward(l.grad, true);
                for (std::size_t k = 0; k < gz.size(); ++k) gz[k] += g.input[k];
                adam_step(head_states[static_cast<std::size_t>(i)], head.parameters(), g.params);
            }
            check_loss(loss, to_string(spec.regime) + " training", epoch, step);
            Gradients ge = enc.backward(gz);
            adam_step(enc_state, enc.parameters(), ge.params);
            sum += loss;
            ++step;
        }
        model.history.push_back({sum / static_cast<double>(batches.size())});
        if (progress) progress(epoch, model.history.back().train_loss);
    }
    enc.clear_cache();
    for (auto& h : model.heads) h.clear_cache();
    model.manifest["epochs"] = profile.epochs;
    return model;
}

double gaussian_kl(const Tensor& mu, const Tensor& logvar) {
    if (mu.shape() != logvar.shape() || mu.rank() != 2) throw ConfigError("gaussian_kl: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double m = mu[i], lv = logvar[i];
        acc += 0.5 * (m * m + std::exp(lv) - lv - 1.0);
    }
    return acc / mu.dim(0);
}

TrainedModel train_autoencoder(const LabeledDataset& ds, AutoencoderKind kind, const TrainingProfile& profile,
                               std::uint64_t seed, int latent_dim, const ProgressFn& progress) {
    if (kind.variational && !(kind.beta >= 0.0)) throw ConfigError("beta must be non-negative");
    const Shape image_shape(ds.images.shape().begin() + 1, ds.images.shape().end());
    const Regime regime = kind.variational ? Regime::vae : Regime::ae;
    TrainedModel model;
    model.regime = regime;
    model.latent_dim = latent_dim;
    model.beta = kind.variational ? kind.beta : 0.0;
    model.encoder = make_encoder(image_shape, kind.variational ? 2 * latent_dim : latent_dim, kind.activation);
    model.decoder = make_decoder(latent_dim, image_shape, kind.decoder_width_divisor, kind.activation);
    seeded_init(*model.encoder, derive_seed(seed, "encoder"), InitScheme::fan_in_uniform);
    seeded_init(*model.decoder, derive_seed(seed, "decoder"), InitScheme::fan_in_uniform);
    model.manifest = base_manifest(regime, profile, seed);
    model.manifest["latent_dim"] = latent_dim;
    model.manifest["beta"] = model.beta;
    model.manifest["activation"] = to_string(kind.activation);
    model.manifest["decoder_width_divisor"] = kind.decoder_width_divisor;

    const auto train_rows = ds.rows(Split::train);
    {
        const Tensor x = ds.images.gather_rows(train_rows);
        model.initial_loss = mse_loss(model.decode(model.encode(x)), x).value;
    }

    Network& enc = *model.encoder;
    Network& dec = *model.decoder;
    AdamState es = AdamState::for_parameters(enc.parameters(), {profile.lr});
    AdamState dst = AdamState::for_parameters(dec.parameters(), {profile.lr});
    Rng noise(derive_seed(seed, "reparam"));
    const auto d = static_cast<std::size_t>(latent_dim);

    int step = 0;
    for (int epoch = 0; epoch < profile.epochs; ++epoch) {
        es.config.lr = dst.config.lr = lr_at(profile, epoch);
        double sum = 0.0;
        const auto batches = epoch_batches(train_rows, profile.batch_size, seed, epoch);
        for (const auto& rows : batches) {
            const Tensor xb = ds.images.gather_rows(rows);
            const Tensor h = enc.forward(xb);
            const int b = xb.dim(0);
            Tensor z({b, latent_dim, 1, 1});
            std::vector<float> eps;
            if (kind.variational) {
                eps.resize(static_cast<std::size_t>(b) * d);
                for (std::size_t r = 0; r < static_cast<std::size_t>(b); ++r)
                    for (std::size_t j = 0; j < d; ++j) {
                        const float e = static_cast<float>(noise.normal());
                        eps[r * d + j] = e;
                        const float mu = h[r * 2 * d + j], lv = h[r * 2 * d + d + j];
                        z[r * d + j] = mu + std::exp(0.5f * lv) * e;
                    }
            } else {
                std::copy(h.storage().begin(), h.storage().end(), z.data());
            }
            const Tensor recon = dec.forward(z);
            const LossResult rl = mse_loss(recon, xb);
            Gradients gd = dec.backward(rl.grad, true);
            double loss = rl.value;
            Tensor gh(h.shape());
            if (kind.variational) {
                double kl = 0.0;
                const double scale = kind.beta / b;
                for (std::size_t r = 0; r < static_cast<std::size_t>(b); ++r)
                    for (std::size_t j = 0; j < d; ++j) {
                        const double mu = h[r * 2 * d + j], lv = h[r * 2 * d + d + j];
                        const double sd = std::exp(0.5 * lv);
                        kl += 0.5 * (mu * mu + sd * sd - lv - 1.0);
                        const double gzv = gd.input[r * d + j];
                        gh[r * 2 * d + j] = static_cast<float>(gzv + scale * mu);
                        gh[r * 2 * d + d + j] =
                            static_cast<float>(gzv * eps[r * d + j] * 0.5 * sd + scale * 0.5 * (sd * sd - 1.0));
                    }
                loss += kind.beta * kl / b;
            } else {
                std::copy(gd.input.storage().begin(), gd.input.storage().end(), gh.data());
            }
            check_loss(loss, to_string(regime) + " training", epoch, step);
            Gradients ge = enc.backward(gh);
            adam_step(dst, dec.parameters(), gd.params);
            adam_step(es, enc.parameters(), ge.params);
            sum += loss;
            ++step;
        }
        model.history.push_back({sum / static_cast<double>(batches.size())});
        if (progress) progress(epoch, model.history.back().train_loss);
    }
    enc.clear_cache();
    dec.clear_cache();
    model.manifest["epochs"] = profile.epochs;
    return model;
}

TrainedModel train_decoder_probe(const TrainedModel& source, const LabeledDataset& ds, const TrainingProfile& profile,
                                 std::uint64_t seed, int decoder_width_divisor, const ProgressFn& progress) {
    if (!source.encoder) throw ConfigError("decoder probe needs a model with an encoder");
    const Shape image_shape(ds.images.shape().begin() + 1, ds.images.shape().end());
    TrainedModel model;
    model.regime = Regime::decoder_probe;
    model.task_index = source.task_index;
    model.latent_dim = source.latent_dim;
    model.encoder = *source.encoder;
    model.decoder = make_decoder(source.latent_dim, image_shape, decoder_width_divisor);
    seeded_init(*model.decoder, derive_seed(seed, "decoder"), InitScheme::fan_in_uniform);
    model.manifest = base_manifest(Regime::decoder_probe, profile, seed);
    model.manifest["source_regime"] = to_string(source.regime);
    model.manifest["source_task_index"] = source.task_index;
    model.manifest["decoder_width_divisor"] = decoder_width_divisor;

    // The encoder is frozen, so its codes are computed once.
    const auto train_rows = ds.rows(Split::train);
    const Tensor images = ds.images.gather_rows(train_rows);
    Tensor latents = source.encode(images);
    latents.reshape({latents.dim(0), source.latent_dim, 1, 1});
    model.initial_loss = mse_loss(model.decode(latents.reshaped({latents.dim(0), source.latent_dim})), images).value;

    Network& dec = *model.decoder;
    AdamState st = AdamState::for_parameters(dec.parameters(), {profile.lr});
    std::vector<std::size_t> local(train_rows.size());
    std::iota(local.begin(), local.end(), 0);
    int step = 0;
    for (int epoch = 0; epoch < profile.epochs; ++epoch) {
        st.config.lr = lr_at(profile, epoch);
        double sum = 0.0;
        const auto batches = epoch_batches(local, profile.batch_size, seed, epoch);
        for (const auto& rows : batches) {
            const Tensor zb = latents.gather_rows(rows);
            const Tensor xb = images.gather_rows(rows);
            const Tensor recon = dec.forward(zb);
            const LossResult l = mse_loss(recon, xb);
            check_loss(l.value, "decoder probe", epoch, step);
            Gradients g = dec.backward(l.grad);
            adam_step(st, dec.parameters(), g.params);
            sum += l.value;
            ++step;
        }
        model.history.push_back({sum / static_cast<double>(batches.size())});
        if (progress) progress(epoch, model.history.back().train_loss);
    }
    dec.clear_cache();
    model.manifest["epochs"] = profile.epochs;
    return model;
}

LatentHeadsResult train_heads_on_latents(const Tensor& train_inputs, const Tensor& train_targets,
                                         const Tensor& test_inputs, const Tensor& test_targets,
                                         const TrainingProfile& profile, std::uint64_t seed, Activation act) {
    if (train_inputs.rank() != 2 || test_inputs.rank() != 2 || train_inputs.dim(1) != test_inputs.dim(1) ||
        train_targets.rank() != 2 || test_targets.rank() != 2 || train_targets.dim(1) != test_targets.dim(1) ||
        train_inputs.dim(0) != train_targets.dim(0) || test_inputs.dim(0) != test_targets.dim(0))
        throw ConfigError("train_heads_on_latents: inconsistent input/target shapes");
    const int in_dim = train_inputs.dim(1);
    const int n_tasks = train_targets.dim(1);
    std::vector<Network> heads;
    std::vector<AdamState> states;
    for (int i = 0; i < n_tasks; ++i) {
        heads.push_back(make_head(in_dim, 1, 300, act));
        seeded_init(heads.back(), derive_seed(seed, "head", static_cast<std::uint64_t>(i)), InitScheme::fan_in_uniform);
        states.push_back(AdamState::for_parameters(heads.back().parameters(), {profile.lr}));
    }
    LatentHeadsResult res;
    std::vector<std::size_t> rows(static_cast<std::size_t>(train_inputs.dim(0)));
    std::iota(rows.begin(), rows.end(), 0);
    int step = 0;
    for (int epoch = 0; epoch < profile.epochs; ++epoch) {
        double sum = 0.0;
        const auto batches = epoch_batches(rows, profile.batch_size, seed, epoch);
        for (const auto& b : batches) {
            const Tensor xb = train_inputs.gather_rows(b);
            const Tensor yb = train_targets.gather_rows(b);
            double loss = 0.0;
            for (int i = 0; i < n_tasks; ++i) {
                auto& h = heads[static_cast<std::size_t>(i)];
                auto& s = states[static_cast<std::size_t>(i)];
                s.config.lr = lr_at(profile, epoch);
                const LossResult l = mse_loss(h.forward(xb), column(yb, i));
                loss += l.value;
                Gradients g = h.backward(l.grad);
                adam_step(s, h.parameters(), g.params);
            }
            check_loss(loss, "latent heads", epoch, step);
            sum += loss;
            ++step;
        }
        res.history.push_back({sum / static_cast<double>(batches.size())});
    }
    double total = 0.0;
    for (int i = 0; i < n_tasks; ++i) {
        const Tensor pred = predict_batched(heads[static_cast<std::size_t>(i)], test_inputs, 256);
        const double rmse = std::sqrt(mse_loss(pred, column(test_targets, i)).value);
        res.task_rmse.push_back(rmse);
        total += rmse;
    }
    res.mean_rmse = total / n_tasks;
    return res;
}

double test_task_mse(const TrainedModel& model, const LabeledDataset& ds, const Tensor& targets) {
    const auto rows = ds.rows(Split::test);
    const Tensor y = targets.gather_rows(rows);
    const Tensor pred = model.predict_tasks(model.encode(ds.images.gather_rows(rows)));
    if (model.regime == Regime::single)
        return mse_loss(column(pred, model.task_index), column(y, model.task_index)).value;
    const int k = y.dim(1);
    double total = 0.0;
    for (int i = 0; i < k; ++i) total += mse_loss(column(pred, i), column(y, i)).value;
    return total / k;
}

}  // namespace hardshare
