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
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "hardshare/dtb.hpp"
#include "hardshare/factor_data.hpp"
#include "hardshare/network.hpp"

namespace hardshare {

// ---------------------------------------------------------------------------
// Architectures

/// Conv stack (k=4, s=2, p=1, ReLU) halving the image down to 1x1, then a
/// dense layer to `out_dim`. Channel widths follow 32,32,64,128,256,256,
/// truncated to the number of halvings the image size needs.
std::vector<LayerSpec> encoder_layers(int image_size, int out_dim, Activation act = Activation::relu);
Network make_encoder(const Shape& image_shape, int out_dim, Activation act = Activation::relu);

/// Dense 300 -> ReLU -> Dense 300 -> ReLU -> Dense 300 -> ReLU -> Dense out.
std::vector<LayerSpec> head_layers(int out_dim, int hidden = 300, Activation act = Activation::relu);
Network make_head(int in_dim, int out_dim, int hidden = 300, Activation act = Activation::relu);

/// Mirror of the encoder: a 1x1 stride-2 conv lifts the latent to 256
/// channels, transposed convs (k=4, s=2, p=1) double it back to full size,
/// and a k=3, s=1, p=1 transposed conv emits the image channels. Hidden
/// widths are divided by `width_divisor`.
std::vector<LayerSpec> decoder_layers(int image_size, int channels, int width_divisor = 1,
                                      Activation act = Activation::relu);
Network make_decoder(int latent_dim, const Shape& image_shape, int width_divisor = 1,
                     Activation act = Activation::relu);

// ---------------------------------------------------------------------------

enum class Regime { random, single, multi_head, one_head, ae, vae, decoder_probe, latent_heads };

std::string to_string(Regime r);
Regime regime_from_string(const std::string& s);

struct TrainingProfile {
    std::string name = "desk";
    int epochs = 30;
    int batch_size = 128;
    double lr = 1e-3;
    int lr_halving_every = 0;  // 0 = constant learning rate

    nlohmann::json to_json() const;
    static TrainingProfile from_json(const nlohmann::json& j);
};

struct EpochRecord {
    double train_loss = 0.0;  // mean of minibatch losses over the epoch
};

/// Encoder plus task heads or decoder, with the manifest that produced them.
struct TrainedModel {
    Regime regime = Regime::random;
    int task_index = -1;  // single(i) only
    int latent_dim = 8;
    double beta = 1.0;    // vae only
    std::optional<Network> encoder;
    std::vector<Network> heads;
    std::optional<Network> decoder;
    nlohmann::json manifest = nlohmann::json::object();
    std::vector<EpochRecord> history;
    double initial_loss = 0.0;

    /// Latent codes (N, latent_dim); deterministic; VAE returns the mean.
    Tensor encode(const Tensor& images, int batch_size = 256) const;
    /// Decoder applied to latent codes.
    Tensor decode(const Tensor& latents, int batch_size = 256) const;
    /// Task predictions (N, n_tasks) from latents; one_head and multi_head
    /// layouts both come back as one column per task.
    Tensor predict_tasks(const Tensor& latents, int batch_size = 256) const;

    DtbContainer to_dtb() const;
    static TrainedModel from_dtb(const DtbContainer& c);
};

/// Runs a network over rows in chunks of `batch_size`.
Tensor predict_batched(const Network& net, const Tensor& input, int batch_size);

using ProgressFn = std::function<void(int epoch, double loss)>;

struct MultitaskRegime {
    Regime regime = Regime::multi_head;  // random, single, multi_head, one_head
    int task_index = -1;
};

/// Trains encoder + heads on (images, targets) restricted to the train split.
/// multi_head: one scalar head per task, loss = sum of task MSEs.
/// one_head: one head emitting all tasks, multivariate MSE (same sum).
/// single(i): only head i is optimized; the others stay at initialization.
/// random: initialization only, zero steps.
TrainedModel train_multitask(const LabeledDataset& ds, const Tensor& targets, MultitaskRegime regime,
                             const TrainingProfile& profile, std::uint64_t seed, int latent_dim = 8,
                             const ProgressFn& progress = {});

struct AutoencoderKind {
    bool variational = false;
    double beta = 1.0;
    Activation activation = Activation::relu;
    int decoder_width_divisor = 1;
};

/// KL(N(mu, exp(logvar)) || N(0, I)) summed over dims, averaged over rows.
double gaussian_kl(const Tensor& mu, const Tensor& logvar);

TrainedModel train_autoencoder(const LabeledDataset& ds, AutoencoderKind kind, const TrainingProfile& profile,
                               std::uint64_t seed, int latent_dim = 8, const ProgressFn& progress = {});

/// Trains a fresh ReLU decoder on the frozen encoder of `source`; the
/// encoder is copied unchanged into the result.
TrainedModel train_decoder_probe(const TrainedModel& source, const LabeledDataset& ds, const TrainingProfile& profile,
                                 std::uint64_t seed, int decoder_width_divisor = 1, const ProgressFn& progress = {});

struct LatentHeadsResult {
    std::vector<double> task_rmse;  // test RMSE per task
    double mean_rmse = 0.0;
    std::vector<EpochRecord> history;
};

/// Multi-head regressors (one 4-layer ReLU MLP per task) on precomputed
/// inputs: latents from a frozen encoder or the ground-truth factors.
LatentHeadsResult train_heads_on_latents(const Tensor& train_inputs, const Tensor& train_targets,
                                         const Tensor& test_inputs, const Tensor& test_targets,
                                         const TrainingProfile& profile, std::uint64_t seed,
                                         Activation act = Activation::relu);

/// Test-split task MSE averaged over tasks (single(i): task i only).
double test_task_mse(const TrainedModel& model, const LabeledDataset& ds, const Tensor& targets);

}  // namespace hardshare
