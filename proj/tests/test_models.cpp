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

#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "hardshare/errors.hpp"
#include "hardshare/models.hpp"

using namespace hardshare;
using namespace hardshare::testing;

namespace {

bool same_parameters(const Network& a, const Network& b) {
    if (a.parameters().size() != b.parameters().size()) return false;
    for (std::size_t k = 0; k < a.parameters().size(); ++k)
        if (!(a.parameters()[k].value == b.parameters()[k].value)) return false;
    return true;
}

Tensor test_images(int n) { return tiny_world().ds.images.slice_rows(0, static_cast<std::size_t>(n)); }

}  // namespace

TEST_CASE("the random regime is an initialized encoder with no training") {
    const TinyWorld& w = tiny_world();
    const TrainedModel m = train_multitask(w.ds, w.targets, {Regime::random, -1}, quick_profile(3), 3, 4);
    CHECK(m.history.empty());
    const TrainedModel again = train_multitask(w.ds, w.targets, {Regime::random, -1}, quick_profile(3), 3, 4);
    CHECK(same_parameters(*m.encoder, *again.encoder));
}

TEST_CASE("encode returns deterministic non-constant codes") {
    const TinyWorld& w = tiny_world();
    const TrainedModel m = train_multitask(w.ds, w.targets, {Regime::random, -1}, quick_profile(), 3, 8);
    const Tensor x = w.ds.images.slice_rows(0, 256);
    const Tensor z = m.encode(x);
    CHECK(z.shape() == Shape{256, 8});
    CHECK(m.encode(x) == z);
    for (int j = 0; j < 8; ++j) {
        double mean = 0.0, var = 0.0;
        for (int r = 0; r < 256; ++r) mean += z[static_cast<std::size_t>(r * 8 + j)] / 256.0;
        for (int r = 0; r < 256; ++r) var += std::pow(z[static_cast<std::size_t>(r * 8 + j)] - mean, 2) / 256.0;
        CHECK(var > 0.0);
    }
}

TEST_CASE("gaussian KL of a standard normal is zero") {
    CHECK(gaussian_kl(Tensor({4, 3}), Tensor({4, 3})) == 0.0);
    Tensor mu({1, 1}, {1.0f}), logvar({1, 1});
    CHECK(gaussian_kl(mu, logvar) == doctest::Approx(0.5));
}

TEST_CASE("multi-task training reduces the loss and beats an untrained encoder") {
    const TinyWorld& w = tiny_world();
    const TrainedModel m = train_multitask(w.ds, w.targets, {Regime::multi_head, -1}, quick_profile(4), 3, 4);
    REQUIRE(m.history.size() == 4);
    CHECK(m.history.back().train_loss < m.initial_loss);
    const TrainedModel r = train_multitask(w.ds, w.targets, {Regime::random, -1}, quick_profile(4), 3, 4);
    CHECK(test_task_mse(m, w.ds, w.targets) < test_task_mse(r, w.ds, w.targets));
}

TEST_CASE("single-task training leaves the other heads at initialization") {
    const TinyWorld& w = tiny_world();
    const TrainedModel init = train_multitask(w.ds, w.targets, {Regime::single, 1}, quick_profile(0), 3, 4);
    const TrainedModel m = train_multitask(w.ds, w.targets, {Regime::single, 1}, quick_profile(2), 3, 4);
    CHECK(m.task_index == 1);
    CHECK_FALSE(same_parameters(*m.encoder, *init.encoder));
    REQUIRE(m.heads.size() == init.heads.size());
    for (std::size_t h = 0; h < m.heads.size(); ++h) {
        INFO("head " << h);
        CHECK(same_parameters(m.heads[h], init.heads[h]) == (h != 1));
    }
    CHECK_THROWS_AS(train_multitask(w.ds, w.targets, {Regime::single, 3}, quick_profile(), 3, 4), ConfigError);
}

TEST_CASE("output arity of the two head layouts") {
    const TinyWorld& w = tiny_world();
    const TrainedModel mh = train_multitask(w.ds, w.targets, {Regime::multi_head, -1}, quick_profile(0), 3, 4);
    const TrainedModel oh = train_multitask(w.ds, w.targets, {Regime::one_head, -1}, quick_profile(0), 3, 4);
    CHECK(mh.heads.size() == 3);
    for (const auto& h : mh.heads) CHECK(h.output_shape() == Shape{1});
    CHECK(oh.heads.size() == 1);
    CHECK(oh.heads[0].output_shape() == Shape{3});
    const Tensor z = mh.encode(test_images(5));
    CHECK(mh.predict_tasks(z).shape() == Shape{5, 3});
    CHECK(oh.predict_tasks(z).shape() == Shape{5, 3});
}

TEST_CASE("encoder parameter count does not depend on the number of tasks") {
    const TinyWorld& w = tiny_world();
    TaskBank big = TaskBank::build(static_cast<int>(w.ds.factor_dim()), 6, 7);
    const Tensor y6 = build_targets(big, w.ds);
    const TrainedModel a = train_multitask(w.ds, w.targets, {Regime::multi_head, -1}, quick_profile(0), 3, 4);
    const TrainedModel b = train_multitask(w.ds, y6, {Regime::multi_head, -1}, quick_profile(0), 3, 4);
    CHECK(a.encoder->parameter_count() == b.encoder->parameter_count());
    CHECK(b.heads.size() == 6);
}

TEST_CASE("autoencoders reduce reconstruction error and the VAE encodes its mean") {
    const TinyWorld& w = tiny_world();
    const TrainedModel ae = train_autoencoder(w.ds, {false, 1.0, Activation::tanh, 8}, quick_profile(3), 3, 4);
    CHECK(ae.history.back().train_loss < ae.initial_loss);
    const TrainedModel vae = train_autoencoder(w.ds, {true, 1.0, Activation::tanh, 8}, quick_profile(1), 3, 4);
    const Tensor x = test_images(16);
    CHECK(vae.encode(x) == vae.encode(x));
    CHECK(vae.encode(x).shape() == Shape{16, 4});
    CHECK(vae.decode(vae.encode(x)).shape() == x.shape());
}

TEST_CASE("the decoder probe keeps the encoder frozen") {
    const TinyWorld& w = tiny_world();
    const TrainedModel src = train_multitask(w.ds, w.targets, {Regime::multi_head, -1}, quick_profile(1), 3, 4);
    const TrainedModel probe = train_decoder_probe(src, w.ds, quick_profile(2), 5, 8);
    CHECK(probe.encoder->parameters().size() == src.encoder->parameters().size());
    CHECK(same_parameters(*probe.encoder, *src.encoder));
    CHECK(probe.history.back().train_loss < probe.initial_loss);
    const Tensor x = test_images(8);
    CHECK(probe.encode(x) == src.encode(x));
}

TEST_CASE("heads on identical latents and seed give identical RMSE") {
    const TinyWorld& w = tiny_world();
    const Tensor z = w.ds.factor_value_tensor();
    const Tensor tr = z.slice_rows(0, 256), te = z.slice_rows(256, 320);
    const Tensor ytr = w.targets.slice_rows(0, 256), yte = w.targets.slice_rows(256, 320);
    const LatentHeadsResult a = train_heads_on_latents(tr, ytr, te, yte, quick_profile(2), 9, Activation::tanh);
    const LatentHeadsResult b = train_heads_on_latents(tr, ytr, te, yte, quick_profile(2), 9, Activation::tanh);
    CHECK(a.task_rmse == b.task_rmse);
    CHECK(a.task_rmse.size() == 3);
    double mean = 0.0;
    for (double v : a.task_rmse) mean += v / 3.0;
    CHECK(a.mean_rmse == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("regime names round-trip and unknown names are config errors") {
    for (Regime r : {Regime::random, Regime::single, Regime::multi_head, Regime::one_head, Regime::ae, Regime::vae})
        CHECK(regime_from_string(to_string(r)) == r);
    CHECK_THROWS_AS(regime_from_string("two_head"), ConfigError);
}
