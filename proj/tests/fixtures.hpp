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

// Small datasets and models for tests that need real artifacts.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hardshare/factor_data.hpp"
#include "hardshare/models.hpp"
#include "hardshare/task_bank.hpp"

namespace hardshare::testing {

inline MiniSpritesProfile tiny_profile() {
    MiniSpritesProfile p;
    p.image_size = 16;
    p.scales = 2;
    p.orientations = 4;
    p.positions_x = 4;
    p.positions_y = 4;
    p.min_scale = 0.16;
    p.max_scale = 0.22;
    p.supersample = 2;
    p.test_fraction = 0.25;
    return p;
}

struct TinyWorld {
    LabeledDataset ds;
    TaskBank bank;
    Tensor targets;
};

inline const TinyWorld& tiny_world() {
    static const TinyWorld w = [] {
        TinyWorld t;
        t.ds = make_minisprites(tiny_profile(), 1);
        t.bank = TaskBank::build(static_cast<int>(t.ds.factor_dim()), 3, 7);
        t.targets = build_targets(t.bank, t.ds);
        return t;
    }();
    return w;
}

inline TrainingProfile quick_profile(int epochs = 1) { return {"test", epochs, 32, 1e-3, 0}; }

/// One trained model of every regime the container must carry.
inline std::vector<std::pair<std::string, TrainedModel>> tiny_models() {
    const TinyWorld& w = tiny_world();
    std::vector<std::pair<std::string, TrainedModel>> out;
    out.emplace_back("random", train_multitask(w.ds, w.targets, {Regime::random, -1}, quick_profile(), 3, 4));
    out.emplace_back("single", train_multitask(w.ds, w.targets, {Regime::single, 1}, quick_profile(), 3, 4));
    out.emplace_back("multi_head", train_multitask(w.ds, w.targets, {Regime::multi_head, -1}, quick_profile(), 3, 4));
    out.emplace_back("one_head", train_multitask(w.ds, w.targets, {Regime::one_head, -1}, quick_profile(), 3, 4));
    out.emplace_back("ae", train_autoencoder(w.ds, {false, 1.0, Activation::tanh, 8}, quick_profile(), 3, 4));
    out.emplace_back("vae", train_autoencoder(w.ds, {true, 1.0, Activation::tanh, 8}, quick_profile(), 3, 4));
    out.emplace_back("decoder_probe", train_decoder_probe(out[2].second, w.ds, quick_profile(), 5, 8));
    return out;
}

}  // namespace hardshare::testing
