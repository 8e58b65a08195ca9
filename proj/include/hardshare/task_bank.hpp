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
#include <optional>
#include <span>
#include <vector>

#include "hardshare/dtb.hpp"
#include "hardshare/factor_data.hpp"
#include "hardshare/network.hpp"

namespace hardshare {

struct TaskArch {
    int hidden_layers = 4;
    int hidden_units = 300;

    friend bool operator==(const TaskArch&, const TaskArch&) = default;
};

/// Frozen random tanh MLPs h(z, theta_i), one per synthetic regression task.
/// Every weight and bias is N(0, 1). theta_i depends only on
/// (master_seed, i, draw_i); draw_i > 0 only after degenerate-task redraws.
class TaskBank {
public:
    static TaskBank build(int factor_dim, int n_tasks, std::uint64_t master_seed, TaskArch arch = {});

    int n_tasks() const noexcept { return static_cast<int>(nets_.size()); }
    int factor_dim() const noexcept { return factor_dim_; }
    std::uint64_t master_seed() const noexcept { return master_seed_; }
    const TaskArch& arch() const noexcept { return arch_; }
    const std::vector<int>& draws() const noexcept { return draws_; }
    const Network& network(int task) const { return nets_.at(static_cast<std::size_t>(task)); }
    Network& mutable_network(int task) { return nets_.at(static_cast<std::size_t>(task)); }

    /// h(z, theta_i) for one factor vector.
    double eval(int task, std::span<const float> z) const;
    /// (N, m) factors -> (N, 1) targets of one task.
    Tensor eval_batch(int task, const Tensor& z) const;

    /// Replaces theta_i by the next derived draw.
    void redraw(int task);

    bool has_targets() const noexcept { return targets_.has_value(); }
    const Tensor& targets() const;
    void set_targets(Tensor t);

    std::uint64_t checksum() const;

    /// Seed + architecture + draws; parameters are regenerated on load and
    /// verified against the stored checksum.
    DtbContainer to_dtb() const;
    static TaskBank from_dtb(const DtbContainer& c);

    static std::vector<LayerSpec> layer_specs(const TaskArch& arch);
    static std::uint64_t task_seed(std::uint64_t master_seed, int task, int draw);

private:
    void regenerate(int task);

    int factor_dim_ = 0;
    std::uint64_t master_seed_ = 0;
    TaskArch arch_;
    std::vector<int> draws_;
    std::vector<Network> nets_;
    std::optional<Tensor> targets_;
};

struct TargetOptions {
    double min_std = 1e-6;          // degenerate-task threshold
    double max_abs_correlation = 0.99;
    int max_redraws = 64;
};

/// Row r, column i = h(z_r, theta_i). Tasks whose column is (near) constant or
/// near-collinear with an earlier column are redrawn. The matrix is cached on
/// the bank and returned.
const Tensor& build_targets(TaskBank& bank, const LabeledDataset& ds, const TargetOptions& opt = {});

struct Standardization {
    std::vector<double> mean, std;
};

/// Per-column z-scoring in place.
Standardization standardize_columns(Tensor& targets);

double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace hardshare
