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
#include <filesystem>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hardshare/factor_data.hpp"
#include "hardshare/metrics.hpp"
#include "hardshare/models.hpp"

namespace hardshare {

// ---------------------------------------------------------------------------
// Traversals and reconstructions

constexpr int kTraversalSteps = 21;

/// -1.0, -0.9, ..., 1.0 as (c - 10) / 10.
std::vector<double> traversal_values();

struct TraversalGrid {
    std::string label;
    std::size_t base_index = 0;
    std::vector<float> base_latent;
    std::vector<double> values;
    Tensor images;  // (d, 21, C, H, W), clamped to [0, 1]

    /// Mean absolute pixel change between adjacent columns of row `dim`.
    double mean_adjacent_change(int dim) const;
};

/// Row r, column c decodes `base_latent` with coordinate r set to
/// values[c]. Each image is decoded on its own so results do not depend on
/// batching.
TraversalGrid traverse_latent(const TrainedModel& probe, std::span<const float> base_latent);

/// Traversal around the encoding of dataset row `base_index`. With
/// `clamp_base`, the base code is clamped into [-1, 1] first.
TraversalGrid make_traversal(const TrainedModel& probe, const LabeledDataset& ds, std::size_t base_index,
                             bool clamp_base = false);

/// Seeded choice of a test-split row.
std::size_t select_example(const LabeledDataset& ds, std::uint64_t seed);

/// Per-element MSE of the probe's reconstructions over the test split.
double reconstruction_mse(const TrainedModel& probe, const LabeledDataset& ds);

struct Gallery {
    std::vector<std::size_t> rows;
    std::vector<std::string> labels;  // "input" first, then one per probe
    Tensor panel;                     // (labels, k, C, H, W)
};

Gallery reconstruction_gallery(const std::vector<std::pair<std::string, const TrainedModel*>>& probes,
                               const LabeledDataset& ds, std::span<const std::size_t> rows);

// ---------------------------------------------------------------------------
// PCA

struct PcaResult {
    Matrix coords;      // N x k
    Matrix components;  // k x d, unit rows
    std::vector<double> explained_variance_ratio;
    std::vector<double> mean;
};

/// Top-k principal components by power iteration with deflation. Component
/// signs are fixed so the largest-magnitude loading is positive. Throws
/// NumericError on zero-variance codes.
PcaResult pca_embedding(const Matrix& codes, int k = 2, std::uint64_t seed = 0, int max_iter = 10000,
                        double tol = 1e-12);

// ---------------------------------------------------------------------------
// Images

/// Tiles a (R, Cn, C, H, W) grid into one (H*R) x (W*Cn) grayscale canvas
/// (channel 0) with a one-pixel separator.
std::vector<float> tile_grid(const Tensor& grid, int& width, int& height);

/// Binary 8-bit PGM; values are clamped to [0, 1] before quantization.
std::string encode_pgm(std::span<const float> pixels, int width, int height);
void write_pgm(const std::filesystem::path& path, std::span<const float> pixels, int width, int height);

// ---------------------------------------------------------------------------
// Report assembly

struct RunSummary {
    std::string regime;  // random, single, multi_head, one_head, ae, vae, ground_truth
    int task_index = -1;
    int seed_index = 0;
    std::optional<MetricReport> metrics;
    std::optional<double> test_task_mse;
    std::optional<double> probe_mse;
    std::optional<double> latent_rmse;

    std::string label() const;  // "single(3)" or the regime name
};

struct Aggregate {
    double mean = 0.0;
    double std = 0.0;  // population std over seeds
    int n = 0;
};

Aggregate aggregate(std::span<const double> v);

struct ReportTable {
    struct Row {
        std::string label;
        std::vector<Aggregate> cells;
    };
    std::string name;
    std::vector<std::string> columns;
    std::vector<Row> rows;

    const Row& row(const std::string& label) const;
    std::string to_tsv() const;
};

struct ReportPlan {
    int seeds = 3;
    std::vector<int> single_tasks;
    bool with_vae = false;
    bool with_probes = true;
    bool with_latent_heads = true;
};

struct Report {
    std::vector<ReportTable> tables;
    nlohmann::json claims;

    const ReportTable& table(const std::string& name) const;
};

/// Throws DataError listing every absent (regime, seed) pair.
Report assemble_report(const std::vector<RunSummary>& runs, const ReportPlan& plan);

/// Grouped bar chart of one table, mean with std whiskers.
std::string render_bar_chart_svg(const ReportTable& table, const std::string& title);

}  // namespace hardshare
