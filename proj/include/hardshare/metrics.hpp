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
#include <span>
#include <string>
#include <vector>

#include "hardshare/factor_data.hpp"
#include "hardshare/random.hpp"
#include "hardshare/tensor.hpp"

namespace hardshare {

/// Dense row-major matrix of doubles.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0);

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::vector<double> column(int c) const;

    nlohmann::json to_json() const;  // array of rows
    static Matrix from_json(const nlohmann::json& j);

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Sum that does not depend on the order of its terms.
double order_free_sum(std::vector<double> v);

/// Latent codes paired with ground-truth factors, row-aligned.
struct RepresentationSample {
    Matrix codes;                     // N x d
    Matrix factor_values;             // N x m
    std::vector<int> factor_indices;  // N x m, row-major
    std::vector<FactorKind> kinds;    // per factor
    nlohmann::json provenance = nlohmann::json::object();

    int n() const noexcept { return codes.rows; }
    int d() const noexcept { return codes.cols; }
    int m() const noexcept { return factor_values.cols; }
    int index(int row, int factor) const { return factor_indices[static_cast<std::size_t>(row) * m() + factor]; }
    std::vector<int> index_column(int factor) const;

    /// Throws ConfigError on misaligned fields or fewer than `min_rows` rows.
    void validate(int min_rows = 1) const;
};

/// Codes (N, d) for the given dataset rows.
RepresentationSample make_sample(const Tensor& codes, const LabeledDataset& ds, std::span<const std::size_t> rows);

// ---------------------------------------------------------------------------
// Mutual information

/// Equal-count quantile binning; equal values always share a bin.
std::vector<int> quantile_bins(std::span<const double> a, int bins);

/// Plug-in mutual information (nats) of two label columns.
double mutual_information(std::span<const int> a, std::span<const int> b);
double entropy(std::span<const int> a);

/// I(a; b) after discretizing the real column `a` into `bins` quantile bins.
double discretized_mutual_information(std::span<const double> a, std::span<const int> b, int bins);

// ---------------------------------------------------------------------------
// MIG

enum class MigDenominator { paper, entropy };  // sum of MI over latents, or H(z_i)

std::string to_string(MigDenominator d);
MigDenominator mig_denominator_from_string(const std::string& s);

struct MigResult {
    double score = 0.0;
    std::vector<double> factor_terms;  // normalized gap per factor
    Matrix mi;                         // d x m
    std::vector<std::string> warnings;
};

MigResult mig(const RepresentationSample& s, int bins = 20, MigDenominator denom = MigDenominator::paper);

// ---------------------------------------------------------------------------
// FactorVAE score

struct FactorVaeConfig {
    int n_votes = 10000;
    int subset_size = 64;
    double prune_fraction = 0.05;  // relative to the mean per-dimension std
};

/// Returns `count` code rows (count x d) that share one randomly chosen value
/// of `factor`.
using FactorFixedSampler = std::function<Matrix(int factor, int count, Rng& rng)>;

/// Sampler drawing rows with replacement from `s`: a value is picked
/// uniformly among the values of `factor` present in the sample.
FactorFixedSampler sample_with_fixed_factor(const RepresentationSample& s);

struct FactorVaeResult {
    double score = 0.0;
    Matrix votes;  // d x m; pruned dimensions keep all-zero rows
    std::vector<double> global_std;
    std::vector<int> active_dims;
};

/// Global stds come from `reference`. Throws NumericError if every
/// dimension is pruned.
FactorVaeResult factor_vae_score(const Matrix& reference, int n_factors, const FactorFixedSampler& sampler,
                                 const FactorVaeConfig& cfg, std::uint64_t seed);
FactorVaeResult factor_vae_score(const RepresentationSample& s, const FactorVaeConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// SAP

struct SapResult {
    double score = 0.0;
    Matrix s;                    // d x m; R^2 or balanced accuracy on held-out rows
    std::vector<double> gaps;    // per factor, NaN when skipped
    std::vector<int> skipped;
    std::vector<std::string> warnings;
};

SapResult sap(const RepresentationSample& s, double split_fraction, std::uint64_t seed);

/// Held-out R^2 of a 1-D least-squares fit, clamped below at 0.
double linear_r2(std::span<const double> x_train, std::span<const double> y_train, std::span<const double> x_test,
                 std::span<const double> y_test);

/// Held-out balanced accuracy of a depth-limited threshold tree on one feature.
double stump_balanced_accuracy(std::span<const double> x_train, std::span<const int> y_train,
                               std::span<const double> x_test, std::span<const int> y_test, int max_depth = 3);

// ---------------------------------------------------------------------------
// Importances and DCI

enum class ImportanceKind { forest, l1 };

std::string to_string(ImportanceKind k);
ImportanceKind importance_kind_from_string(const std::string& s);

struct ForestConfig {
    int n_trees = 10;
    int max_depth = 8;
    int min_leaf = 1;
};

/// Bagged variance-reduction regression trees with sqrt(d) candidate
/// features per node. Candidate features are drawn in an order fixed by the
/// column contents, so permuting the columns permutes the model.
class RandomForest {
public:
    void fit(const Matrix& x, std::span<const double> y, const ForestConfig& cfg, std::uint64_t seed);
    double predict(const Matrix& x, int row) const;
    std::vector<double> predict(const Matrix& x) const;
    /// Total SSE reduction per feature, summed over trees.
    const std::vector<double>& importances() const noexcept { return importance_; }

private:
    struct Node {
        int feature = -1;
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double value = 0.0;
    };
    std::vector<std::vector<Node>> trees_;
    std::vector<double> importance_;
};

struct LassoConfig {
    double alpha = 1e-3;
    int max_iter = 1000;
    double tol = 1e-8;
};

/// L1-penalized least squares on standardized features; coefficients are
/// reported on the standardized scale.
struct LassoFit {
    std::vector<double> coef;
    double intercept = 0.0;
    std::vector<double> mean, scale;

    double predict(const Matrix& x, int row) const;
};

LassoFit fit_lasso(const Matrix& x, std::span<const double> y, const LassoConfig& cfg);

struct DciConfig {
    ImportanceKind importance = ImportanceKind::forest;
    ForestConfig forest;
    LassoConfig lasso;
    double test_fraction = 0.3;
};

struct ImportanceResult {
    Matrix r;                           // d x m, each column sums to 1
    std::vector<double> error;          // held-out MSE per factor
    std::vector<double> random_error;   // same regressor refit on row-shuffled codes
};

ImportanceResult estimate_importances(const RepresentationSample& s, const DciConfig& cfg, std::uint64_t seed);

struct DciResult {
    double disentanglement = 0.0;
    double completeness = 0.0;
    double informativeness = 0.0;
    std::vector<double> per_latent_disentanglement;
    std::vector<double> per_factor_completeness;
    std::vector<double> per_factor_informativeness;
};

/// D: per-latent 1 - entropy over factors (base m), weighted by latent
/// importance share. C: per-factor 1 - entropy over latents (base d),
/// averaged. I: mean of clamp(1 - err / random_err, 0, 1). Throws
/// NumericError on a negative entry or an all-zero factor column.
DciResult dci_from_importances(const Matrix& r, std::span<const double> error, std::span<const double> random_error);

// ---------------------------------------------------------------------------

struct MetricConfig {
    int bins = 20;
    MigDenominator mig_denominator = MigDenominator::paper;
    FactorVaeConfig factor_vae;
    double sap_split = 0.3;
    DciConfig dci;
    int min_rows = 1000;

    nlohmann::json to_json() const;
    static MetricConfig from_json(const nlohmann::json& j);
};

struct MetricReport {
    double mig = 0.0;
    double factor_vae_score = 0.0;
    double sap = 0.0;
    double dci_disentanglement = 0.0;
    double dci_completeness = 0.0;
    double dci_informativeness = 0.0;
    nlohmann::json detail = nlohmann::json::object();  // sub-scores and config echo

    nlohmann::json to_json() const;
    static MetricReport from_json(const nlohmann::json& j);
    /// Scalar by name: mig, factor_vae_score, sap, dci_disentanglement, ...
    double scalar(const std::string& name) const;
    static const std::vector<std::string>& scalar_names();
};

/// All four metrics with seeds derived from `seed`. Sub-metric failures are
/// rethrown with the metric name prefixed.
MetricReport full_report(const RepresentationSample& s, const MetricConfig& cfg, std::uint64_t seed);

}  // namespace hardshare
