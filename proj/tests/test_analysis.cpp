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

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <sstream>

#include "fixtures.hpp"
#include "hardshare/analysis.hpp"
#include "hardshare/errors.hpp"
#include "support.hpp"

using namespace hardshare;
using namespace hardshare::testing;

namespace {

const TrainedModel& tiny_probe() {
    static const TrainedModel probe = [] {
        const TinyWorld& w = tiny_world();
        const TrainedModel src = train_multitask(w.ds, w.targets, {Regime::multi_head, -1}, quick_profile(1), 3, 4);
        return train_decoder_probe(src, w.ds, quick_profile(1), 5, 8);
    }();
    return probe;
}

MetricReport report_with(double base) {
    MetricReport r;
    r.mig = base;
    r.factor_vae_score = base + 0.1;
    r.sap = base / 2;
    r.dci_disentanglement = base + 0.05;
    r.dci_completeness = base + 0.02;
    r.dci_informativeness = base + 0.01;
    return r;
}

std::vector<RunSummary> synthetic_runs(int seeds, const std::vector<int>& singles) {
    std::vector<RunSummary> runs;
    for (int s = 0; s < seeds; ++s) {
        auto add = [&](const std::string& regime, int task, double v) {
            RunSummary r;
            r.regime = regime;
            r.task_index = task;
            r.seed_index = s;
            r.metrics = report_with(v);
            if (regime != "ae") r.test_task_mse = 100.0 * (1.0 - v);
            r.probe_mse = 50.0 * (1.0 - v);
            r.latent_rmse = 10.0 * (1.0 - v);
            runs.push_back(r);
        };
        add("random", -1, 0.05 + 0.01 * s);
        for (int t : singles) add("single", t, 0.1 + 0.02 * t + 0.01 * s);
        add("multi_head", -1, 0.4 + 0.03 * s);
        add("one_head", -1, 0.3 + 0.02 * s);
        add("ae", -1, 0.2 + 0.01 * s);
        RunSummary gt;
        gt.regime = "ground_truth";
        gt.seed_index = s;
        gt.latent_rmse = 1.0 + s;
        runs.push_back(gt);
    }
    return runs;
}

double pairwise_distance(const Matrix& m, int a, int b) {
    double acc = 0.0;
    for (int c = 0; c < m.cols; ++c) acc += (m(a, c) - m(b, c)) * (m(a, c) - m(b, c));
    return std::sqrt(acc);
}

}  // namespace

TEST_CASE("traversal values run from -1 to 1 in steps of 0.1") {
    const auto v = traversal_values();
    REQUIRE(v.size() == 21);
    CHECK(v.front() == -1.0);
    CHECK(v[10] == 0.0);
    CHECK(v.back() == 1.0);
    for (std::size_t c = 1; c < v.size(); ++c) CHECK(v[c] - v[c - 1] == doctest::Approx(0.1));
}

TEST_CASE("traversal grid shape and the base column") {
    const TrainedModel& probe = tiny_probe();
    const auto values = traversal_values();
    // Each coordinate sits exactly on a traversal column.
    const std::vector<int> cols{3, 10, 14, 20};
    std::vector<float> base;
    for (int c : cols) base.push_back(static_cast<float>(values[static_cast<std::size_t>(c)]));
    const TraversalGrid g = traverse_latent(probe, base);
    CHECK(g.images.shape() == Shape{4, 21, 1, 16, 16});
    Tensor z({1, 4}, base);
    const Tensor rec = probe.decode(z, 1);
    const std::size_t per = 256;
    for (int r = 0; r < 4; ++r) {
        const float* cell = g.images.data() + (static_cast<std::size_t>(r) * 21 + static_cast<std::size_t>(cols[static_cast<std::size_t>(r)])) * per;
        bool same = true;
        for (std::size_t p = 0; p < per; ++p) same = same && cell[p] == std::clamp(rec[p], 0.0f, 1.0f);
        CHECK(same);
    }
    bool bounded = true;
    for (float v : g.images.storage()) bounded = bounded && v >= 0.0f && v <= 1.0f;
    CHECK(bounded);
    const TraversalGrid again = traverse_latent(probe, base);
    CHECK(again.images == g.images);
    for (int r = 0; r < 4; ++r) CHECK(std::isfinite(g.mean_adjacent_change(r)));
}

TEST_CASE("traversals from a dataset example are deterministic") {
    const TinyWorld& w = tiny_world();
    const std::size_t idx = select_example(w.ds, 11);
    CHECK(idx == select_example(w.ds, 11));
    const TraversalGrid a = make_traversal(tiny_probe(), w.ds, idx);
    const TraversalGrid b = make_traversal(tiny_probe(), w.ds, idx);
    CHECK(a.images == b.images);
    CHECK(a.base_index == idx);
    const TraversalGrid c = make_traversal(tiny_probe(), w.ds, idx, true);
    for (float v : c.base_latent) CHECK(std::abs(v) <= 1.0f);
}

TEST_CASE("gallery includes the input row and its zero error") {
    const TinyWorld& w = tiny_world();
    const std::vector<std::size_t> rows{0, 5, 9};
    const Gallery g = reconstruction_gallery({{"multi_head", &tiny_probe()}}, w.ds, rows);
    CHECK(g.labels == std::vector<std::string>{"input", "multi_head"});
    CHECK(g.panel.shape() == Shape{2, 3, 1, 16, 16});
    const Tensor inputs = w.ds.images.gather_rows(rows);
    CHECK(mean_squared_error(inputs, inputs) == 0.0);
    bool same = true;
    for (std::size_t p = 0; p < inputs.size(); ++p) same = same && g.panel[p] == inputs[p];
    CHECK(same);
    CHECK(reconstruction_mse(tiny_probe(), w.ds) > 0.0);
}

TEST_CASE("PCA matches a dense eigensolver on a 5-dimensional case") {
    Rng rng(4);
    const int n = 200, d = 5;
    Matrix codes(n, d);
    const double scale[d] = {3.0, 2.0, 1.2, 0.6, 0.2};
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) codes(r, c) = scale[c] * rng.normal() + 0.3 * (c > 0 ? codes(r, c - 1) : 0.0);
    const PcaResult p = pca_embedding(codes, 2, 1);

    Eigen::MatrixXd x(n, d);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < d; ++c) x(r, c) = codes(r, c);
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered / n;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const double total = es.eigenvalues().sum();
    for (int k = 0; k < 2; ++k) {
        const Eigen::VectorXd ref = es.eigenvectors().col(d - 1 - k);
        double dot = 0.0;
        for (int c = 0; c < d; ++c) dot += ref(c) * p.components(k, c);
        const double sign = dot < 0 ? -1.0 : 1.0;
        for (int c = 0; c < d; ++c) CHECK(std::abs(sign * p.components(k, c) - ref(c)) <= 1e-6);
        CHECK(p.explained_variance_ratio[static_cast<std::size_t>(k)] ==
              doctest::Approx(es.eigenvalues()(d - 1 - k) / total).epsilon(1e-6));
    }
    CHECK(p.explained_variance_ratio[0] >= p.explained_variance_ratio[1]);
    CHECK(p.coords.rows == n);
    CHECK(p.coords.cols == 2);
}

TEST_CASE("PCA of centered 2-D data preserves pairwise distances") {
    Rng rng(8);
    const int n = 60;
    Matrix codes(n, 2);
    for (int r = 0; r < n; ++r) {
        codes(r, 0) = 2.0 * rng.normal();
        codes(r, 1) = 0.5 * rng.normal() + 0.4 * codes(r, 0);
    }
    double m0 = 0.0, m1 = 0.0;
    for (int r = 0; r < n; ++r) m0 += codes(r, 0) / n, m1 += codes(r, 1) / n;
    for (int r = 0; r < n; ++r) codes(r, 0) -= m0, codes(r, 1) -= m1;
    const PcaResult p = pca_embedding(codes, 2, 3);
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            CHECK(pairwise_distance(p.coords, a, b) == doctest::Approx(pairwise_distance(codes, a, b)).epsilon(1e-9));
    CHECK(p.explained_variance_ratio[0] >= p.explained_variance_ratio[1]);
    CHECK(pca_embedding(codes, 2, 3).coords == p.coords);
    CHECK_THROWS_AS(pca_embedding(Matrix(10, 3, 1.5), 2, 0), NumericError);
}

TEST_CASE("aggregates are the mean and population std") {
    const std::vector<double> v{0.2, 0.5, 0.8};
    const Aggregate a = aggregate(v);
    CHECK(a.n == 3);
    CHECK(a.mean == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(a.std == doctest::Approx(std::sqrt(0.06)).epsilon(1e-15));
}

TEST_CASE("report tables recompute from the stored runs") {
    const std::vector<int> singles{0, 2};
    const auto runs = synthetic_runs(3, singles);
    ReportPlan plan;
    plan.single_tasks = singles;
    const Report rep = assemble_report(runs, plan);
    const ReportTable& mt = rep.table("metrics");
    const auto& names = MetricReport::scalar_names();
    for (const auto& label : {"random", "single(0)", "single(2)", "multi_head", "one_head", "ae"}) {
        for (std::size_t c = 0; c < names.size(); ++c) {
            std::vector<double> v;
            for (const auto& r : runs)
                if (r.label() == label) v.push_back(r.metrics->scalar(names[c]));
            const Aggregate ref = aggregate(v);
            INFO(label << " " << names[c]);
            CHECK(mt.row(label).cells[c].mean == ref.mean);
            CHECK(mt.row(label).cells[c].std == ref.std);
        }
    }
    // The single-task mean row averages single(0) and single(2) within each seed.
    const std::size_t fv = static_cast<std::size_t>(std::find(names.begin(), names.end(), "factor_vae_score") - names.begin());
    std::vector<double> per_seed;
    for (int s = 0; s < 3; ++s) per_seed.push_back(((0.1 + 0.01 * s + 0.1) + (0.1 + 0.04 + 0.01 * s + 0.1)) / 2.0);
    CHECK(mt.row("single_mean").cells[fv].mean == doctest::Approx(aggregate(per_seed).mean).epsilon(1e-15));
    CHECK(mt.row("random").cells[fv].mean == doctest::Approx((0.15 + 0.16 + 0.17) / 3.0).epsilon(1e-15));

    CHECK(rep.claims["multi_vs_single"]["holds"].get<bool>());
    CHECK(rep.claims["multi_vs_one_head"]["holds"].get<bool>());
    CHECK(rep.claims["reconstruction_and_task_mse"]["holds"].get<bool>());
    CHECK(rep.claims["latent_rmse"]["ground_truth_beats_random"].get<bool>());

    // The emitted TSV re-reads to the same numbers at its printed precision.
    std::istringstream tsv(mt.to_tsv());
    std::string line;
    std::getline(tsv, line);
    CHECK(line.rfind("row\t" + names[0] + "_mean\t" + names[0] + "_std", 0) == 0);
    int rows = 0;
    while (std::getline(tsv, line)) {
        std::istringstream ls(line);
        std::string label;
        ls >> label;
        const ReportTable::Row& row = mt.row(label);
        for (const auto& cell : row.cells) {
            double mean = 0.0, sd = 0.0;
            ls >> mean >> sd;
            CHECK(std::abs(mean - cell.mean) <= 5e-7);
            CHECK(std::abs(sd - cell.std) <= 5e-7);
        }
        int n = 0;
        ls >> n;
        CHECK(n == 3);
        ++rows;
    }
    CHECK(rows == static_cast<int>(mt.rows.size()));
}

TEST_CASE("missing runs are listed by regime and seed") {
    auto runs = synthetic_runs(3, {1});
    runs.erase(std::remove_if(runs.begin(), runs.end(),
                              [](const RunSummary& r) { return r.regime == "one_head" && r.seed_index == 2; }),
               runs.end());
    ReportPlan plan;
    plan.single_tasks = {1};
    try {
        assemble_report(runs, plan);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("one_head seed 2") != std::string::npos);
    }
}

TEST_CASE("image encoders write valid graymaps") {
    const std::vector<float> px{0.0f, 0.5f, 1.0f, 1.5f, -0.2f, 0.25f};
    const std::string pgm = encode_pgm(px, 3, 2);
    const std::string head = "P5\n3 2\n255\n";
    REQUIRE(pgm.size() == head.size() + 6);
    CHECK(pgm.substr(0, head.size()) == head);
    const auto* body = reinterpret_cast<const unsigned char*>(pgm.data() + head.size());
    CHECK(body[0] == 0);
    CHECK(body[1] == 128);
    CHECK(body[2] == 255);
    CHECK(body[3] == 255);
    CHECK(body[4] == 0);
    CHECK_THROWS_AS(encode_pgm(px, 4, 2), ConfigError);

    Tensor grid({2, 3, 1, 2, 2});
    for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = static_cast<float>(i) / static_cast<float>(grid.size());
    int width = 0, height = 0;
    const auto tiled = tile_grid(grid, width, height);
    CHECK(tiled.size() == static_cast<std::size_t>(width) * height);
    CHECK(width >= 6);
    CHECK(height >= 4);
}

TEST_CASE("bar chart is a standalone SVG") {
    ReportPlan plan;
    plan.single_tasks = {0};
    const Report rep = assemble_report(synthetic_runs(3, {0}), plan);
    const std::string svg = render_bar_chart_svg(rep.table("metrics"), "metrics");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("multi_head") != std::string::npos);
}
