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

#include "hardshare/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "hardshare/dtb.hpp"
#include "hardshare/errors.hpp"
#include "hardshare/random.hpp"

namespace hardshare {

std::vector<double> traversal_values() {
    std::vector<double> v;
    for (int c = 0; c < kTraversalSteps; ++c) v.push_back((c - 10) / 10.0);
    return v;
}

double TraversalGrid::mean_adjacent_change(int dim) const {
    const std::size_t per = images.size() / (static_cast<std::size_t>(images.dim(0)) * kTraversalSteps);
    const float* row = images.data() + static_cast<std::size_t>(dim) * kTraversalSteps * per;
    double acc = 0.0;
    for (int c = 0; c + 1 < kTraversalSteps; ++c)
        for (std::size_t p = 0; p < per; ++p)
            acc += std::abs(static_cast<double>(row[(c + 1) * per + p]) - row[c * per + p]);
    return acc / (static_cast<double>(per) * (kTraversalSteps - 1));
}

TraversalGrid traverse_latent(const TrainedModel& probe, std::span<const float> base_latent) {
    if (!probe.decoder) throw ConfigError("traversal needs a decoder probe");
    const int d = probe.latent_dim;
    if (static_cast<int>(base_latent.size()) != d) throw ConfigError("base latent has the wrong dimension");
    TraversalGrid g;
    g.base_latent.assign(base_latent.begin(), base_latent.end());
    g.values = traversal_values();
    const Shape img = probe.decoder->output_shape();
    Shape shape{d, kTraversalSteps};
    shape.insert(shape.end(), img.begin(), img.end());
    g.images = Tensor(shape);
    const std::size_t per = shape_size(img);
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < kTraversalSteps; ++c) {
            Tensor z({1, d}, g.base_latent);
            z[static_cast<std::size_t>(r)] = static_cast<float>(g.values[static_cast<std::size_t>(c)]);
            const Tensor out = probe.decode(z, 1);
            float* dst = g.images.data() + (static_cast<std::size_t>(r) * kTraversalSteps + c) * per;
            for (std::size_t p = 0; p < per; ++p) dst[p] = std::clamp(out[p], 0.0f, 1.0f);
        }
    return g;
}

TraversalGrid make_traversal(const TrainedModel& probe, const LabeledDataset& ds, std::size_t base_index,
                             bool clamp_base) {
    if (base_index >= ds.size()) throw ConfigError("traversal base index out of range");
    const std::size_t idx[] = {base_index};
    Tensor z = probe.encode(ds.images.gather_rows(idx), 1);
    if (clamp_base)
        for (auto& v : z.storage()) v = std::clamp(v, -1.0f, 1.0f);
    TraversalGrid g = traverse_latent(probe, z.values());
    g.base_index = base_index;
    return g;
}

std::size_t select_example(const LabeledDataset& ds, std::uint64_t seed) {
    const auto test = ds.rows(Split::test);
    if (test.empty()) throw ConfigError("dataset has no test rows");
    Rng rng(derive_seed(seed, "example"));
    return test[rng.below(test.size())];
}

double reconstruction_mse(const TrainedModel& probe, const LabeledDataset& ds) {
    const Tensor x = ds.images.gather_rows(ds.rows(Split::test));
    return mean_squared_error(probe.decode(probe.encode(x)), x);
}

Gallery reconstruction_gallery(const std::vector<std::pair<std::string, const TrainedModel*>>& probes,
                               const LabeledDataset& ds, std::span<const std::size_t> rows) {
    Gallery g;
    g.rows.assign(rows.begin(), rows.end());
    const Tensor x = ds.images.gather_rows(rows);
    std::vector<Tensor> parts{x};
    g.labels.push_back("input");
    for (const auto& [label, probe] : probes) {
        parts.push_back(probe->decode(probe->encode(x, 1), 1));
        g.labels.push_back(label);
    }
    Shape shape{static_cast<int>(parts.size())};
    shape.insert(shape.end(), x.shape().begin(), x.shape().end());
    g.panel = Tensor(shape);
    for (std::size_t i = 0; i < parts.size(); ++i)
        for (std::size_t p = 0; p < x.size(); ++p) g.panel[i * x.size() + p] = std::clamp(parts[i][p], 0.0f, 1.0f);
    return g;
}

// ---------------------------------------------------------------------------

PcaResult pca_embedding(const Matrix& codes, int k, std::uint64_t seed, int max_iter, double tol) {
    const int n = codes.rows, d = codes.cols;
    if (n < 3) throw ConfigError("PCA needs at least 3 rows");
    if (k < 1 || k > d) throw ConfigError("PCA component count must lie in [1, d]");
    PcaResult res;
    for (int j = 0; j < d; ++j) {
        double s = 0.0;
        for (int r = 0; r < n; ++r) s += codes(r, j);
        res.mean.push_back(s / n);
    }
    Matrix cov(d, d);
    for (int r = 0; r < n; ++r)
        for (int a = 0; a < d; ++a) {
            const double xa = codes(r, a) - res.mean[static_cast<std::size_t>(a)];
            for (int b = 0; b < d; ++b) cov(a, b) += xa * (codes(r, b) - res.mean[static_cast<std::size_t>(b)]);
        }
    for (auto& v : cov.data) v /= n;
    double trace = 0.0;
    for (int a = 0; a < d; ++a) trace += cov(a, a);
    if (!(trace > 0.0)) throw NumericError("PCA of zero-variance codes");

    Rng rng(derive_seed(seed, "pca"));
    res.components = Matrix(k, d);
    for (int c = 0; c < k; ++c) {
        std::vector<double> v(static_cast<std::size_t>(d));
        for (auto& x : v) x = rng.normal();
        double lambda = 0.0;
        for (int it = 0; it < max_iter; ++it) {
            std::vector<double> w(static_cast<std::size_t>(d), 0.0);
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) w[static_cast<std::size_t>(a)] += cov(a, b) * v[static_cast<std::size_t>(b)];
            double norm = 0.0;
            for (double x : w) norm += x * x;
            norm = std::sqrt(norm);
            if (norm == 0.0) break;
            double diff = 0.0;
            for (int a = 0; a < d; ++a) {
                w[static_cast<std::size_t>(a)] /= norm;
                diff = std::max(diff, std::abs(w[static_cast<std::size_t>(a)] - v[static_cast<std::size_t>(a)]));
            }
            v = std::move(w);
            lambda = norm;
            if (diff < tol) break;
        }
        double vn = 0.0;
        for (double x : v) vn += x * x;
        vn = std::sqrt(vn);
        for (auto& x : v) x /= vn;
        const auto big = std::max_element(v.begin(), v.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
        if (*big < 0)
            for (auto& x : v) x = -x;
        // Rayleigh quotient for the eigenvalue, then deflate.
        lambda = 0.0;
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b)
                lambda += v[static_cast<std::size_t>(a)] * cov(a, b) * v[static_cast<std::size_t>(b)];
        for (int a = 0; a < d; ++a) {
            res.components(c, a) = v[static_cast<std::size_t>(a)];
            for (int b = 0; b < d; ++b)
                cov(a, b) -= lambda * v[static_cast<std::size_t>(a)] * v[static_cast<std::size_t>(b)];
        }
        res.explained_variance_ratio.push_back(std::max(0.0, lambda) / trace);
    }
    res.coords = Matrix(n, k);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < k; ++c) {
            double s = 0.0;
            for (int a = 0; a < d; ++a) s += (codes(r, a) - res.mean[static_cast<std::size_t>(a)]) * res.components(c, a);
            res.coords(r, c) = s;
        }
    return res;
}

// ---------------------------------------------------------------------------

std::vector<float> tile_grid(const Tensor& grid, int& width, int& height) {
    if (grid.rank() != 5) throw ConfigError("tile_grid expects (R, Cn, C, H, W)");
    const int rows = grid.dim(0), cols = grid.dim(1), ch = grid.dim(2), h = grid.dim(3), w = grid.dim(4);
    width = cols * (w + 1) - 1;
    height = rows * (h + 1) - 1;
    std::vector<float> canvas(static_cast<std::size_t>(width) * height, 1.0f);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const float* img = grid.data() + (static_cast<std::size_t>(r) * cols + c) * ch * h * w;
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    canvas[static_cast<std::size_t>(r * (h + 1) + y) * width + c * (w + 1) + x] =
                        img[static_cast<std::size_t>(y) * w + x];
        }
    return canvas;
}

std::string encode_pgm(std::span<const float> pixels, int width, int height) {
    if (pixels.size() != static_cast<std::size_t>(width) * height) throw ConfigError("pixel count does not match size");
    std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
    for (float p : pixels) out.push_back(static_cast<char>(std::lround(std::clamp(p, 0.0f, 1.0f) * 255.0f)));
    return out;
}

void write_pgm(const std::filesystem::path& path, std::span<const float> pixels, int width, int height) {
    write_text_atomic(path, encode_pgm(pixels, width, height));
}

// ---------------------------------------------------------------------------

std::string RunSummary::label() const {
    return regime == "single" ? "single(" + std::to_string(task_index) + ")" : regime;
}

Aggregate aggregate(std::span<const double> v) {
    Aggregate a;
    a.n = static_cast<int>(v.size());
    if (v.empty()) return a;
    for (double x : v) a.mean += x;
    a.mean /= a.n;
    double var = 0.0;
    for (double x : v) var += (x - a.mean) * (x - a.mean);
    a.std = std::sqrt(var / a.n);
    return a;
}

const ReportTable::Row& ReportTable::row(const std::string& label) const {
    for (const auto& r : rows)
        if (r.label == label) return r;
    throw ConfigError("table " + name + " has no row '" + label + "'");
}

namespace {

std::string fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

std::string ReportTable::to_tsv() const {
    std::ostringstream os;
    os << "row";
    for (const auto& c : columns) os << '\t' << c << "_mean\t" << c << "_std";
    os << "\tseeds\n";
    for (const auto& r : rows) {
        os << r.label;
        int n = 0;
        for (const auto& a : r.cells) {
            os << '\t' << fixed(a.mean) << '\t' << fixed(a.std);
            n = a.n;
        }
        os << '\t' << n << '\n';
    }
    return os.str();
}

const ReportTable& Report::table(const std::string& name) const {
    for (const auto& t : tables)
        if (t.name == name) return t;
    throw ConfigError("report has no table '" + name + "'");
}

namespace {

using Key = std::pair<std::string, int>;  // (label, seed index)

struct Index {
    std::map<Key, const RunSummary*> runs;
    std::vector<std::string> missing;

    const RunSummary* need(const std::string& label, int seed) {
        auto it = runs.find({label, seed});
        if (it == runs.end()) {
            missing.push_back(label + " seed " + std::to_string(seed));
            return nullptr;
        }
        return it->second;
    }
};

template <typename F>
std::vector<double> per_seed(Index& idx, const std::string& label, int seeds, F get) {
    std::vector<double> out;
    for (int s = 0; s < seeds; ++s)
        if (const RunSummary* r = idx.need(label, s)) {
            const auto v = get(*r);
            if (!v) {
                idx.missing.push_back(label + " seed " + std::to_string(s) + " (incomplete)");
                continue;
            }
            out.push_back(*v);
        }
    return out;
}

}  // namespace

Report assemble_report(const std::vector<RunSummary>& runs, const ReportPlan& plan) {
    if (plan.seeds < 1) throw ConfigError("report needs at least one seed");
    Index idx;
    for (const auto& r : runs) idx.runs[{r.label(), r.seed_index}] = &r;

    std::vector<std::string> singles;
    for (int t : plan.single_tasks) singles.push_back("single(" + std::to_string(t) + ")");
    std::vector<std::string> metric_rows{"random"};
    metric_rows.insert(metric_rows.end(), singles.begin(), singles.end());
    metric_rows.insert(metric_rows.end(), {"multi_head", "one_head", "ae"});
    if (plan.with_vae) metric_rows.push_back("vae");

    Report rep;
    const auto& names = MetricReport::scalar_names();

    // Per-seed average over the single-task models.
    auto single_mean = [&](auto get) {
        std::vector<double> out;
        for (int s = 0; s < plan.seeds; ++s) {
            double acc = 0.0;
            int n = 0;
            for (const auto& l : singles) {
                const auto v = per_seed(idx, l, plan.seeds, get);
                if (static_cast<int>(v.size()) == plan.seeds) {
                    acc += v[static_cast<std::size_t>(s)];
                    ++n;
                }
            }
            if (n == static_cast<int>(singles.size()) && n > 0) out.push_back(acc / n);
        }
        return out;
    };

    ReportTable metrics{"metrics", names, {}};
    for (const auto& label : metric_rows) {
        ReportTable::Row row{label, {}};
        for (const auto& name : names)
            row.cells.push_back(aggregate(per_seed(idx, label, plan.seeds, [&](const RunSummary& r) {
                return r.metrics ? std::optional<double>(r.metrics->scalar(name)) : std::nullopt;
            })));
        metrics.rows.push_back(std::move(row));
        if (label == singles.back() || (singles.empty() && label == "random")) {
            ReportTable::Row mean_row{"single_mean", {}};
            for (const auto& name : names)
                mean_row.cells.push_back(aggregate(single_mean([&](const RunSummary& r) {
                    return r.metrics ? std::optional<double>(r.metrics->scalar(name)) : std::nullopt;
                })));
            metrics.rows.push_back(std::move(mean_row));
        }
    }
    rep.tables.push_back(std::move(metrics));

    auto task_mse = [](const RunSummary& r) { return r.test_task_mse; };
    ReportTable mse{"task_mse", {"test_task_mse"}, {}};
    mse.rows.push_back({"random", {aggregate(per_seed(idx, "random", plan.seeds, task_mse))}});
    mse.rows.push_back({"single_mean", {aggregate(single_mean(task_mse))}});
    mse.rows.push_back({"multi_head", {aggregate(per_seed(idx, "multi_head", plan.seeds, task_mse))}});
    mse.rows.push_back({"one_head", {aggregate(per_seed(idx, "one_head", plan.seeds, task_mse))}});
    rep.tables.push_back(std::move(mse));

    if (plan.with_probes) {
        auto probe = [](const RunSummary& r) { return r.probe_mse; };
        ReportTable rec{"reconstruction", {"test_mse"}, {}};
        const std::vector<double> zeros(static_cast<std::size_t>(plan.seeds), 0.0);
        rec.rows.push_back({"identity", {aggregate(zeros)}});
        rec.rows.push_back({"random", {aggregate(per_seed(idx, "random", plan.seeds, probe))}});
        if (!singles.empty()) rec.rows.push_back({"single", {aggregate(per_seed(idx, singles.front(), plan.seeds, probe))}});
        rec.rows.push_back({"multi_head", {aggregate(per_seed(idx, "multi_head", plan.seeds, probe))}});
        rep.tables.push_back(std::move(rec));
    }
    if (plan.with_latent_heads) {
        auto rmse = [](const RunSummary& r) { return r.latent_rmse; };
        ReportTable lr{"latent_rmse", {"mean_rmse"}, {}};
        std::vector<std::string> rows{"ground_truth", "random", "ae"};
        if (plan.with_vae) rows.push_back("vae");
        rows.push_back("multi_head");
        for (const auto& l : rows) lr.rows.push_back({l, {aggregate(per_seed(idx, l, plan.seeds, rmse))}});
        rep.tables.push_back(std::move(lr));
    }

    if (!idx.missing.empty()) {
        std::sort(idx.missing.begin(), idx.missing.end());
        idx.missing.erase(std::unique(idx.missing.begin(), idx.missing.end()), idx.missing.end());
        std::string msg = "report is missing runs:";
        for (const auto& m : idx.missing) msg += "\n  " + m;
        throw DataError(msg);
    }

    // Claim flags.
    const auto& mt = rep.table("metrics");
    auto cell = [&](const ReportTable& t, const std::string& row, std::size_t col) { return t.row(row).cells[col].mean; };
    auto col_of = [&](const std::string& name) {
        return static_cast<std::size_t>(std::find(names.begin(), names.end(), name) - names.begin());
    };
    nlohmann::json claims;
    claims["dataset"] = "minisprites";
    claims["seeds"] = plan.seeds;
    {
        nlohmann::json fig2 = nlohmann::json::object();
        bool all = !singles.empty();
        for (const std::string name :
             {"factor_vae_score", "dci_disentanglement", "dci_completeness", "dci_informativeness", "mig"}) {
            const double multi = cell(mt, "multi_head", col_of(name)), single = cell(mt, "single_mean", col_of(name));
            fig2["metrics"][name] = {{"multi_head", multi}, {"single_mean", single}, {"holds", multi > single}};
            all = all && multi > single;
        }
        const double margin = cell(mt, "multi_head", col_of("factor_vae_score")) -
                              cell(mt, "single_mean", col_of("factor_vae_score"));
        fig2["factor_vae_margin"] = margin;
        fig2["margin_holds"] = margin >= 0.05;
        fig2["holds"] = all && margin >= 0.05;
        claims["multi_vs_single"] = fig2;
    }
    {
        const std::size_t c = col_of("dci_disentanglement");
        const double multi = cell(mt, "multi_head", c), one = cell(mt, "one_head", c), single = cell(mt, "single_mean", c);
        claims["multi_vs_one_head"] = {{"multi_head", multi},
                                       {"one_head", one},
                                       {"single_mean", single},
                                       {"multi_ge_one_head", multi >= one},
                                       {"one_head_ge_single", one >= single},
                                       {"holds", multi >= one && one >= single}};
    }
    {
        const auto& tm = rep.table("task_mse");
        nlohmann::json j = {{"task_mse_multi_head", cell(tm, "multi_head", 0)},
                            {"task_mse_random", cell(tm, "random", 0)},
                            {"task_mse_holds", cell(tm, "multi_head", 0) < cell(tm, "random", 0)}};
        bool holds = j["task_mse_holds"].get<bool>();
        if (plan.with_probes) {
            const auto& rt = rep.table("reconstruction");
            j["probe_multi_head"] = cell(rt, "multi_head", 0);
            j["probe_random"] = cell(rt, "random", 0);
            j["probe_holds"] = cell(rt, "multi_head", 0) < cell(rt, "random", 0);
            holds = holds && j["probe_holds"].get<bool>();
        }
        j["holds"] = holds;
        claims["reconstruction_and_task_mse"] = j;
    }
    if (plan.with_latent_heads) {
        const auto& lt = rep.table("latent_rmse");
        const double gt = cell(lt, "ground_truth", 0), rnd = cell(lt, "random", 0), ae = cell(lt, "ae", 0);
        claims["latent_rmse"] = {{"ground_truth", gt},           {"random", rnd},         {"ae", ae},
                                 {"ground_truth_beats_random", gt < rnd}, {"ae_beats_random", ae < rnd},
                                 {"holds", gt < rnd && ae < rnd}};
    }
    nlohmann::json flags = nlohmann::json::object();
    for (const auto& name : names)
        flags[name] = cell(mt, "multi_head", col_of(name)) > cell(mt, "single_mean", col_of(name));
    claims["flags"]["minisprites"] = flags;
    rep.claims = std::move(claims);
    return rep;
}

std::string render_bar_chart_svg(const ReportTable& table, const std::string& title) {
    const double bar = 12.0, gap = 24.0, plot_h = 200.0, top = 40.0, left = 50.0;
    const std::size_t series = table.rows.size(), groups = table.columns.size();
    double vmax = 0.0;
    for (const auto& r : table.rows)
        for (const auto& c : r.cells) vmax = std::max(vmax, c.mean + c.std);
    if (vmax <= 0.0) vmax = 1.0;
    const double width = left + groups * (series * bar + gap) + 160.0;
    const double height = top + plot_h + 80.0;
    static const char* palette[] = {"#7f7f7f", "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                    "#9467bd", "#8c564b", "#e377c2", "#bcbd22", "#17becf"};
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" font-family=\"sans-serif\" "
                  "font-size=\"10\">\n",
                  width, height);
    os << buf;
    os << "<text x=\"" << left << "\" y=\"20\" font-size=\"13\">" << title << "</text>\n";
    const double base = top + plot_h;
    std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", left,
                  base, width - 150.0, base);
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"4\" y=\"%.1f\">%.3g</text>\n", top + 4.0, vmax);
    os << buf;
    for (std::size_t g = 0; g < groups; ++g) {
        const double gx = left + gap / 2 + g * (series * bar + gap);
        for (std::size_t s = 0; s < series; ++s) {
            const auto& c = table.rows[s].cells[g];
            const double h = plot_h * std::max(0.0, c.mean) / vmax;
            const double x = gx + s * bar;
            std::snprintf(buf, sizeof buf, "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"%s\"/>\n", x,
                          base - h, bar - 2, h, palette[s % 10]);
            os << buf;
            const double lo = base - plot_h * std::max(0.0, c.mean - c.std) / vmax;
            const double hi = base - plot_h * (c.mean + c.std) / vmax;
            std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n",
                          x + (bar - 2) / 2, lo, x + (bar - 2) / 2, hi);
            os << buf;
        }
        std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" transform=\"rotate(30 %.1f %.1f)\">%s</text>\n", gx,
                      base + 14, gx, base + 14, table.columns[g].c_str());
        os << buf;
    }
    for (std::size_t s = 0; s < series; ++s) {
        const double y = top + 12.0 * s;
        std::snprintf(buf, sizeof buf,
                      "<rect x=\"%.1f\" y=\"%.1f\" width=\"10\" height=\"10\" fill=\"%s\"/><text x=\"%.1f\" y=\"%.1f\">%s</text>\n",
                      width - 140.0, y, palette[s % 10], width - 126.0, y + 9, table.rows[s].label.c_str());
        os << buf;
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace hardshare
