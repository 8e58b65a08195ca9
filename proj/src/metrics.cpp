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

#include "hardshare/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <string_view>

#include "hardshare/errors.hpp"

namespace hardshare {

Matrix::Matrix(int r, int c, double fill)
    : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {
    if (r < 0 || c < 0) throw ConfigError("matrix dimensions must be non-negative");
}

std::vector<double> Matrix::column(int c) const {
    std::vector<double> out(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) out[static_cast<std::size_t>(r)] = (*this)(r, c);
    return out;
}

nlohmann::json Matrix::to_json() const {
    nlohmann::json a = nlohmann::json::array();
    for (int r = 0; r < rows; ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (int c = 0; c < cols; ++c) row.push_back((*this)(r, c));
        a.push_back(std::move(row));
    }
    return a;
}

Matrix Matrix::from_json(const nlohmann::json& j) {
    const int r = static_cast<int>(j.size());
    const int c = r ? static_cast<int>(j[0].size()) : 0;
    Matrix m(r, c);
    for (int i = 0; i < r; ++i) {
        if (static_cast<int>(j[static_cast<std::size_t>(i)].size()) != c) throw DataError("ragged matrix in JSON");
        for (int k = 0; k < c; ++k) m(i, k) = j[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)].get<double>();
    }
    return m;
}

double order_free_sum(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

std::vector<int> RepresentationSample::index_column(int factor) const {
    std::vector<int> out(static_cast<std::size_t>(n()));
    for (int r = 0; r < n(); ++r) out[static_cast<std::size_t>(r)] = index(r, factor);
    return out;
}

void RepresentationSample::validate(int min_rows) const {
    if (codes.rows != factor_values.rows || factor_indices.size() != factor_values.data.size() ||
        static_cast<int>(kinds.size()) != factor_values.cols)
        throw ConfigError("representation sample fields are not row-aligned");
    if (codes.cols < 1 || factor_values.cols < 1) throw ConfigError("representation sample needs d >= 1 and m >= 1");
    if (n() < min_rows)
        throw ConfigError("representation sample has " + std::to_string(n()) + " rows, need at least " +
                          std::to_string(min_rows));
    for (double v : codes.data)
        if (!std::isfinite(v)) throw NumericError("representation contains non-finite codes");
}

RepresentationSample make_sample(const Tensor& codes, const LabeledDataset& ds, std::span<const std::size_t> rows) {
    if (codes.rank() != 2 || static_cast<std::size_t>(codes.dim(0)) != rows.size())
        throw ConfigError("codes must be (rows, d)");
    RepresentationSample s;
    const int n = static_cast<int>(rows.size());
    const int d = codes.dim(1);
    const int m = static_cast<int>(ds.factor_dim());
    s.codes = Matrix(n, d);
    for (std::size_t i = 0; i < codes.size(); ++i) s.codes.data[i] = codes[i];
    s.factor_values = Matrix(n, m);
    s.factor_indices.resize(static_cast<std::size_t>(n) * m);
    for (int r = 0; r < n; ++r)
        for (int k = 0; k < m; ++k) {
            const std::size_t src = rows[static_cast<std::size_t>(r)] * m + k;
            s.factor_values(r, k) = ds.factor_values[src];
            s.factor_indices[static_cast<std::size_t>(r) * m + k] = ds.factor_indices[src];
        }
    for (const auto& f : ds.space.factors()) s.kinds.push_back(f.kind);
    return s;
}

// ---------------------------------------------------------------------------

std::vector<int> quantile_bins(std::span<const double> a, int bins) {
    if (bins < 2) throw ConfigError("need at least 2 bins");
    if (a.size() < static_cast<std::size_t>(bins)) throw ConfigError("need at least as many rows as bins");
    std::vector<double> sorted(a.begin(), a.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> edges;
    for (int k = 1; k < bins; ++k) edges.push_back(sorted[static_cast<std::size_t>(k) * sorted.size() / bins]);
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    std::vector<int> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        out[i] = static_cast<int>(std::upper_bound(edges.begin(), edges.end(), a[i]) - edges.begin());
    return out;
}

namespace {

std::map<int, int> dense_labels(std::span<const int> a, std::vector<int>& out) {
    std::map<int, int> ids;
    for (int v : a) ids.emplace(v, 0);
    int k = 0;
    for (auto& [v, id] : ids) id = k++;
    out.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = ids[a[i]];
    return ids;
}

}  // namespace

double entropy(std::span<const int> a) {
    std::vector<int> la;
    const auto ids = dense_labels(a, la);
    std::vector<double> counts(ids.size(), 0.0);
    for (int v : la) counts[static_cast<std::size_t>(v)] += 1.0;
    const double n = static_cast<double>(a.size());
    double h = 0.0;
    for (double c : counts)
        if (c > 0) h -= c / n * std::log(c / n);
    return h;
}

double mutual_information(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size() || a.empty()) throw ConfigError("mutual information needs aligned non-empty columns");
    std::vector<int> la, lb;
    const std::size_t ka = dense_labels(a, la).size();
    const std::size_t kb = dense_labels(b, lb).size();
    std::vector<double> joint(ka * kb, 0.0), pa(ka, 0.0), pb(kb, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[static_cast<std::size_t>(la[i]) * kb + static_cast<std::size_t>(lb[i])] += 1.0;
        pa[static_cast<std::size_t>(la[i])] += 1.0;
        pb[static_cast<std::size_t>(lb[i])] += 1.0;
    }
    const double n = static_cast<double>(a.size());
    double mi = 0.0;
    for (std::size_t i = 0; i < ka; ++i)
        for (std::size_t j = 0; j < kb; ++j) {
            const double c = joint[i * kb + j];
            if (c > 0) mi += c / n * std::log(c * n / (pa[i] * pb[j]));
        }
    return std::max(0.0, mi);
}

double discretized_mutual_information(std::span<const double> a, std::span<const int> b, int bins) {
    const auto qa = quantile_bins(a, bins);
    return mutual_information(qa, b);
}

// ---------------------------------------------------------------------------

std::string to_string(MigDenominator d) { return d == MigDenominator::paper ? "paper" : "entropy"; }

MigDenominator mig_denominator_from_string(const std::string& s) {
    if (s == "paper") return MigDenominator::paper;
    if (s == "entropy") return MigDenominator::entropy;
    throw ConfigError("unknown MIG denominator '" + s + "'; valid: paper, entropy");
}

MigResult mig(const RepresentationSample& s, int bins, MigDenominator denom) {
    s.validate();
    if (s.d() < 2) throw ConfigError("MIG needs at least 2 latent dimensions");
    MigResult res;
    res.mi = Matrix(s.d(), s.m());
    std::vector<std::vector<int>> binned;
    for (int j = 0; j < s.d(); ++j) binned.push_back(quantile_bins(s.codes.column(j), bins));
    std::vector<double> terms;
    for (int i = 0; i < s.m(); ++i) {
        const auto b = s.index_column(i);
        std::vector<double> mi(static_cast<std::size_t>(s.d()));
        for (int j = 0; j < s.d(); ++j) {
            mi[static_cast<std::size_t>(j)] = mutual_information(binned[static_cast<std::size_t>(j)], b);
            res.mi(j, i) = mi[static_cast<std::size_t>(j)];
        }
        const double total = denom == MigDenominator::paper ? order_free_sum(mi) : entropy(b);
        std::sort(mi.begin(), mi.end(), std::greater<>());
        double term = 0.0;
        if (total > 0.0) {
            term = std::clamp((mi[0] - mi[1]) / total, 0.0, 1.0);
        } else {
            res.warnings.push_back("factor " + std::to_string(i) + " has zero mutual information with every latent");
        }
        res.factor_terms.push_back(term);
        terms.push_back(term);
    }
    res.score = std::clamp(order_free_sum(terms) / s.m(), 0.0, 1.0);
    return res;
}

// ---------------------------------------------------------------------------

FactorFixedSampler sample_with_fixed_factor(const RepresentationSample& s) {
    // rows_by_value[factor] maps each present value index to its rows.
    auto rows_by_value = std::make_shared<std::vector<std::vector<std::vector<int>>>>(static_cast<std::size_t>(s.m()));
    for (int k = 0; k < s.m(); ++k) {
        std::map<int, std::vector<int>> groups;
        for (int r = 0; r < s.n(); ++r) groups[s.index(r, k)].push_back(r);
        for (auto& [v, rows] : groups) (*rows_by_value)[static_cast<std::size_t>(k)].push_back(std::move(rows));
    }
    auto codes = std::make_shared<Matrix>(s.codes);
    return [rows_by_value, codes](int factor, int count, Rng& rng) {
        const auto& groups = (*rows_by_value).at(static_cast<std::size_t>(factor));
        const auto& rows = groups[rng.below(groups.size())];
        Matrix out(count, codes->cols);
        for (int i = 0; i < count; ++i) {
            const int r = rows[rng.below(rows.size())];
            std::copy_n(codes->data.begin() + static_cast<std::ptrdiff_t>(r) * codes->cols, codes->cols,
                        out.data.begin() + static_cast<std::ptrdiff_t>(i) * codes->cols);
        }
        return out;
    };
}

namespace {

double column_mean(const Matrix& x, int c) {
    double s = 0.0;
    for (int r = 0; r < x.rows; ++r) s += x(r, c);
    return s / x.rows;
}

double column_variance(const Matrix& x, int c, double scale = 1.0) {
    const double mean = column_mean(x, c) / scale;
    double v = 0.0;
    for (int r = 0; r < x.rows; ++r) {
        const double d = x(r, c) / scale - mean;
        v += d * d;
    }
    return v / x.rows;
}

}  // namespace

FactorVaeResult factor_vae_score(const Matrix& reference, int n_factors, const FactorFixedSampler& sampler,
                                 const FactorVaeConfig& cfg, std::uint64_t seed) {
    if (cfg.n_votes < 1 || cfg.subset_size < 2) throw ConfigError("FactorVAE score needs votes >= 1 and subset >= 2");
    if (n_factors < 1 || reference.rows < 2) throw ConfigError("FactorVAE score needs factors and reference codes");
    const int d = reference.cols;
    FactorVaeResult res;
    res.votes = Matrix(d, n_factors);
    for (int j = 0; j < d; ++j) res.global_std.push_back(std::sqrt(column_variance(reference, j)));
    const double threshold = cfg.prune_fraction * order_free_sum(res.global_std) / d;
    for (int j = 0; j < d; ++j)
        if (res.global_std[static_cast<std::size_t>(j)] > 0.0 && res.global_std[static_cast<std::size_t>(j)] >= threshold)
            res.active_dims.push_back(j);
    if (res.active_dims.empty()) throw NumericError("collapsed representation: every latent dimension was pruned");

    for (int v = 0; v < cfg.n_votes; ++v) {
        Rng rng(derive_seed(seed, "vote", static_cast<std::uint64_t>(v)));
        const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(n_factors)));
        const Matrix batch = sampler(k, cfg.subset_size, rng);
        int best = -1;
        double best_var = std::numeric_limits<double>::infinity();
        for (int j : res.active_dims) {
            const double var = column_variance(batch, j, res.global_std[static_cast<std::size_t>(j)]);
            if (var < best_var) {
                best_var = var;
                best = j;
            }
        }
        res.votes(best, k) += 1.0;
    }
    double correct = 0.0;
    for (int j = 0; j < d; ++j) {
        double mx = 0.0;
        for (int k = 0; k < n_factors; ++k) mx = std::max(mx, res.votes(j, k));
        correct += mx;
    }
    res.score = std::clamp(correct / cfg.n_votes, 0.0, 1.0);
    return res;
}

FactorVaeResult factor_vae_score(const RepresentationSample& s, const FactorVaeConfig& cfg, std::uint64_t seed) {
    s.validate();
    return factor_vae_score(s.codes, s.m(), sample_with_fixed_factor(s), cfg, seed);
}

// ---------------------------------------------------------------------------

double linear_r2(std::span<const double> xt, std::span<const double> yt, std::span<const double> xv,
                 std::span<const double> yv) {
    const double n = static_cast<double>(xt.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < xt.size(); ++i) {
        mx += xt[i];
        my += yt[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < xt.size(); ++i) {
        sxy += (xt[i] - mx) * (yt[i] - my);
        sxx += (xt[i] - mx) * (xt[i] - mx);
    }
    const double slope = sxx > 0 ? sxy / sxx : 0.0;
    const double icpt = my - slope * mx;
    double mv = 0;
    for (double y : yv) mv += y;
    mv /= static_cast<double>(yv.size());
    double ss_res = 0, ss_tot = 0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double e = yv[i] - (icpt + slope * xv[i]);
        ss_res += e * e;
        ss_tot += (yv[i] - mv) * (yv[i] - mv);
    }
    if (ss_tot <= 0.0) return 0.0;
    return std::max(0.0, 1.0 - ss_res / ss_tot);
}

namespace {

struct StumpNode {
    double threshold = 0.0;
    int left = -1, right = -1;
    int label = 0;
};

// Gini-impurity threshold tree over one feature; labels are dense 0..k-1.
int grow_stump(std::vector<StumpNode>& nodes, std::vector<std::pair<double, int>> pts, int k, int depth) {
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (const auto& p : pts) ++counts[static_cast<std::size_t>(p.second)];
    const int majority = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    const int id = static_cast<int>(nodes.size());
    nodes.push_back({0.0, -1, -1, majority});
    if (depth == 0 || pts.size() < 2) return id;
    std::sort(pts.begin(), pts.end());
    auto gini = [](const std::vector<int>& c, double n) {
        double g = 1.0;
        for (int v : c) g -= (v / n) * (v / n);
        return g;
    };
    const double n = static_cast<double>(pts.size());
    const double parent = gini(counts, n) * n;
    std::vector<int> left(static_cast<std::size_t>(k), 0), right = counts;
    double best = 1e-12;
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        ++left[static_cast<std::size_t>(pts[i].second)];
        --right[static_cast<std::size_t>(pts[i].second)];
        if (pts[i].first == pts[i + 1].first) continue;
        const double nl = static_cast<double>(i + 1), nr = n - nl;
        const double gain = parent - gini(left, nl) * nl - gini(right, nr) * nr;
        if (gain > best) {
            best = gain;
            best_at = i + 1;
        }
    }
    if (best_at == 0) return id;
    const double thr = 0.5 * (pts[best_at - 1].first + pts[best_at].first);
    std::vector<std::pair<double, int>> lp(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(best_at));
    std::vector<std::pair<double, int>> rp(pts.begin() + static_cast<std::ptrdiff_t>(best_at), pts.end());
    const int l = grow_stump(nodes, std::move(lp), k, depth - 1);
    const int r = grow_stump(nodes, std::move(rp), k, depth - 1);
    nodes[static_cast<std::size_t>(id)].threshold = thr;
    nodes[static_cast<std::size_t>(id)].left = l;
    nodes[static_cast<std::size_t>(id)].right = r;
    return id;
}

}  // namespace

double stump_balanced_accuracy(std::span<const double> xt, std::span<const int> yt, std::span<const double> xv,
                               std::span<const int> yv, int max_depth) {
    std::map<int, int> ids;
    for (int v : yt) ids.emplace(v, 0);
    for (int v : yv) ids.emplace(v, 0);
    int k = 0;
    for (auto& [v, id] : ids) id = k++;
    std::vector<std::pair<double, int>> pts;
    for (std::size_t i = 0; i < xt.size(); ++i) pts.emplace_back(xt[i], ids[yt[i]]);
    std::vector<StumpNode> nodes;
    grow_stump(nodes, std::move(pts), k, max_depth);
    std::vector<double> hit(static_cast<std::size_t>(k), 0.0), total(static_cast<std::size_t>(k), 0.0);
    for (std::size_t i = 0; i < xv.size(); ++i) {
        int node = 0;
        while (nodes[static_cast<std::size_t>(node)].left >= 0)
            node = xv[i] <= nodes[static_cast<std::size_t>(node)].threshold ? nodes[static_cast<std::size_t>(node)].left
                                                                           : nodes[static_cast<std::size_t>(node)].right;
        const int y = ids[yv[i]];
        total[static_cast<std::size_t>(y)] += 1.0;
        if (nodes[static_cast<std::size_t>(node)].label == y) hit[static_cast<std::size_t>(y)] += 1.0;
    }
    double acc = 0.0;
    int present = 0;
    for (int c = 0; c < k; ++c)
        if (total[static_cast<std::size_t>(c)] > 0) {
            acc += hit[static_cast<std::size_t>(c)] / total[static_cast<std::size_t>(c)];
            ++present;
        }
    return present ? acc / present : 0.0;
}

namespace {

// Seeded shuffle of 0..n-1; the first round(n * (1 - fraction)) rows train.
std::pair<std::vector<int>, std::vector<int>> holdout(int n, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("held-out fraction must lie in (0, 1)");
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());
    const auto n_test = static_cast<std::size_t>(std::llround(n * fraction));
    if (n_test < 1 || n_test >= order.size()) throw ConfigError("held-out split leaves an empty part");
    std::vector<int> train(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_test));
    std::vector<int> test(order.end() - static_cast<std::ptrdiff_t>(n_test), order.end());
    return {train, test};
}

template <typename T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<int>& rows) {
    std::vector<T> out;
    out.reserve(rows.size());
    for (int r : rows) out.push_back(v[static_cast<std::size_t>(r)]);
    return out;
}

Matrix pick_rows(const Matrix& x, const std::vector<int>& rows) {
    Matrix out(static_cast<int>(rows.size()), x.cols);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(rows[i]) * x.cols, x.cols,
                    out.data.begin() + static_cast<std::ptrdiff_t>(i) * x.cols);
    return out;
}

}  // namespace

SapResult sap(const RepresentationSample& s, double split_fraction, std::uint64_t seed) {
    s.validate();
    SapResult res;
    res.s = Matrix(s.d(), s.m());
    const auto [train, test] = holdout(s.n(), split_fraction, derive_seed(seed, "split"));
    std::vector<std::vector<double>> xt, xv;
    for (int j = 0; j < s.d(); ++j) {
        const auto col = s.codes.column(j);
        xt.push_back(pick(col, train));
        xv.push_back(pick(col, test));
    }
    std::vector<double> gaps;
    for (int i = 0; i < s.m(); ++i) {
        const auto idx = s.index_column(i);
        const auto yt_idx = pick(idx, train), yv_idx = pick(idx, test);
        const auto distinct = [](std::vector<int> v) {
            std::sort(v.begin(), v.end());
            return std::unique(v.begin(), v.end()) - v.begin();
        };
        if (distinct(yt_idx) < 2 || distinct(yv_idx) < 2) {
            res.skipped.push_back(i);
            res.gaps.push_back(std::numeric_limits<double>::quiet_NaN());
            res.warnings.push_back("factor " + std::to_string(i) + " has a single level in a split part; skipped");
            continue;
        }
        const auto vals = s.factor_values.column(i);
        const auto yt = pick(vals, train), yv = pick(vals, test);
        std::vector<double> col(static_cast<std::size_t>(s.d()));
        for (int j = 0; j < s.d(); ++j) {
            const double score =
                s.kinds[static_cast<std::size_t>(i)] == FactorKind::categorical
                    ? stump_balanced_accuracy(xt[static_cast<std::size_t>(j)], yt_idx, xv[static_cast<std::size_t>(j)], yv_idx)
                    : linear_r2(xt[static_cast<std::size_t>(j)], yt, xv[static_cast<std::size_t>(j)], yv);
            res.s(j, i) = score;
            col[static_cast<std::size_t>(j)] = score;
        }
        std::sort(col.begin(), col.end(), std::greater<>());
        const double gap = s.d() >= 2 ? col[0] - col[1] : col[0];
        res.gaps.push_back(gap);
        gaps.push_back(gap);
    }
    res.score = gaps.empty() ? 0.0 : std::clamp(order_free_sum(gaps) / static_cast<double>(gaps.size()), 0.0, 1.0);
    return res;
}

// ---------------------------------------------------------------------------

std::string to_string(ImportanceKind k) { return k == ImportanceKind::forest ? "forest" : "l1"; }

ImportanceKind importance_kind_from_string(const std::string& s) {
    if (s == "forest") return ImportanceKind::forest;
    if (s == "l1") return ImportanceKind::l1;
    throw ConfigError("unknown importance estimator '" + s + "'; valid: forest, l1");
}

namespace {

// Feature order keyed by column contents, ties by position.
std::vector<int> canonical_feature_order(const Matrix& x) {
    std::vector<std::pair<std::uint64_t, int>> keys;
    for (int j = 0; j < x.cols; ++j) {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (int r = 0; r < x.rows; ++r) {
            const double v = x(r, j);
            h = fnv1a64(std::string_view(reinterpret_cast<const char*>(&v), sizeof v), h);
        }
        keys.emplace_back(h, j);
    }
    std::sort(keys.begin(), keys.end());
    std::vector<int> order;
    for (const auto& k : keys) order.push_back(k.second);
    return order;
}

struct TreeBuilder {
    const Matrix& x;
    std::span<const double> y;
    const ForestConfig& cfg;
    const std::vector<int>& canon;
    int n_candidates;
    Rng& rng;
    std::vector<double>& importance;

    template <typename Node>
    int grow(std::vector<Node>& nodes, std::vector<int> rows, int depth) {
        double sum = 0.0;
        for (int r : rows) sum += y[static_cast<std::size_t>(r)];
        const double n = static_cast<double>(rows.size());
        const int id = static_cast<int>(nodes.size());
        nodes.push_back(Node{});
        nodes.back().value = sum / n;
        if (depth >= cfg.max_depth || rows.size() < static_cast<std::size_t>(2 * cfg.min_leaf)) return id;

        // Partial Fisher-Yates over canonical positions.
        std::vector<int> pos(canon.size());
        std::iota(pos.begin(), pos.end(), 0);
        for (int c = 0; c < n_candidates; ++c) {
            const auto k = static_cast<std::size_t>(c) + rng.below(pos.size() - static_cast<std::size_t>(c));
            std::swap(pos[static_cast<std::size_t>(c)], pos[k]);
        }
        const double parent = sum * sum / n;
        double best_gain = 1e-12 * std::max(1.0, std::abs(parent));
        int best_feature = -1;
        double best_thr = 0.0;
        std::vector<std::pair<double, int>> pts(rows.size());
        for (int c = 0; c < n_candidates; ++c) {
            const int f = canon[static_cast<std::size_t>(pos[static_cast<std::size_t>(c)])];
            for (std::size_t i = 0; i < rows.size(); ++i) pts[i] = {x(rows[i], f), rows[i]};
            std::sort(pts.begin(), pts.end());
            double left = 0.0;
            for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
                left += y[static_cast<std::size_t>(pts[i].second)];
                if (pts[i].first == pts[i + 1].first) continue;
                const double nl = static_cast<double>(i + 1), nr = n - nl;
                if (nl < cfg.min_leaf || nr < cfg.min_leaf) continue;
                const double right = sum - left;
                const double gain = left * left / nl + right * right / nr - parent;
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = f;
                    best_thr = 0.5 * (pts[i].first + pts[i + 1].first);
                }
            }
        }
        if (best_feature < 0) return id;
        importance[static_cast<std::size_t>(best_feature)] += best_gain;
        std::vector<int> lr, rr;
        for (int r : rows) (x(r, best_feature) <= best_thr ? lr : rr).push_back(r);
        const int l = grow(nodes, std::move(lr), depth + 1);
        const int rgt = grow(nodes, std::move(rr), depth + 1);
        nodes[static_cast<std::size_t>(id)].feature = best_feature;
        nodes[static_cast<std::size_t>(id)].threshold = best_thr;
        nodes[static_cast<std::size_t>(id)].left = l;
        nodes[static_cast<std::size_t>(id)].right = rgt;
        return id;
    }
};

}  // namespace

void RandomForest::fit(const Matrix& x, std::span<const double> y, const ForestConfig& cfg, std::uint64_t seed) {
    if (x.rows != static_cast<int>(y.size()) || x.rows < 2 || x.cols < 1)
        throw ConfigError("random forest needs at least 2 aligned rows and 1 feature");
    if (cfg.n_trees < 1 || cfg.max_depth < 1 || cfg.min_leaf < 1) throw ConfigError("invalid forest configuration");
    trees_.clear();
    importance_.assign(static_cast<std::size_t>(x.cols), 0.0);
    const auto canon = canonical_feature_order(x);
    const int k = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(x.cols))));
    for (int t = 0; t < cfg.n_trees; ++t) {
        Rng rng(derive_seed(seed, "tree", static_cast<std::uint64_t>(t)));
        std::vector<int> rows(static_cast<std::size_t>(x.rows));
        for (auto& r : rows) r = static_cast<int>(rng.below(static_cast<std::uint64_t>(x.rows)));
        std::vector<Node> nodes;
        TreeBuilder b{x, y, cfg, canon, k, rng, importance_};
        b.grow(nodes, std::move(rows), 0);
        trees_.push_back(std::move(nodes));
    }
}

double RandomForest::predict(const Matrix& x, int row) const {
    double s = 0.0;
    for (const auto& nodes : trees_) {
        int n = 0;
        while (nodes[static_cast<std::size_t>(n)].feature >= 0) {
            const auto& node = nodes[static_cast<std::size_t>(n)];
            n = x(row, node.feature) <= node.threshold ? node.left : node.right;
        }
        s += nodes[static_cast<std::size_t>(n)].value;
    }
    return s / static_cast<double>(trees_.size());
}

std::vector<double> RandomForest::predict(const Matrix& x) const {
    std::vector<double> out(static_cast<std::size_t>(x.rows));
    for (int r = 0; r < x.rows; ++r) out[static_cast<std::size_t>(r)] = predict(x, r);
    return out;
}

double LassoFit::predict(const Matrix& x, int row) const {
    double s = intercept;
    for (int j = 0; j < x.cols; ++j)
        if (scale[static_cast<std::size_t>(j)] > 0)
            s += coef[static_cast<std::size_t>(j)] * (x(row, j) - mean[static_cast<std::size_t>(j)]) /
                 scale[static_cast<std::size_t>(j)];
    return s;
}

LassoFit fit_lasso(const Matrix& x, std::span<const double> y, const LassoConfig& cfg) {
    const int n = x.rows, d = x.cols;
    if (n != static_cast<int>(y.size()) || n < 2) throw ConfigError("lasso needs at least 2 aligned rows");
    LassoFit fit;
    fit.coef.assign(static_cast<std::size_t>(d), 0.0);
    Matrix z(n, d);
    for (int j = 0; j < d; ++j) {
        const double mu = column_mean(x, j);
        const double sd = std::sqrt(column_variance(x, j));
        fit.mean.push_back(mu);
        fit.scale.push_back(sd);
        for (int r = 0; r < n; ++r) z(r, j) = sd > 0 ? (x(r, j) - mu) / sd : 0.0;
    }
    fit.intercept = std::accumulate(y.begin(), y.end(), 0.0) / n;
    std::vector<double> resid(static_cast<std::size_t>(n));
    for (int r = 0; r < n; ++r) resid[static_cast<std::size_t>(r)] = y[static_cast<std::size_t>(r)] - fit.intercept;
    for (int it = 0; it < cfg.max_iter; ++it) {
        double max_delta = 0.0;
        for (int j = 0; j < d; ++j) {
            if (fit.scale[static_cast<std::size_t>(j)] <= 0) continue;
            const double old = fit.coef[static_cast<std::size_t>(j)];
            double rho = 0.0;
            for (int r = 0; r < n; ++r) rho += z(r, j) * (resid[static_cast<std::size_t>(r)] + old * z(r, j));
            rho /= n;
            // Standardized columns have unit mean square.
            const double nw = rho > cfg.alpha ? rho - cfg.alpha : (rho < -cfg.alpha ? rho + cfg.alpha : 0.0);
            if (nw != old) {
                for (int r = 0; r < n; ++r) resid[static_cast<std::size_t>(r)] -= (nw - old) * z(r, j);
                fit.coef[static_cast<std::size_t>(j)] = nw;
                max_delta = std::max(max_delta, std::abs(nw - old));
            }
        }
        if (max_delta < cfg.tol) break;
    }
    return fit;
}

namespace {

struct FitOutcome {
    std::vector<double> importance;
    double test_mse = 0.0;
};

FitOutcome fit_and_score(const Matrix& xt, const std::vector<double>& yt, const Matrix& xv,
                         const std::vector<double>& yv, const DciConfig& cfg, std::uint64_t seed) {
    FitOutcome out;
    std::vector<double> pred(yv.size());
    if (cfg.importance == ImportanceKind::forest) {
        RandomForest f;
        f.fit(xt, yt, cfg.forest, seed);
        out.importance = f.importances();
        pred = f.predict(xv);
    } else {
        const LassoFit fit = fit_lasso(xt, yt, cfg.lasso);
        for (double c : fit.coef) out.importance.push_back(std::abs(c));
        for (int r = 0; r < xv.rows; ++r) pred[static_cast<std::size_t>(r)] = fit.predict(xv, r);
    }
    double sse = 0.0;
    for (std::size_t i = 0; i < yv.size(); ++i) sse += (pred[i] - yv[i]) * (pred[i] - yv[i]);
    out.test_mse = sse / static_cast<double>(yv.size());
    return out;
}

}  // namespace

ImportanceResult estimate_importances(const RepresentationSample& s, const DciConfig& cfg, std::uint64_t seed) {
    s.validate();
    const auto [train, test] = holdout(s.n(), cfg.test_fraction, derive_seed(seed, "split"));
    const Matrix xt = pick_rows(s.codes, train), xv = pick_rows(s.codes, test);
    ImportanceResult res;
    res.r = Matrix(s.d(), s.m());
    for (int i = 0; i < s.m(); ++i) {
        const auto vals = s.factor_values.column(i);
        const auto yt = pick(vals, train), yv = pick(vals, test);
        const auto fit = fit_and_score(xt, yt, xv, yv, cfg, derive_seed(seed, "factor", static_cast<std::uint64_t>(i)));
        const double total = order_free_sum(fit.importance);
        for (int j = 0; j < s.d(); ++j)
            res.r(j, i) = total > 0 ? fit.importance[static_cast<std::size_t>(j)] / total : 0.0;
        res.error.push_back(fit.test_mse);

        // Random mapping: the same regressor on codes whose rows no longer
        // match their targets.
        std::vector<int> perm(train.size());
        std::iota(perm.begin(), perm.end(), 0);
        Rng rng(derive_seed(seed, "shuffle", static_cast<std::uint64_t>(i)));
        rng.shuffle(perm.begin(), perm.end());
        const auto shuffled = pick_rows(xt, perm);
        const auto rnd = fit_and_score(shuffled, yt, xv, yv, cfg, derive_seed(seed, "random", static_cast<std::uint64_t>(i)));
        res.random_error.push_back(rnd.test_mse);
    }
    return res;
}

namespace {

// 1 - entropy(p) / log(base); a single category counts as fully concentrated.
double concentration(const std::vector<double>& w, int base) {
    const double total = order_free_sum(w);
    if (base <= 1) return 1.0;
    std::vector<double> terms;
    for (double v : w)
        if (v > 0) {
            const double p = v / total;
            terms.push_back(-p * std::log(p));
        }
    return 1.0 - order_free_sum(terms) / std::log(static_cast<double>(base));
}

}  // namespace

DciResult dci_from_importances(const Matrix& r, std::span<const double> error, std::span<const double> random_error) {
    const int d = r.rows, m = r.cols;
    if (d < 1 || m < 1) throw ConfigError("importance matrix is empty");
    if (error.size() != static_cast<std::size_t>(m) || random_error.size() != static_cast<std::size_t>(m))
        throw ConfigError("need one error and one random-mapping error per factor");
    for (double v : r.data)
        if (!(v >= 0.0) || !std::isfinite(v)) throw NumericError("importance matrix has a negative or non-finite entry");
    DciResult res;
    std::vector<double> row_totals;
    for (int j = 0; j < d; ++j) {
        std::vector<double> row(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) row[static_cast<std::size_t>(i)] = r(j, i);
        const double t = order_free_sum(row);
        row_totals.push_back(t);
        res.per_latent_disentanglement.push_back(t > 0 ? concentration(row, m) : 0.0);
    }
    const double grand = order_free_sum(row_totals);
    std::vector<double> weighted;
    for (int j = 0; j < d; ++j)
        weighted.push_back(row_totals[static_cast<std::size_t>(j)] / grand * res.per_latent_disentanglement[static_cast<std::size_t>(j)]);
    std::vector<double> c_terms, i_terms;
    for (int i = 0; i < m; ++i) {
        const auto col = r.column(i);
        if (order_free_sum(col) <= 0.0)
            throw NumericError("importance column for factor " + std::to_string(i) + " is all zero");
        res.per_factor_completeness.push_back(concentration(col, d));
        c_terms.push_back(res.per_factor_completeness.back());
        const double e = error[static_cast<std::size_t>(i)], er = random_error[static_cast<std::size_t>(i)];
        const double info = er > 0 ? std::clamp(1.0 - e / er, 0.0, 1.0) : (e <= 0 ? 1.0 : 0.0);
        res.per_factor_informativeness.push_back(info);
        i_terms.push_back(info);
    }
    res.disentanglement = std::clamp(order_free_sum(weighted), 0.0, 1.0);
    res.completeness = std::clamp(order_free_sum(c_terms) / m, 0.0, 1.0);
    res.informativeness = std::clamp(order_free_sum(i_terms) / m, 0.0, 1.0);
    return res;
}

// ---------------------------------------------------------------------------

nlohmann::json MetricConfig::to_json() const {
    return {{"bins", bins},
            {"mig_denominator", to_string(mig_denominator)},
            {"factor_vae", {{"n_votes", factor_vae.n_votes}, {"subset_size", factor_vae.subset_size},
                            {"prune_fraction", factor_vae.prune_fraction}, {"std_reference", "full sample"}}},
            {"sap_split", sap_split},
            {"dci", {{"importance", to_string(dci.importance)},
                     {"n_trees", dci.forest.n_trees},
                     {"max_depth", dci.forest.max_depth},
                     {"min_leaf", dci.forest.min_leaf},
                     {"l1_alpha", dci.lasso.alpha},
                     {"test_fraction", dci.test_fraction}}},
            {"min_rows", min_rows}};
}

MetricConfig MetricConfig::from_json(const nlohmann::json& j) {
    MetricConfig c;
    try {
        c.bins = j.value("bins", c.bins);
        c.mig_denominator = mig_denominator_from_string(j.value("mig_denominator", to_string(c.mig_denominator)));
        if (j.contains("factor_vae")) {
            const auto& f = j["factor_vae"];
            c.factor_vae.n_votes = f.value("n_votes", c.factor_vae.n_votes);
            c.factor_vae.subset_size = f.value("subset_size", c.factor_vae.subset_size);
            c.factor_vae.prune_fraction = f.value("prune_fraction", c.factor_vae.prune_fraction);
        }
        c.sap_split = j.value("sap_split", c.sap_split);
        if (j.contains("dci")) {
            const auto& d = j["dci"];
            c.dci.importance = importance_kind_from_string(d.value("importance", to_string(c.dci.importance)));
            c.dci.forest.n_trees = d.value("n_trees", c.dci.forest.n_trees);
            c.dci.forest.max_depth = d.value("max_depth", c.dci.forest.max_depth);
            c.dci.forest.min_leaf = d.value("min_leaf", c.dci.forest.min_leaf);
            c.dci.lasso.alpha = d.value("l1_alpha", c.dci.lasso.alpha);
            c.dci.test_fraction = d.value("test_fraction", c.dci.test_fraction);
        }
        c.min_rows = j.value("min_rows", c.min_rows);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed metric config: ") + e.what());
    }
    return c;
}

const std::vector<std::string>& MetricReport::scalar_names() {
    static const std::vector<std::string> names{"factor_vae_score",    "dci_disentanglement", "dci_completeness",
                                                "dci_informativeness", "mig",                 "sap"};
    return names;
}

double MetricReport::scalar(const std::string& name) const {
    if (name == "mig") return mig;
    if (name == "factor_vae_score") return factor_vae_score;
    if (name == "sap") return sap;
    if (name == "dci_disentanglement") return dci_disentanglement;
    if (name == "dci_completeness") return dci_completeness;
    if (name == "dci_informativeness") return dci_informativeness;
    throw ConfigError("unknown metric '" + name + "'");
}

nlohmann::json MetricReport::to_json() const {
    return {{"mig", mig},
            {"factor_vae_score", factor_vae_score},
            {"sap", sap},
            {"dci_disentanglement", dci_disentanglement},
            {"dci_completeness", dci_completeness},
            {"dci_informativeness", dci_informativeness},
            {"detail", detail}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
    MetricReport r;
    try {
        r.mig = j.at("mig").get<double>();
        r.factor_vae_score = j.at("factor_vae_score").get<double>();
        r.sap = j.at("sap").get<double>();
        r.dci_disentanglement = j.at("dci_disentanglement").get<double>();
        r.dci_completeness = j.at("dci_completeness").get<double>();
        r.dci_informativeness = j.at("dci_informativeness").get<double>();
        r.detail = j.value("detail", nlohmann::json::object());
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed metric report: ") + e.what());
    }
    return r;
}

namespace {

template <typename F>
auto named(const char* metric, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const NumericError& e) {
        throw NumericError(std::string(metric) + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError(std::string(metric) + ": " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(metric) + ": " + e.what());
    }
}

nlohmann::json nan_to_null(const std::vector<double>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (double x : v) a.push_back(std::isnan(x) ? nlohmann::json() : nlohmann::json(x));
    return a;
}

}  // namespace

MetricReport full_report(const RepresentationSample& s, const MetricConfig& cfg, std::uint64_t seed) {
    s.validate(cfg.min_rows);
    MetricReport rep;
    const auto m = named("mig", [&] { return mig(s, cfg.bins, cfg.mig_denominator); });
    const auto f = named("factor_vae_score", [&] { return factor_vae_score(s, cfg.factor_vae, derive_seed(seed, "factor_vae")); });
    const auto sp = named("sap", [&] { return sap(s, cfg.sap_split, derive_seed(seed, "sap")); });
    const auto imp = named("dci", [&] { return estimate_importances(s, cfg.dci, derive_seed(seed, "dci")); });
    const auto dci = named("dci", [&] { return dci_from_importances(imp.r, imp.error, imp.random_error); });
    rep.mig = m.score;
    rep.factor_vae_score = f.score;
    rep.sap = sp.score;
    rep.dci_disentanglement = dci.disentanglement;
    rep.dci_completeness = dci.completeness;
    rep.dci_informativeness = dci.informativeness;
    std::vector<std::string> warnings = m.warnings;
    warnings.insert(warnings.end(), sp.warnings.begin(), sp.warnings.end());
    rep.detail = {{"config", cfg.to_json()},
                  {"seed", seed},
                  {"n", s.n()},
                  {"latent_dim", s.d()},
                  {"n_factors", s.m()},
                  {"provenance", s.provenance},
                  {"mig", {{"factor_terms", m.factor_terms}, {"mi", m.mi.to_json()}}},
                  {"factor_vae", {{"votes", f.votes.to_json()}, {"global_std", f.global_std}, {"active_dims", f.active_dims}}},
                  {"sap", {{"s", sp.s.to_json()}, {"gaps", nan_to_null(sp.gaps)}, {"skipped", sp.skipped}}},
                  {"dci", {{"importance", imp.r.to_json()},
                           {"importance_axes", "rows = latents, columns = factors"},
                           {"error", imp.error},
                           {"random_error", imp.random_error},
                           {"per_latent_disentanglement", dci.per_latent_disentanglement},
                           {"per_factor_completeness", dci.per_factor_completeness},
                           {"per_factor_informativeness", dci.per_factor_informativeness}}},
                  {"warnings", warnings}};
    return rep;
}

}  // namespace hardshare
