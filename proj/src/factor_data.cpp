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

#include "hardshare/factor_data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "hardshare/errors.hpp"
#include "hardshare/random.hpp"

namespace hardshare {

std::string to_string(FactorKind k) { return k == FactorKind::categorical ? "categorical" : "ordered"; }

FactorKind factor_kind_from_string(const std::string& s) {
    if (s == "categorical") return FactorKind::categorical;
    if (s == "ordered") return FactorKind::ordered;
    throw ConfigError("unknown factor kind '" + s + "'");
}

FactorSpace::FactorSpace(std::vector<Factor> factors) : factors_(std::move(factors)) {
    if (factors_.empty()) throw ConfigError("factor space needs at least one factor");
    combinations_ = 1;
    for (const auto& f : factors_) {
        if (f.cardinality() < 2) throw ConfigError("factor '" + f.name + "' needs at least 2 levels");
        if (f.kind == FactorKind::ordered) {
            for (std::size_t i = 1; i < f.values.size(); ++i)
                if (!(f.values[i] > f.values[i - 1]))
                    throw ConfigError("ordered factor '" + f.name + "' grid is not strictly increasing");
        }
        combinations_ *= static_cast<std::size_t>(f.cardinality());
    }
}

std::vector<int> FactorSpace::cardinalities() const {
    std::vector<int> k;
    for (const auto& f : factors_) k.push_back(f.cardinality());
    return k;
}

std::vector<int> FactorSpace::decode(std::size_t flat) const {
    if (flat >= combinations_)
        throw ConfigError("flat index " + std::to_string(flat) + " out of range [0, " +
                          std::to_string(combinations_) + ")");
    std::vector<int> idx(factors_.size());
    for (std::size_t j = factors_.size(); j-- > 0;) {
        const auto k = static_cast<std::size_t>(factors_[j].cardinality());
        idx[j] = static_cast<int>(flat % k);
        flat /= k;
    }
    return idx;
}

std::size_t FactorSpace::encode(std::span<const int> idx) const {
    if (idx.size() != factors_.size()) throw ConfigError("multi-index has wrong number of factors");
    std::size_t flat = 0;
    for (std::size_t j = 0; j < factors_.size(); ++j) {
        const int k = factors_[j].cardinality();
        if (idx[j] < 0 || idx[j] >= k)
            throw ConfigError("level " + std::to_string(idx[j]) + " out of range for factor '" +
                              factors_[j].name + "'");
        flat = flat * static_cast<std::size_t>(k) + static_cast<std::size_t>(idx[j]);
    }
    return flat;
}

nlohmann::json FactorSpace::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& f : factors_)
        arr.push_back({{"name", f.name}, {"kind", to_string(f.kind)}, {"values", f.values}});
    return arr;
}

FactorSpace FactorSpace::from_json(const nlohmann::json& j) {
    std::vector<Factor> fs;
    try {
        for (const auto& jf : j)
            fs.push_back({jf.at("name").get<std::string>(), factor_kind_from_string(jf.at("kind").get<std::string>()),
                          jf.at("values").get<std::vector<double>>()});
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed factor space: ") + e.what());
    }
    return FactorSpace(std::move(fs));
}

bool operator==(const FactorSpace& a, const FactorSpace& b) {
    if (a.factors_.size() != b.factors_.size()) return false;
    for (std::size_t i = 0; i < a.factors_.size(); ++i) {
        const auto& x = a.factors_[i];
        const auto& y = b.factors_[i];
        if (x.name != y.name || x.kind != y.kind || x.values != y.values) return false;
    }
    return true;
}

std::vector<double> centered_grid(int k) {
    std::vector<double> v(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) v[static_cast<std::size_t>(i)] = k == 1 ? 0.0 : -1.0 + 2.0 * i / (k - 1);
    return v;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> LabeledDataset::rows(Split which) const {
    std::vector<std::size_t> r;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (split[i] == which) r.push_back(i);
    return r;
}

Tensor LabeledDataset::factor_value_tensor(std::span<const std::size_t> rws) const {
    const std::size_t m = factor_dim();
    Tensor t({static_cast<int>(rws.size()), static_cast<int>(m)});
    for (std::size_t r = 0; r < rws.size(); ++r)
        for (std::size_t j = 0; j < m; ++j) t[r * m + j] = factor_values[rws[r] * m + j];
    return t;
}

Tensor LabeledDataset::factor_value_tensor() const {
    std::vector<std::size_t> all(size());
    std::iota(all.begin(), all.end(), 0);
    return factor_value_tensor(all);
}

void LabeledDataset::validate() const {
    const std::size_t n = size();
    const std::size_t m = factor_dim();
    if (n == 0) throw DataError("dataset is empty");
    if (images.rank() != 4 || static_cast<std::size_t>(images.dim(0)) != n)
        throw DataError("images must have shape (N,C,H,W) with N = " + std::to_string(n));
    if (factor_values.size() != n * m || factor_indices.size() != n * m)
        throw DataError("factor matrices do not have N x m entries");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            const int k = factor_indices[i * m + j];
            if (k < 0 || k >= space[j].cardinality()) throw DataError("factor index out of range");
            if (factor_values[i * m + j] != static_cast<float>(space[j].values[static_cast<std::size_t>(k)]))
                throw DataError("factor value disagrees with its index at row " + std::to_string(i));
        }
    for (float v : images.storage())
        if (!(v >= 0.0f && v <= 1.0f)) throw DataError("image entries must lie in [0, 1]");
}

void assign_split(LabeledDataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw ConfigError("test_fraction must lie strictly between 0 and 1");
    const std::size_t n = ds.size();
    const std::size_t m = ds.factor_dim();
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
    if (n_test == 0 || n_test >= n) throw ConfigError("test_fraction leaves one side of the split empty");

    const std::uint64_t base = derive_seed(seed, "split");
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t h = base;
        for (std::size_t j = 0; j < m; ++j) h = mix64(h ^ static_cast<std::uint64_t>(ds.factor_indices[i * m + j]));
        keyed[i] = {h, i};
    }
    std::sort(keyed.begin(), keyed.end());
    ds.split.assign(n, Split::train);
    for (std::size_t r = 0; r < n_test; ++r) ds.split[keyed[r].second] = Split::test;

    for (std::size_t j = 0; j < m; ++j) {
        const auto k = static_cast<std::size_t>(ds.space[j].cardinality());
        std::vector<char> in_train(k, 0), in_test(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto level = static_cast<std::size_t>(ds.factor_indices[i * m + j]);
            (ds.split[i] == Split::test ? in_test : in_train)[level] = 1;
        }
        const bool ok = std::all_of(in_train.begin(), in_train.end(), [](char c) { return c; }) &&
                        std::all_of(in_test.begin(), in_test.end(), [](char c) { return c; });
        if (!ok)
            throw ConfigError("test_fraction " + std::to_string(test_fraction) +
                              " is too small for both splits to cover every level of factor '" +
                              ds.space[j].name + "'");
    }
    ds.provenance["split"] = {{"test_fraction", test_fraction}, {"seed", seed}};
}

DtbContainer dataset_to_dtb(const LabeledDataset& ds) {
    const int n = static_cast<int>(ds.size());
    const int m = static_cast<int>(ds.factor_dim());
    DtbContainer c;
    c.manifest = {{"kind", "dataset"}, {"factor_space", ds.space.to_json()}, {"provenance", ds.provenance}};
    c.add_f32("images", ds.images);
    c.add_f32("factor_values", Tensor({n, m}, ds.factor_values));
    c.add_i32("factor_indices", {n, m}, ds.factor_indices);
    std::vector<std::uint8_t> tags(ds.split.size());
    std::transform(ds.split.begin(), ds.split.end(), tags.begin(), [](Split s) { return static_cast<std::uint8_t>(s); });
    c.add_u8("split", {n}, tags);
    return c;
}

LabeledDataset dataset_from_dtb(const DtbContainer& c) {
    if (c.manifest.value("kind", "") != "dataset") throw DataError("DTB container is not a dataset");
    LabeledDataset ds;
    ds.space = FactorSpace::from_json(c.manifest.at("factor_space"));
    ds.provenance = c.manifest.value("provenance", nlohmann::json::object());
    ds.images = c.get_f32("images");
    const Tensor fv = c.get_f32("factor_values");
    ds.factor_values.assign(fv.storage().begin(), fv.storage().end());
    ds.factor_indices = c.get_i32("factor_indices");
    for (std::uint8_t t : c.get_u8("split")) {
        if (t > 1) throw DataError("split tag must be 0 (train) or 1 (test)");
        ds.split.push_back(static_cast<Split>(t));
    }
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// MiniSprites

nlohmann::json MiniSpritesProfile::to_json() const {
    return {{"image_size", image_size},   {"scales", scales},         {"orientations", orientations},
            {"positions_x", positions_x}, {"positions_y", positions_y}, {"min_scale", min_scale},
            {"max_scale", max_scale},     {"supersample", supersample}, {"test_fraction", test_fraction}};
}

MiniSpritesProfile MiniSpritesProfile::from_json(const nlohmann::json& j) {
    MiniSpritesProfile p;
    p.image_size = j.value("image_size", p.image_size);
    p.scales = j.value("scales", p.scales);
    p.orientations = j.value("orientations", p.orientations);
    p.positions_x = j.value("positions_x", p.positions_x);
    p.positions_y = j.value("positions_y", p.positions_y);
    p.min_scale = j.value("min_scale", p.min_scale);
    p.max_scale = j.value("max_scale", p.max_scale);
    p.supersample = j.value("supersample", p.supersample);
    p.test_fraction = j.value("test_fraction", p.test_fraction);
    return p;
}

namespace {

bool inside(SpriteShape shape, double u, double v, double r) {
    switch (shape) {
        case SpriteShape::square: return std::abs(u) <= r && std::abs(v) <= r;
        case SpriteShape::disc: return u * u + v * v <= r * r;
        case SpriteShape::triangle: {
            // Equilateral, apex up, circumradius r: three half-planes at inradius r/2.
            constexpr double c30 = 0.86602540378443864676;
            const double h = 0.5 * r;
            return -v <= h && (c30 * u + 0.5 * v) <= h && (-c30 * u + 0.5 * v) <= h;
        }
    }
    return false;
}

double extent_factor(SpriteShape s) { return s == SpriteShape::square ? std::numbers::sqrt2 : 1.0; }

}  // namespace

std::vector<float> render_sprite(const SpriteGeometry& g, int size, int supersample) {
    if (size < 1 || supersample < 1) throw ConfigError("render_sprite: size and supersample must be >= 1");
    std::vector<float> img(static_cast<std::size_t>(size) * size, 0.0f);
    const double ext = g.radius * extent_factor(g.shape) + 1.0;
    const int x0 = std::max(0, static_cast<int>(std::floor(g.center_x - ext)));
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil(g.center_x + ext)));
    const int y0 = std::max(0, static_cast<int>(std::floor(g.center_y - ext)));
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil(g.center_y + ext)));
    const double ca = std::cos(g.angle), sa = std::sin(g.angle);
    const double inv = 1.0 / (supersample * supersample);
    for (int i = y0; i <= y1; ++i) {
        for (int j = x0; j <= x1; ++j) {
            int hits = 0;
            for (int a = 0; a < supersample; ++a) {
                const double dy = i + (a + 0.5) / supersample - g.center_y;
                for (int b = 0; b < supersample; ++b) {
                    const double dx = j + (b + 0.5) / supersample - g.center_x;
                    const double u = ca * dx + sa * dy;
                    const double v = -sa * dx + ca * dy;
                    hits += inside(g.shape, u, -v, g.radius);  // -v: image rows grow downwards
                }
            }
            img[static_cast<std::size_t>(i) * size + j] = static_cast<float>(hits * inv);
        }
    }
    return img;
}

FactorSpace minisprites_space(const MiniSpritesProfile& p) {
    return FactorSpace({{"shape", FactorKind::categorical, {-1.0, 0.0, 1.0}},
                        {"scale", FactorKind::ordered, centered_grid(p.scales)},
                        {"orientation", FactorKind::ordered, centered_grid(p.orientations)},
                        {"pos_x", FactorKind::ordered, centered_grid(p.positions_x)},
                        {"pos_y", FactorKind::ordered, centered_grid(p.positions_y)}});
}

namespace {

double sprite_radius(const MiniSpritesProfile& p, int level) {
    const double t = p.scales == 1 ? 0.0 : static_cast<double>(level) / (p.scales - 1);
    return p.image_size * (p.min_scale + t * (p.max_scale - p.min_scale));
}

double max_extent(const MiniSpritesProfile& p) { return sprite_radius(p, p.scales - 1) * std::numbers::sqrt2; }

double position(const MiniSpritesProfile& p, int level, int count) {
    const double margin = max_extent(p) + 0.5;
    const double lo = margin, hi = p.image_size - margin;
    return count == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * level / (count - 1);
}

}  // namespace

void check_minisprites_profile(const MiniSpritesProfile& p) {
    if (p.image_size != 16 && p.image_size != 32 && p.image_size != 64)
        throw ConfigError("MiniSprites image_size must be 16, 32 or 64");
    if (p.scales < 2 || p.orientations < 2 || p.positions_x < 2 || p.positions_y < 2)
        throw ConfigError("every MiniSprites factor needs at least 2 levels");
    if (p.supersample < 1) throw ConfigError("supersample must be >= 1");
    if (!(p.min_scale > 0.0 && p.max_scale > p.min_scale))
        throw ConfigError("MiniSprites scales need 0 < min_scale < max_scale");
    if (sprite_radius(p, 0) < 1.0) throw ConfigError("smallest sprite is under one pixel");
    const double span = p.image_size - 2.0 * (max_extent(p) + 0.5);
    const int steps = std::max(p.positions_x, p.positions_y) - 1;
    if (span <= 0.0 || span / steps < 0.5)
        throw ConfigError("infeasible MiniSprites geometry: the largest sprite cannot take " +
                          std::to_string(steps + 1) + " distinct positions inside a " +
                          std::to_string(p.image_size) + "px frame");
}

SpriteGeometry minisprites_geometry(const MiniSpritesProfile& p, std::span<const int> idx) {
    if (idx.size() != 5) throw ConfigError("MiniSprites factor index needs 5 entries");
    SpriteGeometry g;
    g.shape = static_cast<SpriteShape>(idx[0]);
    g.radius = sprite_radius(p, idx[1]);
    g.angle = idx[2] * (std::numbers::pi / 2.0) / p.orientations;
    g.center_x = position(p, idx[3], p.positions_x);
    g.center_y = position(p, idx[4], p.positions_y);
    return g;
}

LabeledDataset make_minisprites(const MiniSpritesProfile& p, std::uint64_t seed) {
    check_minisprites_profile(p);
    LabeledDataset ds;
    ds.space = minisprites_space(p);
    const std::size_t n = ds.space.combinations();
    const std::size_t m = ds.space.size();
    const int s = p.image_size;
    const std::size_t plane = static_cast<std::size_t>(s) * s;
    ds.images = Tensor({static_cast<int>(n), 1, s, s});
    ds.factor_values.resize(n * m);
    ds.factor_indices.resize(n * m);
    for (std::size_t r = 0; r < n; ++r) {
        const auto idx = ds.space.decode(r);
        for (std::size_t j = 0; j < m; ++j) {
            ds.factor_indices[r * m + j] = idx[j];
            ds.factor_values[r * m + j] = static_cast<float>(ds.space[j].values[static_cast<std::size_t>(idx[j])]);
        }
        const auto img = render_sprite(minisprites_geometry(p, idx), s, p.supersample);
        std::copy(img.begin(), img.end(), ds.images.data() + r * plane);
    }
    ds.split.assign(n, Split::train);
    ds.provenance = {{"generator", "minisprites"}, {"profile", p.to_json()}, {"seed", seed}};
    assign_split(ds, p.test_fraction, seed);
    return ds;
}

}  // namespace hardshare
