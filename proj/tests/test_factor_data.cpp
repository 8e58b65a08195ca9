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
#include <numbers>
#include <set>

#include "hardshare/errors.hpp"
#include "hardshare/factor_data.hpp"
#include "hardshare/random.hpp"

using namespace hardshare;

namespace {

const LabeledDataset& desk_dataset() {
    static const LabeledDataset ds = make_minisprites(MiniSpritesProfile{}, 1);
    return ds;
}

}  // namespace

TEST_CASE("default profile is the full 6144-example grid") {
    const LabeledDataset& ds = desk_dataset();
    CHECK(ds.size() == 6144);
    CHECK(ds.images.shape() == Shape{6144, 1, 32, 32});
    CHECK(ds.space.cardinalities() == std::vector<int>{3, 4, 8, 8, 8});
    CHECK_NOTHROW(ds.validate());

    std::set<std::vector<int>> seen;
    for (std::size_t r = 0; r < ds.size(); ++r)
        seen.insert(std::vector<int>(ds.factor_indices.begin() + static_cast<std::ptrdiff_t>(r * 5),
                                     ds.factor_indices.begin() + static_cast<std::ptrdiff_t>(r * 5 + 5)));
    CHECK(seen.size() == 6144);
    bool in_range = true;
    for (float v : ds.images.storage()) in_range = in_range && v >= 0.0f && v <= 1.0f;
    CHECK(in_range);
}

TEST_CASE("factor values follow the index grids") {
    const LabeledDataset& ds = desk_dataset();
    const std::size_t m = ds.factor_dim();
    for (std::size_t r = 0; r < ds.size(); r += 37)
        for (std::size_t j = 0; j < m; ++j)
            CHECK(ds.factor_values[r * m + j] ==
                  static_cast<float>(ds.space[j].values[static_cast<std::size_t>(ds.factor_indices[r * m + j])]));
    CHECK(ds.space[0].kind == FactorKind::categorical);
    CHECK(ds.space[0].values == std::vector<double>{-1.0, 0.0, 1.0});
    CHECK(centered_grid(5) == std::vector<double>{-1.0, -0.5, 0.0, 0.5, 1.0});
}

TEST_CASE("generation is deterministic and re-rendering reproduces each image") {
    MiniSpritesProfile p;
    p.image_size = 16;
    p.scales = 2;
    p.orientations = 2;
    p.positions_x = 4;
    p.positions_y = 4;
    p.min_scale = 0.16;
    p.max_scale = 0.22;
    const LabeledDataset a = make_minisprites(p, 3), b = make_minisprites(p, 3);
    CHECK(a.images == b.images);
    CHECK(a.split == b.split);
    const std::size_t m = a.factor_dim(), px = 16 * 16;
    std::size_t mismatches = 0;
    for (std::size_t r = 0; r < a.size(); ++r) {
        std::vector<int> idx(a.factor_indices.begin() + static_cast<std::ptrdiff_t>(r * m),
                             a.factor_indices.begin() + static_cast<std::ptrdiff_t>(r * m + m));
        const auto img = render_sprite(minisprites_geometry(p, idx), 16, p.supersample);
        for (std::size_t i = 0; i < px; ++i) mismatches += img[i] != a.images[r * px + i];
    }
    CHECK(mismatches == 0);
}

TEST_CASE("disc pixel mass is within 5% of pi r^2") {
    for (double r : {4.0, 5.5, 8.0, 12.0}) {
        SpriteGeometry g;
        g.shape = SpriteShape::disc;
        g.center_x = g.center_y = 32.0;
        g.radius = r;
        double mass = 0.0;
        for (float v : render_sprite(g, 64, 4)) mass += v;
        CHECK(std::abs(mass - std::numbers::pi * r * r) <= 0.05 * std::numbers::pi * r * r);
    }
}

TEST_CASE("sprites that leave the canvas are rejected") {
    MiniSpritesProfile p;
    p.max_scale = 0.45;
    CHECK_THROWS_AS(check_minisprites_profile(p), ConfigError);
    CHECK_THROWS_AS(make_minisprites(p, 1), ConfigError);
}

TEST_CASE("mixed-radix bijection") {
    const FactorSpace& s = desk_dataset().space;
    CHECK(s.decode(0) == std::vector<int>(5, 0));
    CHECK(s.decode(s.combinations() - 1) == std::vector<int>{2, 3, 7, 7, 7});
    Rng rng(9);
    for (int i = 0; i < 1000; ++i) {
        const std::size_t f = rng.below(s.combinations());
        CHECK(s.encode(s.decode(f)) == f);
    }
    CHECK_THROWS(s.decode(s.combinations()));
}

TEST_CASE("split sizes, coverage and seeds") {
    LabeledDataset ds = desk_dataset();
    assign_split(ds, 0.1, 4);
    const auto test = ds.rows(Split::test);
    CHECK((test.size() == 614 || test.size() == 615));
    for (std::size_t j = 0; j < ds.factor_dim(); ++j) {
        std::set<int> levels;
        for (std::size_t r : test) levels.insert(ds.factor_indices[r * ds.factor_dim() + j]);
        CHECK(static_cast<int>(levels.size()) == ds.space[j].cardinality());
    }
    LabeledDataset other = desk_dataset();
    assign_split(other, 0.1, 5);
    CHECK(other.split != ds.split);
    CHECK_THROWS_AS(assign_split(ds, 0.0005, 4), ConfigError);
}

TEST_CASE("dataset container round trip") {
    const LabeledDataset& ds = desk_dataset();
    const DtbContainer c = dataset_to_dtb(ds);
    const auto bytes = c.serialize();
    const DtbContainer back = DtbContainer::parse(bytes);
    CHECK(back == c);
    CHECK(back.serialize() == bytes);
    const LabeledDataset ds2 = dataset_from_dtb(back);
    CHECK(ds2.images == ds.images);
    CHECK(ds2.factor_values == ds.factor_values);
    CHECK(ds2.factor_indices == ds.factor_indices);
    CHECK(ds2.split == ds.split);
    CHECK(ds2.space == ds.space);
}

TEST_CASE("corrupt magic is reported at offset 0") {
    auto bytes = dataset_to_dtb(desk_dataset()).serialize();
    bytes[0] = 'X';
    try {
        DtbContainer::parse(bytes);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.offset() == 0);
    }
}
