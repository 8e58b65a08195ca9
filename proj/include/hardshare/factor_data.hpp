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
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "hardshare/dtb.hpp"
#include "hardshare/tensor.hpp"

namespace hardshare {

enum class FactorKind { categorical, ordered };

std::string to_string(FactorKind k);
FactorKind factor_kind_from_string(const std::string& s);

struct Factor {
    std::string name;
    FactorKind kind = FactorKind::ordered;
    std::vector<double> values;  // value grid, one entry per level

    int cardinality() const noexcept { return static_cast<int>(values.size()); }
};

/// Ordered list of generative factors. Flat indices enumerate the full
/// Cartesian product in mixed radix, last factor fastest.
class FactorSpace {
public:
    FactorSpace() = default;
    explicit FactorSpace(std::vector<Factor> factors);

    const std::vector<Factor>& factors() const noexcept { return factors_; }
    const Factor& operator[](std::size_t i) const { return factors_.at(i); }
    std::size_t size() const noexcept { return factors_.size(); }
    std::vector<int> cardinalities() const;
    std::size_t combinations() const noexcept { return combinations_; }

    std::vector<int> decode(std::size_t flat_index) const;
    std::size_t encode(std::span<const int> multi_index) const;

    nlohmann::json to_json() const;
    static FactorSpace from_json(const nlohmann::json& j);

    friend bool operator==(const FactorSpace& a, const FactorSpace& b);

private:
    std::vector<Factor> factors_;
    std::size_t combinations_ = 0;
};

/// Uniform grid of k values on [-1, 1].
std::vector<double> centered_grid(int k);

enum class Split : std::uint8_t { train = 0, test = 1 };

/// Paired observations and ground-truth factors.
struct LabeledDataset {
    FactorSpace space;
    Tensor images;                            // (N, C, H, W), entries in [0, 1]
    std::vector<float> factor_values;         // N x m, row-major
    std::vector<std::int32_t> factor_indices; // N x m, row-major
    std::vector<Split> split;                 // N tags
    nlohmann::json provenance = nlohmann::json::object();

    std::size_t size() const noexcept { return split.size(); }
    std::size_t factor_dim() const noexcept { return space.size(); }
    std::vector<std::size_t> rows(Split which) const;

    /// (rows.size(), m) tensor of factor values for the given rows.
    Tensor factor_value_tensor(std::span<const std::size_t> rows) const;
    Tensor factor_value_tensor() const;

    /// Throws DataError if any structural invariant is violated.
    void validate() const;
};

/// Deterministic partition: each example's tag is a pure function of
/// (seed, factor_indices). Both parts must cover every level of every
/// factor, otherwise ConfigError.
void assign_split(LabeledDataset& ds, double test_fraction, std::uint64_t seed);

DtbContainer dataset_to_dtb(const LabeledDataset& ds);
LabeledDataset dataset_from_dtb(const DtbContainer& c);

// ---------------------------------------------------------------------------
// MiniSprites: procedural 2-D sprites over the grid
//   shape (square, disc, triangle) x scale x orientation x pos_x x pos_y.

enum class SpriteShape { square = 0, disc = 1, triangle = 2 };

struct MiniSpritesProfile {
    int image_size = 32;  // one of 16, 32, 64
    int scales = 4;
    int orientations = 8;
    int positions_x = 8;
    int positions_y = 8;
    double min_scale = 0.10;   // sprite radius as a fraction of the canvas
    double max_scale = 0.18;
    int supersample = 4;       // subsamples per axis per pixel
    double test_fraction = 0.2;

    nlohmann::json to_json() const;
    static MiniSpritesProfile from_json(const nlohmann::json& j);
};

struct SpriteGeometry {
    SpriteShape shape = SpriteShape::square;
    double center_x = 0.0;  // pixel units, (0,0) is the top-left corner
    double center_y = 0.0;
    double radius = 0.0;    // half side (square), radius (disc), circumradius (triangle)
    double angle = 0.0;     // radians
};

/// Coverage-rendered grayscale canvas of one sprite, size x size, row-major.
std::vector<float> render_sprite(const SpriteGeometry& g, int size, int supersample);

FactorSpace minisprites_space(const MiniSpritesProfile& p);
/// Validates the canvas geometry; throws ConfigError if a sprite can leave the frame.
void check_minisprites_profile(const MiniSpritesProfile& p);
SpriteGeometry minisprites_geometry(const MiniSpritesProfile& p, std::span<const int> factor_index);
LabeledDataset make_minisprites(const MiniSpritesProfile& p, std::uint64_t seed);

}  // namespace hardshare
