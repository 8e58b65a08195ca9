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

// DTB container: every artifact the pipeline persists (datasets, task banks,
// target matrices, trained models) is one of these files.
//
//   bytes 0..3   magic "DTB1"
//   bytes 4..7   header length L, unsigned 32-bit little-endian
//   bytes 8..    L bytes of UTF-8 JSON:
//                  {"entries": [{"name", "dtype", "shape", "byte_offset",
//                                "byte_length", "fnv1a64"}, ...],
//                   "manifest": {...},
//                   "header_fnv1a64": checksum of the header without this key}
//   then         payload: the entry arrays, row-major little-endian,
//                concatenated; byte_offset is relative to payload start.
//
// A file is accepted only if the payload is exactly covered by the entries
// (no gaps, no overlap, no trailing bytes), every checksum matches and no
// unknown key appears. Checksums are optional for externally produced files.

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "hardshare/tensor.hpp"

namespace hardshare {

enum class DType { f32, i32, u8 };

std::string to_string(DType t);
std::size_t dtype_size(DType t);

struct DtbEntry {
    std::string name;
    DType dtype = DType::f32;
    Shape shape;
    std::vector<std::uint8_t> bytes;
};

class DtbContainer {
public:
    nlohmann::json manifest = nlohmann::json::object();

    void add_f32(const std::string& name, const Tensor& t);
    void add_i32(const std::string& name, const Shape& shape, std::span<const std::int32_t> values);
    void add_u8(const std::string& name, const Shape& shape, std::span<const std::uint8_t> values);

    bool has(const std::string& name) const;
    const DtbEntry& entry(const std::string& name) const;
    const std::vector<DtbEntry>& entries() const noexcept { return entries_; }

    Tensor get_f32(const std::string& name) const;
    std::vector<std::int32_t> get_i32(const std::string& name) const;
    std::vector<std::uint8_t> get_u8(const std::string& name) const;

    std::vector<std::uint8_t> serialize() const;
    static DtbContainer parse(std::span<const std::uint8_t> bytes);

    friend bool operator==(const DtbContainer& a, const DtbContainer& b);

private:
    void add(DtbEntry e);
    std::vector<DtbEntry> entries_;
};

/// Writes to a temporary sibling and renames over `path`, so readers only
/// ever see a complete file or none.
void write_dtb(const std::filesystem::path& path, const DtbContainer& c);
DtbContainer read_dtb(const std::filesystem::path& path);

/// Atomic text write, same discipline as write_dtb.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

std::string hex64(std::uint64_t v);

}  // namespace hardshare
