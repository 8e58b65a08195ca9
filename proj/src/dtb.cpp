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

#include "hardshare/dtb.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string_view>
#include <unistd.h>

#include "hardshare/errors.hpp"
#include "hardshare/random.hpp"

static_assert(std::endian::native == std::endian::little, "DTB I/O assumes a little-endian host");

namespace hardshare {

namespace {

constexpr char kMagic[4] = {'D', 'T', 'B', '1'};
constexpr std::size_t kPrefix = 8;

std::uint64_t checksum(std::span<const std::uint8_t> bytes) {
    return fnv1a64(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

DType parse_dtype(const std::string& s, std::size_t offset) {
    if (s == "f32") return DType::f32;
    if (s == "i32") return DType::i32;
    if (s == "u8") return DType::u8;
    throw ParseError("unknown dtype '" + s + "'", offset);
}

}  // namespace

std::string to_string(DType t) {
    switch (t) {
        case DType::f32: return "f32";
        case DType::i32: return "i32";
        case DType::u8: return "u8";
    }
    return "?";
}

std::size_t dtype_size(DType t) { return t == DType::u8 ? 1 : 4; }

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void DtbContainer::add(DtbEntry e) {
    if (e.name.empty()) throw ConfigError("DTB entry name must not be empty");
    if (has(e.name)) throw ConfigError("duplicate DTB entry '" + e.name + "'");
    if (shape_size(e.shape) * dtype_size(e.dtype) != e.bytes.size())
        throw ConfigError("DTB entry '" + e.name + "' size does not match shape");
    entries_.push_back(std::move(e));
}

void DtbContainer::add_f32(const std::string& name, const Tensor& t) {
    DtbEntry e{name, DType::f32, t.shape(), {}};
    e.bytes.resize(t.size() * 4);
    std::memcpy(e.bytes.data(), t.data(), e.bytes.size());
    add(std::move(e));
}

void DtbContainer::add_i32(const std::string& name, const Shape& shape, std::span<const std::int32_t> values) {
    DtbEntry e{name, DType::i32, shape, {}};
    e.bytes.resize(values.size() * 4);
    std::memcpy(e.bytes.data(), values.data(), e.bytes.size());
    add(std::move(e));
}

void DtbContainer::add_u8(const std::string& name, const Shape& shape, std::span<const std::uint8_t> values) {
    add({name, DType::u8, shape, std::vector<std::uint8_t>(values.begin(), values.end())});
}

bool DtbContainer::has(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const DtbEntry& e) { return e.name == name; });
}

const DtbEntry& DtbContainer::entry(const std::string& name) const {
    for (const auto& e : entries_)
        if (e.name == name) return e;
    throw DataError("DTB container has no entry '" + name + "'");
}

Tensor DtbContainer::get_f32(const std::string& name) const {
    const DtbEntry& e = entry(name);
    if (e.dtype != DType::f32) throw DataError("DTB entry '" + name + "' is " + to_string(e.dtype) + ", not f32");
    Tensor t(e.shape);
    std::memcpy(t.data(), e.bytes.data(), e.bytes.size());
    return t;
}

std::vector<std::int32_t> DtbContainer::get_i32(const std::string& name) const {
    const DtbEntry& e = entry(name);
    if (e.dtype != DType::i32) throw DataError("DTB entry '" + name + "' is " + to_string(e.dtype) + ", not i32");
    std::vector<std::int32_t> v(e.bytes.size() / 4);
    std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
    return v;
}

std::vector<std::uint8_t> DtbContainer::get_u8(const std::string& name) const {
    const DtbEntry& e = entry(name);
    if (e.dtype != DType::u8) throw DataError("DTB entry '" + name + "' is " + to_string(e.dtype) + ", not u8");
    return e.bytes;
}

std::vector<std::uint8_t> DtbContainer::serialize() const {
    nlohmann::json header;
    header["entries"] = nlohmann::json::array();
    std::size_t offset = 0;
    for (const auto& e : entries_) {
        header["entries"].push_back({{"name", e.name},
                                     {"dtype", to_string(e.dtype)},
                                     {"shape", e.shape},
                                     {"byte_offset", offset},
                                     {"byte_length", e.bytes.size()},
                                     {"fnv1a64", hex64(checksum(e.bytes))}});
        offset += e.bytes.size();
    }
    header["manifest"] = manifest;
    header["header_fnv1a64"] = hex64(fnv1a64(header.dump()));
    const std::string text = header.dump();
    if (text.size() > UINT32_MAX) throw ConfigError("DTB header too large");
    std::vector<std::uint8_t> out(kPrefix + text.size() + offset);
    std::memcpy(out.data(), kMagic, 4);
    const auto len = static_cast<std::uint32_t>(text.size());
    std::memcpy(out.data() + 4, &len, 4);
    std::memcpy(out.data() + kPrefix, text.data(), text.size());
    std::size_t pos = kPrefix + text.size();
    for (const auto& e : entries_) {
        std::memcpy(out.data() + pos, e.bytes.data(), e.bytes.size());
        pos += e.bytes.size();
    }
    return out;
}

DtbContainer DtbContainer::parse(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) throw ParseError("bad DTB magic", 0);
    if (bytes.size() < kPrefix) throw ParseError("truncated DTB header length", 4);
    std::uint32_t len = 0;
    std::memcpy(&len, bytes.data() + 4, 4);
    if (kPrefix + static_cast<std::size_t>(len) > bytes.size()) throw ParseError("DTB header runs past end of file", 4);

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + kPrefix, bytes.begin() + kPrefix + len);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("DTB header is not valid JSON: ") + e.what(), kPrefix);
    }
    if (!header.is_object() || !header.contains("entries") || !header["entries"].is_array())
        throw ParseError("DTB header lacks an entries array", kPrefix);
    for (const auto& [key, value] : header.items())
        if (key != "entries" && key != "manifest" && key != "header_fnv1a64")
            throw ParseError("unknown DTB header key '" + key + "'", kPrefix);
    if (header.contains("header_fnv1a64")) {
        const nlohmann::json stored = header["header_fnv1a64"];
        header.erase("header_fnv1a64");
        if (!stored.is_string() || stored.get<std::string>() != hex64(fnv1a64(header.dump())))
            throw ParseError("DTB header checksum mismatch", kPrefix);
    }

    const std::size_t payload_start = kPrefix + len;
    const std::size_t payload_size = bytes.size() - payload_start;

    DtbContainer c;
    if (header.contains("manifest")) c.manifest = header["manifest"];

    struct Span {
        std::size_t begin, end;
    };
    std::vector<Span> spans;
    try {
        for (const auto& je : header["entries"]) {
            for (const auto& [key, value] : je.items())
                if (key != "name" && key != "dtype" && key != "shape" && key != "byte_offset" && key != "byte_length" &&
                    key != "fnv1a64")
                    throw ParseError("unknown DTB entry key '" + key + "'", kPrefix);
            DtbEntry e;
            e.name = je.at("name").get<std::string>();
            e.dtype = parse_dtype(je.at("dtype").get<std::string>(), kPrefix);
            e.shape = je.at("shape").get<Shape>();
            for (int d : e.shape)
                if (d <= 0) throw ParseError("entry '" + e.name + "' has a non-positive dimension", kPrefix);
            const auto off = je.at("byte_offset").get<std::size_t>();
            const std::size_t n = shape_size(e.shape) * dtype_size(e.dtype);
            if (je.contains("byte_length") && je["byte_length"].get<std::size_t>() != n)
                throw ParseError("entry '" + e.name + "' byte_length disagrees with shape", kPrefix);
            if (off > payload_size || n > payload_size - off)
                throw ParseError("entry '" + e.name + "' extends past end of file", payload_start + off);
            e.bytes.assign(bytes.begin() + static_cast<std::ptrdiff_t>(payload_start + off),
                           bytes.begin() + static_cast<std::ptrdiff_t>(payload_start + off + n));
            if (je.contains("fnv1a64") && je["fnv1a64"].get<std::string>() != hex64(checksum(e.bytes)))
                throw ParseError("checksum mismatch in entry '" + e.name + "'", payload_start + off);
            if (c.has(e.name)) throw ParseError("duplicate entry '" + e.name + "'", kPrefix);
            spans.push_back({off, off + n});
            c.entries_.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed DTB entry: ") + e.what(), kPrefix);
    }

    std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.begin < b.begin; });
    std::size_t cursor = 0;
    for (const auto& s : spans) {
        if (s.begin < cursor) throw ParseError("overlapping DTB entries", payload_start + s.begin);
        if (s.begin > cursor) throw ParseError("gap in DTB payload", payload_start + cursor);
        cursor = s.end;
    }
    if (cursor != payload_size) throw ParseError("trailing bytes after DTB payload", payload_start + cursor);
    return c;
}

bool operator==(const DtbContainer& a, const DtbContainer& b) {
    if (a.manifest != b.manifest || a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
        const auto& x = a.entries_[i];
        const auto& y = b.entries_[i];
        if (x.name != y.name || x.dtype != y.dtype || x.shape != y.shape || x.bytes != y.bytes) return false;
    }
    return true;
}

namespace {

void write_bytes_atomic(const std::filesystem::path& path, const char* data, std::size_t n) {
    namespace fs = std::filesystem;
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("cannot open " + tmp.string() + " for writing");
        os.write(data, static_cast<std::streamsize>(n));
        os.flush();
        if (!os) throw DataError("write failed for " + tmp.string());
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw DataError("cannot rename into " + path.string());
    }
}

}  // namespace

void write_dtb(const std::filesystem::path& path, const DtbContainer& c) {
    const auto bytes = c.serialize();
    write_bytes_atomic(path, reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

DtbContainer read_dtb(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    try {
        return DtbContainer::parse(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.detail(), e.offset());
    }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    write_bytes_atomic(path, text.data(), text.size());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace hardshare
