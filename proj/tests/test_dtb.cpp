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

#include <filesystem>
#include <fstream>

#include "checks.hpp"
#include "fixtures.hpp"
#include "hardshare/dtb.hpp"
#include "hardshare/errors.hpp"

using namespace hardshare;
using namespace hardshare::testing;
namespace fs = std::filesystem;

namespace {

DtbContainer mixed_container() {
    DtbContainer c;
    c.manifest = {{"kind", "test"}, {"seed", 12}, {"note", "mixed dtypes"}};
    Tensor t({2, 3}, {1.5f, -2.0f, 0.0f, 3.25f, 1e-8f, -7.0f});
    c.add_f32("weights", t);
    const std::vector<std::int32_t> idx{1, -2, 3, 4};
    c.add_i32("indices", {2, 2}, idx);
    const std::vector<std::uint8_t> tags{0, 1, 1};
    c.add_u8("tags", {3}, tags);
    return c;
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "hardshare_test_dtb";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("header round-trips through parse and serialize") {
    const DtbContainer c = mixed_container();
    const auto bytes = c.serialize();
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "DTB1");
    const DtbContainer back = DtbContainer::parse(bytes);
    CHECK(back == c);
    CHECK(back.serialize() == bytes);
    CHECK(back.get_i32("indices") == std::vector<std::int32_t>{1, -2, 3, 4});
    CHECK(back.get_u8("tags") == std::vector<std::uint8_t>{0, 1, 1});
    CHECK(back.get_f32("weights") == c.get_f32("weights"));
}

TEST_CASE("wrong dtype and missing entry are data errors") {
    const DtbContainer c = mixed_container();
    CHECK_THROWS_AS(c.get_f32("indices"), DataError);
    CHECK_THROWS_AS(c.entry("absent"), DataError);
}

TEST_CASE("every truncation and byte flip is rejected") {
    const Check k = corruption_rejected(mixed_container().serialize());
    INFO(k.detail);
    CHECK(k.pass);
}

TEST_CASE("dataset, task bank and every model kind round-trip") {
    const TinyWorld& w = tiny_world();
    {
        const DtbContainer c = dataset_to_dtb(w.ds);
        const DtbContainer back = DtbContainer::parse(c.serialize());
        CHECK(back == c);
        CHECK(dataset_to_dtb(dataset_from_dtb(back)) == c);
    }
    {
        const DtbContainer c = w.bank.to_dtb();
        const DtbContainer back = DtbContainer::parse(c.serialize());
        CHECK(back == c);
        const TaskBank bank = TaskBank::from_dtb(back);
        CHECK(bank.checksum() == w.bank.checksum());
        CHECK(bank.targets() == w.targets);
        CHECK(bank.to_dtb() == c);
    }
    for (const auto& [name, model] : tiny_models()) {
        INFO(name);
        const DtbContainer c = model.to_dtb();
        const auto bytes = c.serialize();
        const TrainedModel back = TrainedModel::from_dtb(DtbContainer::parse(bytes));
        CHECK(back.to_dtb().serialize() == bytes);
        const Tensor imgs = w.ds.images.slice_rows(0, 8);
        CHECK(back.encode(imgs) == model.encode(imgs));
    }
}

TEST_CASE("model container rejects corruption") {
    const auto models = tiny_models();
    const auto bytes = models[2].second.to_dtb().serialize();
    const Check k = corruption_rejected(bytes, 4099);
    INFO(k.detail);
    CHECK(k.pass);
}

TEST_CASE("files are written atomically and read back identically") {
    const fs::path p = scratch("mixed.dtb");
    write_dtb(p, mixed_container());
    CHECK(read_dtb(p) == mixed_container());
    for (const auto& e : fs::directory_iterator(p.parent_path()))
        CHECK(e.path().filename().string().find(".tmp.") == std::string::npos);

    std::vector<char> raw(fs::file_size(p));
    {
        std::ifstream is(p, std::ios::binary);
        is.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    }
    {
        std::ofstream os(p, std::ios::binary | std::ios::trunc);
        os.write(raw.data(), static_cast<std::streamsize>(raw.size() / 2));
    }
    try {
        read_dtb(p);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find(p.string()) != std::string::npos);
    }
    CHECK_THROWS_AS(read_dtb(scratch("does_not_exist.dtb")), DataError);
}
