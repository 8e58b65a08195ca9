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

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hardshare/errors.hpp"
#include "hardshare/pipeline.hpp"

using namespace hardshare;
namespace fs = std::filesystem;

namespace {

const fs::path kManifest = fs::path(HARDSHARE_SOURCE_DIR) / "manifests" / "tiny.json";

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "hardshare_test_pipeline" / name;
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

int count(const Pipeline& p, StageStatus s) {
    int n = 0;
    for (const auto& e : p.events()) n += e.status == s;
    return n;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(HARDSHARE_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

/// One tiny reproduction shared by the tests below.
const fs::path& tiny_run() {
    static const fs::path dir = [] {
        const fs::path d = fresh_dir("tiny_a");
        Pipeline p(ExperimentManifest::load(kManifest), d);
        p.reproduce();
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("a full run writes every artifact and a second run skips every stage") {
    const fs::path& dir = tiny_run();
    for (const char* f : {"manifest.json", "data/dataset.dtb", "tasks/tasks.dtb", "report/claims.json", "report/metrics.tsv",
                          "report/task_mse.tsv", "report/reconstruction.tsv", "report/latent_rmse.tsv", "report/metrics.svg",
                          "report/gallery.pgm", "report/pca_multi_head_s0.tsv", "report/traversal_multi_head_s0.pgm"}) {
        INFO(f);
        CHECK(fs::exists(dir / f));
    }
    Pipeline again(ExperimentManifest::load(kManifest), dir);
    again.reproduce();
    CHECK(count(again, StageStatus::ran) == 0);
    CHECK(count(again, StageStatus::skipped) > 10);
}

TEST_CASE("deleting the claims reruns only the report") {
    const fs::path& dir = tiny_run();
    const std::string before = slurp(dir / "report" / "claims.json");
    fs::remove(dir / "report" / "claims.json");
    Pipeline p(ExperimentManifest::load(kManifest), dir);
    p.reproduce();
    REQUIRE(count(p, StageStatus::ran) == 1);
    for (const auto& e : p.events())
        if (e.status == StageStatus::ran) CHECK(e.stage == "report");
    CHECK(slurp(dir / "report" / "claims.json") == before);
}

TEST_CASE("reports are byte-identical across output directories") {
    const fs::path& a = tiny_run();
    const fs::path b = fresh_dir("tiny_b");
    Pipeline p(ExperimentManifest::load(kManifest), b);
    p.reproduce();
    for (const auto& e : fs::directory_iterator(a / "report")) {
        INFO(e.path().filename().string());
        CHECK(slurp(e.path()) == slurp(b / "report" / e.path().filename()));
    }
}

TEST_CASE("stage hashes follow their inputs") {
    const ExperimentManifest base = ExperimentManifest::load(kManifest);
    ExperimentManifest reseeded = base;
    reseeded.master_seed += 1;
    const Pipeline p1(base, fresh_dir("hash_a")), p2(reseeded, fresh_dir("hash_b"));
    const RunId run{"multi_head", -1, 0};
    CHECK(p1.data_hash() == p2.data_hash());
    CHECK(p1.tasks_hash() == p2.tasks_hash());
    CHECK(p1.train_hash(run) != p2.train_hash(run));

    ExperimentManifest moved = base;
    moved.output = "elsewhere";
    CHECK(Pipeline(moved, fresh_dir("hash_c")).train_hash(run) == p1.train_hash(run));

    ExperimentManifest retasked = base;
    retasked.task_seed += 1;
    const Pipeline p3(retasked, fresh_dir("hash_d"));
    CHECK(p3.data_hash() == p1.data_hash());
    CHECK(p3.tasks_hash() != p1.tasks_hash());
    CHECK(p3.train_hash(run) != p1.train_hash(run));
}

TEST_CASE("a stage without its prerequisites names the command to run") {
    Pipeline p(ExperimentManifest::load(kManifest), fresh_dir("missing"));
    try {
        p.metrics({"multi_head", -1, 0});
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("not found") != std::string::npos);
        CHECK(msg.find("hardshare train") != std::string::npos);
    }
    CHECK_THROWS_AS(p.report(), DataError);
}

TEST_CASE("manifest validation") {
    nlohmann::json j = ExperimentManifest::load(kManifest).to_json();
    CHECK(ExperimentManifest::from_json(j).to_json() == j);
    auto broken = [&](const char* key, nlohmann::json value) {
        nlohmann::json k = j;
        k[key] = std::move(value);
        return k;
    };
    CHECK_THROWS_AS(ExperimentManifest::from_json(broken("regimes", {"random", "two_head"})), ConfigError);
    CHECK_THROWS_AS(ExperimentManifest::from_json(broken("regimes", {"random", "single"})), ConfigError);
    CHECK_THROWS_AS(ExperimentManifest::from_json(broken("seeds", 0)), ConfigError);
    CHECK_THROWS_AS(ExperimentManifest::from_json(broken("latent_dim", 1)), ConfigError);
    CHECK_THROWS_AS(ExperimentManifest::from_json(broken("single_tasks", {0, 3})), ConfigError);
    CHECK_THROWS_AS(ExperimentManifest::from_json(broken("profile", "huge")), ConfigError);
    CHECK_THROWS_AS(ExperimentManifest::load(fresh_dir("absent") / "none.json"), DataError);
}

TEST_CASE("command line exit codes") {
    const fs::path dir = fresh_dir("cli");
    const std::string m = "--manifest " + kManifest.string() + " --out " + dir.string();
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("gen-data " + m) == 0);
    CHECK(fs::exists(dir / "data" / "dataset.dtb"));
    CHECK(run_cli("train " + m + " --regime two_head") == 1);
    CHECK(run_cli("train --manifest " + (dir / "none.json").string()) == 1);
    CHECK(run_cli("no-such-command") == 1);
    CHECK(run_cli("metrics " + m + " --regime multi_head --seed-index 0") == 2);
}
