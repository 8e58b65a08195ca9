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

// Acceptance driver: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. The desk reproduction is resumable; its
// wall-clock time is accumulated across interrupted invocations.

#include <CLI11.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "checks.hpp"
#include "hardshare/errors.hpp"
#include "hardshare/models.hpp"
#include "hardshare/pipeline.hpp"
#include "hardshare/task_bank.hpp"

using namespace hardshare;
using namespace hardshare::testing;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

std::vector<std::uint8_t> bytes_of(const fs::path& p) {
    const std::string s = slurp(p);
    return {s.begin(), s.end()};
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

void log(const std::string& msg) { std::cerr << "[acceptance] " << msg << std::endl; }

// ---------------------------------------------------------------------------
// Desk reproduction, criteria 1 to 4

struct DeskRun {
    nlohmann::json claims;
    double seconds = 0.0;
};

DeskRun desk_run(const fs::path& manifest, const fs::path& dir) {
    const fs::path timing = dir / "acceptance_timing.json";
    const fs::path claims = dir / "report" / "claims.json";
    double previous = 0.0;
    bool complete = false;
    if (fs::exists(timing)) {
        const auto t = read_json(timing);
        previous = t.at("seconds").get<double>();
        complete = t.at("complete").get<bool>() && fs::exists(claims);
    }
    DeskRun out;
    if (complete) {
        log("desk run already complete in " + dir.string());
        out.seconds = previous;
    } else {
        log("desk reproduction in " + dir.string() + " (resuming from " + fmt(previous) + " s)");
        Pipeline p(ExperimentManifest::load(manifest), dir);
        p.set_logger([](const std::string& m) { log(m); });
        const auto t0 = std::chrono::steady_clock::now();
        auto save = [&](bool done) {
            const double s = previous + std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            fs::create_directories(dir);
            std::ofstream(timing) << nlohmann::json{{"seconds", s}, {"complete", done}}.dump(2) << "\n";
            return s;
        };
        try {
            p.reproduce(1);
        } catch (...) {
            save(false);
            throw;
        }
        out.seconds = save(true);
    }
    out.claims = read_json(claims);
    return out;
}

Check criterion1(const DeskRun& r) {
    Check c;
    const auto& j = r.claims.at("multi_vs_single");
    for (const auto& [name, m] : j.at("metrics").items())
        c.require(m.at("holds").get<bool>(), name + " multi " + fmt(m.at("multi_head").get<double>()) + " <= single " +
                                                 fmt(m.at("single_mean").get<double>()));
    c.require(j.at("margin_holds").get<bool>(), "FactorVAE margin " + fmt(j.at("factor_vae_margin").get<double>()) + " < 0.05");
    c.require(r.seconds <= 45 * 60, "desk run took " + fmt(r.seconds / 60) + " min");
    if (c.pass)
        c.detail = "FactorVAE margin " + fmt(j.at("factor_vae_margin").get<double>()) + ", " + fmt(r.seconds / 60) + " min";
    return c;
}

Check criterion2(const DeskRun& r) {
    Check c;
    const auto& j = r.claims.at("multi_vs_one_head");
    const std::string vals = "DCI-D multi " + fmt(j.at("multi_head").get<double>()) + ", one_head " +
                             fmt(j.at("one_head").get<double>()) + ", single " + fmt(j.at("single_mean").get<double>());
    c.require(j.at("multi_ge_one_head").get<bool>(), "multi_head < one_head");
    c.require(j.at("one_head_ge_single").get<bool>(), "one_head < single mean");
    c.detail = c.pass ? vals : c.detail + " (" + vals + ")";
    return c;
}

Check criterion3(const DeskRun& r) {
    Check c;
    const auto& j = r.claims.at("reconstruction_and_task_mse");
    const std::string vals = "probe MSE multi " + fmt(j.at("probe_multi_head").get<double>()) + " vs random " +
                             fmt(j.at("probe_random").get<double>()) + "; task MSE multi " +
                             fmt(j.at("task_mse_multi_head").get<double>()) + " vs random " +
                             fmt(j.at("task_mse_random").get<double>());
    c.require(j.at("probe_holds").get<bool>(), "probe MSE multi >= random");
    c.require(j.at("task_mse_holds").get<bool>(), "task MSE multi >= random");
    c.detail = c.pass ? vals : c.detail + " (" + vals + ")";
    return c;
}

Check criterion4(const DeskRun& r) {
    Check c;
    const auto& j = r.claims.at("latent_rmse");
    const std::string vals = "RMSE ground truth " + fmt(j.at("ground_truth").get<double>()) + ", ae " +
                             fmt(j.at("ae").get<double>()) + ", random " + fmt(j.at("random").get<double>());
    c.require(j.at("ground_truth_beats_random").get<bool>(), "ground truth >= random");
    c.require(j.at("ae_beats_random").get<bool>(), "ae >= random");
    c.detail = c.pass ? vals : c.detail + " (" + vals + ")";
    return c;
}

// ---------------------------------------------------------------------------
// Criterion 8: two reproductions from one manifest

Check criterion8(const fs::path& manifest, const fs::path& work, int trials) {
    Check c;
    const fs::path a = work / "repro_a", b = work / "repro_b";
    for (const fs::path& d : {a, b}) {
        fs::remove_all(d);
        log("reproduce " + manifest.filename().string() + " into " + d.string());
        Pipeline p(ExperimentManifest::load(manifest), d);
        p.reproduce(1);
    }
    int compared = 0;
    for (const auto& e : fs::directory_iterator(a / "report")) {
        const std::string ext = e.path().extension().string();
        if (ext != ".tsv" && ext != ".json") continue;
        ++compared;
        c.require(slurp(e.path()) == slurp(b / "report" / e.path().filename()), e.path().filename().string() + " differs");
    }
    c.require(compared >= 5, "only " + std::to_string(compared) + " report files compared");
    log("permutation trials");
    const Check perm = permutation_invariance(trials);
    c.require(perm.pass, perm.detail);
    log("scale trials");
    const Check scale = scale_invariance(trials);
    c.require(scale.pass, scale.detail);
    if (c.pass)
        c.detail = std::to_string(compared) + " report files identical; " + std::to_string(trials) +
                   " permutation and " + std::to_string(trials) + " scale trials";
    return c;
}

// ---------------------------------------------------------------------------
// Criterion 9: container round trips on every artifact of a run store

Check criterion9(const fs::path& store) {
    Check c;
    std::map<std::string, int> kinds;
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(store))
        if (e.path().extension() == ".dtb") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const fs::path& f : files) {
        const auto bytes = bytes_of(f);
        const DtbContainer raw = DtbContainer::parse(bytes);
        c.require(raw.serialize() == bytes, f.string() + " does not re-serialize identically");
        const std::string kind = raw.manifest.value("kind", "");
        ++kinds[kind];
        std::vector<std::uint8_t> again;
        if (kind == "dataset") {
            again = dataset_to_dtb(dataset_from_dtb(raw)).serialize();
        } else if (kind == "task_bank") {
            again = TaskBank::from_dtb(raw).to_dtb().serialize();
        } else {
            again = TrainedModel::from_dtb(raw).to_dtb().serialize();
        }
        c.require(again == bytes, f.string() + " typed round trip differs");
    }
    c.require(kinds.size() >= 3, "only " + std::to_string(kinds.size()) + " artifact kinds found");

    log("corruption sweeps");
    DtbContainer mixed;
    mixed.manifest = {{"kind", "acceptance"}};
    mixed.add_f32("w", Tensor({2, 2}, std::vector<float>{1.0f, -2.0f, 0.5f, 3.0f}));
    mixed.add_i32("i", {3}, std::vector<std::int32_t>{1, 2, 3});
    mixed.add_u8("u", {2}, std::vector<std::uint8_t>{7, 9});
    const Check m = corruption_rejected(mixed.serialize());
    c.require(m.pass, "mixed container: " + m.detail);
    for (const char* rel : {"tasks/tasks.dtb", "runs/multi_head_s0/model.dtb", "runs/multi_head_s0/probe.dtb"}) {
        const Check k = corruption_rejected(bytes_of(store / rel), 4099);
        c.require(k.pass, std::string(rel) + ": " + k.detail);
    }

    const fs::path cut = store / "truncated.dtb.part";
    {
        const auto bytes = bytes_of(store / "data" / "dataset.dtb");
        std::ofstream os(cut, std::ios::binary);
        os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size() / 3));
    }
    try {
        read_dtb(cut);
        c.require(false, "truncated dataset file was read");
    } catch (const ParseError&) {
    }
    fs::remove(cut);

    if (c.pass) {
        c.detail = std::to_string(files.size()) + " files round-trip (";
        bool first = true;
        for (const auto& [k, n] : kinds) {
            c.detail += (first ? "" : ", ") + k + " x" + std::to_string(n);
            first = false;
        }
        c.detail += "); truncations and byte flips rejected";
    }
    return c;
}

template <typename F>
Check guarded(const char* what, F&& f) {
    try {
        return f();
    } catch (const std::exception& e) {
        Check c;
        c.require(false, std::string(what) + " raised: " + e.what());
        return c;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hardshare acceptance criteria"};
    std::string work = "acceptance_runs";
    std::string desk_manifest = std::string(HARDSHARE_SOURCE_DIR) + "/manifests/desk.json";
    std::string repro_manifest = std::string(HARDSHARE_SOURCE_DIR) + "/manifests/tiny.json";
    int trials = 100;
    app.add_option("--work", work, "Directory for run stores");
    app.add_option("--desk-manifest", desk_manifest, "Manifest for criteria 1 to 4")->check(CLI::ExistingFile);
    app.add_option("--repro-manifest", repro_manifest, "Manifest reproduced twice for criterion 8")->check(CLI::ExistingFile);
    app.add_option("--trials", trials, "Invariance trials per property")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    const fs::path root = fs::absolute(work);
    fs::create_directories(root);

    std::vector<Check> results(9);
    log("engine, metric and estimator checks");
    results[4] = guarded("metric oracles", [] { return metric_oracles(); });
    results[5] = guarded("engine", [] {
        Check c;
        for (const Check& k : {engine_gradients(), adam_reference(), linear_regression()}) c.require(k.pass, k.detail);
        if (c.pass) c.detail = "gradient checks, Adam reference and linear regression";
        return c;
    });
    results[6] = guarded("MI estimator", [] { return mi_estimator(); });
    results[7] = guarded("reproduce", [&] { return criterion8(repro_manifest, root, trials); });
    results[8] = guarded("containers", [&] { return criterion9(root / "repro_a"); });

    std::optional<DeskRun> desk;
    try {
        desk = desk_run(desk_manifest, root / "desk");
    } catch (const std::exception& e) {
        for (int i = 0; i < 4; ++i) results[static_cast<std::size_t>(i)].require(false, std::string("desk run failed: ") + e.what());
    }
    if (desk) {
        results[0] = guarded("criterion 1", [&] { return criterion1(*desk); });
        results[1] = guarded("criterion 2", [&] { return criterion2(*desk); });
        results[2] = guarded("criterion 3", [&] { return criterion3(*desk); });
        results[3] = guarded("criterion 4", [&] { return criterion4(*desk); });
    }

    int failed = 0;
    for (std::size_t i = 0; i < results.size(); ++i) {
        const Check& r = results[i];
        failed += !r.pass;
        std::cout << "criterion " << i + 1 << " " << (r.pass ? "PASS" : "FAIL");
        if (!r.detail.empty()) std::cout << ": " << r.detail;
        std::cout << "\n";
    }
    return failed == 0 ? 0 : 1;
}
