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

#include "hardshare/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <set>
#include <thread>

#include "hardshare/dtb.hpp"
#include "hardshare/errors.hpp"
#include "hardshare/random.hpp"

namespace fs = std::filesystem;

namespace hardshare {

std::string json_hash(const nlohmann::json& j) { return hex64(fnv1a64(j.dump())); }

// ---------------------------------------------------------------------------

nlohmann::json ExperimentProfile::to_json() const {
    return {{"name", name},
            {"multitask", multitask.to_json()},
            {"autoencoder", autoencoder.to_json()},
            {"probe", probe.to_json()},
            {"latent_heads", latent_heads.to_json()},
            {"decoder_width_divisor", decoder_width_divisor}};
}

ExperimentProfile ExperimentProfile::from_json(const nlohmann::json& j) {
    ExperimentProfile p = named(j.value("base", std::string("desk")));
    p.name = j.value("name", p.name);
    if (j.contains("multitask")) p.multitask = TrainingProfile::from_json(j["multitask"]);
    if (j.contains("autoencoder")) p.autoencoder = TrainingProfile::from_json(j["autoencoder"]);
    if (j.contains("probe")) p.probe = TrainingProfile::from_json(j["probe"]);
    if (j.contains("latent_heads")) p.latent_heads = TrainingProfile::from_json(j["latent_heads"]);
    p.decoder_width_divisor = j.value("decoder_width_divisor", p.decoder_width_divisor);
    return p;
}

ExperimentProfile ExperimentProfile::named(const std::string& name) {
    ExperimentProfile p;
    p.name = name;
    if (name == "paper") {
        p.multitask = {"paper", 200, 256, 1e-3, 0};
        p.autoencoder = {"paper", 100, 64, 1e-4, 0};
        p.probe = {"paper", 500, 64, 2e-4, 100};
        p.latent_heads = {"paper", 30, 64, 1e-4, 0};
        p.decoder_width_divisor = 1;
    } else if (name == "desk") {
        p.multitask = {"desk", 10, 128, 1e-3, 0};
        p.autoencoder = {"desk", 10, 64, 1e-3, 0};
        p.probe = {"desk", 12, 64, 1e-3, 4};
        p.latent_heads = {"desk", 10, 64, 1e-3, 0};
        p.decoder_width_divisor = 4;
    } else {
        throw ConfigError("unknown profile '" + name + "'; valid profiles: paper, desk");
    }
    return p;
}

namespace {

const std::vector<std::string>& valid_regimes() {
    static const std::vector<std::string> r{"random", "single", "multi_head", "one_head", "ae", "vae"};
    return r;
}

}  // namespace

nlohmann::json ExperimentManifest::to_json() const {
    return {{"name", name},
            {"dataset", dataset.to_json()},
            {"data_seed", data_seed},
            {"n_tasks", n_tasks},
            {"task_seed", task_seed},
            {"standardize_targets", standardize_targets},
            {"regimes", regimes},
            {"single_tasks", single_tasks},
            {"seeds", seeds},
            {"master_seed", master_seed},
            {"latent_dim", latent_dim},
            {"beta", beta},
            {"profile", profile.to_json()},
            {"metrics", metrics.to_json()},
            {"probes", probes},
            {"latent_heads", latent_heads},
            {"gallery_size", gallery_size},
            {"output", output}};
}

ExperimentManifest ExperimentManifest::from_json(const nlohmann::json& j) {
    ExperimentManifest m;
    try {
        m.name = j.value("name", m.name);
        if (j.contains("dataset")) m.dataset = MiniSpritesProfile::from_json(j["dataset"]);
        m.data_seed = j.value("data_seed", m.data_seed);
        m.n_tasks = j.value("n_tasks", m.n_tasks);
        m.task_seed = j.value("task_seed", m.task_seed);
        m.standardize_targets = j.value("standardize_targets", m.standardize_targets);
        m.regimes = j.value("regimes", m.regimes);
        m.single_tasks = j.value("single_tasks", m.single_tasks);
        m.seeds = j.value("seeds", m.seeds);
        m.master_seed = j.value("master_seed", m.master_seed);
        m.latent_dim = j.value("latent_dim", m.latent_dim);
        m.beta = j.value("beta", m.beta);
        if (j.contains("profile"))
            m.profile = j["profile"].is_string() ? ExperimentProfile::named(j["profile"].get<std::string>())
                                                 : ExperimentProfile::from_json(j["profile"]);
        if (j.contains("metrics")) m.metrics = MetricConfig::from_json(j["metrics"]);
        m.probes = j.value("probes", m.probes);
        m.latent_heads = j.value("latent_heads", m.latent_heads);
        m.gallery_size = j.value("gallery_size", m.gallery_size);
        m.output = j.value("output", m.output);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed manifest: ") + e.what());
    }
    for (const auto& r : m.regimes)
        if (std::find(valid_regimes().begin(), valid_regimes().end(), r) == valid_regimes().end())
            throw ConfigError("unknown regime '" + r + "' in manifest; valid regimes: random, single, multi_head, "
                              "one_head, ae, vae");
    for (const std::string r : {"random", "single", "multi_head", "one_head", "ae"})
        if (!m.has_regime(r)) throw ConfigError("manifest regimes must include '" + r + "'");
    if (m.seeds < 1 || m.n_tasks < 1 || m.latent_dim < 2) throw ConfigError("manifest needs seeds, n_tasks >= 1, latent_dim >= 2");
    for (int t : m.single_tasks)
        if (t < 0 || t >= m.n_tasks) throw ConfigError("single task index " + std::to_string(t) + " out of range");
    return m;
}

ExperimentManifest ExperimentManifest::load(const fs::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("manifest " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

std::vector<int> ExperimentManifest::resolved_single_tasks() const {
    if (!single_tasks.empty()) return single_tasks;
    std::vector<int> all(static_cast<std::size_t>(n_tasks));
    for (int i = 0; i < n_tasks; ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
}

bool ExperimentManifest::has_regime(const std::string& r) const {
    return std::find(regimes.begin(), regimes.end(), r) != regimes.end();
}

std::uint64_t ExperimentManifest::run_seed(int seed_index) const {
    return derive_seed(master_seed, "run", static_cast<std::uint64_t>(seed_index));
}

std::string RunId::label() const { return regime == "single" ? "single(" + std::to_string(task_index) + ")" : regime; }

std::string RunId::dir_name() const {
    return (regime == "single" ? "single" + std::to_string(task_index) : regime) + "_s" + std::to_string(seed_index);
}

std::vector<RunId> planned_runs(const ExperimentManifest& m) {
    std::vector<RunId> runs;
    for (int s = 0; s < m.seeds; ++s)
        for (const auto& r : valid_regimes()) {
            if (!m.has_regime(r)) continue;
            if (r == "single") {
                for (int t : m.resolved_single_tasks()) runs.push_back({r, t, s});
            } else {
                runs.push_back({r, -1, s});
            }
        }
    return runs;
}

// ---------------------------------------------------------------------------

Pipeline::Pipeline(ExperimentManifest manifest, fs::path root) : manifest_(std::move(manifest)), root_(std::move(root)) {}

void Pipeline::note(const std::string& stage, StageStatus s) {
    std::lock_guard lock(mu_);
    events_.push_back({stage, s});
    if (log_) log_((s == StageStatus::ran ? "[done] " : "[skip] ") + stage);
}

bool Pipeline::up_to_date(const fs::path& record, const std::string& hash, const std::vector<fs::path>& outputs) const {
    if (!fs::exists(record)) return false;
    for (const auto& o : outputs)
        if (!fs::exists(o)) return false;
    try {
        return nlohmann::json::parse(read_text(record)).value("hash", "") == hash;
    } catch (const std::exception&) {
        return false;
    }
}

void Pipeline::mark_done(const fs::path& record, const std::string& stage, const std::string& hash,
                         const nlohmann::json& slice) const {
    write_text_atomic(record, nlohmann::json{{"stage", stage}, {"hash", hash}, {"inputs", slice}}.dump(2) + "\n");
}

fs::path Pipeline::run_dir(const RunId& run) const { return root_ / "runs" / run.dir_name(); }

namespace {

template <typename F>
void stage_guard(const std::string& stage, F&& f) {
    try {
        f();
    } catch (const NumericError& e) {
        throw NumericError("stage " + stage + " failed: " + e.what());
    } catch (const ParseError& e) {
        throw DataError("stage " + stage + " failed: " + e.what());
    } catch (const DataError& e) {
        throw DataError("stage " + stage + " failed: " + e.what());
    } catch (const ConfigError& e) {
        throw ConfigError("stage " + stage + " failed: " + e.what());
    }
}

void require(const fs::path& p, const std::string& producer) {
    if (!fs::exists(p))
        throw DataError(p.string() + " not found; run `hardshare " + producer + "` with the same manifest first");
}

nlohmann::json read_json(const fs::path& p) {
    try {
        return nlohmann::json::parse(read_text(p));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(p.string() + " is not valid JSON: " + e.what());
    }
}

void write_json(const fs::path& p, const nlohmann::json& j) { write_text_atomic(p, j.dump(2) + "\n"); }

bool is_multitask(const std::string& regime) {
    return regime == "random" || regime == "single" || regime == "multi_head" || regime == "one_head";
}

}  // namespace

// ---------------------------------------------------------------------------

std::string Pipeline::data_hash() const {
    return json_hash({{"stage", "data"}, {"dataset", manifest_.dataset.to_json()}, {"seed", manifest_.data_seed}});
}

std::string Pipeline::tasks_hash() const {
    return json_hash({{"stage", "tasks"},
                      {"data", data_hash()},
                      {"n_tasks", manifest_.n_tasks},
                      {"seed", manifest_.task_seed},
                      {"standardize", manifest_.standardize_targets}});
}

std::string Pipeline::train_hash(const RunId& run) const {
    nlohmann::json slice = {{"stage", "train"},
                            {"regime", run.regime},
                            {"task_index", run.task_index},
                            {"seed", manifest_.run_seed(run.seed_index)},
                            {"latent_dim", manifest_.latent_dim}};
    if (is_multitask(run.regime)) {
        slice["tasks"] = tasks_hash();
        slice["profile"] = manifest_.profile.multitask.to_json();
    } else {
        slice["data"] = data_hash();
        slice["profile"] = manifest_.profile.autoencoder.to_json();
        slice["decoder_width_divisor"] = manifest_.profile.decoder_width_divisor;
        if (run.regime == "vae") slice["beta"] = manifest_.beta;
    }
    return json_hash(slice);
}

bool Pipeline::wants_probe(const RunId& run) const {
    if (!manifest_.probes) return false;
    if (run.regime == "random" || run.regime == "multi_head") return true;
    return run.regime == "single" && run.task_index == manifest_.resolved_single_tasks().front();
}

bool Pipeline::wants_latent_heads(const RunId& run) const {
    if (!manifest_.latent_heads) return false;
    return run.regime == "random" || run.regime == "multi_head" || run.regime == "ae" || run.regime == "vae";
}

const LabeledDataset& Pipeline::dataset() {
    if (!dataset_) {
        const fs::path p = root_ / "data" / "dataset.dtb";
        require(p, "gen-data");
        dataset_ = dataset_from_dtb(read_dtb(p));
    }
    return *dataset_;
}

const Tensor& Pipeline::targets() {
    if (!targets_) {
        const fs::path p = root_ / "tasks" / "tasks.dtb";
        require(p, "gen-tasks");
        TaskBank bank = TaskBank::from_dtb(read_dtb(p));
        if (!bank.has_targets()) throw DataError(p.string() + " holds no target matrix");
        Tensor t = bank.targets();
        if (manifest_.standardize_targets) standardize_columns(t);
        targets_ = std::move(t);
    }
    return *targets_;
}

TrainedModel Pipeline::load_model(const RunId& run) const {
    const fs::path p = run_dir(run) / "model.dtb";
    require(p, "train --regime " + run.regime);
    return TrainedModel::from_dtb(read_dtb(p));
}

void Pipeline::gen_data() {
    const fs::path dir = root_ / "data";
    const fs::path out = dir / "dataset.dtb", rec = dir / "dataset.stage.json";
    const std::string h = data_hash();
    if (up_to_date(rec, h, {out})) return note("gen-data", StageStatus::skipped);
    stage_guard("gen-data", [&] {
        fs::create_directories(dir);
        LabeledDataset ds = make_minisprites(manifest_.dataset, manifest_.data_seed);
        ds.provenance["stage_hash"] = h;
        write_dtb(out, dataset_to_dtb(ds));
        dataset_ = std::move(ds);
        mark_done(rec, "gen-data", h, {{"dataset", manifest_.dataset.to_json()}, {"seed", manifest_.data_seed}});
    });
    note("gen-data", StageStatus::ran);
}

void Pipeline::gen_tasks() {
    const fs::path dir = root_ / "tasks";
    const fs::path out = dir / "tasks.dtb", rec = dir / "tasks.stage.json";
    const std::string h = tasks_hash();
    if (up_to_date(rec, h, {out})) return note("gen-tasks", StageStatus::skipped);
    stage_guard("gen-tasks", [&] {
        const LabeledDataset& ds = dataset();
        fs::create_directories(dir);
        TaskBank bank = TaskBank::build(static_cast<int>(ds.factor_dim()), manifest_.n_tasks, manifest_.task_seed);
        build_targets(bank, ds);
        write_dtb(out, bank.to_dtb());
        targets_.reset();
        mark_done(rec, "gen-tasks", h, {{"data", data_hash()}, {"n_tasks", manifest_.n_tasks}, {"seed", manifest_.task_seed}});
    });
    note("gen-tasks", StageStatus::ran);
}

void Pipeline::train(const RunId& run) {
    const fs::path dir = run_dir(run);
    const fs::path out = dir / "model.dtb", rec = dir / "train.stage.json";
    const std::string h = train_hash(run);
    const std::string stage = "train " + run.label() + " seed " + std::to_string(run.seed_index);
    if (up_to_date(rec, h, {out})) return note(stage, StageStatus::skipped);
    stage_guard(stage, [&] {
        const LabeledDataset& ds = dataset();
        const std::uint64_t seed = manifest_.run_seed(run.seed_index);
        TrainedModel model;
        if (is_multitask(run.regime)) {
            const Regime r = regime_from_string(run.regime);
            model = train_multitask(ds, targets(), {r, run.task_index}, manifest_.profile.multitask, seed,
                                    manifest_.latent_dim);
        } else {
            AutoencoderKind kind{run.regime == "vae", manifest_.beta, Activation::tanh,
                                 manifest_.profile.decoder_width_divisor};
            model = train_autoencoder(ds, kind, manifest_.profile.autoencoder, seed, manifest_.latent_dim);
        }
        model.manifest["stage_hash"] = h;
        model.manifest["seed_index"] = run.seed_index;
        fs::create_directories(dir);
        write_dtb(out, model.to_dtb());
        mark_done(rec, "train", h, {{"regime", run.regime}, {"task_index", run.task_index}, {"seed_index", run.seed_index}});
    });
    note(stage, StageStatus::ran);
}

void Pipeline::metrics(const RunId& run) {
    const fs::path dir = run_dir(run);
    const fs::path out = dir / "metrics.json", rec = dir / "metrics.stage.json";
    const std::uint64_t seed = derive_seed(manifest_.run_seed(run.seed_index), "metrics");
    const nlohmann::json slice = {{"train", train_hash(run)}, {"config", manifest_.metrics.to_json()}, {"seed", seed}};
    const std::string h = json_hash({{"stage", "metrics"}, {"inputs", slice}});
    const std::string stage = "metrics " + run.label() + " seed " + std::to_string(run.seed_index);
    if (up_to_date(rec, h, {out})) return note(stage, StageStatus::skipped);
    stage_guard(stage, [&] {
        const TrainedModel model = load_model(run);
        const LabeledDataset& ds = dataset();
        const auto rows = ds.rows(Split::test);
        RepresentationSample s = make_sample(model.encode(ds.images.gather_rows(rows)), ds, rows);
        s.provenance = {{"model", (run_dir(run) / "model.dtb").lexically_relative(root_).string()},
                        {"model_hash", train_hash(run)}};
        const MetricReport rep = full_report(s, manifest_.metrics, seed);
        nlohmann::json j = {{"run", run.label()}, {"seed_index", run.seed_index}, {"report", rep.to_json()},
                            {"stage_hash", h}};
        j["test_task_mse"] = is_multitask(run.regime) ? nlohmann::json(test_task_mse(model, ds, targets())) : nlohmann::json();
        write_json(out, j);
        mark_done(rec, "metrics", h, slice);
    });
    note(stage, StageStatus::ran);
}

void Pipeline::probe(const RunId& run) {
    const fs::path dir = run_dir(run);
    const fs::path out = dir / "probe.dtb", summary = dir / "probe.json", rec = dir / "probe.stage.json";
    const std::uint64_t seed = derive_seed(manifest_.run_seed(run.seed_index), "probe");
    const nlohmann::json slice = {{"train", train_hash(run)},
                                  {"profile", manifest_.profile.probe.to_json()},
                                  {"decoder_width_divisor", manifest_.profile.decoder_width_divisor},
                                  {"seed", seed}};
    const std::string h = json_hash({{"stage", "probe"}, {"inputs", slice}});
    const std::string stage = "probe " + run.label() + " seed " + std::to_string(run.seed_index);
    if (up_to_date(rec, h, {out, summary})) return note(stage, StageStatus::skipped);
    stage_guard(stage, [&] {
        const TrainedModel source = load_model(run);
        const LabeledDataset& ds = dataset();
        TrainedModel probe =
            train_decoder_probe(source, ds, manifest_.profile.probe, seed, manifest_.profile.decoder_width_divisor);
        probe.manifest["stage_hash"] = h;
        write_dtb(out, probe.to_dtb());
        write_json(summary, {{"run", run.label()},
                             {"seed_index", run.seed_index},
                             {"test_mse", reconstruction_mse(probe, ds)},
                             {"stage_hash", h}});
        mark_done(rec, "probe", h, slice);
    });
    note(stage, StageStatus::ran);
}

namespace {

nlohmann::json heads_json(const LatentHeadsResult& r, const std::string& label, int seed_index, const std::string& h) {
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& e : r.history) hist.push_back(e.train_loss);
    return {{"run", label}, {"seed_index", seed_index}, {"task_rmse", r.task_rmse},
            {"mean_rmse", r.mean_rmse}, {"history", hist}, {"stage_hash", h}};
}

}  // namespace

void Pipeline::latent_heads(const RunId& run) {
    const fs::path dir = run_dir(run);
    const fs::path out = dir / "latent_heads.json", rec = dir / "latent_heads.stage.json";
    const std::uint64_t seed = derive_seed(manifest_.run_seed(run.seed_index), "latent_heads");
    const nlohmann::json slice = {{"train", train_hash(run)},
                                  {"tasks", tasks_hash()},
                                  {"profile", manifest_.profile.latent_heads.to_json()},
                                  {"seed", seed}};
    const std::string h = json_hash({{"stage", "latent_heads"}, {"inputs", slice}});
    const std::string stage = "latent-heads " + run.label() + " seed " + std::to_string(run.seed_index);
    if (up_to_date(rec, h, {out})) return note(stage, StageStatus::skipped);
    stage_guard(stage, [&] {
        const TrainedModel model = load_model(run);
        const LabeledDataset& ds = dataset();
        const auto tr = ds.rows(Split::train), te = ds.rows(Split::test);
        const Tensor& y = targets();
        const auto res = train_heads_on_latents(model.encode(ds.images.gather_rows(tr)), y.gather_rows(tr),
                                                model.encode(ds.images.gather_rows(te)), y.gather_rows(te),
                                                manifest_.profile.latent_heads, seed, Activation::tanh);
        write_json(out, heads_json(res, run.label(), run.seed_index, h));
        mark_done(rec, "latent_heads", h, slice);
    });
    note(stage, StageStatus::ran);
}

void Pipeline::ground_truth_heads(int seed_index) {
    const fs::path dir = root_ / "runs" / ("ground_truth_s" + std::to_string(seed_index));
    const fs::path out = dir / "latent_heads.json", rec = dir / "latent_heads.stage.json";
    const std::uint64_t seed = derive_seed(manifest_.run_seed(seed_index), "latent_heads");
    const nlohmann::json slice = {{"tasks", tasks_hash()}, {"profile", manifest_.profile.latent_heads.to_json()}, {"seed", seed}};
    const std::string h = json_hash({{"stage", "ground_truth_heads"}, {"inputs", slice}});
    const std::string stage = "latent-heads ground_truth seed " + std::to_string(seed_index);
    if (up_to_date(rec, h, {out})) return note(stage, StageStatus::skipped);
    stage_guard(stage, [&] {
        const LabeledDataset& ds = dataset();
        const auto tr = ds.rows(Split::train), te = ds.rows(Split::test);
        const Tensor& y = targets();
        const auto res = train_heads_on_latents(ds.factor_value_tensor(tr), y.gather_rows(tr), ds.factor_value_tensor(te),
                                                y.gather_rows(te), manifest_.profile.latent_heads, seed, Activation::tanh);
        fs::create_directories(dir);
        write_json(out, heads_json(res, "ground_truth", seed_index, h));
        mark_done(rec, "latent_heads", h, slice);
    });
    note(stage, StageStatus::ran);
}

// ---------------------------------------------------------------------------

namespace {

std::string pca_tsv(const PcaResult& p, const RepresentationSample& s, const FactorSpace& space) {
    std::string out = "pc1\tpc2";
    for (const auto& f : space.factors()) out += "\t" + f.name;
    out += "\n";
    char buf[64];
    for (int r = 0; r < p.coords.rows; ++r) {
        std::snprintf(buf, sizeof buf, "%.6f\t%.6f", p.coords(r, 0), p.coords(r, 1));
        out += buf;
        for (int k = 0; k < s.m(); ++k) out += "\t" + std::to_string(s.index(r, k));
        out += "\n";
    }
    return out;
}

}  // namespace

void Pipeline::report() {
    const fs::path dir = root_ / "report";
    const fs::path rec = dir / "report.stage.json", claims = dir / "claims.json";
    const auto runs = planned_runs(manifest_);
    nlohmann::json inputs = nlohmann::json::array();
    std::vector<fs::path> files;
    for (const auto& r : runs) {
        files.push_back(run_dir(r) / "metrics.json");
        if (wants_probe(r)) files.push_back(run_dir(r) / "probe.json");
        if (wants_latent_heads(r)) files.push_back(run_dir(r) / "latent_heads.json");
    }
    if (manifest_.latent_heads)
        for (int s = 0; s < manifest_.seeds; ++s)
            files.push_back(root_ / "runs" / ("ground_truth_s" + std::to_string(s)) / "latent_heads.json");
    std::vector<std::string> missing;
    for (const auto& f : files) {
        if (!fs::exists(f)) {
            missing.push_back(f.lexically_relative(root_).string());
            continue;
        }
        inputs.push_back(read_json(f).value("stage_hash", ""));
    }
    if (!missing.empty()) {
        std::string msg = "report inputs are missing (run train/metrics/probe first):";
        for (const auto& m : missing) msg += "\n  " + m;
        throw DataError(msg);
    }
    nlohmann::json closure = manifest_.to_json();
    closure.erase("output");
    const nlohmann::json slice = {{"inputs", inputs}, {"data", data_hash()}, {"manifest", closure}};
    const std::string h = json_hash({{"stage", "report"}, {"inputs", slice}});
    if (up_to_date(rec, h, {claims})) return note("report", StageStatus::skipped);

    stage_guard("report", [&] {
        fs::create_directories(dir);
        std::map<std::pair<std::string, int>, RunSummary> summaries;
        auto summary_for = [&](const std::string& regime, int task, int seed) -> RunSummary& {
            RunSummary& s = summaries[{regime + "#" + std::to_string(task), seed}];
            s.regime = regime;
            s.task_index = task;
            s.seed_index = seed;
            return s;
        };
        for (const auto& r : runs) {
            RunSummary& s = summary_for(r.regime, r.task_index, r.seed_index);
            const auto mj = read_json(run_dir(r) / "metrics.json");
            s.metrics = MetricReport::from_json(mj.at("report"));
            if (!mj.at("test_task_mse").is_null()) s.test_task_mse = mj["test_task_mse"].get<double>();
            if (wants_probe(r)) s.probe_mse = read_json(run_dir(r) / "probe.json").at("test_mse").get<double>();
            if (wants_latent_heads(r))
                s.latent_rmse = read_json(run_dir(r) / "latent_heads.json").at("mean_rmse").get<double>();
        }
        if (manifest_.latent_heads)
            for (int sd = 0; sd < manifest_.seeds; ++sd)
                summary_for("ground_truth", -1, sd).latent_rmse =
                    read_json(root_ / "runs" / ("ground_truth_s" + std::to_string(sd)) / "latent_heads.json")
                        .at("mean_rmse")
                        .get<double>();
        std::vector<RunSummary> list;
        for (auto& [k, v] : summaries) list.push_back(v);

        ReportPlan plan;
        plan.seeds = manifest_.seeds;
        plan.single_tasks = manifest_.resolved_single_tasks();
        plan.with_vae = manifest_.has_regime("vae");
        plan.with_probes = manifest_.probes;
        plan.with_latent_heads = manifest_.latent_heads;
        Report rep = assemble_report(list, plan);
        for (const auto& t : rep.tables) write_text_atomic(dir / (t.name + ".tsv"), t.to_tsv());
        write_text_atomic(dir / "metrics.svg", render_bar_chart_svg(rep.table("metrics"), "Disentanglement metrics, mean and std over seeds"));

        const LabeledDataset& ds = dataset();
        nlohmann::json figures = nlohmann::json::object();
        if (manifest_.probes) {
            const std::size_t base = select_example(ds, manifest_.master_seed);
            const int single_task = manifest_.resolved_single_tasks().front();
            std::vector<std::pair<std::string, TrainedModel>> probes;
            for (const RunId& r : {RunId{"random", -1, 0}, RunId{"single", single_task, 0}, RunId{"multi_head", -1, 0}}) {
                const fs::path p = run_dir(r) / "probe.dtb";
                require(p, "probe");
                probes.emplace_back(r.dir_name(), TrainedModel::from_dtb(read_dtb(p)));
            }
            nlohmann::json trav = nlohmann::json::object();
            for (const auto& [name, probe] : probes)
                for (bool clamp : {false, true}) {
                    TraversalGrid g = make_traversal(probe, ds, base, clamp);
                    int w = 0, hgt = 0;
                    const auto canvas = tile_grid(g.images, w, hgt);
                    const std::string file = "traversal_" + name + (clamp ? "_clamped" : "") + ".pgm";
                    write_pgm(dir / file, canvas, w, hgt);
                    std::vector<double> change;
                    for (int d = 0; d < probe.latent_dim; ++d) change.push_back(g.mean_adjacent_change(d));
                    trav[file] = {{"base_index", base}, {"base_latent", g.base_latent}, {"mean_adjacent_change", change}};
                }
            figures["traversals"] = trav;

            std::vector<std::size_t> rows;
            const auto test = ds.rows(Split::test);
            Rng rng(derive_seed(manifest_.master_seed, "gallery"));
            for (int i = 0; i < manifest_.gallery_size && !test.empty(); ++i) rows.push_back(test[rng.below(test.size())]);
            std::vector<std::pair<std::string, const TrainedModel*>> refs;
            for (const auto& [name, probe] : probes) refs.emplace_back(name, &probe);
            const Gallery gal = reconstruction_gallery(refs, ds, rows);
            int w = 0, hgt = 0;
            const auto canvas = tile_grid(gal.panel, w, hgt);
            write_pgm(dir / "gallery.pgm", canvas, w, hgt);
            figures["gallery"] = {{"file", "gallery.pgm"}, {"rows", gal.rows}, {"row_labels", gal.labels}};
        }
        {
            const TrainedModel multi = load_model({"multi_head", -1, 0});
            const auto test = ds.rows(Split::test);
            const RepresentationSample s = make_sample(multi.encode(ds.images.gather_rows(test)), ds, test);
            const PcaResult p = pca_embedding(s.codes, 2, manifest_.master_seed);
            write_text_atomic(dir / "pca_multi_head_s0.tsv", pca_tsv(p, s, ds.space));
            figures["pca"] = {{"file", "pca_multi_head_s0.tsv"},
                              {"explained_variance_ratio", p.explained_variance_ratio},
                              {"note", "PCA replaces UMAP for the 2-D embedding"}};
        }
        rep.claims["figures"] = figures;
        rep.claims["stage_hash"] = h;
        write_json(claims, rep.claims);
        mark_done(rec, "report", h, slice);
    });
    note("report", StageStatus::ran);
}

void Pipeline::reproduce(int threads) {
    fs::create_directories(root_);
    write_json(root_ / "manifest.json", manifest_.to_json());
    gen_data();
    gen_tasks();
    stage_guard("load", [&] {
        dataset();
        targets();
    });
    const auto runs = planned_runs(manifest_);

    // Train stages are independent; each worker pulls the next run.
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex fail_mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= runs.size()) return;
            {
                std::lock_guard lock(fail_mu);
                if (failure) return;
            }
            try {
                train(runs[i]);
            } catch (...) {
                std::lock_guard lock(fail_mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int n = std::max(1, std::min<int>(threads, static_cast<int>(runs.size())));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    for (const auto& r : runs) metrics(r);
    for (const auto& r : runs)
        if (wants_probe(r)) probe(r);
    if (manifest_.latent_heads) {
        for (int s = 0; s < manifest_.seeds; ++s) ground_truth_heads(s);
        for (const auto& r : runs)
            if (wants_latent_heads(r)) latent_heads(r);
    }
    report();
}

}  // namespace hardshare
