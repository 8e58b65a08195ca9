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
#include <filesystem>
#include <functional>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "hardshare/analysis.hpp"
#include "hardshare/factor_data.hpp"
#include "hardshare/metrics.hpp"
#include "hardshare/models.hpp"
#include "hardshare/task_bank.hpp"

namespace hardshare {

/// Training settings for every stage, selected by name.
struct ExperimentProfile {
    std::string name;
    TrainingProfile multitask;
    TrainingProfile autoencoder;
    TrainingProfile probe;
    TrainingProfile latent_heads;
    int decoder_width_divisor = 1;

    nlohmann::json to_json() const;
    static ExperimentProfile from_json(const nlohmann::json& j);
    /// "paper" or "desk"; anything else is a ConfigError.
    static ExperimentProfile named(const std::string& name);
};

/// Complete description of an experiment; every artifact is a function of it.
struct ExperimentManifest {
    std::string name = "desk";
    MiniSpritesProfile dataset;
    std::uint64_t data_seed = 1;
    int n_tasks = 10;
    std::uint64_t task_seed = 7;
    bool standardize_targets = false;
    std::vector<std::string> regimes{"random", "single", "multi_head", "one_head", "ae"};
    std::vector<int> single_tasks;  // empty = every task
    int seeds = 3;
    std::uint64_t master_seed = 2024;
    int latent_dim = 8;
    double beta = 1.0;
    ExperimentProfile profile = ExperimentProfile::named("desk");
    MetricConfig metrics;
    bool probes = true;
    bool latent_heads = true;
    int gallery_size = 8;
    std::string output = "runs/desk";

    nlohmann::json to_json() const;
    static ExperimentManifest from_json(const nlohmann::json& j);
    static ExperimentManifest load(const std::filesystem::path& path);

    std::vector<int> resolved_single_tasks() const;
    bool has_regime(const std::string& r) const;
    std::uint64_t run_seed(int seed_index) const;
};

/// One trained model of the experiment grid.
struct RunId {
    std::string regime;  // random, single, multi_head, one_head, ae, vae
    int task_index = -1;
    int seed_index = 0;

    std::string label() const;  // "single(3)" or the regime name
    std::string dir_name() const;  // "single3_s0"
};

/// Every (regime, task, seed) run the manifest asks for, in a fixed order.
std::vector<RunId> planned_runs(const ExperimentManifest& m);

enum class StageStatus { ran, skipped };

struct StageEvent {
    std::string stage;
    StageStatus status;
};

/// Content-addressed run directory. Each stage writes its outputs plus a
/// `<name>.stage.json` recording the hash of its inputs; a stage whose record
/// matches is skipped.
class Pipeline {
public:
    Pipeline(ExperimentManifest manifest, std::filesystem::path root);

    const ExperimentManifest& manifest() const noexcept { return manifest_; }
    const std::filesystem::path& root() const noexcept { return root_; }

    void gen_data();
    void gen_tasks();
    void train(const RunId& run);
    void metrics(const RunId& run);
    void probe(const RunId& run);
    void latent_heads(const RunId& run);
    void ground_truth_heads(int seed_index);
    void report();

    /// All stages in dependency order; train stages use up to `threads`
    /// worker threads.
    void reproduce(int threads = 1);

    const std::vector<StageEvent>& events() const noexcept { return events_; }
    void set_logger(std::function<void(const std::string&)> log) { log_ = std::move(log); }

    // Stage input hashes, exposed for tests.
    std::string data_hash() const;
    std::string tasks_hash() const;
    std::string train_hash(const RunId& run) const;

    /// Regimes with decoder probes and frozen-latent heads.
    bool wants_probe(const RunId& run) const;
    bool wants_latent_heads(const RunId& run) const;

    std::filesystem::path run_dir(const RunId& run) const;

private:
    bool up_to_date(const std::filesystem::path& record, const std::string& hash,
                    const std::vector<std::filesystem::path>& outputs) const;
    void mark_done(const std::filesystem::path& record, const std::string& stage, const std::string& hash,
                   const nlohmann::json& slice) const;
    void note(const std::string& stage, StageStatus s);

    const LabeledDataset& dataset();
    const Tensor& targets();
    TrainedModel load_model(const RunId& run) const;

    ExperimentManifest manifest_;
    std::filesystem::path root_;
    std::optional<LabeledDataset> dataset_;
    std::optional<Tensor> targets_;
    std::vector<StageEvent> events_;
    std::function<void(const std::string&)> log_;
    std::mutex mu_;
};

/// Stable content hash: FNV-1a over the compact JSON dump.
std::string json_hash(const nlohmann::json& j);

}  // namespace hardshare
