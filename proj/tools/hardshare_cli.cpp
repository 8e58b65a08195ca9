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

// hardshare: experiment driver. Every subcommand reads one manifest and
// works inside one run store; completed stages are skipped.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "hardshare/errors.hpp"
#include "hardshare/pipeline.hpp"

using namespace hardshare;

namespace {

struct Options {
    std::string manifest;
    std::string out;
    std::string profile;
    int seeds = 0;
    std::string regime;
    std::optional<int> seed_index;
    int threads = 1;
    bool standardize = false;
    std::string mig_denominator;
    std::string dci_importance;
    bool quiet = false;
};

ExperimentManifest resolve(const Options& o) {
    ExperimentManifest m = o.manifest.empty() ? ExperimentManifest{} : ExperimentManifest::load(o.manifest);
    if (!o.profile.empty()) m.profile = ExperimentProfile::named(o.profile);
    if (o.seeds > 0) m.seeds = o.seeds;
    if (o.standardize) m.standardize_targets = true;
    if (!o.mig_denominator.empty()) m.metrics.mig_denominator = mig_denominator_from_string(o.mig_denominator);
    if (!o.dci_importance.empty())
        m.metrics.dci.importance = importance_kind_from_string(o.dci_importance);
    if (!o.out.empty()) m.output = o.out;
    return ExperimentManifest::from_json(m.to_json());
}

std::vector<RunId> selected_runs(const Pipeline& p, const Options& o) {
    if (!o.regime.empty()) regime_from_string(o.regime);
    std::vector<RunId> out;
    for (const auto& r : planned_runs(p.manifest())) {
        if (!o.regime.empty() && r.regime != o.regime) continue;
        if (o.seed_index && r.seed_index != *o.seed_index) continue;
        out.push_back(r);
    }
    if (out.empty() && !o.regime.empty())
        throw ConfigError("regime '" + o.regime + "' is not part of this manifest's run grid");
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"hardshare: disentanglement in hard-parameter-sharing multi-task networks"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--manifest", o.manifest, "Experiment manifest (JSON); built-in desk manifest if omitted")
            ->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "Run store directory (overrides the manifest's output)");
        sub->add_option("--profile", o.profile, "Training profile")->check(CLI::IsMember({"paper", "desk"}));
        sub->add_option("--seeds", o.seeds, "Number of seeds")->check(CLI::PositiveNumber);
        sub->add_option("--threads", o.threads, "Worker threads for training")->check(CLI::PositiveNumber);
        sub->add_flag("--standardize-targets", o.standardize, "Standardize task targets per task");
        sub->add_option("--mig-denominator", o.mig_denominator, "MIG normalizer")
            ->check(CLI::IsMember({"paper", "entropy"}));
        sub->add_option("--dci-importance", o.dci_importance, "DCI importance estimator")
            ->check(CLI::IsMember({"forest", "l1"}));
        sub->add_flag("-q,--quiet", o.quiet, "Only print errors");
    };
    auto per_run = [&](CLI::App* sub) {
        sub->add_option("--regime", o.regime, "random, single, multi_head, one_head, ae or vae");
        sub->add_option("--seed-index", o.seed_index, "Restrict to one seed index");
    };

    auto* gen_data = app.add_subcommand("gen-data", "Generate the labeled image dataset");
    auto* gen_tasks = app.add_subcommand("gen-tasks", "Generate the random task bank and its targets");
    auto* train = app.add_subcommand("train", "Train models");
    auto* metrics = app.add_subcommand("metrics", "Score trained representations");
    auto* probe = app.add_subcommand("probe", "Fit decoder probes and latent task heads");
    auto* report = app.add_subcommand("report", "Aggregate tables, figures and claim flags");
    auto* reproduce = app.add_subcommand("reproduce", "Run every stage in order, skipping completed ones");
    for (auto* s : {gen_data, gen_tasks, train, metrics, probe, report, reproduce}) common(s);
    for (auto* s : {train, metrics, probe}) per_run(s);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    ExperimentManifest m = resolve(o);
    Pipeline p(m, m.output);
    const auto t0 = std::chrono::steady_clock::now();
    if (!o.quiet)
        p.set_logger([t0](const std::string& line) {
            const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::fprintf(stderr, "%8.1fs %s\n", s, line.c_str());
        });

    if (*gen_data) {
        p.gen_data();
    } else if (*gen_tasks) {
        p.gen_tasks();
    } else if (*train) {
        for (const auto& r : selected_runs(p, o)) p.train(r);
    } else if (*metrics) {
        for (const auto& r : selected_runs(p, o)) p.metrics(r);
    } else if (*probe) {
        const auto runs = selected_runs(p, o);
        for (const auto& r : runs)
            if (p.wants_probe(r)) p.probe(r);
        if (m.latent_heads) {
            if (o.regime.empty())
                for (int s = 0; s < m.seeds; ++s)
                    if (!o.seed_index || *o.seed_index == s) p.ground_truth_heads(s);
            for (const auto& r : runs)
                if (p.wants_latent_heads(r)) p.latent_heads(r);
        }
    } else if (*report) {
        p.report();
        std::cout << (p.root() / "report" / "claims.json").string() << "\n";
    } else if (*reproduce) {
        p.reproduce(o.threads);
        std::cout << (p.root() / "report" / "claims.json").string() << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
