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

#include "hardshare/task_bank.hpp"

#include <cmath>
#include <cstring>
#include <string_view>

#include <Eigen/Dense>

#include "hardshare/errors.hpp"
#include "hardshare/random.hpp"

namespace hardshare {

namespace {

using RowMajorF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Targets are computed in double precision and rounded once at the end.
MatrixD forward_f64(const Network& net, MatrixD a) {
    std::size_t p = 0;
    for (const LayerSpec& spec : net.specs()) {
        if (spec.kind == LayerKind::dense) {
            const Tensor& w = net.parameters()[p].value;
            const Tensor& b = net.parameters()[p + 1].value;
            p += 2;
            const Eigen::Map<const RowMajorF> wm(w.data(), w.dim(0), w.dim(1));
            const Eigen::Map<const Eigen::VectorXf> bv(b.data(), static_cast<Eigen::Index>(b.size()));
            MatrixD next = a * wm.cast<double>().transpose();
            next.rowwise() += bv.cast<double>().transpose();
            a = std::move(next);
        } else {
            a = a.array().tanh().matrix();
        }
    }
    return a;
}

}  // namespace

std::vector<LayerSpec> TaskBank::layer_specs(const TaskArch& arch) {
    std::vector<LayerSpec> specs;
    for (int l = 0; l < arch.hidden_layers; ++l) {
        specs.push_back(LayerSpec::dense(arch.hidden_units));
        specs.push_back(LayerSpec::act(Activation::tanh));
    }
    specs.push_back(LayerSpec::dense(1));
    return specs;
}

std::uint64_t TaskBank::task_seed(std::uint64_t master_seed, int task, int draw) {
    return derive_seed(derive_seed(master_seed, "task", static_cast<std::uint64_t>(task)), "draw",
                       static_cast<std::uint64_t>(draw));
}

void TaskBank::regenerate(int task) {
    auto& net = nets_.at(static_cast<std::size_t>(task));
    net = Network({factor_dim_}, layer_specs(arch_), "task" + std::to_string(task));
    seeded_init(net, task_seed(master_seed_, task, draws_[static_cast<std::size_t>(task)]), InitScheme::gaussian_unit);
}

TaskBank TaskBank::build(int factor_dim, int n_tasks, std::uint64_t master_seed, TaskArch arch) {
    if (factor_dim < 1 || n_tasks < 1) throw ConfigError("task bank needs factor_dim >= 1 and n_tasks >= 1");
    if (arch.hidden_layers < 1 || arch.hidden_units < 1) throw ConfigError("task architecture must be non-empty");
    TaskBank b;
    b.factor_dim_ = factor_dim;
    b.master_seed_ = master_seed;
    b.arch_ = arch;
    b.draws_.assign(static_cast<std::size_t>(n_tasks), 0);
    b.nets_.resize(static_cast<std::size_t>(n_tasks));
    for (int i = 0; i < n_tasks; ++i) b.regenerate(i);
    return b;
}

double TaskBank::eval(int task, std::span<const float> z) const {
    if (static_cast<int>(z.size()) != factor_dim_)
        throw ConfigError("task input has dimension " + std::to_string(z.size()) + ", expected " +
                          std::to_string(factor_dim_));
    MatrixD in(1, factor_dim_);
    for (int j = 0; j < factor_dim_; ++j) in(0, j) = z[static_cast<std::size_t>(j)];
    return forward_f64(network(task), std::move(in))(0, 0);
}

Tensor TaskBank::eval_batch(int task, const Tensor& z) const {
    if (z.rank() != 2 || z.dim(1) != factor_dim_)
        throw ConfigError("task input batch must be (N, " + std::to_string(factor_dim_) + "), got " +
                          shape_str(z.shape()));
    const Eigen::Map<const RowMajorF> zm(z.data(), z.dim(0), z.dim(1));
    const MatrixD y = forward_f64(network(task), zm.cast<double>());
    Tensor out({z.dim(0), 1});
    for (int r = 0; r < z.dim(0); ++r) out[static_cast<std::size_t>(r)] = static_cast<float>(y(r, 0));
    return out;
}

void TaskBank::redraw(int task) {
    draws_.at(static_cast<std::size_t>(task)) += 1;
    regenerate(task);
    targets_.reset();
}

const Tensor& TaskBank::targets() const {
    if (!targets_) throw StateError("task targets have not been built");
    return *targets_;
}

void TaskBank::set_targets(Tensor t) {
    if (t.rank() != 2 || t.dim(1) != n_tasks()) throw ConfigError("target matrix must be (N, n_tasks)");
    targets_ = std::move(t);
}

std::uint64_t TaskBank::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& net : nets_)
        for (const auto& p : net.parameters())
            h = fnv1a64(std::string_view(reinterpret_cast<const char*>(p.value.data()), p.value.size() * sizeof(float)), h);
    return h;
}

DtbContainer TaskBank::to_dtb() const {
    DtbContainer c;
    c.manifest = {{"kind", "task_bank"},
                  {"factor_dim", factor_dim_},
                  {"n_tasks", n_tasks()},
                  {"master_seed", master_seed_},
                  {"arch", {{"hidden_layers", arch_.hidden_layers}, {"hidden_units", arch_.hidden_units},
                            {"activation", "tanh"}, {"init", "gaussian_unit"}}},
                  {"draws", draws_},
                  {"param_checksum", hex64(checksum())}};
    c.add_i32("draws", {n_tasks()}, draws_);
    if (targets_) c.add_f32("targets", *targets_);
    return c;
}

TaskBank TaskBank::from_dtb(const DtbContainer& c) {
    const auto& m = c.manifest;
    if (m.value("kind", "") != "task_bank") throw DataError("DTB container is not a task bank");
    TaskBank b;
    try {
        TaskArch arch{m.at("arch").at("hidden_layers").get<int>(), m.at("arch").at("hidden_units").get<int>()};
        b = build(m.at("factor_dim").get<int>(), m.at("n_tasks").get<int>(), m.at("master_seed").get<std::uint64_t>(),
                  arch);
        const auto draws = c.get_i32("draws");
        if (draws.size() != static_cast<std::size_t>(b.n_tasks())) throw DataError("task bank draws have wrong length");
        for (int i = 0; i < b.n_tasks(); ++i) {
            if (draws[static_cast<std::size_t>(i)] < 0) throw DataError("negative task draw");
            if (draws[static_cast<std::size_t>(i)] != 0) {
                b.draws_[static_cast<std::size_t>(i)] = draws[static_cast<std::size_t>(i)];
                b.regenerate(i);
            }
        }
        if (hex64(b.checksum()) != m.at("param_checksum").get<std::string>())
            throw DataError("regenerated task parameters do not match the stored checksum");
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed task bank manifest: ") + e.what());
    }
    if (c.has("targets")) b.set_targets(c.get_f32("targets"));
    return b;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

namespace {

double column_std(std::span<const double> c) {
    double mean = 0.0;
    for (double v : c) mean += v;
    mean /= static_cast<double>(c.size());
    double var = 0.0;
    for (double v : c) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(c.size()));
}

}  // namespace

const Tensor& build_targets(TaskBank& bank, const LabeledDataset& ds, const TargetOptions& opt) {
    if (static_cast<int>(ds.factor_dim()) != bank.factor_dim())
        throw ConfigError("dataset has " + std::to_string(ds.factor_dim()) + " factors, task bank expects " +
                          std::to_string(bank.factor_dim()));
    const Tensor z = ds.factor_value_tensor();
    const auto n = static_cast<std::size_t>(z.dim(0));
    const int tasks = bank.n_tasks();
    std::vector<std::vector<double>> cols(static_cast<std::size_t>(tasks));
    for (int i = 0; i < tasks; ++i) {
        for (int attempt = 0;; ++attempt) {
            const Tensor y = bank.eval_batch(i, z);
            std::vector<double> col(y.storage().begin(), y.storage().end());
            bool ok = y.all_finite() && column_std(col) >= opt.min_std;
            for (int k = 0; ok && k < i; ++k)
                ok = std::abs(pearson(col, cols[static_cast<std::size_t>(k)])) < opt.max_abs_correlation;
            if (ok) {
                cols[static_cast<std::size_t>(i)] = std::move(col);
                break;
            }
            if (attempt >= opt.max_redraws)
                throw NumericError("task " + std::to_string(i) + " stayed degenerate after " +
                                   std::to_string(opt.max_redraws) + " redraws");
            bank.redraw(i);
        }
    }
    Tensor t({static_cast<int>(n), tasks});
    for (std::size_t r = 0; r < n; ++r)
        for (int i = 0; i < tasks; ++i)
            t[r * static_cast<std::size_t>(tasks) + static_cast<std::size_t>(i)] =
                static_cast<float>(cols[static_cast<std::size_t>(i)][r]);
    bank.set_targets(std::move(t));
    return bank.targets();
}

Standardization standardize_columns(Tensor& t) {
    if (t.rank() != 2) throw ConfigError("standardize_columns expects a matrix");
    const auto n = static_cast<std::size_t>(t.dim(0));
    const auto k = static_cast<std::size_t>(t.dim(1));
    Standardization s;
    for (std::size_t j = 0; j < k; ++j) {
        std::vector<double> col(n);
        for (std::size_t r = 0; r < n; ++r) col[r] = t[r * k + j];
        double mean = 0.0;
        for (double v : col) mean += v;
        mean /= static_cast<double>(n);
        double sd = column_std(col);
        if (sd == 0.0) sd = 1.0;
        for (std::size_t r = 0; r < n; ++r) t[r * k + j] = static_cast<float>((col[r] - mean) / sd);
        s.mean.push_back(mean);
        s.std.push_back(sd);
    }
    return s;
}

}  // namespace hardshare
