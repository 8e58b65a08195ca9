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

// Low-level extension module. JSON values cross the boundary as strings and
// are decoded by the Python package.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hardshare/dtb.hpp"
#include "hardshare/errors.hpp"
#include "hardshare/factor_data.hpp"
#include "hardshare/metrics.hpp"
#include "hardshare/models.hpp"
#include "hardshare/pipeline.hpp"
#include "hardshare/task_bank.hpp"

namespace py = pybind11;
using namespace hardshare;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<std::int32_t, py::array::c_style | py::array::forcecast>;

template <typename T>
py::array_t<T> to_array(const std::vector<std::size_t>& shape, const T* data) {
    py::array_t<T> out(shape);
    std::copy(data, data + out.size(), out.mutable_data());
    return out;
}

py::array_t<float> tensor_to_array(const Tensor& t) {
    std::vector<std::size_t> shape(t.shape().begin(), t.shape().end());
    return to_array(shape, t.data());
}

Tensor array_to_tensor(const FloatArray& a) {
    Shape shape;
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<int>(a.shape(i)));
    return Tensor(shape, std::span<const float>(a.data(), static_cast<std::size_t>(a.size())));
}

Matrix array_to_matrix(const DoubleArray& a, const char* what) {
    if (a.ndim() != 2) throw ConfigError(std::string(what) + " must be a 2-D array");
    Matrix m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), m.data.begin());
    return m;
}

py::dict dataset_dict(const LabeledDataset& ds) {
    const std::size_t n = ds.size(), m = ds.factor_dim();
    std::vector<std::uint8_t> split(n);
    for (std::size_t i = 0; i < n; ++i) split[i] = static_cast<std::uint8_t>(ds.split[i]);
    py::dict d;
    d["images"] = tensor_to_array(ds.images);
    d["factor_values"] = to_array<float>({n, m}, ds.factor_values.data());
    d["factor_indices"] = to_array<std::int32_t>({n, m}, ds.factor_indices.data());
    d["split"] = to_array<std::uint8_t>({n}, split.data());
    d["space"] = ds.space.to_json().dump();
    return d;
}

py::object entry_array(const DtbContainer& c, const DtbEntry& e) {
    std::vector<std::size_t> shape(e.shape.begin(), e.shape.end());
    switch (e.dtype) {
        case DType::f32: return tensor_to_array(c.get_f32(e.name));
        case DType::i32: {
            const auto v = c.get_i32(e.name);
            return to_array<std::int32_t>(shape, v.data());
        }
        case DType::u8: {
            const auto v = c.get_u8(e.name);
            return to_array<std::uint8_t>(shape, v.data());
        }
    }
    return py::none();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Multi-task representation experiments: data, tasks, models and disentanglement metrics";

    static py::exception<ConfigError> config_error(m, "ConfigError", PyExc_ValueError);
    static py::exception<DataError> data_error(m, "DataError", PyExc_RuntimeError);
    static py::exception<ParseError> parse_error(m, "ParseError", data_error.ptr());
    static py::exception<NumericError> numeric_error(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ParseError& e) {
            PyErr_SetString(parse_error.ptr(), e.what());
        } catch (const DataError& e) {
            PyErr_SetString(data_error.ptr(), e.what());
        } catch (const ConfigError& e) {
            PyErr_SetString(config_error.ptr(), e.what());
        } catch (const NumericError& e) {
            PyErr_SetString(numeric_error.ptr(), e.what());
        }
    });

    m.def(
        "minisprites",
        [](const std::string& profile_json, std::uint64_t seed) {
            return dataset_dict(make_minisprites(MiniSpritesProfile::from_json(nlohmann::json::parse(profile_json)), seed));
        },
        py::arg("profile_json"), py::arg("seed"));

    m.def(
        "task_targets",
        [](const FloatArray& factor_values, int n_tasks, std::uint64_t seed) {
            if (factor_values.ndim() != 2) throw ConfigError("factor values must be (N, m)");
            const TaskBank bank = TaskBank::build(static_cast<int>(factor_values.shape(1)), n_tasks, seed);
            const Tensor z = array_to_tensor(factor_values);
            const int n = z.dim(0);
            Tensor y({n, n_tasks});
            for (int t = 0; t < n_tasks; ++t) {
                const Tensor col = bank.eval_batch(t, z);
                for (int r = 0; r < n; ++r) y[static_cast<std::size_t>(r * n_tasks + t)] = col[static_cast<std::size_t>(r)];
            }
            return tensor_to_array(y);
        },
        py::arg("factor_values"), py::arg("n_tasks"), py::arg("seed"),
        "Raw outputs of a seeded bank of random tanh networks; no degenerate-task redraws.");

    m.def(
        "metric_report",
        [](const DoubleArray& codes, const DoubleArray& factor_values, const IntArray& factor_indices,
           const std::vector<std::string>& kinds, const std::string& config_json, std::uint64_t seed) {
            RepresentationSample s;
            s.codes = array_to_matrix(codes, "codes");
            s.factor_values = array_to_matrix(factor_values, "factor_values");
            s.factor_indices.assign(factor_indices.data(), factor_indices.data() + factor_indices.size());
            for (const auto& k : kinds) s.kinds.push_back(factor_kind_from_string(k));
            const MetricConfig cfg = MetricConfig::from_json(nlohmann::json::parse(config_json));
            return full_report(s, cfg, seed).to_json().dump();
        },
        py::arg("codes"), py::arg("factor_values"), py::arg("factor_indices"), py::arg("kinds"),
        py::arg("config_json"), py::arg("seed"));

    m.def(
        "default_metric_config", [] { return MetricConfig{}.to_json().dump(); });

    m.def(
        "mutual_information",
        [](const IntArray& a, const IntArray& b) {
            return mutual_information(std::span<const int>(a.data(), static_cast<std::size_t>(a.size())),
                                      std::span<const int>(b.data(), static_cast<std::size_t>(b.size())));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "discretized_mutual_information",
        [](const DoubleArray& a, const IntArray& b, int bins) {
            return discretized_mutual_information(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                                                  std::span<const int>(b.data(), static_cast<std::size_t>(b.size())),
                                                  bins);
        },
        py::arg("a"), py::arg("b"), py::arg("bins") = 20);

    m.def(
        "read_dtb",
        [](const std::string& path) {
            const DtbContainer c = read_dtb(path);
            py::dict arrays;
            for (const auto& e : c.entries()) arrays[py::str(e.name)] = entry_array(c, e);
            return py::make_tuple(c.manifest.dump(), arrays);
        },
        py::arg("path"));

    py::class_<TrainedModel>(m, "Model")
        .def_static("load", [](const std::string& path) { return TrainedModel::from_dtb(read_dtb(path)); })
        .def_property_readonly("regime", [](const TrainedModel& t) { return to_string(t.regime); })
        .def_readonly("latent_dim", &TrainedModel::latent_dim)
        .def_property_readonly("manifest", [](const TrainedModel& t) { return t.manifest.dump(); })
        .def(
            "encode",
            [](const TrainedModel& t, const FloatArray& images) { return tensor_to_array(t.encode(array_to_tensor(images))); },
            py::arg("images"))
        .def(
            "decode",
            [](const TrainedModel& t, const FloatArray& latents) {
                return tensor_to_array(t.decode(array_to_tensor(latents)));
            },
            py::arg("latents"));

    m.def(
        "reproduce",
        [](const std::string& manifest_path, const std::string& out, int threads) {
            py::gil_scoped_release release;
            Pipeline p(ExperimentManifest::load(manifest_path), out);
            p.reproduce(threads);
        },
        py::arg("manifest_path"), py::arg("out"), py::arg("threads") = 1);
}
