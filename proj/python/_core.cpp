// Python bindings for the pathopaint core. Arrays cross the boundary as numpy copies.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "pathopaint/config.hpp"
#include "pathopaint/diffusion.hpp"
#include "pathopaint/embedding_bank.hpp"
#include "pathopaint/errors.hpp"
#include "pathopaint/kmeans.hpp"
#include "pathopaint/manifest.hpp"
#include "pathopaint/masks.hpp"
#include "pathopaint/pipeline.hpp"
#include "pathopaint/seeding.hpp"
#include "pathopaint/segmentation.hpp"
#include "pathopaint/uncertainty.hpp"

namespace py = pybind11;
using namespace pathopaint;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

torch::Tensor to_tensor(const F64Array& a) {
  std::vector<std::int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kFloat64).clone();
}

torch::Tensor to_mask(const F64Array& a) { return to_tensor(a).ne(0).to(torch::kUInt8); }

py::array to_numpy(const torch::Tensor& t) {
  auto c = t.detach().contiguous();
  std::vector<py::ssize_t> shape(c.sizes().begin(), c.sizes().end());
  if (c.scalar_type() == torch::kUInt8) {
    py::array_t<std::uint8_t> out(shape);
    std::memcpy(out.mutable_data(), c.data_ptr<std::uint8_t>(), static_cast<std::size_t>(c.numel()));
    return out;
  }
  c = c.to(torch::kFloat64);
  py::array_t<double> out(shape);
  std::memcpy(out.mutable_data(), c.data_ptr<double>(), static_cast<std::size_t>(c.numel()) * sizeof(double));
  return out;
}

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

PipelineConfig config_from(const std::string& preset, const std::string& yaml, std::optional<std::uint64_t> seed) {
  auto config = yaml.empty() ? preset_config(preset) : parse_config(yaml);
  if (seed) config.seed = *seed;
  validate_config(config);
  return config;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "pathopaint core operations";

  auto base = py::register_exception<Error>(m, "PathopaintError");
  py::register_exception<ParameterError>(m, "ParameterError", base.ptr());
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<StageError>(m, "StageError", base.ptr());

  m.def("derive_seed", py::overload_cast<std::uint64_t, std::string_view>(&derive_seed), py::arg("base"),
        py::arg("key"));

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def_readonly("num_steps", &NoiseSchedule::num_steps)
      .def_readonly("betas", &NoiseSchedule::betas)
      .def_readonly("alphas", &NoiseSchedule::alphas)
      .def_readonly("alpha_bars", &NoiseSchedule::alpha_bars);
  m.def(
      "make_noise_schedule",
      [](std::int64_t T, double b0, double b1, const std::string& kind) {
        return make_noise_schedule(T, b0, b1, parse_schedule_kind(kind));
      },
      py::arg("num_steps"), py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.02, py::arg("kind") = "linear");
  m.def(
      "forward_diffuse",
      [](const F64Array& z0, std::int64_t t, const F64Array& eps, const NoiseSchedule& s) {
        return to_numpy(forward_diffuse(to_tensor(z0), t, to_tensor(eps), s));
      },
      py::arg("z0"), py::arg("t"), py::arg("eps"), py::arg("schedule"));

  m.def(
      "downsample_mask", [](const F64Array& mask, std::int64_t f) { return to_numpy(downsample_mask(to_mask(mask), f)[0]); },
      py::arg("mask"), py::arg("factor"));
  m.def(
      "mask_pool",
      [](const F64Array& fmap, const F64Array& mask, std::int64_t stride) {
        return to_numpy(mask_pool(to_tensor(fmap), to_mask(mask), stride));
      },
      py::arg("feature_map"), py::arg("mask"), py::arg("stride"));
  m.def(
      "kmeans",
      [](const F64Array& points, std::size_t k, std::uint64_t seed, int max_iters) {
        if (points.ndim() != 2) throw ShapeError("kmeans: points must be [n, d]");
        const auto n = static_cast<std::size_t>(points.shape(0)), d = static_cast<std::size_t>(points.shape(1));
        const auto r = kmeans({std::span<const double>(points.data(), n * d), n, d}, k, seed, max_iters);
        py::dict out;
        out["assignments"] = r.assignments;
        out["centroids"] = r.centroids;
        out["inertia_history"] = r.inertia_history;
        out["converged"] = r.converged;
        return out;
      },
      py::arg("points"), py::arg("k"), py::arg("seed") = 0, py::arg("max_iters") = 100);

  m.def(
      "compute_uncertain",
      [](const F64Array& mask, const F64Array& predicted) {
        return to_numpy(compute_uncertain(to_mask(mask), to_mask(predicted)).fn_map);
      },
      py::arg("mask"), py::arg("predicted"));
  m.def(
      "seg_loss",
      [](const F64Array& logits, const F64Array& target, std::optional<F64Array> fn_map) {
        auto lg = to_tensor(logits);
        auto tg = to_mask(target);
        auto loss = fn_map ? masked_seg_loss(lg, tg, to_mask(*fn_map)) : seg_loss(lg, tg);
        return loss.item<double>();
      },
      py::arg("logits"), py::arg("target"), py::arg("fn_map") = py::none());
  m.def(
      "foreground_iou",
      [](const F64Array& p, const F64Array& mask) { return foreground_iou(to_mask(p), to_mask(mask)); },
      py::arg("predicted"), py::arg("mask"));
  m.def(
      "summarize_iou",
      [](std::vector<double> per_sample, const std::string& variance) {
        if (variance != "population" && variance != "sample") throw ParameterError("variance must be population|sample");
        return to_python(metrics_json(
            summarize_iou(std::move(per_sample), variance == "sample" ? VarianceKind::sample : VarianceKind::population)));
      },
      py::arg("per_sample"), py::arg("variance") = "population");

  m.def(
      "preset_config", [](const std::string& name) { return dump_config(preset_config(name)); }, py::arg("name"),
      "Resolved preset as YAML text.");
  m.def(
      "check_config",
      [](const std::string& yaml) {
        const auto c = parse_config(yaml);
        validate_config(c);
        return dump_config(c);
      },
      py::arg("yaml"), "Parses and validates YAML; returns the normalized text.");
  m.def(
      "run_pipeline",
      [](const std::filesystem::path& out, const std::string& preset, const std::string& yaml,
         std::optional<std::uint64_t> seed) {
        const auto config = config_from(preset, yaml, seed);
        PipelineReport report;
        {
          py::gil_scoped_release release;
          report = run_pipeline(config, out);
        }
        return to_python(report.to_json());
      },
      py::arg("out"), py::arg("preset") = "tiny", py::arg("config") = "", py::arg("seed") = py::none(),
      "Runs every stage (resuming finished ones) and returns the report.");
  m.def(
      "report_text",
      [](const py::object& report) {
        const auto text = py::module_::import("json").attr("dumps")(report).cast<std::string>();
        return PipelineReport::from_json(nlohmann::json::parse(text)).to_text();
      },
      py::arg("report"));
  m.def("non_reproducibility_caveat", &non_reproducibility_caveat);
  m.def(
      "audit",
      [](const std::filesystem::path& dir, std::optional<std::filesystem::path> bank_path) {
        std::optional<EmbeddingBank> bank;
        if (bank_path) bank = read_bank(*bank_path);
        const auto r = audit_synthetic_set(dir, bank ? &*bank : nullptr);
        py::dict out;
        out["records"] = r.records;
        out["orphan_files"] = r.orphan_files;
        out["missing_files"] = r.missing_files;
        out["duplicate_refs"] = r.duplicate_refs;
        out["sampling_violations"] = r.sampling_violations;
        out["ok"] = r.ok();
        return out;
      },
      py::arg("dir"), py::arg("bank") = py::none());
}
