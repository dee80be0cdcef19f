// Copyright (c) 2026 The CMM Authors
// SPDX-License-Identifier: Apache-2.0

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <json.hpp>

#include "cmm/embedding_store.hpp"
#include "cmm/error.hpp"
#include "cmm/evaluator.hpp"
#include "cmm/gap_metrics.hpp"
#include "cmm/mapper.hpp"
#include "cmm/parallel.hpp"
#include "cmm/prototypes.hpp"
#include "cmm/trainer.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const cmm::Matrix& m) {
  py::array_t<double> out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

cmm::Matrix from_numpy(const Array& a) {
  if (a.ndim() != 2) throw cmm::Error(cmm::Errc::DimMismatch, "expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return cmm::Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

py::array_t<std::uint32_t> labels_to_numpy(const std::vector<std::uint32_t>& labels) {
  py::array_t<std::uint32_t> out(labels.size());
  std::copy(labels.begin(), labels.end(), out.mutable_data());
  return out;
}

std::vector<std::uint32_t> labels_from(const py::array_t<std::uint32_t, py::array::forcecast>& a) {
  return {a.data(), a.data() + a.size()};
}

py::object to_python(const json& j) {
  switch (j.type()) {
    case json::value_t::null:
      return py::none();
    case json::value_t::boolean:
      return py::bool_(j.get<bool>());
    case json::value_t::number_integer:
      return py::int_(j.get<std::int64_t>());
    case json::value_t::number_unsigned:
      return py::int_(j.get<std::uint64_t>());
    case json::value_t::number_float:
      return py::float_(j.get<double>());
    case json::value_t::string:
      return py::str(j.get<std::string>());
    case json::value_t::array: {
      py::list out;
      for (const auto& v : j) out.append(to_python(v));
      return out;
    }
    default: {
      py::dict out;
      for (const auto& [k, v] : j.items()) out[py::str(k)] = to_python(v);
      return out;
    }
  }
}

cmm::GaussianStats gaussian(const std::vector<double>& mean, const Array& cov) {
  cmm::GaussianStats g;
  g.mean = mean;
  g.cov = from_numpy(cov);
  if (g.cov.rows() != mean.size() || g.cov.cols() != mean.size()) {
    throw cmm::Error(cmm::Errc::DimMismatch, "covariance must be square and match the mean");
  }
  return g;
}

}  // namespace

PYBIND11_MODULE(_cmm, m) {
  m.doc() = "Cross-modal mapping over cached vision-language embeddings.";

  // Messages start with the error-code name, e.g. "MissingFile: ...".
  py::register_exception<cmm::Error>(m, "CmmError", PyExc_RuntimeError);

  py::class_<cmm::SynthConfig>(m, "SynthConfig")
      .def(py::init<>())
      .def_readwrite("num_classes", &cmm::SynthConfig::num_classes)
      .def_readwrite("num_templates", &cmm::SynthConfig::num_templates)
      .def_readwrite("dim", &cmm::SynthConfig::dim)
      .def_readwrite("train_per_class", &cmm::SynthConfig::train_per_class)
      .def_readwrite("val_per_class", &cmm::SynthConfig::val_per_class)
      .def_readwrite("test_per_class", &cmm::SynthConfig::test_per_class)
      .def_readwrite("class_separation", &cmm::SynthConfig::class_separation)
      .def_readwrite("noise_sigma", &cmm::SynthConfig::noise_sigma)
      .def_readwrite("flip_sigma", &cmm::SynthConfig::flip_sigma)
      .def_readwrite("with_flips", &cmm::SynthConfig::with_flips)
      .def_readwrite("gap_shift", &cmm::SynthConfig::gap_shift)
      .def_readwrite("rotation_angle", &cmm::SynthConfig::rotation_angle)
      .def_readwrite("rotation_seed", &cmm::SynthConfig::rotation_seed)
      .def_readwrite("template_sigma", &cmm::SynthConfig::template_sigma)
      .def_readwrite("seed", &cmm::SynthConfig::seed);

  py::class_<cmm::TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("shots", &cmm::TrainConfig::shots)
      .def_readwrite("seed", &cmm::TrainConfig::seed)
      .def_readwrite("batch_size", &cmm::TrainConfig::batch_size)
      .def_readwrite("total_steps", &cmm::TrainConfig::total_steps)
      .def_readwrite("alpha_train", &cmm::TrainConfig::alpha_train)
      .def_readwrite("margin", &cmm::TrainConfig::margin)
      .def_readwrite("temperature", &cmm::TrainConfig::temperature)
      .def_readwrite("depth", &cmm::TrainConfig::depth)
      .def_readwrite("lr", &cmm::TrainConfig::lr)
      .def_readwrite("lr_min", &cmm::TrainConfig::lr_min)
      .def_readwrite("weight_decay", &cmm::TrainConfig::weight_decay)
      .def_readwrite("warmup_steps", &cmm::TrainConfig::warmup_steps)
      .def_readwrite("warmup_epochs", &cmm::TrainConfig::warmup_epochs)
      .def_readwrite("use_triplet", &cmm::TrainConfig::use_triplet)
      .def_readwrite("use_flip_rows", &cmm::TrainConfig::use_flip_rows);

  py::class_<cmm::Split>(m, "Split")
      .def_property_readonly("features", [](const cmm::Split& s) { return to_numpy(s.features); })
      .def_property_readonly("labels", [](const cmm::Split& s) { return labels_to_numpy(s.labels); })
      .def_readonly("flip_of", &cmm::Split::flip_of)
      .def("__len__", &cmm::Split::count);

  py::class_<cmm::EmbeddingCache>(m, "EmbeddingCache")
      .def_readonly("dim", &cmm::EmbeddingCache::dim)
      .def_readonly("num_templates", &cmm::EmbeddingCache::num_templates)
      .def_readonly("class_names", &cmm::EmbeddingCache::class_names)
      .def_property_readonly("num_classes", &cmm::EmbeddingCache::num_classes)
      .def_property_readonly("text_features",
                             [](const cmm::EmbeddingCache& c) { return to_numpy(c.text_features); })
      .def_readonly("train", &cmm::EmbeddingCache::train)
      .def_readonly("val", &cmm::EmbeddingCache::val)
      .def_readonly("test", &cmm::EmbeddingCache::test);

  py::class_<cmm::FewShotTask>(m, "FewShotTask")
      .def_readonly("shots", &cmm::FewShotTask::shots)
      .def_readonly("seed", &cmm::FewShotTask::seed)
      .def_readonly("base_rows", &cmm::FewShotTask::base_rows)
      .def_readonly("flip_rows", &cmm::FewShotTask::flip_rows)
      .def_property_readonly("features", [](const cmm::FewShotTask& t) { return to_numpy(t.train_features); })
      .def_property_readonly("labels", [](const cmm::FewShotTask& t) { return labels_to_numpy(t.train_labels); });

  py::class_<cmm::Checkpoint>(m, "Checkpoint")
      .def_property_readonly("dim", &cmm::Checkpoint::dim)
      .def_property_readonly("num_classes", &cmm::Checkpoint::num_classes)
      .def_property_readonly("depth", [](const cmm::Checkpoint& c) { return c.mapper.depth; })
      .def_property_readonly("layers",
                             [](const cmm::Checkpoint& c) {
                               py::list out;
                               for (const auto& w : c.mapper.layers) out.append(to_numpy(w));
                               return out;
                             })
      .def_property_readonly("t_init", [](const cmm::Checkpoint& c) { return to_numpy(c.t_init); })
      .def_property_readonly("t_ft", [](const cmm::Checkpoint& c) { return to_numpy(c.t_ft); })
      .def_readonly("config", &cmm::Checkpoint::config)
      .def_readonly("warmup_steps", &cmm::Checkpoint::warmup_steps)
      .def_readonly("final_loss", &cmm::Checkpoint::final_loss);

  m.def("synth_generate", &cmm::synth_generate, py::arg("config") = cmm::SynthConfig{},
        "Generate a synthetic cache with a controlled modality gap.");
  m.def("load_cache", &cmm::load_cache, py::arg("path"));
  m.def("write_cache", &cmm::write_cache, py::arg("cache"), py::arg("path"));
  m.def("sample_fewshot", &cmm::sample_fewshot, py::arg("cache"), py::arg("shots"), py::arg("seed"),
        py::arg("use_flip_rows") = true);

  m.def(
      "train",
      [](const cmm::EmbeddingCache& cache, const cmm::TrainConfig& config) {
        cmm::validate_train_config(config);
        const auto task = cmm::sample_fewshot(cache, config.shots, config.seed, config.use_flip_rows);
        cmm::TrainResult result;
        {
          py::gil_scoped_release release;
          result = cmm::train(cache, task, config);
        }
        return py::make_tuple(std::move(result.checkpoint), std::move(result.losses));
      },
      py::arg("cache"), py::arg("config") = cmm::TrainConfig{},
      "Sample a k-shot task and train on it. Returns (checkpoint, per-step losses).");
  m.def("load_checkpoint", &cmm::load_checkpoint, py::arg("path"));
  m.def("write_checkpoint", &cmm::write_checkpoint, py::arg("checkpoint"), py::arg("path"));

  m.def(
      "map_features",
      [](const cmm::Checkpoint& c, const Array& features) {
        return to_numpy(cmm::map_apply(c.mapper, from_numpy(features)));
      },
      py::arg("checkpoint"), py::arg("features"), "Apply the trained mapper to unit image rows.");

  m.def(
      "evaluate",
      [](const cmm::Checkpoint& c, const cmm::Split& split, double alpha) {
        return to_python(cmm::to_json(cmm::evaluate(c, split, alpha)));
      },
      py::arg("checkpoint"), py::arg("split"), py::arg("alpha"));
  m.def(
      "grid_search_alpha",
      [](const cmm::Checkpoint& c, const cmm::Split& split, double start, double end, double step) {
        return to_python(cmm::to_json(cmm::grid_search_alpha(c, split, start, end, step, cmm::worker_threads())));
      },
      py::arg("checkpoint"), py::arg("split"), py::arg("start") = 0.1, py::arg("end") = 1.0,
      py::arg("step") = 0.1);
  m.def(
      "flip_analysis",
      [](const py::array_t<std::uint32_t, py::array::forcecast>& clip_preds,
         const py::array_t<std::uint32_t, py::array::forcecast>& cmm_preds,
         const py::array_t<std::uint32_t, py::array::forcecast>& labels) {
        return to_python(
            cmm::to_json(cmm::flip_analysis(labels_from(clip_preds), labels_from(cmm_preds), labels_from(labels))));
      },
      py::arg("clip_preds"), py::arg("cmm_preds"), py::arg("labels"));
  m.def(
      "gap_report",
      [](const cmm::Checkpoint& c, const cmm::Split& split) {
        return to_python(cmm::to_json(cmm::gap_report(c, split)));
      },
      py::arg("checkpoint"), py::arg("split"));

  m.def(
      "gaussian_mle",
      [](const Array& points) {
        const auto g = cmm::gaussian_mle(from_numpy(points));
        return py::make_tuple(g.mean, to_numpy(g.cov));
      },
      py::arg("points"), "Mean and ridge-regularized 1/n covariance of the rows.");
  m.def(
      "kl_gaussian",
      [](const std::vector<double>& mean_p, const Array& cov_p, const std::vector<double>& mean_q,
         const Array& cov_q) { return cmm::kl_gaussian(gaussian(mean_p, cov_p), gaussian(mean_q, cov_q)); },
      py::arg("mean_p"), py::arg("cov_p"), py::arg("mean_q"), py::arg("cov_q"));
  m.def(
      "wasserstein2_gaussian",
      [](const std::vector<double>& mean_p, const Array& cov_p, const std::vector<double>& mean_q,
         const Array& cov_q) {
        return cmm::wasserstein2_gaussian(gaussian(mean_p, cov_p), gaussian(mean_q, cov_q));
      },
      py::arg("mean_p"), py::arg("cov_p"), py::arg("mean_q"), py::arg("cov_q"));
}
