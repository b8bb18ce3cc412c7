#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "antehoc/data.hpp"
#include "antehoc/errors.hpp"
#include "antehoc/explanations.hpp"
#include "antehoc/metrics.hpp"
#include "antehoc/model.hpp"
#include "antehoc/runner.hpp"
#include "antehoc/training.hpp"

namespace py = pybind11;
using namespace antehoc;

namespace {

Tensor tensor_from_numpy(const py::array_t<double, py::array::c_style |
                                                       py::array::forcecast>& a) {
  std::vector<std::size_t> shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i)
    shape[std::size_t(i)] = std::size_t(a.shape(i));
  std::vector<double> data(a.data(), a.data() + a.size());
  return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> numpy_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<double> a(shape);
  std::copy(t.data.begin(), t.data.end(), a.mutable_data());
  return a;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "ante-hoc concept-explanation classifiers (C++ core)";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<InputError>(m, "InputError");
  py::register_exception<LoadError>(m, "LoadError");
  py::register_exception<UnsupportedError>(m, "UnsupportedError");
  py::register_exception<TrainingError>(m, "TrainingError");

  py::enum_<SupervisionMode>(m, "SupervisionMode")
      .value("UNSUPERVISED", SupervisionMode::kUnsupervised)
      .value("SUPERVISED", SupervisionMode::kSupervised);

  py::class_<LossWeights>(m, "LossWeights")
      .def(py::init<>())
      .def_readwrite("alpha_fidelity", &LossWeights::alpha_fidelity)
      .def_readwrite("beta_reconstruction", &LossWeights::beta_reconstruction)
      .def_readwrite("gamma_concept", &LossWeights::gamma_concept);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("image_shape", &ModelConfig::image_shape)
      .def_readwrite("num_classes", &ModelConfig::num_classes)
      .def_readwrite("num_concepts", &ModelConfig::num_concepts)
      .def_readwrite("backbone", &ModelConfig::backbone)
      .def_readwrite("supervision_mode", &ModelConfig::supervision_mode)
      .def_readwrite("use_decoder", &ModelConfig::use_decoder)
      .def_readwrite("bottleneck_mode", &ModelConfig::bottleneck_mode)
      .def_readwrite("loss_weights", &ModelConfig::loss_weights)
      .def_readwrite("omega", &ModelConfig::omega)
      .def_readwrite("seed", &ModelConfig::seed)
      .def("validate", &ModelConfig::validate)
      .def("to_json", &ModelConfig::to_json)
      .def_static("from_json", &ModelConfig::from_json);

  py::class_<ComponentCounts>(m, "ComponentCounts")
      .def_readonly("feature_encoder", &ComponentCounts::feature_encoder)
      .def_readonly("task_head", &ComponentCounts::task_head)
      .def_readonly("concept_encoder", &ComponentCounts::concept_encoder)
      .def_readonly("decoder", &ComponentCounts::decoder)
      .def_readonly("concept_classifier", &ComponentCounts::concept_classifier)
      .def_readonly("total", &ComponentCounts::total);

  py::class_<Model>(m, "Model")
      .def(py::init<ModelConfig>())
      .def_property_readonly("config", &Model::config)
      .def_property_readonly("feature_dim", &Model::feature_dim)
      .def("forward_task",
           [](Model& self, const py::array_t<double>& x) {
             return numpy_from_tensor(self.forward_task(tensor_from_numpy(x)));
           })
      .def("extract_concepts",
           [](Model& self, const py::array_t<double>& x) {
             return numpy_from_tensor(
                 self.extract_concepts(tensor_from_numpy(x)));
           })
      .def("predict_from_concepts",
           [](Model& self, const py::array_t<double>& c) {
             return numpy_from_tensor(
                 self.predict_from_concepts(tensor_from_numpy(c)));
           })
      .def("reconstruct",
           [](Model& self, const py::array_t<double>& x) {
             return numpy_from_tensor(self.reconstruct(tensor_from_numpy(x)));
           })
      .def("parameter_counts", &Model::parameter_counts)
      .def("decoder_call_count", &Model::decoder_call_count);

  m.def("registered_backbones", &registered_backbones);
  m.def("save_checkpoint", [](Model& model, const std::string& path) {
    save_checkpoint(model, path);
  });
  m.def("load_checkpoint",
        [](const std::string& path) { return load_checkpoint(path); });

  py::class_<data::Dataset>(m, "Dataset")
      .def_readonly("id", &data::Dataset::id)
      .def_readonly("num_classes", &data::Dataset::num_classes)
      .def_readonly("num_attributes", &data::Dataset::num_attributes)
      .def("__len__", &data::Dataset::size)
      .def("labels",
           [](const data::Dataset& d) {
             std::vector<int> out;
             for (const auto& s : d.samples) out.push_back(s.label);
             return out;
           })
      .def("image",
           [](const data::Dataset& d, std::size_t i) {
             return numpy_from_tensor(d.samples.at(i).image);
           })
      .def("attributes", [](const data::Dataset& d, std::size_t i) {
        return d.samples.at(i).attributes;
      });

  py::class_<data::SyntheticSpec>(m, "SyntheticSpec")
      .def(py::init<>())
      .def_readwrite("num_classes", &data::SyntheticSpec::num_classes)
      .def_readwrite("num_attributes", &data::SyntheticSpec::num_attributes)
      .def_readwrite("train_per_class", &data::SyntheticSpec::train_per_class)
      .def_readwrite("noise", &data::SyntheticSpec::noise)
      .def_readwrite("seed", &data::SyntheticSpec::seed);

  py::class_<data::SyntheticBundle>(m, "SyntheticBundle")
      .def_readonly("train", &data::SyntheticBundle::train)
      .def_readonly("val", &data::SyntheticBundle::val)
      .def_readonly("test", &data::SyntheticBundle::test);

  m.def("generate_synthetic", &data::generate_synthetic);
  m.def("load_dataset", [](const std::string& manifest) {
    return data::load_dataset(manifest);
  });

  py::class_<LossBreakdown>(m, "LossBreakdown")
      .def_readonly("task", &LossBreakdown::task)
      .def_readonly("fidelity", &LossBreakdown::fidelity)
      .def_readonly("reconstruction", &LossBreakdown::reconstruction)
      .def_readonly("concept", &LossBreakdown::concept_term)
      .def_readonly("total", &LossBreakdown::total);

  py::class_<TrainOptions>(m, "TrainOptions")
      .def(py::init<>())
      .def_readwrite("epochs", &TrainOptions::epochs)
      .def_readwrite("batch_size", &TrainOptions::batch_size)
      .def_readwrite("learning_rate", &TrainOptions::learning_rate)
      .def_readwrite("cosine_decay", &TrainOptions::cosine_decay);

  py::class_<EpochRecord>(m, "EpochRecord")
      .def_readonly("epoch", &EpochRecord::epoch)
      .def_readonly("losses", &EpochRecord::losses)
      .def_readonly("val_accuracy", &EpochRecord::val_accuracy);

  py::class_<FitResult>(m, "FitResult")
      .def_property_readonly(
          "model", [](FitResult& r) { return r.model.get(); },
          py::return_value_policy::reference_internal)
      .def_readonly("history", &FitResult::history)
      .def_readonly("best_epoch", &FitResult::best_epoch);

  m.def("fit", &fit, py::arg("config"), py::arg("train"), py::arg("val"),
        py::arg("options") = TrainOptions{});
  m.def("validation_accuracy",
        [](Model& model, const data::Dataset& d) {
          return validation_accuracy(model, d);
        });

  py::class_<metrics::MetricReport>(m, "MetricReport")
      .def_readonly("metric", &metrics::MetricReport::metric)
      .def_readonly("value", &metrics::MetricReport::value)
      .def_readonly("unit", &metrics::MetricReport::unit)
      .def_readonly("dataset", &metrics::MetricReport::dataset_id)
      .def_readonly("n", &metrics::MetricReport::sample_count)
      .def("to_json", &metrics::MetricReport::to_json);

  m.def("scale_concepts", [](const py::array_t<double>& c) {
    return numpy_from_tensor(metrics::scale_concepts(tensor_from_numpy(c)));
  });
  m.def("intervene", [](const py::array_t<double>& c, double omega) {
    return numpy_from_tensor(metrics::intervene(tensor_from_numpy(c), omega));
  });
  m.def("task_accuracy", &metrics::task_accuracy);
  m.def("faithfulness", &metrics::faithfulness);
  m.def("fidelity_metric", &metrics::fidelity_metric);
  m.def("explanation_error", &metrics::explanation_error);
  m.def("intervention_accuracy",
        [](Model& model, const data::Dataset& d, double omega) {
          return metrics::intervention_accuracy(model, d, omega);
        });

  py::class_<explanations::RelevanceMatrix>(m, "RelevanceMatrix")
      .def_readonly("num_classes", &explanations::RelevanceMatrix::num_classes)
      .def_readonly("num_concepts",
                    &explanations::RelevanceMatrix::num_concepts)
      .def_readonly("omega", &explanations::RelevanceMatrix::omega)
      .def_readonly("values", &explanations::RelevanceMatrix::values)
      .def_readonly("class_counts",
                    &explanations::RelevanceMatrix::class_counts)
      .def("at", &explanations::RelevanceMatrix::at)
      .def("defined", &explanations::RelevanceMatrix::defined);

  m.def("class_concept_relevance", &explanations::class_concept_relevance);
  m.def("relevance_from",
        [](const py::array_t<double>& scaled, const std::vector<int>& labels,
           std::size_t num_classes, double omega) {
          return explanations::relevance_from(tensor_from_numpy(scaled),
                                              labels, num_classes, omega);
        });
  m.def("argmax_relevance_concepts", &explanations::argmax_relevance_concepts);
}
