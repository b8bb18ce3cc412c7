#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "antehoc/data.hpp"
#include "antehoc/model.hpp"
#include "antehoc/tensor.hpp"

namespace antehoc::metrics {

struct MetricReport {
  std::string metric;
  double value = 0.0;
  std::string unit;  // "%" or "l2"
  std::optional<double> omega;
  std::string dataset_id;
  std::size_t sample_count = 0;
  std::string checkpoint_id;

  std::string to_json() const;
  // Summary row: run_id,dataset,metric,omega,value,n
  std::string to_csv_row() const;
  static std::string csv_header();
};

enum class ScalingScope { kPerSample, kPerConceptDataset };

// Min-max rescale of a (N, C) concept matrix into [0,1]. Per-sample: each row
// independently; degenerate (constant) rows map to all zeros. Per-concept:
// each column over the whole matrix, same degenerate rule.
Tensor scale_concepts(const Tensor& concepts,
                      ScalingScope scope = ScalingScope::kPerSample);

// Zeroes every entry strictly greater than omega; ties at omega are kept.
Tensor intervene(const Tensor& scaled_concepts, double omega);

// Everything the protocols need, computed in one pass over the dataset.
struct EvalTable {
  Tensor concepts;          // (N, C) raw activations
  Tensor task_logits;       // (N, K)
  Tensor surrogate_logits;  // (N, K)
  std::vector<int> labels;
  std::optional<Tensor> attributes;  // (N, C) when the dataset has them
};
EvalTable evaluate_model(Model& model, const data::Dataset& dataset,
                         std::size_t batch_size = 256);

using ConceptPredictor = std::function<Tensor(const Tensor&)>;

// Matrix-level protocol cores (independent of Model, used by the model-level
// wrappers below and directly testable against hand counts).
double faithfulness_pct(const Tensor& surrogate_logits,
                        const std::vector<int>& labels);
double fidelity_pct(const Tensor& task_logits, const Tensor& surrogate_logits);
double explanation_error_value(const Tensor& concepts,
                               const Tensor& attributes);
double intervention_accuracy_pct(const Tensor& concepts,
                                 const std::vector<int>& labels, double omega,
                                 const ConceptPredictor& predict,
                                 ScalingScope scope = ScalingScope::kPerSample);

// Model-level protocols over a frozen model.
MetricReport task_accuracy(Model& model, const data::Dataset& dataset);
MetricReport faithfulness(Model& model, const data::Dataset& dataset);
MetricReport fidelity_metric(Model& model, const data::Dataset& dataset);
MetricReport explanation_error(Model& model, const data::Dataset& dataset);
MetricReport intervention_accuracy(Model& model, const data::Dataset& dataset,
                                   double omega,
                                   ScalingScope scope = ScalingScope::kPerSample);

}  // namespace antehoc::metrics
