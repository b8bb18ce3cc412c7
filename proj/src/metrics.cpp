#include "antehoc/metrics.hpp"

#include <cmath>
#include <nlohmann/json.hpp>
#include <sstream>

#include "antehoc/errors.hpp"
#include "antehoc/training.hpp"

namespace antehoc::metrics {

using json = nlohmann::ordered_json;

std::string MetricReport::to_json() const {
  json j;
  j["metric"] = metric;
  j["value"] = value;
  j["unit"] = unit;
  if (omega) j["omega"] = *omega;
  j["dataset"] = dataset_id;
  j["n"] = sample_count;
  j["checkpoint"] = checkpoint_id;
  return j.dump();
}

std::string MetricReport::csv_header() {
  return "run_id,dataset,metric,omega,value,n";
}

std::string MetricReport::to_csv_row() const {
  std::ostringstream os;
  os.precision(17);
  os << checkpoint_id << "," << dataset_id << "," << metric << ",";
  if (omega) os << *omega;
  os << "," << value << "," << sample_count;
  return os.str();
}

Tensor scale_concepts(const Tensor& concepts, ScalingScope scope) {
  if (concepts.rank() != 2)
    throw InputError("scale_concepts: expected (N,C), got " +
                     concepts.shape_str());
  const std::size_t n = concepts.dim(0), c = concepts.dim(1);
  Tensor out({n, c});
  if (scope == ScalingScope::kPerSample) {
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = concepts.data.data() + i * c;
      double lo = row[0], hi = row[0];
      for (std::size_t j = 1; j < c; ++j) {
        lo = std::min(lo, row[j]);
        hi = std::max(hi, row[j]);
      }
      for (std::size_t j = 0; j < c; ++j)
        out.data[i * c + j] = hi > lo ? (row[j] - lo) / (hi - lo) : 0.0;
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      double lo = concepts.data[j], hi = concepts.data[j];
      for (std::size_t i = 1; i < n; ++i) {
        lo = std::min(lo, concepts.data[i * c + j]);
        hi = std::max(hi, concepts.data[i * c + j]);
      }
      for (std::size_t i = 0; i < n; ++i)
        out.data[i * c + j] =
            hi > lo ? (concepts.data[i * c + j] - lo) / (hi - lo) : 0.0;
    }
  }
  return out;
}

Tensor intervene(const Tensor& scaled_concepts, double omega) {
  Tensor out = scaled_concepts;
  for (auto& v : out.data)
    if (v > omega) v = 0.0;
  return out;
}

EvalTable evaluate_model(Model& model, const data::Dataset& dataset,
                         std::size_t batch_size) {
  if (dataset.size() == 0) throw InputError("evaluate_model: empty dataset");
  const std::size_t n = dataset.size();
  const std::size_t c = model.config().num_concepts;
  const std::size_t k = model.config().num_classes;
  EvalTable t;
  t.concepts = Tensor({n, c});
  t.task_logits = Tensor({n, k});
  t.surrogate_logits = Tensor({n, k});
  if (dataset.has_attributes())
    t.attributes = Tensor({n, dataset.num_attributes});
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < n; start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(start + batch_size, n); ++i)
      idx.push_back(i);
    auto batch = data::make_batch(dataset, idx);
    Tensor features = model.encoder().forward(batch.images);
    Tensor task = model.task_head().forward(features);
    Tensor conc = model.concept_encoder().forward(features);
    Tensor surr = model.concept_classifier().forward(conc);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const std::size_t g = start + i;
      std::copy_n(conc.data.begin() + std::ptrdiff_t(i * c), c,
                  t.concepts.data.begin() + std::ptrdiff_t(g * c));
      std::copy_n(task.data.begin() + std::ptrdiff_t(i * k), k,
                  t.task_logits.data.begin() + std::ptrdiff_t(g * k));
      std::copy_n(surr.data.begin() + std::ptrdiff_t(i * k), k,
                  t.surrogate_logits.data.begin() + std::ptrdiff_t(g * k));
      t.labels.push_back(batch.labels[i]);
      if (t.attributes)
        std::copy_n(batch.attributes->data.begin() +
                        std::ptrdiff_t(i * dataset.num_attributes),
                    dataset.num_attributes,
                    t.attributes->data.begin() +
                        std::ptrdiff_t(g * dataset.num_attributes));
    }
  }
  return t;
}

double faithfulness_pct(const Tensor& surrogate_logits,
                        const std::vector<int>& labels) {
  const std::size_t n = surrogate_logits.dim(0);
  if (n == 0 || labels.size() != n)
    throw InputError("faithfulness: empty or mismatched inputs");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (argmax_row(surrogate_logits, i) == std::size_t(labels[i])) ++correct;
  return 100.0 * double(correct) / double(n);
}

double fidelity_pct(const Tensor& task_logits, const Tensor& surrogate_logits) {
  if (!task_logits.same_shape(surrogate_logits) || task_logits.dim(0) == 0)
    throw InputError("fidelity: empty or mismatched logit matrices");
  const std::size_t n = task_logits.dim(0);
  std::size_t match = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (argmax_row(task_logits, i) == argmax_row(surrogate_logits, i)) ++match;
  return 100.0 * double(match) / double(n);
}

double explanation_error_value(const Tensor& concepts,
                               const Tensor& attributes) {
  if (!concepts.same_shape(attributes) || concepts.dim(0) == 0)
    throw InputError("explanation_error: empty or mismatched inputs");
  const std::size_t n = concepts.dim(0), c = concepts.dim(1);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      // Concepts are unbounded pre-activations; squash to [0,1] so they are
      // commensurate with binary attributes.
      const double s = 1.0 / (1.0 + std::exp(-concepts.data[i * c + j]));
      const double r = s - attributes.data[i * c + j];
      d2 += r * r;
    }
    sum += std::sqrt(d2);
  }
  return sum / double(n);
}

double intervention_accuracy_pct(const Tensor& concepts,
                                 const std::vector<int>& labels, double omega,
                                 const ConceptPredictor& predict,
                                 ScalingScope scope) {
  const std::size_t n = concepts.dim(0), c = concepts.dim(1);
  if (n == 0 || labels.size() != n)
    throw InputError("intervention_accuracy: empty or mismatched inputs");
  // The scaled values only select which concepts to knock out; the zeroing
  // is applied to the raw vector that the classifier actually consumes. With
  // omega = 1 nothing is selected and the protocol reduces to faithfulness
  // exactly.
  Tensor scaled = scale_concepts(concepts, scope);
  Tensor input = concepts;
  for (std::size_t i = 0; i < n * c; ++i)
    if (scaled.data[i] > omega) input.data[i] = 0.0;
  Tensor logits = predict(input);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (argmax_row(logits, i) == std::size_t(labels[i])) ++correct;
  return 100.0 * double(correct) / double(n);
}

namespace {

MetricReport base_report(const std::string& name, const std::string& unit,
                         const data::Dataset& dataset) {
  MetricReport r;
  r.metric = name;
  r.unit = unit;
  r.dataset_id = dataset.id;
  r.sample_count = dataset.size();
  return r;
}

}  // namespace

MetricReport task_accuracy(Model& model, const data::Dataset& dataset) {
  auto t = evaluate_model(model, dataset);
  auto r = base_report("accuracy", "%", dataset);
  const Tensor& logits =
      model.config().bottleneck_mode ? t.surrogate_logits : t.task_logits;
  r.value = faithfulness_pct(logits, t.labels);
  return r;
}

MetricReport faithfulness(Model& model, const data::Dataset& dataset) {
  auto t = evaluate_model(model, dataset);
  auto r = base_report("faithfulness", "%", dataset);
  r.value = faithfulness_pct(t.surrogate_logits, t.labels);
  return r;
}

MetricReport fidelity_metric(Model& model, const data::Dataset& dataset) {
  auto t = evaluate_model(model, dataset);
  auto r = base_report("fidelity", "%", dataset);
  r.value = fidelity_pct(t.task_logits, t.surrogate_logits);
  return r;
}

MetricReport explanation_error(Model& model, const data::Dataset& dataset) {
  if (!dataset.has_attributes())
    throw InputError(
        "explanation_error requires ground-truth attribute vectors");
  if (dataset.num_attributes != model.config().num_concepts)
    throw InputError("explanation_error: attribute width " +
                     std::to_string(dataset.num_attributes) +
                     " != num_concepts " +
                     std::to_string(model.config().num_concepts));
  auto t = evaluate_model(model, dataset);
  auto r = base_report("explanation_error", "l2", dataset);
  r.value = explanation_error_value(t.concepts, *t.attributes);
  return r;
}

MetricReport intervention_accuracy(Model& model, const data::Dataset& dataset,
                                   double omega, ScalingScope scope) {
  if (omega < 0.0 || omega > 1.0)
    throw InputError("intervention_accuracy: omega must be in [0,1]");
  auto t = evaluate_model(model, dataset);
  auto r = base_report("intervention_accuracy", "%", dataset);
  r.omega = omega;
  r.value = intervention_accuracy_pct(
      t.concepts, t.labels, omega,
      [&](const Tensor& c) { return model.predict_from_concepts(c); }, scope);
  return r;
}

}  // namespace antehoc::metrics
