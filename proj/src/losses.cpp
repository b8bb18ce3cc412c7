#include "antehoc/losses.hpp"

#include <cmath>

#include "antehoc/errors.hpp"

namespace antehoc {

Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2)
    throw InputError("softmax: expected (B,K), got " + logits.shape_str());
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  Tensor p = logits;
  for (std::size_t i = 0; i < b; ++i) {
    double* row = p.data.data() + i * k;
    double mx = row[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      row[j] = std::exp(row[j] - mx);
      z += row[j];
    }
    for (std::size_t j = 0; j < k; ++j) row[j] /= z;
  }
  return p;
}

double task_loss(const Tensor& logits, const std::vector<int>& labels,
                 Tensor* grad) {
  if (logits.rank() != 2)
    throw InputError("task_loss: expected (B,K) logits, got " +
                     logits.shape_str());
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  if (labels.size() != b)
    throw InputError("task_loss: batch has " + std::to_string(b) +
                     " rows but " + std::to_string(labels.size()) + " labels");
  for (int y : labels)
    if (y < 0 || std::size_t(y) >= k)
      throw InputError("task_loss: label " + std::to_string(y) +
                       " out of range [0," + std::to_string(k) + ")");
  Tensor p = softmax_rows(logits);
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i)
    loss -= std::log(std::max(p.data[i * k + std::size_t(labels[i])], 1e-300));
  loss /= double(b);
  if (grad) {
    *grad = p;
    for (std::size_t i = 0; i < b; ++i)
      grad->data[i * k + std::size_t(labels[i])] -= 1.0;
    for (auto& v : grad->data) v /= double(b);
  }
  return loss;
}

double fidelity_loss(const Tensor& surrogate_logits, const Tensor& task_logits,
                     Tensor* grad_surrogate) {
  if (!surrogate_logits.same_shape(task_logits))
    throw InputError("fidelity_loss: shape mismatch " +
                     surrogate_logits.shape_str() + " vs " +
                     task_logits.shape_str());
  const std::size_t b = surrogate_logits.dim(0), k = surrogate_logits.dim(1);
  Tensor q = softmax_rows(surrogate_logits);
  Tensor t = softmax_rows(task_logits);
  double loss = 0.0;
  for (std::size_t i = 0; i < b * k; ++i)
    if (t.data[i] > 0.0)
      loss += t.data[i] * (std::log(t.data[i]) -
                           std::log(std::max(q.data[i], 1e-300)));
  loss /= double(b);
  if (grad_surrogate) {
    *grad_surrogate = q;
    for (std::size_t i = 0; i < b * k; ++i)
      grad_surrogate->data[i] = (q.data[i] - t.data[i]) / double(b);
  }
  return loss;
}

double reconstruction_loss(const Tensor& reconstruction, const Tensor& x,
                           Tensor* grad) {
  if (!reconstruction.same_shape(x))
    throw InputError("reconstruction_loss: shape mismatch " +
                     reconstruction.shape_str() + " vs " + x.shape_str());
  const double n = double(x.numel());
  double loss = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double r = reconstruction.data[i] - x.data[i];
    loss += r * r;
  }
  loss /= n;
  if (grad) {
    *grad = zeros_like(x);
    for (std::size_t i = 0; i < x.numel(); ++i)
      grad->data[i] = 2.0 * (reconstruction.data[i] - x.data[i]) / n;
  }
  return loss;
}

double concept_supervision_loss(const Tensor& concepts,
                                const Tensor& attributes, Tensor* grad,
                                ConceptLossForm form) {
  if (!concepts.same_shape(attributes))
    throw InputError("concept_supervision_loss: shape mismatch " +
                     concepts.shape_str() + " vs " + attributes.shape_str());
  const std::size_t n = concepts.numel();
  double loss = 0.0;
  if (grad) *grad = zeros_like(concepts);
  if (form == ConceptLossForm::kBce) {
    for (std::size_t i = 0; i < n; ++i) {
      const double z = concepts.data[i];
      const double a = attributes.data[i];
      if (a != 0.0 && a != 1.0)
        throw InputError("concept_supervision_loss: attributes must be binary "
                         "for BCE form");
      // log(1+exp(-|z|)) form keeps the value finite for large |z|.
      loss += std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - a * z;
      if (grad) grad->data[i] = (1.0 / (1.0 + std::exp(-z)) - a) / double(n);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double r = concepts.data[i] - attributes.data[i];
      loss += r * r;
      if (grad) grad->data[i] = 2.0 * r / double(n);
    }
  }
  return loss / double(n);
}

LossBreakdown total_loss(const ForwardBundle& bundle, const Tensor& x,
                         const std::vector<int>& labels,
                         const std::optional<Tensor>& attributes,
                         const ModelConfig& config, ConceptLossForm form) {
  const auto& w = config.loss_weights;
  LossBreakdown out;
  // In bottleneck mode the surrogate path is the reported prediction and the
  // task head gets no gradient; the classification loss lands on the
  // surrogate logits instead.
  if (config.bottleneck_mode)
    out.task = task_loss(bundle.surrogate_logits, labels);
  else
    out.task = task_loss(bundle.task_logits, labels);
  if (w.alpha_fidelity > 0 && !config.bottleneck_mode)
    out.fidelity = fidelity_loss(bundle.surrogate_logits, bundle.task_logits);
  if (w.beta_reconstruction > 0 && config.use_decoder) {
    if (!bundle.reconstruction)
      throw ConfigError("total_loss: bundle lacks a reconstruction");
    out.reconstruction = reconstruction_loss(*bundle.reconstruction, x);
  }
  if (w.gamma_concept > 0) {
    if (!attributes)
      throw ConfigError(
          "total_loss: gamma_concept > 0 requires attribute vectors");
    out.concept_term =
        concept_supervision_loss(bundle.concepts, *attributes, nullptr, form);
  }
  out.total = out.task + w.alpha_fidelity * out.fidelity +
              w.beta_reconstruction * out.reconstruction +
              w.gamma_concept * out.concept_term;
  return out;
}

}  // namespace antehoc
