#pragma once

#include <optional>
#include <vector>

#include "antehoc/model.hpp"
#include "antehoc/tensor.hpp"

namespace antehoc {

struct LossBreakdown {
  double task = 0.0;
  double fidelity = 0.0;
  double reconstruction = 0.0;
  double concept_term = 0.0;
  double total = 0.0;
};

// Row-wise softmax of a (B, K) logit matrix.
Tensor softmax_rows(const Tensor& logits);

// Mean cross-entropy. grad, when given, receives d(loss)/d(logits).
double task_loss(const Tensor& logits, const std::vector<int>& labels,
                 Tensor* grad = nullptr);

// Mean KL(softmax(task) || softmax(surrogate)). The task logits are targets:
// no gradient flows into them, only grad_surrogate is produced.
double fidelity_loss(const Tensor& surrogate_logits, const Tensor& task_logits,
                     Tensor* grad_surrogate = nullptr);

// Mean squared error over every pixel.
double reconstruction_loss(const Tensor& reconstruction, const Tensor& x,
                           Tensor* grad = nullptr);

enum class ConceptLossForm { kBce, kMse };

// Supervision on concepts. kBce: binary cross-entropy between
// sigmoid(concepts) and {0,1} attributes (grad is wrt the raw concepts).
// kMse: squared error against continuous attributes in [0,1].
double concept_supervision_loss(const Tensor& concepts,
                                const Tensor& attributes, Tensor* grad = nullptr,
                                ConceptLossForm form = ConceptLossForm::kBce);

// Weighted combination per the model config. x is the batch the bundle was
// produced from (needed by the reconstruction term). Attributes are required
// exactly when gamma_concept > 0. Disabled terms are reported as exactly 0.
LossBreakdown total_loss(const ForwardBundle& bundle, const Tensor& x,
                         const std::vector<int>& labels,
                         const std::optional<Tensor>& attributes,
                         const ModelConfig& config,
                         ConceptLossForm form = ConceptLossForm::kBce);

}  // namespace antehoc
