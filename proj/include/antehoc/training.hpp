#pragma once

#include <memory>
#include <vector>

#include "antehoc/data.hpp"
#include "antehoc/losses.hpp"
#include "antehoc/model.hpp"
#include "antehoc/optim.hpp"

namespace antehoc {

struct TrainOptions {
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  bool cosine_decay = false;
  ConceptLossForm concept_loss_form = ConceptLossForm::kBce;
  bool augment_hflip = false;   // seeded random horizontal flip
  bool augment_crop = false;    // seeded pad-4 random crop
};

struct EpochRecord {
  std::size_t epoch = 0;
  LossBreakdown losses;      // mean over the epoch's samples
  double val_accuracy = 0.0; // percent
};

// Mutable loop state. Batch order for epoch e is derived from
// (model seed, e), so resuming from a serialized epoch index is exact.
struct TrainState {
  std::size_t epoch = 0;
  std::unique_ptr<Adam> optimizer;
  LossBreakdown running;
  double best_val_accuracy = 0.0;
};

// Forward pass + total loss, no gradients, no parameter mutation.
LossBreakdown evaluate_loss(Model& model, const data::Batch& batch,
                            ConceptLossForm form = ConceptLossForm::kBce);

// Forward + backward of the joint objective; fills parameter grads and
// returns the breakdown. Gradients are zeroed first. No optimizer step.
// Fidelity targets are detached: no fidelity gradient reaches the task head.
LossBreakdown compute_loss_and_grads(Model& model, const data::Batch& batch,
                                     ConceptLossForm form = ConceptLossForm::kBce);

// One optimizer pass over the dataset in seed-derived batch order.
// Throws TrainingError (naming the offending term) on a non-finite loss,
// leaving state.epoch unchanged.
void train_epoch(Model& model, const data::Dataset& dataset, TrainState& state,
                 const TrainOptions& options);

// Percent of samples whose reported prediction matches the label.
// Argmax ties break toward the lowest class index.
double validation_accuracy(Model& model, const data::Dataset& dataset,
                           std::size_t batch_size = 256);

struct FitResult {
  std::unique_ptr<Model> model;  // parameters of the best-validation epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

FitResult fit(const ModelConfig& config, const data::Dataset& train,
              const data::Dataset& val, const TrainOptions& options);

std::size_t argmax_row(const Tensor& m, std::size_t row);

}  // namespace antehoc
