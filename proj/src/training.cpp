#include "antehoc/training.hpp"

#include <cmath>

#include "antehoc/errors.hpp"

namespace antehoc {

namespace {

void require_finite(double v, const char* term) {
  if (!std::isfinite(v))
    throw TrainingError(std::string("non-finite ") + term + " loss (" +
                        std::to_string(v) + "); aborting");
}

struct ForwardCache {
  Tensor features;
  ForwardBundle bundle;
};

ForwardCache run_forward(Model& model, const data::Batch& batch,
                         bool need_reconstruction) {
  ForwardCache fc;
  fc.features = model.encoder().forward(batch.images);
  fc.bundle.task_logits = model.task_head().forward(fc.features);
  fc.bundle.concepts = model.concept_encoder().forward(fc.features);
  fc.bundle.surrogate_logits =
      model.concept_classifier().forward(fc.bundle.concepts);
  if (need_reconstruction && model.decoder())
    fc.bundle.reconstruction = model.decode_concepts(fc.bundle.concepts);
  return fc;
}

std::optional<Tensor> batch_attributes(const data::Batch& batch,
                                       const ModelConfig& config) {
  if (config.loss_weights.gamma_concept <= 0) return std::nullopt;
  if (!batch.attributes)
    throw ConfigError(
        "concept supervision enabled but the batch carries no attributes");
  if (batch.attributes->dim(1) != config.num_concepts)
    throw InputError("attribute width " +
                     std::to_string(batch.attributes->dim(1)) +
                     " != num_concepts " +
                     std::to_string(config.num_concepts));
  return batch.attributes;
}

void augment_batch(data::Batch& batch, const TrainOptions& options,
                   std::mt19937_64& rng) {
  const std::size_t b = batch.images.dim(0), ch = batch.images.dim(1),
                    h = batch.images.dim(2), w = batch.images.dim(3);
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> off(-4, 4);
  for (std::size_t n = 0; n < b; ++n) {
    double* img = batch.images.data.data() + n * ch * h * w;
    if (options.augment_hflip && coin(rng)) {
      for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w / 2; ++x)
            std::swap(img[(c * h + y) * w + x], img[(c * h + y) * w + w - 1 - x]);
    }
    if (options.augment_crop) {
      const int dy = off(rng), dx = off(rng);
      std::vector<double> src(img, img + ch * h * w);
      for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) {
            const int sy = int(y) + dy, sx = int(x) + dx;
            img[(c * h + y) * w + x] =
                (sy >= 0 && sy < int(h) && sx >= 0 && sx < int(w))
                    ? src[(c * h + std::size_t(sy)) * w + std::size_t(sx)]
                    : 0.0;
          }
    }
  }
}

}  // namespace

std::size_t argmax_row(const Tensor& m, std::size_t row) {
  const std::size_t k = m.dim(1);
  const double* p = m.data.data() + row * k;
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j)
    if (p[j] > p[best]) best = j;
  return best;
}

LossBreakdown evaluate_loss(Model& model, const data::Batch& batch,
                            ConceptLossForm form) {
  const auto& config = model.config();
  const bool need_recon =
      config.use_decoder && config.loss_weights.beta_reconstruction > 0;
  auto fc = run_forward(model, batch, need_recon);
  return total_loss(fc.bundle, batch.images, batch.labels,
                    batch_attributes(batch, config), config, form);
}

LossBreakdown compute_loss_and_grads(Model& model, const data::Batch& batch,
                                     ConceptLossForm form) {
  const auto& config = model.config();
  const auto& w = config.loss_weights;
  for (auto* p : model.trainable_parameters()) p->zero_grad();

  const bool need_recon = config.use_decoder && w.beta_reconstruction > 0;
  auto fc = run_forward(model, batch, need_recon);
  const auto attrs = batch_attributes(batch, config);

  LossBreakdown out;
  const std::size_t b = batch.images.dim(0);
  Tensor d_task({b, config.num_classes});
  Tensor d_surrogate({b, config.num_classes});
  if (config.bottleneck_mode) {
    // Surrogate path is the reported prediction; the task head trains on
    // nothing and fidelity is moot.
    out.task = task_loss(fc.bundle.surrogate_logits, batch.labels, &d_surrogate);
  } else {
    out.task = task_loss(fc.bundle.task_logits, batch.labels, &d_task);
    if (w.alpha_fidelity > 0) {
      Tensor d_fid;
      out.fidelity =
          fidelity_loss(fc.bundle.surrogate_logits, fc.bundle.task_logits,
                        &d_fid);
      for (std::size_t i = 0; i < d_surrogate.numel(); ++i)
        d_surrogate.data[i] += w.alpha_fidelity * d_fid.data[i];
    }
  }

  Tensor d_concepts = model.concept_classifier().backward(d_surrogate);

  if (need_recon) {
    Tensor d_recon;
    out.reconstruction =
        reconstruction_loss(*fc.bundle.reconstruction, batch.images, &d_recon);
    for (auto& v : d_recon.data) v *= w.beta_reconstruction;
    Tensor d_from_decoder = model.decoder()->backward(d_recon);
    for (std::size_t i = 0; i < d_concepts.numel(); ++i)
      d_concepts.data[i] += d_from_decoder.data[i];
  }

  if (w.gamma_concept > 0) {
    Tensor d_sup;
    out.concept_term =
        concept_supervision_loss(fc.bundle.concepts, *attrs, &d_sup, form);
    for (std::size_t i = 0; i < d_concepts.numel(); ++i)
      d_concepts.data[i] += w.gamma_concept * d_sup.data[i];
  }

  Tensor d_features = model.concept_encoder().backward(d_concepts);
  if (!config.bottleneck_mode) {
    Tensor d_from_task = model.task_head().backward(d_task);
    for (std::size_t i = 0; i < d_features.numel(); ++i)
      d_features.data[i] += d_from_task.data[i];
  }
  model.encoder().backward(d_features);

  out.total = out.task + w.alpha_fidelity * out.fidelity +
              w.beta_reconstruction * out.reconstruction +
              w.gamma_concept * out.concept_term;
  return out;
}

void train_epoch(Model& model, const data::Dataset& dataset, TrainState& state,
                 const TrainOptions& options) {
  if (dataset.size() == 0)
    throw InputError("train_epoch: empty dataset");
  if (!state.optimizer)
    state.optimizer = std::make_unique<Adam>(model.trainable_parameters(),
                                             options.learning_rate);
  if (options.cosine_decay && options.epochs > 1) {
    const double t = double(state.epoch) / double(options.epochs - 1);
    state.optimizer->set_learning_rate(
        options.learning_rate * 0.5 * (1.0 + std::cos(t * 3.14159265358979)));
  }
  const std::uint64_t order_seed =
      model.config().seed * 1000003ULL + state.epoch;
  std::mt19937_64 aug_rng(order_seed ^ 0x5deece66dULL);
  LossBreakdown running;
  std::size_t seen = 0;
  for (const auto& idx : data::batches(dataset, options.batch_size, order_seed)) {
    auto batch = data::make_batch(dataset, idx);
    if (options.augment_hflip || options.augment_crop)
      augment_batch(batch, options, aug_rng);
    auto losses =
        compute_loss_and_grads(model, batch, options.concept_loss_form);
    require_finite(losses.task, "task");
    require_finite(losses.fidelity, "fidelity");
    require_finite(losses.reconstruction, "reconstruction");
    require_finite(losses.concept_term, "concept");
    state.optimizer->step();
    const double n = double(idx.size());
    running.task += losses.task * n;
    running.fidelity += losses.fidelity * n;
    running.reconstruction += losses.reconstruction * n;
    running.concept_term += losses.concept_term * n;
    running.total += losses.total * n;
    seen += idx.size();
  }
  running.task /= double(seen);
  running.fidelity /= double(seen);
  running.reconstruction /= double(seen);
  running.concept_term /= double(seen);
  running.total /= double(seen);
  state.running = running;
  ++state.epoch;
}

double validation_accuracy(Model& model, const data::Dataset& dataset,
                           std::size_t batch_size) {
  if (dataset.size() == 0)
    throw InputError("validation_accuracy: empty dataset");
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < dataset.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(start + batch_size, dataset.size());
         ++i)
      idx.push_back(i);
    auto batch = data::make_batch(dataset, idx);
    Tensor logits = model.predict_logits(batch.images);
    for (std::size_t i = 0; i < idx.size(); ++i)
      if (argmax_row(logits, i) == std::size_t(batch.labels[i])) ++correct;
  }
  return 100.0 * double(correct) / double(dataset.size());
}

FitResult fit(const ModelConfig& config, const data::Dataset& train,
              const data::Dataset& val, const TrainOptions& options) {
  config.validate();
  if (train.num_classes != config.num_classes)
    throw ConfigError("dataset has " + std::to_string(train.num_classes) +
                      " classes, config expects " +
                      std::to_string(config.num_classes));
  if (config.loss_weights.gamma_concept > 0 &&
      (!train.has_attributes() ||
       train.num_attributes != config.num_concepts))
    throw ConfigError(
        "concept supervision requires attribute vectors of width " +
        std::to_string(config.num_concepts));

  FitResult result;
  result.model = std::make_unique<Model>(config);
  TrainState state;
  std::vector<std::vector<double>> best_params;
  double best_acc = -1.0;
  for (std::size_t e = 0; e < options.epochs; ++e) {
    train_epoch(*result.model, train, state, options);
    EpochRecord rec;
    rec.epoch = e;
    rec.losses = state.running;
    rec.val_accuracy = validation_accuracy(*result.model, val);
    result.history.push_back(rec);
    // ">=" keeps the latest epoch among accuracy ties: once validation
    // accuracy saturates, later epochs still refine the concept and
    // reconstruction paths, so the newest tied snapshot is the better one.
    if (rec.val_accuracy >= best_acc) {
      best_acc = rec.val_accuracy;
      result.best_epoch = e;
      best_params.clear();
      for (auto* p : result.model->trainable_parameters())
        best_params.push_back(p->value);
    }
  }
  auto params = result.model->trainable_parameters();
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i]->value = best_params[i];
  return result;
}

}  // namespace antehoc
