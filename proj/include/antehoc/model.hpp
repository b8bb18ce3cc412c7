#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "antehoc/nn.hpp"
#include "antehoc/tensor.hpp"

namespace antehoc {

enum class SupervisionMode { kUnsupervised, kSupervised };

struct LossWeights {
  double alpha_fidelity = 1.0;
  double beta_reconstruction = 1.0;
  double gamma_concept = 0.0;
};

struct ModelConfig {
  std::array<std::size_t, 3> image_shape = {3, 32, 32};  // (channels, H, W)
  std::size_t num_classes = 2;
  std::size_t num_concepts = 1;
  std::string backbone = "resnet18-class";
  SupervisionMode supervision_mode = SupervisionMode::kUnsupervised;
  bool use_decoder = true;
  bool bottleneck_mode = false;
  LossWeights loss_weights;
  double omega = 0.5;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

std::string to_string(SupervisionMode m);
SupervisionMode supervision_mode_from_string(const std::string& s);

struct ForwardBundle {
  Tensor task_logits;      // (B, K)
  Tensor concepts;         // (B, C)
  Tensor surrogate_logits; // (B, K)
  std::optional<Tensor> reconstruction;  // (B, *image_shape) when decoder on
};

struct ComponentCounts {
  std::size_t feature_encoder = 0;
  std::size_t task_head = 0;
  std::size_t concept_encoder = 0;
  std::size_t decoder = 0;
  std::size_t concept_classifier = 0;
  std::size_t total = 0;
};

// Backbone registry. A factory builds the feature encoder for a given image
// shape and reports its output feature dimension.
struct BackboneBuild {
  std::unique_ptr<nn::Module> encoder;
  std::size_t feature_dim;
};
using BackboneFactory = std::function<BackboneBuild(
    const std::array<std::size_t, 3>& image_shape, std::mt19937_64& rng)>;

void register_backbone(const std::string& id, BackboneFactory factory);
std::vector<std::string> registered_backbones();

// Wires the five subnetworks: feature encoder, task head, concept encoder,
// decoder, and concept classifier. The task path (encoder + task head) and
// the concept path (encoder + concept encoder + concept classifier) share
// only the encoder; the decoder is a training-time component.
class Model {
 public:
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::size_t feature_dim() const { return feature_dim_; }

  // g(eta(x)); never touches the concept branch or the decoder.
  Tensor forward_task(const Tensor& x);
  // psi(eta(x)); raw unbounded concept activations.
  Tensor extract_concepts(const Tensor& x);
  // s(c); accepts arbitrary (including intervened) concept vectors.
  Tensor predict_from_concepts(const Tensor& concepts);
  // h(psi(eta(x))). Requires use_decoder.
  Tensor reconstruct(const Tensor& x);
  // All paths in one pass, encoder evaluated once.
  ForwardBundle forward_full(const Tensor& x);

  // Reported prediction: task path, or the surrogate path in bottleneck mode.
  Tensor predict_logits(const Tensor& x);

  ComponentCounts parameter_counts();

  std::size_t decoder_call_count() const { return decoder_calls_; }

  // Training-side access.
  nn::Module& encoder() { return *encoder_; }
  nn::Dense& task_head() { return *task_head_; }
  nn::Dense& concept_encoder() { return *concept_encoder_; }
  nn::Dense& concept_classifier() { return *concept_classifier_; }
  nn::Module* decoder() { return decoder_.get(); }
  Tensor decode_concepts(const Tensor& concepts);  // counts as a decoder call
  std::vector<nn::Parameter*> trainable_parameters();
  std::vector<nn::Parameter*> component_parameters(const std::string& name);

 private:
  void check_image_batch(const Tensor& x) const;

  ModelConfig config_;
  std::size_t feature_dim_ = 0;
  std::unique_ptr<nn::Module> encoder_;
  std::unique_ptr<nn::Dense> task_head_;
  std::unique_ptr<nn::Dense> concept_encoder_;
  std::unique_ptr<nn::Dense> concept_classifier_;
  std::unique_ptr<nn::Module> decoder_;
  std::size_t decoder_calls_ = 0;
};

// Single-file archive: format version, config as JSON, one parameter blob
// per component. Round-trips bit-exactly.
void save_checkpoint(Model& model, const std::string& path);
std::unique_ptr<Model> load_checkpoint(const std::string& path);
// As above but rejects a checkpoint whose (K, C, image shape) disagree.
std::unique_ptr<Model> load_checkpoint(const std::string& path,
                                       const ModelConfig& expected);

}  // namespace antehoc
