#include "antehoc/model.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>

#include "antehoc/errors.hpp"

namespace antehoc {

using json = nlohmann::ordered_json;

std::string to_string(SupervisionMode m) {
  return m == SupervisionMode::kSupervised ? "supervised" : "unsupervised";
}

SupervisionMode supervision_mode_from_string(const std::string& s) {
  if (s == "supervised") return SupervisionMode::kSupervised;
  if (s == "unsupervised") return SupervisionMode::kUnsupervised;
  throw ConfigError("unknown supervision_mode: " + s);
}

void ModelConfig::validate() const {
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (num_concepts < 1) throw ConfigError("num_concepts must be >= 1");
  if (image_shape[0] == 0 || image_shape[1] == 0 || image_shape[2] == 0)
    throw ConfigError("image_shape entries must be positive");
  if (loss_weights.alpha_fidelity < 0 || loss_weights.beta_reconstruction < 0 ||
      loss_weights.gamma_concept < 0)
    throw ConfigError("loss weights must be nonnegative");
  if (loss_weights.gamma_concept > 0 &&
      supervision_mode != SupervisionMode::kSupervised)
    throw ConfigError(
        "gamma_concept > 0 requires supervision_mode = supervised");
  if (omega < 0.0 || omega > 1.0) throw ConfigError("omega must be in [0,1]");
  const auto ids = registered_backbones();
  if (std::find(ids.begin(), ids.end(), backbone) == ids.end())
    throw ConfigError("unknown backbone id: " + backbone);
}

std::string ModelConfig::to_json() const {
  json j;
  j["image_shape"] = image_shape;
  j["num_classes"] = num_classes;
  j["num_concepts"] = num_concepts;
  j["backbone"] = backbone;
  j["supervision_mode"] = to_string(supervision_mode);
  j["use_decoder"] = use_decoder;
  j["bottleneck_mode"] = bottleneck_mode;
  j["loss_weights"] = {{"alpha_fidelity", loss_weights.alpha_fidelity},
                       {"beta_reconstruction", loss_weights.beta_reconstruction},
                       {"gamma_concept", loss_weights.gamma_concept}};
  j["omega"] = omega;
  j["seed"] = seed;
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model config JSON: ") + e.what());
  }
  ModelConfig c;
  try {
    if (j.contains("image_shape")) {
      auto v = j["image_shape"].get<std::vector<std::size_t>>();
      if (v.size() != 3) throw ConfigError("image_shape must have 3 entries");
      c.image_shape = {v[0], v[1], v[2]};
    }
    if (j.contains("num_classes")) c.num_classes = j["num_classes"];
    if (j.contains("num_concepts")) c.num_concepts = j["num_concepts"];
    if (j.contains("backbone")) c.backbone = j["backbone"];
    if (j.contains("supervision_mode"))
      c.supervision_mode = supervision_mode_from_string(j["supervision_mode"]);
    if (j.contains("use_decoder")) c.use_decoder = j["use_decoder"];
    if (j.contains("bottleneck_mode")) c.bottleneck_mode = j["bottleneck_mode"];
    if (j.contains("loss_weights")) {
      auto& w = j["loss_weights"];
      if (w.contains("alpha_fidelity"))
        c.loss_weights.alpha_fidelity = w["alpha_fidelity"];
      if (w.contains("beta_reconstruction"))
        c.loss_weights.beta_reconstruction = w["beta_reconstruction"];
      if (w.contains("gamma_concept"))
        c.loss_weights.gamma_concept = w["gamma_concept"];
    }
    if (j.contains("omega")) c.omega = j["omega"];
    if (j.contains("seed")) c.seed = j["seed"];
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad model config field: ") + e.what());
  }
  return c;
}

// ------------------------------------------------------------- backbones

namespace {

std::map<std::string, BackboneFactory>& backbone_registry() {
  static std::map<std::string, BackboneFactory> reg;
  return reg;
}

BackboneBuild make_residual_backbone(
    const std::array<std::size_t, 3>& shape, std::mt19937_64& rng,
    std::size_t stem_width, std::size_t stem_kernel, std::size_t stem_stride,
    const std::vector<std::pair<std::size_t, std::size_t>>& stages) {
  // stages: (width, blocks); the first block of every stage after the stem
  // downsamples by 2.
  const std::size_t ch = shape[0];
  auto seq = std::make_unique<nn::Sequential>();
  seq->add(std::make_unique<nn::Conv2d>(ch, stem_width, stem_kernel,
                                        stem_stride, stem_kernel / 2, rng,
                                        "stem"));
  seq->add(std::make_unique<nn::ReLU>());
  std::size_t in_w = stem_width;
  for (std::size_t si = 0; si < stages.size(); ++si) {
    const auto [width, blocks] = stages[si];
    for (std::size_t b = 0; b < blocks; ++b) {
      const std::size_t stride = (b == 0 && si > 0) ? 2 : 1;
      seq->add(std::make_unique<nn::ResidualBlock>(in_w, width, stride, rng));
      in_w = width;
    }
  }
  seq->add(std::make_unique<nn::GlobalAvgPool>());
  return {std::move(seq), in_w};
}

struct RegisterBuiltins {
  RegisterBuiltins() {
    // Compact residual CNN for 32x32-scale inputs.
    register_backbone("smallres-32",
                      [](const std::array<std::size_t, 3>& shape,
                         std::mt19937_64& rng) {
                        if (shape[1] < 16 || shape[2] < 16 ||
                            shape[1] % 4 != 0 || shape[2] % 4 != 0)
                          throw ConfigError(
                              "smallres-32 needs H,W >= 16 and divisible by 4");
                        return make_residual_backbone(
                            shape, rng, 8, 3, 1, {{8, 1}, {16, 1}, {32, 1}});
                      });
    // ResNet18-shaped residual encoder (no pretrained weights); feature
    // dimension 512, for 224x224-scale inputs.
    register_backbone(
        "resnet18-class",
        [](const std::array<std::size_t, 3>& shape, std::mt19937_64& rng) {
          if (shape[1] < 32 || shape[2] < 32 || shape[1] % 32 != 0 ||
              shape[2] % 32 != 0)
            throw ConfigError(
                "resnet18-class needs H,W >= 32 and divisible by 32");
          return make_residual_backbone(
              shape, rng, 64, 7, 2,
              {{64, 2}, {128, 2}, {256, 2}, {512, 2}});
        });
    // Minimal two-conv encoder for gradient checks and micro fixtures.
    register_backbone("tinyconv-8",
                      [](const std::array<std::size_t, 3>& shape,
                         std::mt19937_64& rng) {
                        if (shape[1] % 4 != 0 || shape[2] % 4 != 0)
                          throw ConfigError(
                              "tinyconv-8 needs H,W divisible by 4");
                        auto seq = std::make_unique<nn::Sequential>();
                        seq->add(std::make_unique<nn::Conv2d>(shape[0], 4, 3,
                                                              2, 1, rng,
                                                              "tiny1"));
                        seq->add(std::make_unique<nn::ReLU>());
                        seq->add(std::make_unique<nn::Conv2d>(4, 8, 3, 2, 1,
                                                              rng, "tiny2"));
                        seq->add(std::make_unique<nn::ReLU>());
                        seq->add(std::make_unique<nn::GlobalAvgPool>());
                        return BackboneBuild{std::move(seq), 8};
                      });
  }
};
const RegisterBuiltins kBuiltins;

}  // namespace

void register_backbone(const std::string& id, BackboneFactory factory) {
  backbone_registry()[id] = std::move(factory);
}

std::vector<std::string> registered_backbones() {
  std::vector<std::string> ids;
  for (auto& [id, _] : backbone_registry()) ids.push_back(id);
  return ids;
}

// ------------------------------------------------------------------ Model

namespace {

// Decoder: linear projection of the concept vector to a (ch0, H/8, W/8) map
// followed by three stride-2 transposed convolutions and a sigmoid output.
std::unique_ptr<nn::Module> build_decoder(
    const std::array<std::size_t, 3>& shape, std::size_t num_concepts,
    std::mt19937_64& rng) {
  const std::size_t h = shape[1], w = shape[2];
  if (h % 8 != 0 || w % 8 != 0)
    throw ConfigError("decoder needs H and W divisible by 8, got " +
                      std::to_string(h) + "x" + std::to_string(w));
  const std::size_t h0 = h / 8, w0 = w / 8;
  const std::size_t ch0 = 32;
  auto seq = std::make_unique<nn::Sequential>();
  seq->add(std::make_unique<nn::Dense>(num_concepts, ch0 * h0 * w0, rng,
                                       "dec.proj"));
  seq->add(std::make_unique<nn::Reshape>(ch0, h0, w0));
  seq->add(std::make_unique<nn::ReLU>());
  seq->add(std::make_unique<nn::ConvTranspose2d>(ch0, 16, 4, 2, 1, rng,
                                                 "dec.up1"));
  seq->add(std::make_unique<nn::ReLU>());
  seq->add(std::make_unique<nn::ConvTranspose2d>(16, 8, 4, 2, 1, rng,
                                                 "dec.up2"));
  seq->add(std::make_unique<nn::ReLU>());
  seq->add(std::make_unique<nn::ConvTranspose2d>(8, 8, 4, 2, 1, rng,
                                                 "dec.up3"));
  seq->add(std::make_unique<nn::ReLU>());
  seq->add(std::make_unique<nn::Conv2d>(8, shape[0], 3, 1, 1, rng, "dec.out"));
  seq->add(std::make_unique<nn::Sigmoid>());
  return seq;
}

}  // namespace

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  // Each component draws from its own seeded stream so that adding or
  // removing one component does not shift the initialization of the others.
  auto component_rng = [&](std::uint64_t idx) {
    return std::mt19937_64(config_.seed * 0x9e3779b97f4a7c15ULL + idx + 1);
  };
  auto enc_rng = component_rng(0);
  auto build = backbone_registry().at(config_.backbone)(config_.image_shape,
                                                        enc_rng);
  encoder_ = std::move(build.encoder);
  feature_dim_ = build.feature_dim;
  auto g_rng = component_rng(1);
  task_head_ = std::make_unique<nn::Dense>(feature_dim_, config_.num_classes,
                                           g_rng, "task_head");
  auto psi_rng = component_rng(2);
  concept_encoder_ = std::make_unique<nn::Dense>(
      feature_dim_, config_.num_concepts, psi_rng, "concept_encoder");
  auto s_rng = component_rng(3);
  concept_classifier_ = std::make_unique<nn::Dense>(
      config_.num_concepts, config_.num_classes, s_rng, "concept_classifier");
  if (config_.use_decoder) {
    auto dec_rng = component_rng(4);
    decoder_ = build_decoder(config_.image_shape, config_.num_concepts,
                             dec_rng);
  }
}

void Model::check_image_batch(const Tensor& x) const {
  if (x.rank() != 4 || x.dim(1) != config_.image_shape[0] ||
      x.dim(2) != config_.image_shape[1] || x.dim(3) != config_.image_shape[2])
    throw InputError("expected image batch (B," +
                     std::to_string(config_.image_shape[0]) + "," +
                     std::to_string(config_.image_shape[1]) + "," +
                     std::to_string(config_.image_shape[2]) + "), got " +
                     x.shape_str());
  if (x.data.size() != Tensor::numel_of(x.shape))
    throw InputError("image batch data size " + std::to_string(x.data.size()) +
                     " does not match shape " + x.shape_str());
}

Tensor Model::forward_task(const Tensor& x) {
  check_image_batch(x);
  return task_head_->forward(encoder_->forward(x));
}

Tensor Model::extract_concepts(const Tensor& x) {
  check_image_batch(x);
  return concept_encoder_->forward(encoder_->forward(x));
}

Tensor Model::predict_from_concepts(const Tensor& concepts) {
  if (concepts.rank() != 2 || concepts.dim(1) != config_.num_concepts)
    throw InputError("expected concept batch (B," +
                     std::to_string(config_.num_concepts) + "), got " +
                     concepts.shape_str());
  return concept_classifier_->forward(concepts);
}

Tensor Model::decode_concepts(const Tensor& concepts) {
  if (!decoder_) throw UnsupportedError("model built with use_decoder=false");
  ++decoder_calls_;
  return decoder_->forward(concepts);
}

Tensor Model::reconstruct(const Tensor& x) {
  if (!decoder_) throw UnsupportedError("model built with use_decoder=false");
  check_image_batch(x);
  return decode_concepts(
      concept_encoder_->forward(encoder_->forward(x)));
}

ForwardBundle Model::forward_full(const Tensor& x) {
  check_image_batch(x);
  Tensor features = encoder_->forward(x);
  ForwardBundle b;
  b.task_logits = task_head_->forward(features);
  b.concepts = concept_encoder_->forward(features);
  b.surrogate_logits = concept_classifier_->forward(b.concepts);
  if (decoder_) b.reconstruction = decode_concepts(b.concepts);
  return b;
}

Tensor Model::predict_logits(const Tensor& x) {
  if (config_.bottleneck_mode)
    return predict_from_concepts(extract_concepts(x));
  return forward_task(x);
}

ComponentCounts Model::parameter_counts() {
  ComponentCounts c;
  c.feature_encoder = encoder_->parameter_count();
  c.task_head = task_head_->parameter_count();
  c.concept_encoder = concept_encoder_->parameter_count();
  c.concept_classifier = concept_classifier_->parameter_count();
  c.decoder = decoder_ ? decoder_->parameter_count() : 0;
  c.total = c.feature_encoder + c.task_head + c.concept_encoder +
            c.concept_classifier + c.decoder;
  return c;
}

std::vector<nn::Parameter*> Model::trainable_parameters() {
  std::vector<nn::Parameter*> ps;
  encoder_->collect_parameters(ps);
  task_head_->collect_parameters(ps);
  concept_encoder_->collect_parameters(ps);
  concept_classifier_->collect_parameters(ps);
  if (decoder_) decoder_->collect_parameters(ps);
  return ps;
}

std::vector<nn::Parameter*> Model::component_parameters(
    const std::string& name) {
  std::vector<nn::Parameter*> ps;
  if (name == "feature_encoder") encoder_->collect_parameters(ps);
  else if (name == "task_head") task_head_->collect_parameters(ps);
  else if (name == "concept_encoder") concept_encoder_->collect_parameters(ps);
  else if (name == "concept_classifier")
    concept_classifier_->collect_parameters(ps);
  else if (name == "decoder") {
    if (decoder_) decoder_->collect_parameters(ps);
  } else
    throw InputError("unknown component: " + name);
  return ps;
}

// ------------------------------------------------------------ checkpoints

namespace {

constexpr char kMagic[4] = {'A', 'H', 'C', 'X'};
constexpr std::uint32_t kFormatVersion = 1;

const std::vector<std::string> kComponentOrder = {
    "feature_encoder", "task_head", "concept_encoder", "concept_classifier",
    "decoder"};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw LoadError(std::string("checkpoint truncated reading ") + what);
  return v;
}

}  // namespace

void save_checkpoint(Model& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw LoadError("cannot open for writing: " + path);
  os.write(kMagic, 4);
  write_pod(os, kFormatVersion);
  const std::string cfg = model.config().to_json();
  write_pod(os, std::uint64_t(cfg.size()));
  os.write(cfg.data(), std::streamsize(cfg.size()));
  write_pod(os, std::uint32_t(kComponentOrder.size()));
  for (const auto& name : kComponentOrder) {
    auto ps = model.component_parameters(name);
    std::uint64_t count = 0;
    for (auto* p : ps) count += p->value.size();
    write_pod(os, std::uint16_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    write_pod(os, count);
    for (auto* p : ps)
      os.write(reinterpret_cast<const char*>(p->value.data()),
               std::streamsize(p->value.size() * sizeof(double)));
  }
  if (!os) throw LoadError("write failed: " + path);
}

std::unique_ptr<Model> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw LoadError("not a model checkpoint (bad magic): " + path);
  const auto version = read_pod<std::uint32_t>(is, "version");
  if (version != kFormatVersion)
    throw LoadError("unsupported checkpoint format version " +
                    std::to_string(version) + " (expected " +
                    std::to_string(kFormatVersion) + ")");
  const auto cfg_len = read_pod<std::uint64_t>(is, "config length");
  std::string cfg(cfg_len, '\0');
  is.read(cfg.data(), std::streamsize(cfg_len));
  if (!is) throw LoadError("checkpoint truncated reading config");
  auto model = std::make_unique<Model>(ModelConfig::from_json(cfg));
  const auto ncomp = read_pod<std::uint32_t>(is, "component count");
  for (std::uint32_t i = 0; i < ncomp; ++i) {
    const auto name_len = read_pod<std::uint16_t>(is, "component name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw LoadError("checkpoint truncated reading component name");
    const auto count = read_pod<std::uint64_t>(is, "component size");
    auto ps = model->component_parameters(name);
    std::uint64_t expected = 0;
    for (auto* p : ps) expected += p->value.size();
    if (count != expected)
      throw LoadError("checkpoint component '" + name + "' has " +
                      std::to_string(count) + " parameters, model expects " +
                      std::to_string(expected));
    for (auto* p : ps) {
      is.read(reinterpret_cast<char*>(p->value.data()),
              std::streamsize(p->value.size() * sizeof(double)));
      if (!is)
        throw LoadError("checkpoint truncated reading component '" + name +
                        "'");
    }
  }
  return model;
}

std::unique_ptr<Model> load_checkpoint(const std::string& path,
                                       const ModelConfig& expected) {
  auto model = load_checkpoint(path);
  const auto& c = model->config();
  if (c.num_concepts != expected.num_concepts)
    throw LoadError("checkpoint has C=" + std::to_string(c.num_concepts) +
                    ", requested C=" + std::to_string(expected.num_concepts));
  if (c.num_classes != expected.num_classes)
    throw LoadError("checkpoint has K=" + std::to_string(c.num_classes) +
                    ", requested K=" + std::to_string(expected.num_classes));
  if (c.image_shape != expected.image_shape)
    throw LoadError("checkpoint image shape mismatch");
  return model;
}

}  // namespace antehoc
