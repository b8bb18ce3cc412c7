#include "antehoc/runner.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>

#include "antehoc/errors.hpp"
#include "antehoc/explanations.hpp"

namespace antehoc::runner {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string file_hash(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open for hashing: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return fnv1a_hex(ss.str());
}

// ------------------------------------------------------------ config

namespace {

json selector_to_json(const DatasetSelector& d) {
  json j;
  if (d.synthetic) {
    j["synthetic"] = {{"num_classes", d.synthetic->num_classes},
                      {"num_attributes", d.synthetic->num_attributes},
                      {"train_per_class", d.synthetic->train_per_class},
                      {"noise", d.synthetic->noise},
                      {"seed", d.synthetic->seed}};
  } else {
    j["manifest"] = d.manifest_path;
  }
  j["binarize_attributes"] = d.binarize_attributes;
  return j;
}

DatasetSelector selector_from_json(const json& j) {
  DatasetSelector d;
  if (j.contains("synthetic")) {
    const auto& s = j["synthetic"];
    data::SyntheticSpec spec;
    if (s.contains("num_classes")) spec.num_classes = s["num_classes"];
    if (s.contains("num_attributes")) spec.num_attributes = s["num_attributes"];
    if (s.contains("train_per_class"))
      spec.train_per_class = s["train_per_class"];
    if (s.contains("noise")) spec.noise = s["noise"];
    if (s.contains("seed")) spec.seed = s["seed"];
    d.synthetic = spec;
  } else if (j.contains("manifest")) {
    d.manifest_path = j["manifest"];
  } else {
    throw ConfigError("dataset selector needs 'synthetic' or 'manifest'");
  }
  if (j.contains("binarize_attributes"))
    d.binarize_attributes = j["binarize_attributes"];
  return d;
}

json training_to_json(const TrainOptions& t) {
  return {{"epochs", t.epochs},
          {"batch_size", t.batch_size},
          {"learning_rate", t.learning_rate},
          {"cosine_decay", t.cosine_decay},
          {"concept_loss_form",
           t.concept_loss_form == ConceptLossForm::kBce ? "bce" : "mse"},
          {"augment_hflip", t.augment_hflip},
          {"augment_crop", t.augment_crop}};
}

TrainOptions training_from_json(const json& j) {
  TrainOptions t;
  if (j.contains("epochs")) t.epochs = j["epochs"];
  if (j.contains("batch_size")) t.batch_size = j["batch_size"];
  if (j.contains("learning_rate")) t.learning_rate = j["learning_rate"];
  if (j.contains("cosine_decay")) t.cosine_decay = j["cosine_decay"];
  if (j.contains("concept_loss_form")) {
    const std::string f = j["concept_loss_form"];
    if (f == "bce") t.concept_loss_form = ConceptLossForm::kBce;
    else if (f == "mse") t.concept_loss_form = ConceptLossForm::kMse;
    else throw ConfigError("concept_loss_form must be 'bce' or 'mse'");
  }
  if (j.contains("augment_hflip")) t.augment_hflip = j["augment_hflip"];
  if (j.contains("augment_crop")) t.augment_crop = j["augment_crop"];
  return t;
}

// Applies "a.b.c=value" overrides onto the raw JSON tree.
void apply_override(json& root, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override must be key.path=value, got: " + kv);
  const std::string path = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("bad override path: " + path);
    if (dot == std::string::npos) {
      json value;
      try {
        value = json::parse(raw);
      } catch (const json::exception&) {
        value = raw;  // plain string
      }
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

}  // namespace

std::string ExperimentConfig::to_json() const {
  json j;
  j["model"] = json::parse(model.to_json());
  j["dataset"] = selector_to_json(dataset);
  j["training"] = training_to_json(training);
  j["evaluation"] = {{"metrics", eval_metrics}, {"omegas", omegas}};
  j["explain"] = {{"k", grid_k}, {"max_flips", max_flips}};
  j["output_dir"] = output_dir;
  return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  if (!j.contains("model")) throw ConfigError("config missing 'model' section");
  for (const char* field : {"num_classes", "num_concepts"})
    if (!j["model"].contains(field))
      throw ConfigError(std::string("config missing required field model.") +
                        field);
  c.model = ModelConfig::from_json(j["model"].dump());
  if (!j.contains("dataset"))
    throw ConfigError("config missing 'dataset' section");
  c.dataset = selector_from_json(j["dataset"]);
  if (j.contains("training")) c.training = training_from_json(j["training"]);
  if (j.contains("evaluation")) {
    const auto& e = j["evaluation"];
    if (e.contains("metrics"))
      c.eval_metrics = e["metrics"].get<std::vector<std::string>>();
    if (e.contains("omegas")) c.omegas = e["omegas"].get<std::vector<double>>();
  }
  if (j.contains("explain")) {
    if (j["explain"].contains("k")) c.grid_k = j["explain"]["k"];
    if (j["explain"].contains("max_flips"))
      c.max_flips = j["explain"]["max_flips"];
  }
  if (j.contains("output_dir")) c.output_dir = j["output_dir"];
  // Field-level validation up front so the CLI can fail with a named field.
  try {
    c.model.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  if (c.dataset.synthetic) c.dataset.synthetic->validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(
    const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(path + " is not valid JSON: " + std::string(e.what()));
  }
  for (const auto& o : overrides) apply_override(j, o);
  return from_json_text(j.dump());
}

// ------------------------------------------------------------ datasets

SplitSet resolve_dataset(const DatasetSelector& selector) {
  SplitSet out;
  if (selector.synthetic) {
    auto bundle = data::generate_synthetic(*selector.synthetic);
    out.train = std::move(bundle.train);
    out.val = std::move(bundle.val);
    out.test = std::move(bundle.test);
    return out;
  }
  data::AttributeHandling handling;
  handling.binarize = selector.binarize_attributes;
  auto splits = data::load_dataset(selector.manifest_path, handling);
  if (!splits.count("train"))
    throw ConfigError("manifest has no 'train' split: " +
                      selector.manifest_path);
  out.train = std::move(splits["train"]);
  if (splits.count("val")) out.val = std::move(splits["val"]);
  if (splits.count("test")) out.test = std::move(splits["test"]);
  if (out.val.size() == 0) out.val = out.test;
  if (out.val.size() == 0)
    throw ConfigError("manifest needs a 'val' or 'test' split");
  if (out.test.size() == 0) out.test = out.val;
  return out;
}

// ------------------------------------------------------------ commands

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw LoadError("cannot write: " + path);
  os << text;
}

std::string history_to_jsonl(const std::vector<EpochRecord>& history) {
  std::string out;
  for (const auto& r : history) {
    json j;
    j["epoch"] = r.epoch;
    j["task"] = r.losses.task;
    j["fidelity"] = r.losses.fidelity;
    j["reconstruction"] = r.losses.reconstruction;
    j["concept"] = r.losses.concept_term;
    j["total"] = r.losses.total;
    j["val_accuracy"] = r.val_accuracy;
    out += j.dump() + "\n";
  }
  return out;
}

void ensure_layout(const std::string& out_dir) {
  for (const char* sub : {"checkpoints", "reports", "explanations", "logs"})
    fs::create_directories(fs::path(out_dir) / sub);
}

}  // namespace

TrainOutputs cmd_train(const ExperimentConfig& config) {
  const std::string resolved = config.to_json();
  TrainOutputs out;
  out.run_id = fnv1a_hex(resolved);
  ensure_layout(config.output_dir);

  auto splits = resolve_dataset(config.dataset);
  auto result = fit(config.model, splits.train, splits.val, config.training);
  out.history = result.history;

  const fs::path base(config.output_dir);
  out.checkpoint_path = (base / "checkpoints" / (out.run_id + ".ckpt")).string();
  save_checkpoint(*result.model, out.checkpoint_path);
  out.history_path = (base / "logs" / (out.run_id + ".history.jsonl")).string();
  write_text(out.history_path, history_to_jsonl(result.history));
  out.config_snapshot_path =
      (base / (out.run_id + ".config.json")).string();
  write_text(out.config_snapshot_path, resolved + "\n");
  return out;
}

std::vector<metrics::MetricReport> cmd_evaluate(
    const std::string& checkpoint_path, const data::Dataset& dataset,
    const std::vector<std::string>& metric_names,
    const std::vector<double>& omegas, const std::string& out_dir) {
  auto model = load_checkpoint(checkpoint_path);
  const std::string ckpt_id = file_hash(checkpoint_path);
  std::vector<metrics::MetricReport> reports;
  for (const auto& name : metric_names) {
    if (name == "accuracy") {
      reports.push_back(metrics::task_accuracy(*model, dataset));
    } else if (name == "faithfulness") {
      reports.push_back(metrics::faithfulness(*model, dataset));
    } else if (name == "fidelity") {
      reports.push_back(metrics::fidelity_metric(*model, dataset));
    } else if (name == "explanation_error") {
      if (!dataset.has_attributes())
        throw InputError(
            "explanation_error requires a dataset with attribute vectors");
      reports.push_back(metrics::explanation_error(*model, dataset));
    } else if (name == "intervention") {
      for (double omega : omegas)
        reports.push_back(
            metrics::intervention_accuracy(*model, dataset, omega));
    } else {
      throw ConfigError("unknown metric: " + name);
    }
  }
  for (auto& r : reports) r.checkpoint_id = ckpt_id;

  ensure_layout(out_dir);
  const fs::path base(out_dir);
  std::string body = "[\n";
  for (std::size_t i = 0; i < reports.size(); ++i)
    body += "  " + reports[i].to_json() + (i + 1 < reports.size() ? ",\n" : "\n");
  body += "]\n";
  write_text((base / "reports" / (ckpt_id + "_" + dataset.id + ".json"))
                 .string(),
             body);

  const fs::path summary = base / "reports" / "summary.csv";
  const bool fresh = !fs::exists(summary);
  std::ofstream os(summary, std::ios::app);
  if (fresh) os << metrics::MetricReport::csv_header() << "\n";
  for (const auto& r : reports) os << r.to_csv_row() << "\n";
  return reports;
}

std::string cmd_explain(const std::string& checkpoint_path,
                        const data::Dataset& dataset, std::size_t k,
                        double omega, std::size_t max_flips,
                        const std::string& out_dir) {
  auto model = load_checkpoint(checkpoint_path);
  const std::string ckpt_id = file_hash(checkpoint_path);
  ensure_layout(out_dir);
  std::vector<explanations::ConceptGrid> grids;
  for (std::size_t c = 0; c < model->config().num_concepts; ++c)
    grids.push_back(explanations::top_activating_images(*model, dataset, c, k));
  auto flips = explanations::find_flip_examples(*model, dataset, max_flips);
  auto relevance = explanations::class_concept_relevance(*model, dataset, omega);
  const std::string dir =
      (fs::path(out_dir) / "explanations" / (ckpt_id + "_" + dataset.id))
          .string();
  explanations::export_report(dataset, grids, flips, relevance, dir);
  return dir;
}

std::vector<AblationRow> cmd_ablate(const ExperimentConfig& base,
                                    const std::string& axis,
                                    const std::vector<std::string>& values) {
  if (axis != "num_concepts" && axis != "backbone" && axis != "use_decoder")
    throw ConfigError(
        "ablation axis must be one of num_concepts | backbone | use_decoder");
  if (values.empty()) throw ConfigError("ablation sweep needs values");
  std::vector<AblationRow> rows;
  for (const auto& value : values) {
    ExperimentConfig cfg = base;
    if (axis == "num_concepts") cfg.model.num_concepts = std::stoul(value);
    else if (axis == "backbone") cfg.model.backbone = value;
    else {
      if (value != "true" && value != "false")
        throw ConfigError("use_decoder sweep values must be true/false");
      cfg.model.use_decoder = value == "true";
    }
    cfg.model.validate();
    auto splits = resolve_dataset(cfg.dataset);
    auto result = fit(cfg.model, splits.train, splits.val, cfg.training);
    AblationRow row;
    row.axis = axis;
    row.value = value;
    row.accuracy = metrics::task_accuracy(*result.model, splits.test).value;
    row.faithfulness = metrics::faithfulness(*result.model, splits.test).value;
    row.fidelity = metrics::fidelity_metric(*result.model, splits.test).value;
    row.intervention =
        metrics::intervention_accuracy(*result.model, splits.test, 0.5).value;
    row.reconstruction = result.history.back().losses.reconstruction;
    rows.push_back(row);
  }
  ensure_layout(base.output_dir);
  std::ofstream os(fs::path(base.output_dir) / "reports" /
                   ("ablation_" + axis + ".csv"));
  os << "axis,value,accuracy,faithfulness,fidelity,intervention_omega_0.5,"
        "reconstruction_loss\n";
  os.precision(6);
  os << std::fixed;
  for (const auto& r : rows)
    os << r.axis << "," << r.value << "," << r.accuracy << ","
       << r.faithfulness << "," << r.fidelity << "," << r.intervention << ","
       << r.reconstruction << "\n";
  return rows;
}

}  // namespace antehoc::runner
