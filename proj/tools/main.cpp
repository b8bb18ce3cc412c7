#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>

#include "antehoc/errors.hpp"
#include "antehoc/runner.hpp"

namespace {

using antehoc::runner::DatasetSelector;
using antehoc::runner::ExperimentConfig;
using json = nlohmann::ordered_json;

// --dataset accepts a manifest (has "splits"), a dataset-selector JSON
// (has "synthetic"/"manifest"), or a bare synthetic spec.
antehoc::data::Dataset load_eval_dataset(const std::string& path,
                                         const std::string& split) {
  std::ifstream is(path);
  if (!is) throw antehoc::ConfigError("cannot open dataset file: " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw antehoc::ConfigError(path + " is not valid JSON: " +
                               std::string(e.what()));
  }
  DatasetSelector sel;
  if (j.contains("splits")) {
    sel.manifest_path = path;
  } else if (j.contains("synthetic") || j.contains("manifest")) {
    json wrapped = j;
    sel = antehoc::runner::ExperimentConfig::from_json_text(
              json{{"model",
                    json::parse(antehoc::ModelConfig{}.to_json())},
                   {"dataset", wrapped}}
                  .dump())
              .dataset;
  } else {
    json wrapped = {{"synthetic", j}};
    sel = antehoc::runner::ExperimentConfig::from_json_text(
              json{{"model",
                    json::parse(antehoc::ModelConfig{}.to_json())},
                   {"dataset", wrapped}}
                  .dump())
              .dataset;
  }
  auto splits = antehoc::runner::resolve_dataset(sel);
  if (split == "train") return splits.train;
  if (split == "val") return splits.val;
  if (split == "test") return splits.test;
  throw antehoc::ConfigError("unknown split: " + split);
}

int run(int argc, char** argv) {
  CLI::App app{"ante-hoc concept-explanation classifiers: train, evaluate, "
               "explain, ablate"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, dataset_path, out_dir, split = "test";
  std::vector<std::string> overrides, metric_names, sweep_values;
  std::vector<double> omegas;
  std::size_t grid_k = 5, max_flips = 5;
  long long seed = -1;
  std::string axis;

  auto* train = app.add_subcommand("train", "train a model from a config");
  train->add_option("--config", config_path, "experiment config (JSON)")
      ->required();
  train->add_option("--set", overrides,
                    "dotted-path override, e.g. model.num_concepts=8");
  train->add_option("--out", out_dir, "override output directory");
  train->add_option("--seed", seed, "override model seed");

  auto* evaluate = app.add_subcommand("evaluate", "run metrics on a checkpoint");
  evaluate->add_option("--checkpoint", checkpoint)->required();
  evaluate->add_option("--dataset", dataset_path, "manifest or synthetic spec")
      ->required();
  evaluate->add_option("--split", split, "train|val|test (default test)");
  evaluate
      ->add_option("--metrics", metric_names,
                   "accuracy faithfulness fidelity explanation_error "
                   "intervention")
      ->delimiter(',');
  evaluate->add_option("--omega", omegas, "intervention thresholds");
  evaluate->add_option("--out", out_dir, "output directory")->required();

  auto* explain = app.add_subcommand("explain", "qualitative report bundle");
  explain->add_option("--checkpoint", checkpoint)->required();
  explain->add_option("--dataset", dataset_path)->required();
  explain->add_option("--split", split);
  explain->add_option("--k", grid_k, "images per concept grid");
  explain->add_option("--omega", omegas, "relevance threshold");
  explain->add_option("--max-flips", max_flips, "flip examples per direction");
  explain->add_option("--out", out_dir)->required();

  auto* ablate = app.add_subcommand("ablate", "single-axis sweep");
  ablate->add_option("--config", config_path)->required();
  ablate->add_option("--axis", axis, "num_concepts | backbone | use_decoder")
      ->required();
  ablate->add_option("--values", sweep_values)->required()->delimiter(',');
  ablate->add_option("--set", overrides);
  ablate->add_option("--out", out_dir);

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) {
    if (seed >= 0)
      overrides.push_back("model.seed=" + std::to_string(seed));
    auto cfg = ExperimentConfig::load(config_path, overrides);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    auto outs = antehoc::runner::cmd_train(cfg);
    std::cout << "run_id " << outs.run_id << "\n"
              << "checkpoint " << outs.checkpoint_path << "\n"
              << "history " << outs.history_path << "\n"
              << "best val accuracy "
              << (outs.history.empty()
                      ? 0.0
                      : std::max_element(outs.history.begin(),
                                         outs.history.end(),
                                         [](const auto& a, const auto& b) {
                                           return a.val_accuracy <
                                                  b.val_accuracy;
                                         })
                            ->val_accuracy)
              << "\n";
  } else if (evaluate->parsed()) {
    if (metric_names.empty())
      metric_names = {"accuracy", "faithfulness", "fidelity"};
    if (omegas.empty()) omegas = {0.5};
    auto dataset = load_eval_dataset(dataset_path, split);
    auto reports = antehoc::runner::cmd_evaluate(checkpoint, dataset,
                                                 metric_names, omegas, out_dir);
    for (const auto& r : reports) std::cout << r.to_json() << "\n";
  } else if (explain->parsed()) {
    auto dataset = load_eval_dataset(dataset_path, split);
    const double omega = omegas.empty() ? 0.5 : omegas.front();
    const std::string dir = antehoc::runner::cmd_explain(
        checkpoint, dataset, grid_k, omega, max_flips, out_dir);
    std::cout << "report " << dir << "\n";
  } else if (ablate->parsed()) {
    auto cfg = ExperimentConfig::load(config_path, overrides);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    auto rows = antehoc::runner::cmd_ablate(cfg, axis, sweep_values);
    for (const auto& r : rows)
      std::cout << r.axis << "=" << r.value << " accuracy=" << r.accuracy
                << " faithfulness=" << r.faithfulness
                << " fidelity=" << r.fidelity
                << " intervention@0.5=" << r.intervention
                << " reconstruction=" << r.reconstruction << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const antehoc::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const antehoc::TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return 3;
  } catch (const antehoc::InputError& e) {
    std::cerr << "evaluation error: " << e.what() << "\n";
    return 4;
  } catch (const antehoc::UnsupportedError& e) {
    std::cerr << "evaluation error: " << e.what() << "\n";
    return 4;
  } catch (const antehoc::LoadError& e) {
    std::cerr << "load error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
