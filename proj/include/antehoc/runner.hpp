#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "antehoc/data.hpp"
#include "antehoc/metrics.hpp"
#include "antehoc/model.hpp"
#include "antehoc/training.hpp"

namespace antehoc::runner {

// Dataset selector: seeded synthetic spec or a manifest on disk.
struct DatasetSelector {
  std::optional<data::SyntheticSpec> synthetic;
  std::string manifest_path;
  bool binarize_attributes = true;
};

struct ExperimentConfig {
  ModelConfig model;
  DatasetSelector dataset;
  TrainOptions training;
  std::vector<std::string> eval_metrics = {"accuracy", "faithfulness",
                                           "fidelity"};
  std::vector<double> omegas = {0.5};
  std::size_t grid_k = 5;
  std::size_t max_flips = 5;
  std::string output_dir = "out";

  std::string to_json() const;  // canonical resolved form
  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::string& path,
                               const std::vector<std::string>& overrides = {});
};

// FNV-1a over bytes, hex; run ids and checkpoint ids.
std::string fnv1a_hex(const std::string& bytes);
std::string file_hash(const std::string& path);

struct SplitSet {
  data::Dataset train, val, test;
};
SplitSet resolve_dataset(const DatasetSelector& selector);

struct TrainOutputs {
  std::string run_id;
  std::string checkpoint_path;
  std::string history_path;
  std::string config_snapshot_path;
  std::vector<EpochRecord> history;
};

TrainOutputs cmd_train(const ExperimentConfig& config);

std::vector<metrics::MetricReport> cmd_evaluate(
    const std::string& checkpoint_path, const data::Dataset& dataset,
    const std::vector<std::string>& metric_names,
    const std::vector<double>& omegas, const std::string& out_dir);

// Grids for all concepts + flip gallery + relevance; returns the report dir.
std::string cmd_explain(const std::string& checkpoint_path,
                        const data::Dataset& dataset, std::size_t k,
                        double omega, std::size_t max_flips,
                        const std::string& out_dir);

struct AblationRow {
  std::string axis;
  std::string value;
  double accuracy = 0.0;
  double faithfulness = 0.0;
  double fidelity = 0.0;
  double intervention = 0.0;      // at omega 0.5
  double reconstruction = 0.0;    // final-epoch training reconstruction loss
};

// Single-axis sweep: "num_concepts", "backbone", or "use_decoder".
std::vector<AblationRow> cmd_ablate(const ExperimentConfig& base,
                                    const std::string& axis,
                                    const std::vector<std::string>& values);

}  // namespace antehoc::runner
