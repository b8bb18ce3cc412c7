#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "antehoc/tensor.hpp"

namespace antehoc::data {

struct AttributeSample {
  Tensor image;                     // (channels, H, W), values in [0,1]
  int label = 0;                    // in [0, K)
  std::vector<double> attributes;   // empty when the dataset has none
  std::int64_t id = 0;
};

struct Dataset {
  std::string id;
  std::size_t num_classes = 0;
  std::size_t num_attributes = 0;  // 0: no attribute annotations
  std::vector<std::string> class_names;
  std::vector<std::string> attribute_names;
  std::vector<AttributeSample> samples;

  std::size_t size() const { return samples.size(); }
  bool has_attributes() const { return num_attributes > 0; }
};

// Stacks the selected samples into (images, labels, attributes).
struct Batch {
  Tensor images;            // (B, channels, H, W)
  std::vector<int> labels;  // length B
  std::optional<Tensor> attributes;  // (B, C) when the dataset has them
  std::vector<std::int64_t> ids;
};

Batch make_batch(const Dataset& dataset, const std::vector<std::size_t>& idx);

// Seed-deterministic shuffle into batches; the final partial batch is kept.
// The union of the returned index sets is the whole dataset, exactly once.
std::vector<std::vector<std::size_t>> batches(const Dataset& dataset,
                                              std::size_t batch_size,
                                              std::uint64_t seed);

// ------------------------------------------------------------- synthetic

// Synthetic 3x32x32 oracle. Attributes [0, num_classes) are class-defining:
// exactly one is set per sample and the label equals its index, each drawn
// as a colored patch in a class-specific position. The remaining attributes
// are independent nuisance bits drawn as fixed visual markers.
struct SyntheticSpec {
  std::size_t num_classes = 4;
  std::size_t num_attributes = 6;
  std::size_t train_per_class = 100;
  double noise = 0.05;
  std::uint64_t seed = 0;

  void validate() const;  // throws ConfigError
};

struct SyntheticBundle {
  Dataset train, val, test;
};

// Deterministic under seed; train/val/test are disjoint and roughly 70/15/15,
// with the train split holding exactly train_per_class samples per class.
SyntheticBundle generate_synthetic(const SyntheticSpec& spec);

// The generator's class rule: index of the set class-defining attribute.
int synthetic_class_rule(const std::vector<double>& attributes,
                         std::size_t num_classes);

// Ground-truth defining attribute for a class (identity mapping).
inline std::size_t synthetic_defining_attribute(std::size_t cls) { return cls; }

// ------------------------------------------------------------- manifests

// Manifest: JSON with fields root, format ("cifar10-bin" | "ppm"),
// classes[], splits{name: entries}, optional attributes{file | files,
// granularity: "per-image" | "per-class", names[]}, optional checksums
// (crc32 hex per file).
struct AttributeHandling {
  bool binarize = true;  // false: min-max normalize continuous values to [0,1]
};

std::map<std::string, Dataset> load_image_dataset(
    const std::string& manifest_path);

std::map<std::string, Dataset> load_attribute_dataset(
    const std::string& manifest_path, const std::string& attribute_file,
    const AttributeHandling& handling = {});

// Resolves the attribute file (if any) from the manifest itself.
std::map<std::string, Dataset> load_dataset(
    const std::string& manifest_path, const AttributeHandling& handling = {});

}  // namespace antehoc::data
