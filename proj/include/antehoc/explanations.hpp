#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "antehoc/data.hpp"
#include "antehoc/model.hpp"
#include "antehoc/tensor.hpp"

namespace antehoc::explanations {

// The k samples that maximally activate one concept, best first.
struct ConceptGrid {
  std::size_t concept_index = 0;
  std::vector<std::pair<std::int64_t, double>> top;  // (sample id, activation)
  bool truncated = false;  // dataset had fewer than k samples
  std::string image_path;  // set by export_report
};

enum class FlipDirection { kToCorrect, kToIncorrect };

// A single-concept intervention that changed the prediction.
struct FlipExample {
  std::int64_t sample_id = 0;
  int original_prediction = 0;
  int intervened_prediction = 0;
  std::size_t concept_index = 0;
  FlipDirection direction = FlipDirection::kToIncorrect;
};

// K x C co-occurrence proportions: entry (k,c) is the fraction of class-k
// samples whose scaled concept c exceeds omega. Classes with zero samples
// are undefined and excluded from top-pair reporting.
struct RelevanceMatrix {
  std::size_t num_classes = 0;
  std::size_t num_concepts = 0;
  double omega = 0.5;
  std::vector<double> values;             // row-major (K, C)
  std::vector<std::size_t> class_counts;  // per-class sample counts

  double at(std::size_t cls, std::size_t concept_index) const {
    return values[cls * num_concepts + concept_index];
  }
  bool defined(std::size_t cls) const { return class_counts[cls] > 0; }
};

ConceptGrid top_activating_images(Model& model, const data::Dataset& dataset,
                                  std::size_t concept_index, std::size_t k);

// Per sample, zeroes one concept at a time in descending scaled-activation
// order and records the first zeroing that changes the prediction. With
// exhaustive=true every flipping concept of a sample is recorded instead.
// Collects at most max_examples per direction.
std::vector<FlipExample> find_flip_examples(Model& model,
                                            const data::Dataset& dataset,
                                            std::size_t max_examples,
                                            bool exhaustive = false);

RelevanceMatrix class_concept_relevance(Model& model,
                                        const data::Dataset& dataset,
                                        double omega);

// Matrix-level core, testable against hand counts.
RelevanceMatrix relevance_from(const Tensor& scaled_concepts,
                               const std::vector<int>& labels,
                               std::size_t num_classes, double omega);

// For each defined class, its argmax-relevance concept; used by the
// oracle-alignment check against the synthetic generator.
std::vector<std::size_t> argmax_relevance_concepts(const RelevanceMatrix& m);

// Writes one PNG grid per concept, a flip gallery, the relevance matrix as
// "class,concept,proportion" CSV plus its top pairs, and an index document.
// Deterministic filenames and bytes. Updates grids[i].image_path.
void export_report(const data::Dataset& dataset,
                   std::vector<ConceptGrid>& grids,
                   const std::vector<FlipExample>& flips,
                   const RelevanceMatrix& relevance,
                   const std::string& out_dir, std::size_t top_pairs = 10);

}  // namespace antehoc::explanations
