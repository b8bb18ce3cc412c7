#include "antehoc/explanations.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "antehoc/errors.hpp"
#include "antehoc/metrics.hpp"
#include "antehoc/png.hpp"
#include "antehoc/training.hpp"

namespace antehoc::explanations {

namespace fs = std::filesystem;

ConceptGrid top_activating_images(Model& model, const data::Dataset& dataset,
                                  std::size_t concept_index, std::size_t k) {
  if (concept_index >= model.config().num_concepts)
    throw InputError("concept index " + std::to_string(concept_index) +
                     " out of range");
  if (k < 1) throw InputError("top_activating_images: k must be >= 1");
  auto table = metrics::evaluate_model(model, dataset);
  const std::size_t c = model.config().num_concepts;
  std::vector<std::pair<std::int64_t, double>> all;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    all.emplace_back(dataset.samples[i].id,
                     table.concepts.data[i * c + concept_index]);
  // Highest activation first, ties broken by ascending sample id.
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  ConceptGrid grid;
  grid.concept_index = concept_index;
  grid.truncated = all.size() < k;
  all.resize(std::min(k, all.size()));
  grid.top = std::move(all);
  return grid;
}

std::vector<FlipExample> find_flip_examples(Model& model,
                                            const data::Dataset& dataset,
                                            std::size_t max_examples,
                                            bool exhaustive) {
  std::vector<FlipExample> out;
  if (max_examples == 0) return out;
  auto table = metrics::evaluate_model(model, dataset);
  const std::size_t c = model.config().num_concepts;
  Tensor scaled = metrics::scale_concepts(table.concepts);
  std::size_t to_correct = 0, to_incorrect = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (to_correct >= max_examples && to_incorrect >= max_examples) break;
    Tensor raw({1, c});
    std::copy_n(table.concepts.data.begin() + std::ptrdiff_t(i * c), c,
                raw.data.begin());
    const int original = int(argmax_row(table.surrogate_logits, i));
    std::vector<std::size_t> order(c);
    for (std::size_t j = 0; j < c; ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return scaled.data[i * c + a] > scaled.data[i * c + b];
                     });
    for (std::size_t j : order) {
      Tensor intervened = raw;
      intervened.data[j] = 0.0;
      const Tensor logits = model.predict_from_concepts(intervened);
      const int flipped = int(argmax_row(logits, 0));
      if (flipped == original) continue;
      FlipExample fe;
      fe.sample_id = dataset.samples[i].id;
      fe.original_prediction = original;
      fe.intervened_prediction = flipped;
      fe.concept_index = j;
      fe.direction = flipped == dataset.samples[i].label
                         ? FlipDirection::kToCorrect
                         : FlipDirection::kToIncorrect;
      auto& count = fe.direction == FlipDirection::kToCorrect ? to_correct
                                                              : to_incorrect;
      if (count < max_examples) {
        ++count;
        out.push_back(fe);
      }
      if (!exhaustive) break;
    }
  }
  return out;
}

RelevanceMatrix relevance_from(const Tensor& scaled_concepts,
                               const std::vector<int>& labels,
                               std::size_t num_classes, double omega) {
  const std::size_t n = scaled_concepts.dim(0), c = scaled_concepts.dim(1);
  if (labels.size() != n)
    throw InputError("relevance_from: label count mismatch");
  RelevanceMatrix m;
  m.num_classes = num_classes;
  m.num_concepts = c;
  m.omega = omega;
  m.values.assign(num_classes * c, 0.0);
  m.class_counts.assign(num_classes, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto cls = std::size_t(labels[i]);
    if (cls >= num_classes)
      throw InputError("relevance_from: label out of range");
    ++m.class_counts[cls];
    for (std::size_t j = 0; j < c; ++j)
      if (scaled_concepts.data[i * c + j] > omega) m.values[cls * c + j] += 1.0;
  }
  for (std::size_t k = 0; k < num_classes; ++k)
    if (m.class_counts[k] > 0)
      for (std::size_t j = 0; j < c; ++j)
        m.values[k * c + j] /= double(m.class_counts[k]);
  return m;
}

RelevanceMatrix class_concept_relevance(Model& model,
                                        const data::Dataset& dataset,
                                        double omega) {
  if (omega < 0.0 || omega > 1.0)
    throw InputError("class_concept_relevance: omega must be in [0,1]");
  auto table = metrics::evaluate_model(model, dataset);
  Tensor scaled = metrics::scale_concepts(table.concepts);
  return relevance_from(scaled, table.labels, model.config().num_classes,
                        omega);
}

std::vector<std::size_t> argmax_relevance_concepts(const RelevanceMatrix& m) {
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < m.num_classes; ++k) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < m.num_concepts; ++j)
      if (m.at(k, j) > m.at(k, best)) best = j;
    out.push_back(best);
  }
  return out;
}

namespace {

std::string zero_pad(std::size_t v, int width) {
  std::ostringstream os;
  os.width(width);
  os.fill('0');
  os << v;
  return os.str();
}

std::string format_prop(double v) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << v;
  return os.str();
}

void render_grid_png(const data::Dataset& dataset, const ConceptGrid& grid,
                     const std::string& path) {
  std::map<std::int64_t, std::size_t> by_id;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    by_id[dataset.samples[i].id] = i;
  const auto& shape = dataset.samples.front().image.shape;
  const std::size_t ch = shape[0], h = shape[1], w = shape[2];
  const std::size_t gap = 2;
  const std::size_t total_w =
      grid.top.size() * w + (grid.top.size() - 1) * gap;
  std::vector<std::uint8_t> rgb(total_w * h * 3, 255);
  for (std::size_t g = 0; g < grid.top.size(); ++g) {
    const auto& img = dataset.samples.at(by_id.at(grid.top[g].first)).image;
    const std::size_t x0 = g * (w + gap);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t cc = 0; cc < 3; ++cc) {
          const double v = ch == 3 ? img.data[(cc * h + y) * w + x]
                                   : img.data[y * w + x];
          rgb[(y * total_w + x0 + x) * 3 + cc] =
              std::uint8_t(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        }
  }
  write_png_rgb(path, total_w, h, rgb);
}

}  // namespace

void export_report(const data::Dataset& dataset,
                   std::vector<ConceptGrid>& grids,
                   const std::vector<FlipExample>& flips,
                   const RelevanceMatrix& relevance, const std::string& out_dir,
                   std::size_t top_pairs) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir))
    throw LoadError("cannot create output directory: " + out_dir);

  for (auto& g : grids) {
    const std::string name = "concept_" + zero_pad(g.concept_index, 3) + ".png";
    const std::string path = (fs::path(out_dir) / name).string();
    render_grid_png(dataset, g, path);
    g.image_path = name;
  }

  {
    std::ofstream os(fs::path(out_dir) / "relevance.csv");
    os << "class,concept,proportion\n";
    for (std::size_t k = 0; k < relevance.num_classes; ++k) {
      if (!relevance.defined(k)) continue;
      for (std::size_t j = 0; j < relevance.num_concepts; ++j)
        os << k << "," << j << "," << format_prop(relevance.at(k, j)) << "\n";
    }
  }

  {
    // Highest co-occurrence pairs; undefined classes excluded.
    std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
    for (std::size_t k = 0; k < relevance.num_classes; ++k) {
      if (!relevance.defined(k)) continue;
      for (std::size_t j = 0; j < relevance.num_concepts; ++j)
        pairs.emplace_back(relevance.at(k, j), k, j);
    }
    std::stable_sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) {
      return std::get<0>(a) > std::get<0>(b);
    });
    pairs.resize(std::min(top_pairs, pairs.size()));
    std::ofstream os(fs::path(out_dir) / "top_pairs.csv");
    os << "class,concept,proportion\n";
    for (const auto& [v, k, j] : pairs)
      os << k << "," << j << "," << format_prop(v) << "\n";
  }

  {
    std::ofstream os(fs::path(out_dir) / "flips.md");
    os << "# Single-concept intervention flips\n\n";
    if (flips.empty()) {
      os << "no flips found\n";
    } else {
      os << "| sample | concept | prediction | intervened | direction |\n";
      os << "|-------:|--------:|-----------:|-----------:|-----------|\n";
      for (const auto& f : flips)
        os << "| " << f.sample_id << " | " << f.concept_index << " | "
           << f.original_prediction << " | " << f.intervened_prediction
           << " | "
           << (f.direction == FlipDirection::kToCorrect ? "to_correct"
                                                        : "to_incorrect")
           << " |\n";
    }
  }

  {
    std::ofstream os(fs::path(out_dir) / "index.md");
    os << "# Explanation report\n\n";
    os << "Dataset: " << dataset.id << " (" << dataset.size()
       << " samples)\n\n";
    os << "## Concept activation grids\n\n";
    for (const auto& g : grids) {
      os << "- concept " << g.concept_index << ": [" << g.image_path << "]("
         << g.image_path << ")";
      if (g.truncated) os << " (truncated: dataset smaller than requested k)";
      os << "\n";
    }
    os << "\n## Global class-concept relevance\n\n";
    os << "Full matrix: [relevance.csv](relevance.csv), omega = "
       << relevance.omega << "\n\n";
    os << "Top pairs: [top_pairs.csv](top_pairs.csv)\n\n";
    os << "## Intervention flips\n\n[flips.md](flips.md)\n";
  }
}

}  // namespace antehoc::explanations
