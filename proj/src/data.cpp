#include "antehoc/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>

#include "antehoc/errors.hpp"

namespace antehoc::data {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// ---------------------------------------------------------------- batching

Batch make_batch(const Dataset& dataset, const std::vector<std::size_t>& idx) {
  if (idx.empty()) throw InputError("make_batch: empty index set");
  const auto& shape = dataset.samples[idx[0]].image.shape;
  Batch b;
  b.images = Tensor({idx.size(), shape[0], shape[1], shape[2]});
  const std::size_t per = Tensor::numel_of(shape);
  if (dataset.has_attributes())
    b.attributes = Tensor({idx.size(), dataset.num_attributes});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto& s = dataset.samples[idx[i]];
    if (s.image.shape != shape)
      throw InputError("make_batch: inconsistent image shapes in dataset");
    std::copy(s.image.data.begin(), s.image.data.end(),
              b.images.data.begin() + std::ptrdiff_t(i * per));
    b.labels.push_back(s.label);
    b.ids.push_back(s.id);
    if (b.attributes) {
      if (s.attributes.size() != dataset.num_attributes)
        throw InputError("make_batch: sample " + std::to_string(s.id) +
                         " has wrong attribute width");
      std::copy(s.attributes.begin(), s.attributes.end(),
                b.attributes->data.begin() +
                    std::ptrdiff_t(i * dataset.num_attributes));
    }
  }
  return b;
}

std::vector<std::vector<std::size_t>> batches(const Dataset& dataset,
                                              std::size_t batch_size,
                                              std::uint64_t seed) {
  if (batch_size < 1) throw InputError("batches: batch_size must be >= 1");
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, order.size());
    out.emplace_back(order.begin() + std::ptrdiff_t(start),
                     order.begin() + std::ptrdiff_t(end));
  }
  return out;
}

// --------------------------------------------------------------- synthetic

namespace {

constexpr std::size_t kSide = 32;
constexpr std::size_t kMaxClasses = 8;
constexpr std::size_t kMaxNuisance = 4;

struct Rgb {
  double r, g, b;
};
constexpr Rgb kPalette[kMaxClasses] = {
    {0.9, 0.1, 0.1}, {0.1, 0.9, 0.1}, {0.1, 0.1, 0.9}, {0.9, 0.9, 0.1},
    {0.9, 0.1, 0.9}, {0.1, 0.9, 0.9}, {0.9, 0.5, 0.1}, {0.5, 0.1, 0.9}};
constexpr std::pair<std::size_t, std::size_t> kPatchCenter[kMaxClasses] = {
    {8, 8},  {8, 24},  {24, 8},  {24, 24},
    {16, 8}, {16, 24}, {8, 16},  {24, 16}};

void set_pixel(Tensor& img, std::size_t y, std::size_t x, const Rgb& c) {
  img.data[0 * kSide * kSide + y * kSide + x] = c.r;
  img.data[1 * kSide * kSide + y * kSide + x] = c.g;
  img.data[2 * kSide * kSide + y * kSide + x] = c.b;
}

Tensor render(const std::vector<double>& attrs, std::size_t num_classes,
              double noise, std::mt19937_64& rng) {
  Tensor img({3, kSide, kSide});
  const std::size_t n_nuisance = attrs.size() - num_classes;
  const double bg =
      (n_nuisance >= 1 && attrs[num_classes] > 0.5) ? 0.35 : 0.10;
  for (auto& v : img.data) v = bg;
  // Class-defining patch.
  std::size_t cls = 0;
  for (std::size_t k = 0; k < num_classes; ++k)
    if (attrs[k] > 0.5) cls = k;
  const auto [cy, cx] = kPatchCenter[cls];
  for (std::size_t y = cy - 4; y < cy + 4; ++y)
    for (std::size_t x = cx - 4; x < cx + 4; ++x)
      set_pixel(img, y, x, kPalette[cls]);
  // Nuisance markers beyond the background toggle.
  if (n_nuisance >= 2 && attrs[num_classes + 1] > 0.5)
    for (std::size_t y = 15; y <= 16; ++y)
      for (std::size_t x = 0; x < kSide; ++x)
        set_pixel(img, y, x, {0.85, 0.85, 0.85});
  if (n_nuisance >= 3 && attrs[num_classes + 2] > 0.5)
    for (std::size_t y = 0; y < kSide; ++y)
      for (std::size_t x = 15; x <= 16; ++x)
        set_pixel(img, y, x, {0.85, 0.85, 0.85});
  if (n_nuisance >= 4 && attrs[num_classes + 3] > 0.5)
    for (std::size_t y = 1; y < 5; ++y)
      for (std::size_t x = 1; x < 5; ++x) set_pixel(img, y, x, {0.7, 0.7, 0.7});
  if (noise > 0.0) {
    std::normal_distribution<double> d(0.0, noise);
    for (auto& v : img.data) v = std::clamp(v + d(rng), 0.0, 1.0);
  }
  return img;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ConfigError("synthetic: num_classes must be >= 2");
  if (num_classes > kMaxClasses)
    throw ConfigError("synthetic: at most " + std::to_string(kMaxClasses) +
                      " classes supported");
  if (num_attributes < num_classes)
    throw ConfigError(
        "synthetic: num_attributes must be >= num_classes, otherwise some "
        "class is unreachable under the class rule");
  if (num_attributes - num_classes > kMaxNuisance)
    throw ConfigError("synthetic: at most " + std::to_string(kMaxNuisance) +
                      " nuisance attributes supported");
  if (train_per_class < 1)
    throw ConfigError("synthetic: train_per_class must be >= 1");
  if (noise < 0.0) throw ConfigError("synthetic: noise must be >= 0");
}

int synthetic_class_rule(const std::vector<double>& attributes,
                         std::size_t num_classes) {
  int cls = -1;
  for (std::size_t k = 0; k < num_classes; ++k)
    if (attributes.at(k) > 0.5) {
      if (cls >= 0)
        throw InputError("class rule: more than one defining attribute set");
      cls = int(k);
    }
  if (cls < 0) throw InputError("class rule: no defining attribute set");
  return cls;
}

SyntheticBundle generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SyntheticBundle out;
  const std::string tag = "synthetic-" + std::to_string(spec.seed);
  for (Dataset* d : {&out.train, &out.val, &out.test}) {
    d->num_classes = spec.num_classes;
    d->num_attributes = spec.num_attributes;
    for (std::size_t k = 0; k < spec.num_classes; ++k)
      d->class_names.push_back("class_" + std::to_string(k));
    for (std::size_t k = 0; k < spec.num_classes; ++k)
      d->attribute_names.push_back("class_patch_" + std::to_string(k));
    for (std::size_t j = 0; j < spec.num_attributes - spec.num_classes; ++j)
      d->attribute_names.push_back("nuisance_" + std::to_string(j));
  }
  out.train.id = tag + "-train";
  out.val.id = tag + "-val";
  out.test.id = tag + "-test";

  const std::size_t n_train = spec.train_per_class;
  const std::size_t total =
      std::size_t(std::llround(double(n_train) / 0.7));
  const std::size_t n_val = std::size_t(std::llround(0.15 * double(total)));
  const std::size_t n_test = total >= n_train + n_val ? total - n_train - n_val : 0;

  std::bernoulli_distribution coin(0.5);
  std::int64_t next_id = 0;
  for (std::size_t cls = 0; cls < spec.num_classes; ++cls) {
    // Seeded split assignment for this class.
    std::vector<int> split_tag;
    split_tag.insert(split_tag.end(), n_train, 0);
    split_tag.insert(split_tag.end(), n_val, 1);
    split_tag.insert(split_tag.end(), n_test, 2);
    std::shuffle(split_tag.begin(), split_tag.end(), rng);
    for (int tag_i : split_tag) {
      AttributeSample s;
      s.attributes.assign(spec.num_attributes, 0.0);
      s.attributes[cls] = 1.0;
      for (std::size_t j = spec.num_classes; j < spec.num_attributes; ++j)
        s.attributes[j] = coin(rng) ? 1.0 : 0.0;
      s.label = int(cls);
      s.image = render(s.attributes, spec.num_classes, spec.noise, rng);
      s.id = next_id++;
      Dataset& target =
          tag_i == 0 ? out.train : (tag_i == 1 ? out.val : out.test);
      target.samples.push_back(std::move(s));
    }
  }
  return out;
}

// --------------------------------------------------------------- manifests

namespace {

std::uint32_t file_crc32(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open for checksum: " + path);
  uLong crc = crc32(0L, Z_NULL, 0);
  char buf[65536];
  while (is) {
    is.read(buf, sizeof(buf));
    crc = crc32(crc, reinterpret_cast<const Bytef*>(buf),
                uInt(is.gcount()));
  }
  return std::uint32_t(crc);
}

json parse_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("cannot open manifest: " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw LoadError("manifest " + path + " is not valid JSON: " + e.what());
  }
}

std::vector<AttributeSample> read_cifar_bin(const std::string& path,
                                            std::size_t num_classes,
                                            std::int64_t& next_id) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open: " + path);
  constexpr std::size_t kRecord = 1 + 3 * 1024;
  std::vector<AttributeSample> out;
  std::vector<unsigned char> rec(kRecord);
  while (is.read(reinterpret_cast<char*>(rec.data()), kRecord)) {
    AttributeSample s;
    s.label = int(rec[0]);
    if (std::size_t(s.label) >= num_classes)
      throw LoadError(path + ": record label " + std::to_string(s.label) +
                      " exceeds class count");
    s.image = Tensor({3, 32, 32});
    for (std::size_t i = 0; i < 3 * 1024; ++i)
      s.image.data[i] = double(rec[1 + i]) / 255.0;
    s.id = next_id++;
    out.push_back(std::move(s));
  }
  if (is.gcount() != 0)
    throw LoadError(path + ": trailing " + std::to_string(is.gcount()) +
                    " bytes do not form a full record");
  return out;
}

AttributeSample read_ppm(const std::string& path, int label,
                         std::int64_t id) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open: " + path);
  std::string magic;
  is >> magic;
  if (magic != "P6") throw LoadError(path + ": expected binary PPM (P6)");
  auto next_token = [&]() {
    std::string t;
    while (is >> t) {
      if (t[0] == '#') {
        std::string rest;
        std::getline(is, rest);
        continue;
      }
      return t;
    }
    throw LoadError(path + ": truncated PPM header");
  };
  const std::size_t w = std::stoul(next_token());
  const std::size_t h = std::stoul(next_token());
  const std::size_t maxval = std::stoul(next_token());
  if (maxval != 255) throw LoadError(path + ": only maxval 255 supported");
  is.get();  // single whitespace after header
  std::vector<unsigned char> raw(3 * w * h);
  is.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (!is) throw LoadError(path + ": truncated PPM pixel data");
  AttributeSample s;
  s.label = label;
  s.id = id;
  s.image = Tensor({3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        s.image.data[(c * h + y) * w + x] =
            double(raw[(y * w + x) * 3 + c]) / 255.0;
  return s;
}

std::map<std::string, Dataset> load_images_only(const json& m,
                                                const std::string& manifest_path) {
  const fs::path root =
      fs::path(manifest_path).parent_path() /
      fs::path(m.value("root", std::string(".")));
  if (!m.contains("classes") || !m["classes"].is_array() ||
      m["classes"].empty())
    throw LoadError("manifest missing non-empty 'classes'");
  if (!m.contains("splits") || !m["splits"].is_object() ||
      m["splits"].empty())
    throw LoadError("manifest missing non-empty 'splits'");
  const std::string format = m.value("format", std::string("ppm"));
  const auto classes = m["classes"].get<std::vector<std::string>>();

  // Collect all referenced files first so every offender is reported at once.
  std::vector<std::string> missing, bad_checksum;
  auto check_file = [&](const std::string& rel) {
    const std::string full = (root / rel).string();
    if (!fs::exists(full)) {
      missing.push_back(rel);
      return;
    }
    if (m.contains("checksums") && m["checksums"].contains(rel)) {
      const auto want = std::stoul(m["checksums"][rel].get<std::string>(),
                                   nullptr, 16);
      if (file_crc32(full) != want) bad_checksum.push_back(rel);
    }
  };
  for (const auto& [split, entries] : m["splits"].items()) {
    for (const auto& e : entries)
      check_file(format == "cifar10-bin" ? e.get<std::string>()
                                         : e["path"].get<std::string>());
  }
  if (!missing.empty() || !bad_checksum.empty()) {
    std::string msg = "dataset load failed;";
    if (!missing.empty()) {
      msg += " missing files:";
      for (const auto& f : missing) msg += " " + f;
    }
    if (!bad_checksum.empty()) {
      msg += " checksum mismatches:";
      for (const auto& f : bad_checksum) msg += " " + f;
    }
    throw LoadError(msg);
  }

  std::map<std::string, Dataset> out;
  std::int64_t next_id = 0;
  for (const auto& [split, entries] : m["splits"].items()) {
    Dataset d;
    d.id = m.value("name", std::string("dataset")) + "-" + split;
    d.num_classes = classes.size();
    d.class_names = classes;
    for (const auto& e : entries) {
      if (format == "cifar10-bin") {
        auto recs = read_cifar_bin((root / e.get<std::string>()).string(),
                                   d.num_classes, next_id);
        for (auto& r : recs) d.samples.push_back(std::move(r));
      } else if (format == "ppm") {
        const int label = e["label"].get<int>();
        if (label < 0 || std::size_t(label) >= d.num_classes)
          throw LoadError("manifest entry label out of range: " +
                          std::to_string(label));
        d.samples.push_back(read_ppm(
            (root / e["path"].get<std::string>()).string(), label, next_id++));
      } else {
        throw LoadError("unknown dataset format: " + format);
      }
    }
    out[split] = std::move(d);
  }
  return out;
}

std::vector<std::vector<double>> read_attribute_matrix(
    const std::string& path) {
  std::ifstream is(path);
  if (!is) throw LoadError("cannot open attribute file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw LoadError(path + ":" + std::to_string(lineno) +
                        ": non-numeric attribute entry '" + tok + "'");
      }
    }
    if (row.empty()) continue;  // blank line
    if (!rows.empty() && row.size() != rows.front().size())
      throw LoadError(path + ":" + std::to_string(lineno) +
                      ": row width " + std::to_string(row.size()) +
                      " differs from first row width " +
                      std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw LoadError(path + ": empty attribute matrix");
  return rows;
}

void normalize_attributes(std::vector<std::vector<double>>& rows,
                          const AttributeHandling& handling) {
  if (handling.binarize) {
    for (auto& r : rows)
      for (auto& v : r) v = v > 0.0 ? 1.0 : 0.0;
    return;
  }
  const std::size_t width = rows.front().size();
  for (std::size_t c = 0; c < width; ++c) {
    double lo = rows[0][c], hi = rows[0][c];
    for (const auto& r : rows) {
      lo = std::min(lo, r[c]);
      hi = std::max(hi, r[c]);
    }
    for (auto& r : rows) r[c] = hi > lo ? (r[c] - lo) / (hi - lo) : 0.0;
  }
}

void attach_attributes(std::map<std::string, Dataset>& splits, const json& m,
                       const std::string& attribute_file,
                       const AttributeHandling& handling) {
  auto rows = read_attribute_matrix(attribute_file);
  normalize_attributes(rows, handling);
  const std::size_t width = rows.front().size();

  std::string granularity = "per-image";
  std::vector<std::string> names;
  if (m.contains("attributes")) {
    granularity = m["attributes"].value("granularity", granularity);
    if (m["attributes"].contains("names"))
      names = m["attributes"]["names"].get<std::vector<std::string>>();
  }
  if (!names.empty() && names.size() != width)
    throw LoadError("attribute name count " + std::to_string(names.size()) +
                    " != attribute width " + std::to_string(width));

  if (granularity == "per-class") {
    for (auto& [_, d] : splits) {
      if (rows.size() != d.num_classes)
        throw LoadError("per-class attributes: " + std::to_string(rows.size()) +
                        " rows, " + std::to_string(d.num_classes) + " classes");
      d.num_attributes = width;
      d.attribute_names = names;
      for (auto& s : d.samples) s.attributes = rows[std::size_t(s.label)];
    }
  } else if (granularity == "per-image") {
    // Rows align with the concatenation of splits in manifest order.
    std::size_t total = 0;
    for (auto& [split, _] : m["splits"].items())
      total += splits.at(split).size();
    if (rows.size() != total)
      throw LoadError("per-image attributes: " + std::to_string(rows.size()) +
                      " rows but manifest lists " + std::to_string(total) +
                      " samples");
    std::size_t r = 0;
    for (auto& [split, _] : m["splits"].items()) {
      Dataset& d = splits.at(split);
      d.num_attributes = width;
      d.attribute_names = names;
      for (auto& s : d.samples) s.attributes = rows[r++];
    }
  } else {
    throw LoadError("unknown attribute granularity: " + granularity);
  }
}

}  // namespace

std::map<std::string, Dataset> load_image_dataset(
    const std::string& manifest_path) {
  const json m = parse_manifest(manifest_path);
  return load_images_only(m, manifest_path);
}

std::map<std::string, Dataset> load_attribute_dataset(
    const std::string& manifest_path, const std::string& attribute_file,
    const AttributeHandling& handling) {
  const json m = parse_manifest(manifest_path);
  auto splits = load_images_only(m, manifest_path);
  attach_attributes(splits, m, attribute_file, handling);
  return splits;
}

std::map<std::string, Dataset> load_dataset(const std::string& manifest_path,
                                            const AttributeHandling& handling) {
  const json m = parse_manifest(manifest_path);
  auto splits = load_images_only(m, manifest_path);
  if (m.contains("attributes") && m["attributes"].contains("file")) {
    const fs::path root =
        fs::path(manifest_path).parent_path() /
        fs::path(m.value("root", std::string(".")));
    attach_attributes(splits, m,
                      (root / m["attributes"]["file"].get<std::string>())
                          .string(),
                      handling);
  }
  return splits;
}

}  // namespace antehoc::data
