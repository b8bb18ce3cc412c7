#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "antehoc/errors.hpp"
#include "antehoc/runner.hpp"

using namespace antehoc;
using namespace antehoc::runner;
namespace fs = std::filesystem;

namespace {

const char* kMinimalConfig = R"({
  "model": {"num_classes": 3, "num_concepts": 5, "backbone": "tinyconv-8",
            "image_shape": [3, 32, 32], "use_decoder": false},
  "dataset": {"synthetic": {"num_classes": 3, "num_attributes": 5,
                            "train_per_class": 4}}
})";

fs::path write_config(const std::string& name, const std::string& text) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream os(p);
  os << text;
  return p;
}

}  // namespace

TEST_CASE("fnv1a hashing") {  // [DERIVED] reference values of 64-bit FNV-1a
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("experiment config parsing") {
  SUBCASE("defaults fill everything but model and dataset") {  // [TRIVIAL]
    auto c = ExperimentConfig::from_json_text(kMinimalConfig);
    CHECK(c.model.num_classes == 3);
    CHECK(c.model.num_concepts == 5);
    CHECK(c.training.epochs == 20);
    CHECK(c.training.batch_size == 128);
    CHECK(c.omegas == std::vector<double>{0.5});
    CHECK(c.grid_k == 5);
    CHECK(c.output_dir == "out");
  }

  SUBCASE("missing required model fields are named") {  // [TRIVIAL]
    CHECK_THROWS_WITH_AS(
        ExperimentConfig::from_json_text(
            R"({"model": {"num_classes": 3}, "dataset": {"synthetic": {}}})"),
        doctest::Contains("model.num_concepts"), ConfigError);
    CHECK_THROWS_WITH_AS(
        ExperimentConfig::from_json_text(
            R"({"model": {"num_concepts": 3}, "dataset": {"synthetic": {}}})"),
        doctest::Contains("model.num_classes"), ConfigError);
    CHECK_THROWS_WITH_AS(
        ExperimentConfig::from_json_text(R"({"dataset": {}})"),
        doctest::Contains("'model'"), ConfigError);
  }

  SUBCASE("selector and invalid-model errors") {  // [TRIVIAL]
    CHECK_THROWS_AS(ExperimentConfig::from_json_text(
                        R"({"model": {"num_classes": 3, "num_concepts": 5},
                            "dataset": {}})"),
                    ConfigError);
    CHECK_THROWS_WITH_AS(
        ExperimentConfig::from_json_text(
            R"({"model": {"num_classes": 1, "num_concepts": 5,
                          "backbone": "tinyconv-8"},
                "dataset": {"synthetic": {}}})"),
        doctest::Contains("num_classes"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::from_json_text("not json"), ConfigError);
  }

  SUBCASE("round-trip through canonical json is stable") {  // [TRIVIAL]
    auto c = ExperimentConfig::from_json_text(kMinimalConfig);
    auto again = ExperimentConfig::from_json_text(c.to_json());
    CHECK(again.to_json() == c.to_json());
    // Run ids hash the resolved form, so equal configs share a run id.
    CHECK(fnv1a_hex(again.to_json()) == fnv1a_hex(c.to_json()));
  }
}

TEST_CASE("config file loading with overrides") {
  auto path = write_config("antehoc_cfg.json", kMinimalConfig);

  SUBCASE("dotted overrides reach nested fields") {  // [TRIVIAL]
    auto c = ExperimentConfig::load(
        path.string(), {"model.seed=9", "training.epochs=2",
                        "model.supervision_mode=supervised",
                        "model.loss_weights.gamma_concept=0.5"});
    CHECK(c.model.seed == 9);
    CHECK(c.training.epochs == 2);
    CHECK(c.model.supervision_mode == SupervisionMode::kSupervised);
    CHECK(c.model.loss_weights.gamma_concept == doctest::Approx(0.5));
  }
  SUBCASE("overrides change the run id") {  // [TRIVIAL]
    auto a = ExperimentConfig::load(path.string());
    auto b = ExperimentConfig::load(path.string(), {"model.seed=9"});
    CHECK(fnv1a_hex(a.to_json()) != fnv1a_hex(b.to_json()));
  }
  SUBCASE("bad overrides and missing files") {  // [TRIVIAL]
    CHECK_THROWS_AS(ExperimentConfig::load(path.string(), {"no_equals_sign"}),
                    ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::load("/no/such/config.json"),
                    ConfigError);
  }
  fs::remove(path);
}

TEST_CASE("dataset resolution") {
  SUBCASE("synthetic selector produces three splits") {  // [TRIVIAL]
    DatasetSelector sel;
    data::SyntheticSpec spec;
    spec.num_classes = 2;
    spec.num_attributes = 2;
    spec.train_per_class = 4;
    sel.synthetic = spec;
    auto splits = resolve_dataset(sel);
    CHECK(splits.train.size() == 8);
    CHECK(splits.val.size() > 0);
    CHECK(splits.test.size() > 0);
  }
  SUBCASE("manifest without any eval split is rejected") {  // [TRIVIAL]
    DatasetSelector sel;
    sel.manifest_path = "/no/such/manifest.json";
    CHECK_THROWS_AS(resolve_dataset(sel), LoadError);
  }
}

TEST_CASE("train command writes the run artifacts") {  // [TRIVIAL]
  const fs::path out = fs::temp_directory_path() / "antehoc_run";
  fs::remove_all(out);
  auto c = ExperimentConfig::from_json_text(kMinimalConfig);
  c.training.epochs = 1;
  c.training.batch_size = 4;
  c.output_dir = out.string();

  auto r = cmd_train(c);
  CHECK(fs::exists(r.checkpoint_path));
  CHECK(fs::exists(r.history_path));
  CHECK(fs::exists(r.config_snapshot_path));
  CHECK(r.history.size() == 1);
  CHECK(r.run_id == fnv1a_hex(c.to_json()));

  // Evaluating the checkpoint appends summary rows with the expected header.
  auto splits = resolve_dataset(c.dataset);
  auto reports = cmd_evaluate(r.checkpoint_path, splits.test,
                              {"accuracy", "faithfulness"}, {0.5},
                              out.string());
  CHECK(reports.size() == 2);
  std::ifstream is(out / "reports" / "summary.csv");
  std::string header;
  std::getline(is, header);
  CHECK(header == "run_id,dataset,metric,omega,value,n");

  CHECK_THROWS_AS(cmd_evaluate(r.checkpoint_path, splits.test, {"nonsense"},
                               {0.5}, out.string()),
                  ConfigError);
  fs::remove_all(out);
}
