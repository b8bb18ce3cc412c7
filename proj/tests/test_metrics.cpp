#include <cmath>

#include <doctest.h>

#include "antehoc/errors.hpp"
#include "antehoc/metrics.hpp"

using namespace antehoc;
using namespace antehoc::metrics;

TEST_CASE("concept scaling") {
  SUBCASE("per-sample min-max") {  // [DERIVED] (1,3,5) -> (0,0.5,1)
    Tensor c{{2, 3}, {1.0, 3.0, 5.0, 2.0, 2.0, 2.0}};
    Tensor s = scale_concepts(c, ScalingScope::kPerSample);
    CHECK(s.data[0] == doctest::Approx(0.0));
    CHECK(s.data[1] == doctest::Approx(0.5));
    CHECK(s.data[2] == doctest::Approx(1.0));
    // Constant rows are degenerate and map to zeros.
    CHECK(s.data[3] == 0.0);
    CHECK(s.data[4] == 0.0);
    CHECK(s.data[5] == 0.0);
  }
  SUBCASE("per-concept columns over the dataset") {  // [DERIVED]
    Tensor c{{3, 2}, {0.0, 7.0, 5.0, 7.0, 10.0, 7.0}};
    Tensor s = scale_concepts(c, ScalingScope::kPerConceptDataset);
    CHECK(s.data[0] == doctest::Approx(0.0));
    CHECK(s.data[2] == doctest::Approx(0.5));
    CHECK(s.data[4] == doctest::Approx(1.0));
    CHECK(s.data[1] == 0.0);  // constant column
  }
  SUBCASE("positive affine invariance") {  // [DERIVED]
    Tensor a{{1, 4}, {-2.0, 0.0, 1.0, 3.0}};
    Tensor b = a;
    for (auto& v : b.data) v = 10.0 * v + 100.0;
    Tensor sa = scale_concepts(a);
    Tensor sb = scale_concepts(b);
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(sa.data[i] == doctest::Approx(sb.data[i]));
  }
  SUBCASE("shape guard") {  // [TRIVIAL]
    Tensor bad{{4}, {1, 2, 3, 4}};
    CHECK_THROWS_AS(scale_concepts(bad), InputError);
  }
}

TEST_CASE("intervention masking") {
  Tensor scaled{{1, 4}, {0.0, 0.5, 0.7, 1.0}};
  SUBCASE("entries above omega are zeroed, ties kept") {  // [DERIVED]
    Tensor out = intervene(scaled, 0.5);
    CHECK(out.data == std::vector<double>{0.0, 0.5, 0.0, 0.0});
  }
  SUBCASE("omega 1 touches nothing") {  // [TRIVIAL]
    CHECK(intervene(scaled, 1.0).data == scaled.data);
  }
  SUBCASE("omega 0 keeps only exact zeros") {  // [DERIVED]
    CHECK(intervene(scaled, 0.0).data ==
          std::vector<double>{0.0, 0.0, 0.0, 0.0});
  }
}

TEST_CASE("matrix-level protocol cores") {
  SUBCASE("faithfulness counts argmax hits") {  // [DERIVED] 2 of 3 = 66.67
    Tensor logits{{3, 2}, {2.0, 1.0, 0.0, 3.0, 5.0, 4.0}};
    CHECK(faithfulness_pct(logits, {0, 1, 1}) ==
          doctest::Approx(100.0 * 2.0 / 3.0));
    CHECK(faithfulness_pct(logits, {0, 1, 0}) == doctest::Approx(100.0));
  }

  SUBCASE("fidelity counts argmax agreement") {  // [DERIVED] 3 of 5 = 60.0
    Tensor task{{5, 2}, {1, 0, 1, 0, 0, 1, 0, 1, 1, 0}};
    Tensor surr{{5, 2}, {2, 0, 0, 2, 0, 9, 3, 1, 5, 0}};
    CHECK(fidelity_pct(task, surr) == doctest::Approx(60.0));
    CHECK(fidelity_pct(task, task) == doctest::Approx(100.0));
  }

  SUBCASE("argmax ties break toward the lower index") {  // [TRIVIAL]
    Tensor tie{{1, 3}, {4.0, 4.0, 1.0}};
    CHECK(faithfulness_pct(tie, {0}) == doctest::Approx(100.0));
    CHECK(faithfulness_pct(tie, {1}) == doctest::Approx(0.0));
  }

  SUBCASE("explanation error squashes then takes mean row L2") {
    // [DERIVED] raw 0 -> sigmoid 0.5; against (1,0): sqrt(0.25+0.25).
    Tensor concepts{{1, 2}, {0.0, 0.0}};
    Tensor attrs{{1, 2}, {1.0, 0.0}};
    CHECK(explanation_error_value(concepts, attrs) ==
          doctest::Approx(std::sqrt(0.5)));
    // Perfectly saturated correct concepts cost ~0.
    Tensor sure{{1, 2}, {50.0, -50.0}};
    CHECK(explanation_error_value(sure, attrs) == doctest::Approx(0.0));
  }

  SUBCASE("explanation error is a mean over samples") {  // [DERIVED]
    Tensor concepts{{2, 2}, {0.0, 0.0, 50.0, -50.0}};
    Tensor attrs{{2, 2}, {1.0, 0.0, 1.0, 0.0}};
    CHECK(explanation_error_value(concepts, attrs) ==
          doctest::Approx(0.5 * std::sqrt(0.5)));
  }

  SUBCASE("empty or mismatched inputs throw") {  // [TRIVIAL]
    Tensor logits{{2, 2}, {1, 0, 0, 1}};
    CHECK_THROWS_AS(faithfulness_pct(logits, {0}), InputError);
    Tensor other{{2, 3}, std::vector<double>(6, 0.0)};
    CHECK_THROWS_AS(fidelity_pct(logits, other), InputError);
    CHECK_THROWS_AS(explanation_error_value(logits, other), InputError);
  }
}

TEST_CASE("intervention accuracy protocol") {
  // Identity-style predictor: logit k is concept k, so the prediction is the
  // argmax concept and knocking out the top concept changes it.
  auto predict = [](const Tensor& c) { return c; };
  Tensor concepts{{2, 3}, {1.0, 5.0, 3.0, 9.0, 2.0, 4.0}};
  std::vector<int> labels = {1, 0};

  SUBCASE("omega 1 reduces exactly to faithfulness") {  // [DERIVED]
    CHECK(intervention_accuracy_pct(concepts, labels, 1.0, predict) ==
          doctest::Approx(faithfulness_pct(concepts, labels)));
    CHECK(intervention_accuracy_pct(concepts, labels, 1.0, predict) ==
          doctest::Approx(100.0));
  }

  SUBCASE("omega 0.5 knocks out the dominant concepts") {  // [DERIVED]
    // Scaled rows: (0,1,.5) and (1,0,2/7); omega .5 zeroes the raw maxima
    // (5 and 9) leaving argmaxes 2 and 2 -> neither label matches.
    CHECK(intervention_accuracy_pct(concepts, labels, 0.5, predict) ==
          doctest::Approx(0.0));
  }

  SUBCASE("mask comes from the scaled values, zeroing hits the raw input") {
    // [DERIVED] shifting all concepts by +100 must not change the mask.
    Tensor shifted = concepts;
    for (auto& v : shifted.data) v += 100.0;
    Tensor captured;
    auto capture = [&](const Tensor& c) {
      captured = c;
      return c;
    };
    intervention_accuracy_pct(shifted, labels, 0.5, capture);
    // The knocked-out slots are zero in the raw (shifted) space...
    CHECK(captured.data[1] == 0.0);
    CHECK(captured.data[3] == 0.0);
    // ...and the surviving slots keep their raw values.
    CHECK(captured.data[0] == doctest::Approx(101.0));
    CHECK(captured.data[2] == doctest::Approx(103.0));
  }
}
