#include <cmath>
#include <random>

#include <doctest.h>

#include "antehoc/nn.hpp"

using namespace antehoc;

namespace {

Tensor random_tensor(const std::vector<std::size_t>& shape, std::mt19937_64& rng) {
  Tensor t(shape);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& v : t.data) v = dist(rng);
  return t;
}

double weighted_sum(const Tensor& y, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * w.data[i];
  return s;
}

// Checks backward() of a layer against central finite differences of the
// scalar L = <w, forward(x)>, for both the input gradient and every
// parameter gradient. Double precision makes 1e-6 relative error realistic;
// we assert 1e-4 to leave headroom.
void check_gradients(nn::Module& layer, Tensor x, double tol = 1e-4) {
  std::mt19937_64 rng(123);
  Tensor y = layer.forward(x);
  Tensor w = random_tensor(y.shape, rng);

  layer.zero_grad();
  Tensor grad_in = layer.backward(w);
  REQUIRE(grad_in.shape == x.shape);

  const double eps = 1e-6;
  auto fd = [&](double* slot) {
    const double saved = *slot;
    *slot = saved + eps;
    const double up = weighted_sum(layer.forward(x), w);
    *slot = saved - eps;
    const double down = weighted_sum(layer.forward(x), w);
    *slot = saved;
    layer.forward(x);  // restore caches for any later backward
    return (up - down) / (2.0 * eps);
  };
  auto close = [&](double got, double want) {
    const double scale = std::max({1.0, std::fabs(got), std::fabs(want)});
    return std::fabs(got - want) / scale < tol;
  };

  for (std::size_t i = 0; i < x.data.size(); ++i) {
    CHECK_MESSAGE(close(grad_in.data[i], fd(&x.data[i])),
                  "input grad mismatch at " << i);
  }
  std::vector<nn::Parameter*> params;
  layer.collect_parameters(params);
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      CHECK_MESSAGE(close(p->grad[i], fd(&p->value[i])),
                    p->name << " grad mismatch at " << i);
    }
  }
}

}  // namespace

TEST_CASE("dense gradients match finite differences") {  // [DERIVED]
  std::mt19937_64 rng(7);
  nn::Dense layer(5, 3, rng);
  check_gradients(layer, random_tensor({2, 5}, rng));
}

TEST_CASE("conv2d gradients match finite differences") {  // [DERIVED]
  std::mt19937_64 rng(11);
  SUBCASE("stride 1, pad 1") {
    nn::Conv2d layer(2, 3, 3, 1, 1, rng);
    check_gradients(layer, random_tensor({2, 2, 4, 4}, rng));
  }
  SUBCASE("stride 2, pad 0") {
    nn::Conv2d layer(2, 2, 2, 2, 0, rng);
    check_gradients(layer, random_tensor({1, 2, 4, 4}, rng));
  }
}

TEST_CASE("conv_transpose2d gradients match finite differences") {  // [DERIVED]
  std::mt19937_64 rng(13);
  nn::ConvTranspose2d layer(3, 2, 4, 2, 1, rng);
  Tensor x = random_tensor({2, 3, 3, 3}, rng);
  Tensor y = layer.forward(x);
  CHECK(y.shape == std::vector<std::size_t>{2, 2, 6, 6});  // doubles H, W
  check_gradients(layer, x);
}

TEST_CASE("residual block gradients match finite differences") {  // [DERIVED]
  std::mt19937_64 rng(17);
  SUBCASE("identity skip") {
    nn::ResidualBlock block(3, 3, 1, rng);
    check_gradients(block, random_tensor({1, 3, 4, 4}, rng));
  }
  SUBCASE("projected skip (stride 2, channel change)") {
    nn::ResidualBlock block(2, 4, 2, rng);
    check_gradients(block, random_tensor({1, 2, 4, 4}, rng));
  }
}

TEST_CASE("elementwise and shape layers") {
  std::mt19937_64 rng(19);

  SUBCASE("relu") {  // [TRIVIAL]
    nn::ReLU relu;
    Tensor x{{1, 4}, {-1.0, 0.0, 2.0, -0.5}};
    Tensor y = relu.forward(x);
    CHECK(y.data == std::vector<double>{0.0, 0.0, 2.0, 0.0});
    Tensor g = relu.backward(Tensor{{1, 4}, {1.0, 1.0, 1.0, 1.0}});
    CHECK(g.data == std::vector<double>{0.0, 0.0, 1.0, 0.0});
  }

  SUBCASE("sigmoid value and gradient") {  // [DERIVED] sigmoid(0)=0.5, d=0.25
    nn::Sigmoid sig;
    Tensor y = sig.forward(Tensor{{1, 1}, {0.0}});
    CHECK(y.data[0] == doctest::Approx(0.5));
    Tensor g = sig.backward(Tensor{{1, 1}, {1.0}});
    CHECK(g.data[0] == doctest::Approx(0.25));
  }

  SUBCASE("global average pool") {  // [DERIVED]
    nn::GlobalAvgPool pool;
    Tensor x{{1, 2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40}};
    Tensor y = pool.forward(x);
    CHECK(y.shape == std::vector<std::size_t>{1, 2});
    CHECK(y.data[0] == doctest::Approx(2.5));
    CHECK(y.data[1] == doctest::Approx(25.0));
    Tensor g = pool.backward(Tensor{{1, 2}, {4.0, 8.0}});
    CHECK(g.data[0] == doctest::Approx(1.0));  // 4 / (2*2)
    CHECK(g.data[4] == doctest::Approx(2.0));
  }

  SUBCASE("flatten and reshape round-trip") {  // [TRIVIAL]
    nn::Flatten flat;
    nn::Reshape shape(2, 3, 2);
    Tensor x = random_tensor({2, 2, 3, 2}, rng);
    Tensor f = flat.forward(x);
    CHECK(f.shape == std::vector<std::size_t>{2, 12});
    Tensor r = shape.forward(f);
    CHECK(r.shape == x.shape);
    CHECK(r.data == x.data);
  }
}

TEST_CASE("sequential composes forward and backward") {  // [DERIVED]
  std::mt19937_64 rng(23);
  nn::Sequential seq;
  seq.add(std::make_unique<nn::Dense>(4, 6, rng));
  seq.add(std::make_unique<nn::ReLU>());
  seq.add(std::make_unique<nn::Dense>(6, 2, rng));
  check_gradients(seq, random_tensor({3, 4}, rng));
}

TEST_CASE("parameter counts") {  // [DERIVED] out*in + out
  std::mt19937_64 rng(29);
  nn::Dense d(512, 85, rng);
  CHECK(d.parameter_count() == 512 * 85 + 85);
  nn::Conv2d c(3, 8, 3, 1, 1, rng);
  CHECK(c.parameter_count() == 8 * 3 * 3 * 3 + 8);
}
