#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "antehoc/tensor.hpp"

namespace antehoc::nn {

struct Parameter {
  std::string name;
  std::vector<double> value;
  std::vector<double> grad;

  void zero_grad() { grad.assign(value.size(), 0.0); }
};

// A layer with explicit backward. forward() caches whatever backward() needs;
// backward() accumulates parameter gradients and returns the gradient with
// respect to the layer input. Layers are single-writer during training.
class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor forward(const Tensor& x) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect_parameters(std::vector<Parameter*>& out) {}

  void zero_grad() {
    std::vector<Parameter*> ps;
    collect_parameters(ps);
    for (auto* p : ps) p->zero_grad();
  }
  std::size_t parameter_count() {
    std::vector<Parameter*> ps;
    collect_parameters(ps);
    std::size_t n = 0;
    for (auto* p : ps) n += p->value.size();
    return n;
  }
};

// Affine map (B, in) -> (B, out).
class Dense : public Module {
 public:
  Dense(std::size_t in, std::size_t out, std::mt19937_64& rng,
        const std::string& name = "dense");

  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  std::size_t in_, out_;
  Parameter weight_;  // row-major (out, in)
  Parameter bias_;    // (out)
  Tensor input_;
};

// 2-D convolution over (B, C, H, W), im2col + GEMM.
class Conv2d : public Module {
 public:
  Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
         std::size_t stride, std::size_t pad, std::mt19937_64& rng,
         const std::string& name = "conv");

  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;

 private:
  std::size_t in_ch_, out_ch_, kernel_, stride_, pad_;
  Parameter weight_;  // (out_ch, in_ch*k*k)
  Parameter bias_;    // (out_ch)
  Tensor input_;
};

// Transposed 2-D convolution (learned upsampling). With kernel 4, stride 2,
// pad 1 it doubles the spatial size exactly.
class ConvTranspose2d : public Module {
 public:
  ConvTranspose2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                  std::size_t stride, std::size_t pad, std::mt19937_64& rng,
                  const std::string& name = "deconv");

  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;

 private:
  std::size_t in_ch_, out_ch_, kernel_, stride_, pad_;
  Parameter weight_;  // (in_ch, out_ch*k*k)
  Parameter bias_;    // (out_ch)
  Tensor input_;
};

class ReLU : public Module {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor input_;
};

class Sigmoid : public Module {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor output_;
};

// (B, C, H, W) -> (B, C) spatial mean.
class GlobalAvgPool : public Module {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::vector<std::size_t> in_shape_;
};

// (B, C, H, W) -> (B, C*H*W) and back.
class Flatten : public Module {
 public:
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::vector<std::size_t> in_shape_;
};

// (B, N) -> (B, C, H, W) with N == C*H*W.
class Reshape : public Module {
 public:
  Reshape(std::size_t ch, std::size_t h, std::size_t w) : ch_(ch), h_(h), w_(w) {}
  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  std::size_t ch_, h_, w_;
  std::vector<std::size_t> in_shape_;
};

class Sequential : public Module {
 public:
  Sequential() = default;
  void add(std::unique_ptr<Module> m) { layers_.push_back(std::move(m)); }

  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;

  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Module>> layers_;
};

// Plain residual block: y = relu(conv(relu(conv(x))) + skip(x)).
// When stride > 1 or channel counts differ, skip is a 1x1 strided projection.
class ResidualBlock : public Module {
 public:
  ResidualBlock(std::size_t in_ch, std::size_t out_ch, std::size_t stride,
                std::mt19937_64& rng);

  Tensor forward(const Tensor& x) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;

 private:
  Conv2d conv1_, conv2_;
  ReLU relu1_;
  std::unique_ptr<Conv2d> projection_;  // null when identity skip
  Tensor pre_activation_;               // sum before the final relu
};

}  // namespace antehoc::nn
