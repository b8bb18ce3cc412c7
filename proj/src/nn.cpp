#include "antehoc/nn.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "antehoc/errors.hpp"

namespace antehoc::nn {

using MatrixRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

namespace {

void init_kaiming(std::vector<double>& w, std::size_t fan_in,
                  std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / double(fan_in)));
  for (auto& v : w) v = dist(rng);
}

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t stride,
                     std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// Unrolls one image (C,H,W) into (C*k*k, Ho*Wo) columns.
void im2col(const double* img, std::size_t ch, std::size_t h, std::size_t w,
            std::size_t k, std::size_t stride, std::size_t pad, double* cols) {
  const std::size_t ho = conv_out(h, k, stride, pad);
  const std::size_t wo = conv_out(w, k, stride, pad);
  const std::size_t area = ho * wo;
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        double* row = cols + ((c * k + ki) * k + kj) * area;
        for (std::size_t oi = 0; oi < ho; ++oi) {
          const std::ptrdiff_t ii =
              std::ptrdiff_t(oi * stride + ki) - std::ptrdiff_t(pad);
          for (std::size_t oj = 0; oj < wo; ++oj) {
            const std::ptrdiff_t jj =
                std::ptrdiff_t(oj * stride + kj) - std::ptrdiff_t(pad);
            double v = 0.0;
            if (ii >= 0 && ii < std::ptrdiff_t(h) && jj >= 0 &&
                jj < std::ptrdiff_t(w))
              v = img[(c * h + std::size_t(ii)) * w + std::size_t(jj)];
            row[oi * wo + oj] = v;
          }
        }
      }
    }
  }
}

// Scatter-add of columns (C*k*k, Ho*Wo) back into an image (C,H,W).
void col2im(const double* cols, std::size_t ch, std::size_t h, std::size_t w,
            std::size_t k, std::size_t stride, std::size_t pad, double* img) {
  const std::size_t ho = conv_out(h, k, stride, pad);
  const std::size_t wo = conv_out(w, k, stride, pad);
  const std::size_t area = ho * wo;
  for (std::size_t c = 0; c < ch; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const double* row = cols + ((c * k + ki) * k + kj) * area;
        for (std::size_t oi = 0; oi < ho; ++oi) {
          const std::ptrdiff_t ii =
              std::ptrdiff_t(oi * stride + ki) - std::ptrdiff_t(pad);
          if (ii < 0 || ii >= std::ptrdiff_t(h)) continue;
          for (std::size_t oj = 0; oj < wo; ++oj) {
            const std::ptrdiff_t jj =
                std::ptrdiff_t(oj * stride + kj) - std::ptrdiff_t(pad);
            if (jj < 0 || jj >= std::ptrdiff_t(w)) continue;
            img[(c * h + std::size_t(ii)) * w + std::size_t(jj)] +=
                row[oi * wo + oj];
          }
        }
      }
    }
  }
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank)
    throw InputError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + " input, got shape " +
                     x.shape_str());
}

}  // namespace

// ---------------------------------------------------------------- Dense

Dense::Dense(std::size_t in, std::size_t out, std::mt19937_64& rng,
             const std::string& name)
    : in_(in), out_(out) {
  weight_.name = name + ".weight";
  weight_.value.resize(out * in);
  init_kaiming(weight_.value, in, rng);
  weight_.zero_grad();
  bias_.name = name + ".bias";
  bias_.value.assign(out, 0.0);
  bias_.zero_grad();
}

Tensor Dense::forward(const Tensor& x) {
  require_rank(x, 2, "Dense");
  if (x.dim(1) != in_)
    throw InputError("Dense: input width " + std::to_string(x.dim(1)) +
                     " != " + std::to_string(in_));
  input_ = x;
  const std::size_t b = x.dim(0);
  Tensor y({b, out_});
  ConstMapRM xm(x.data.data(), b, in_);
  ConstMapRM wm(weight_.value.data(), out_, in_);
  MapRM ym(y.data.data(), b, out_);
  ym.noalias() = xm * wm.transpose();
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < out_; ++j) y.data[i * out_ + j] += bias_.value[j];
  return y;
}

Tensor Dense::backward(const Tensor& grad_out) {
  const std::size_t b = input_.dim(0);
  ConstMapRM gm(grad_out.data.data(), b, out_);
  ConstMapRM xm(input_.data.data(), b, in_);
  ConstMapRM wm(weight_.value.data(), out_, in_);
  MapRM gw(weight_.grad.data(), out_, in_);
  gw.noalias() += gm.transpose() * xm;
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < out_; ++j)
      bias_.grad[j] += grad_out.data[i * out_ + j];
  Tensor gx({b, in_});
  MapRM gxm(gx.data.data(), b, in_);
  gxm.noalias() = gm * wm;
  return gx;
}

void Dense::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
               std::size_t stride, std::size_t pad, std::mt19937_64& rng,
               const std::string& name)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride),
      pad_(pad) {
  weight_.name = name + ".weight";
  weight_.value.resize(out_ch * in_ch * kernel * kernel);
  init_kaiming(weight_.value, in_ch * kernel * kernel, rng);
  weight_.zero_grad();
  bias_.name = name + ".bias";
  bias_.value.assign(out_ch, 0.0);
  bias_.zero_grad();
}

Tensor Conv2d::forward(const Tensor& x) {
  require_rank(x, 4, "Conv2d");
  if (x.dim(1) != in_ch_)
    throw InputError("Conv2d: channel mismatch, got " + x.shape_str());
  input_ = x;
  const std::size_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = conv_out(h, kernel_, stride_, pad_);
  const std::size_t wo = conv_out(w, kernel_, stride_, pad_);
  const std::size_t patch = in_ch_ * kernel_ * kernel_;
  Tensor y({b, out_ch_, ho, wo});
  std::vector<double> cols(patch * ho * wo);
  ConstMapRM wm(weight_.value.data(), out_ch_, patch);
  for (std::size_t n = 0; n < b; ++n) {
    im2col(x.data.data() + n * in_ch_ * h * w, in_ch_, h, w, kernel_, stride_,
           pad_, cols.data());
    ConstMapRM cm(cols.data(), patch, ho * wo);
    MapRM ym(y.data.data() + n * out_ch_ * ho * wo, out_ch_, ho * wo);
    ym.noalias() = wm * cm;
    for (std::size_t c = 0; c < out_ch_; ++c)
      ym.row(c).array() += bias_.value[c];
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  const std::size_t b = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
  const std::size_t ho = grad_out.dim(2), wo = grad_out.dim(3);
  const std::size_t patch = in_ch_ * kernel_ * kernel_;
  Tensor gx(input_.shape);
  std::vector<double> cols(patch * ho * wo);
  std::vector<double> dcols(patch * ho * wo);
  ConstMapRM wm(weight_.value.data(), out_ch_, patch);
  MapRM gw(weight_.grad.data(), out_ch_, patch);
  for (std::size_t n = 0; n < b; ++n) {
    ConstMapRM gm(grad_out.data.data() + n * out_ch_ * ho * wo, out_ch_,
                  ho * wo);
    im2col(input_.data.data() + n * in_ch_ * h * w, in_ch_, h, w, kernel_,
           stride_, pad_, cols.data());
    ConstMapRM cm(cols.data(), patch, ho * wo);
    gw.noalias() += gm * cm.transpose();
    for (std::size_t c = 0; c < out_ch_; ++c) bias_.grad[c] += gm.row(c).sum();
    MapRM dcm(dcols.data(), patch, ho * wo);
    dcm.noalias() = wm.transpose() * gm;
    col2im(dcols.data(), in_ch_, h, w, kernel_, stride_, pad_,
           gx.data.data() + n * in_ch_ * h * w);
  }
  return gx;
}

void Conv2d::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(std::size_t in_ch, std::size_t out_ch,
                                 std::size_t kernel, std::size_t stride,
                                 std::size_t pad, std::mt19937_64& rng,
                                 const std::string& name)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride),
      pad_(pad) {
  weight_.name = name + ".weight";
  weight_.value.resize(in_ch * out_ch * kernel * kernel);
  init_kaiming(weight_.value, in_ch * kernel * kernel, rng);
  weight_.zero_grad();
  bias_.name = name + ".bias";
  bias_.value.assign(out_ch, 0.0);
  bias_.zero_grad();
}

// Forward is the data-gradient of a stride-s convolution mapping the output
// back to the input, so the output size is (Hi-1)*s - 2p + k.
Tensor ConvTranspose2d::forward(const Tensor& x) {
  require_rank(x, 4, "ConvTranspose2d");
  if (x.dim(1) != in_ch_)
    throw InputError("ConvTranspose2d: channel mismatch, got " + x.shape_str());
  input_ = x;
  const std::size_t b = x.dim(0), hi = x.dim(2), wi = x.dim(3);
  const std::size_t ho = (hi - 1) * stride_ + kernel_ - 2 * pad_;
  const std::size_t wo = (wi - 1) * stride_ + kernel_ - 2 * pad_;
  const std::size_t patch = out_ch_ * kernel_ * kernel_;
  Tensor y({b, out_ch_, ho, wo});
  std::vector<double> cols(patch * hi * wi);
  ConstMapRM wm(weight_.value.data(), in_ch_, patch);
  for (std::size_t n = 0; n < b; ++n) {
    ConstMapRM xm(x.data.data() + n * in_ch_ * hi * wi, in_ch_, hi * wi);
    MapRM cm(cols.data(), patch, hi * wi);
    cm.noalias() = wm.transpose() * xm;
    double* out = y.data.data() + n * out_ch_ * ho * wo;
    col2im(cols.data(), out_ch_, ho, wo, kernel_, stride_, pad_, out);
    for (std::size_t c = 0; c < out_ch_; ++c)
      for (std::size_t i = 0; i < ho * wo; ++i)
        out[c * ho * wo + i] += bias_.value[c];
  }
  return y;
}

Tensor ConvTranspose2d::backward(const Tensor& grad_out) {
  const std::size_t b = input_.dim(0), hi = input_.dim(2), wi = input_.dim(3);
  const std::size_t ho = grad_out.dim(2), wo = grad_out.dim(3);
  const std::size_t patch = out_ch_ * kernel_ * kernel_;
  Tensor gx(input_.shape);
  std::vector<double> gcols(patch * hi * wi);
  ConstMapRM wm(weight_.value.data(), in_ch_, patch);
  MapRM gw(weight_.grad.data(), in_ch_, patch);
  for (std::size_t n = 0; n < b; ++n) {
    const double* gy = grad_out.data.data() + n * out_ch_ * ho * wo;
    im2col(gy, out_ch_, ho, wo, kernel_, stride_, pad_, gcols.data());
    ConstMapRM gcm(gcols.data(), patch, hi * wi);
    ConstMapRM xm(input_.data.data() + n * in_ch_ * hi * wi, in_ch_, hi * wi);
    gw.noalias() += xm * gcm.transpose();
    for (std::size_t c = 0; c < out_ch_; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < ho * wo; ++i) s += gy[c * ho * wo + i];
      bias_.grad[c] += s;
    }
    MapRM gxm(gx.data.data() + n * in_ch_ * hi * wi, in_ch_, hi * wi);
    gxm.noalias() = wm * gcm;
  }
  return gx;
}

void ConvTranspose2d::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ------------------------------------------------------- elementwise & misc

Tensor ReLU::forward(const Tensor& x) {
  input_ = x;
  Tensor y = x;
  for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor ReLU::backward(const Tensor& grad_out) {
  Tensor gx = grad_out;
  for (std::size_t i = 0; i < gx.numel(); ++i)
    if (input_.data[i] <= 0.0) gx.data[i] = 0.0;
  return gx;
}

Tensor Sigmoid::forward(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.data) v = 1.0 / (1.0 + std::exp(-v));
  output_ = y;
  return y;
}

Tensor Sigmoid::backward(const Tensor& grad_out) {
  Tensor gx = grad_out;
  for (std::size_t i = 0; i < gx.numel(); ++i) {
    const double s = output_.data[i];
    gx.data[i] *= s * (1.0 - s);
  }
  return gx;
}

Tensor GlobalAvgPool::forward(const Tensor& x) {
  require_rank(x, 4, "GlobalAvgPool");
  in_shape_ = x.shape;
  const std::size_t b = x.dim(0), c = x.dim(1), area = x.dim(2) * x.dim(3);
  Tensor y({b, c});
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      const double* p = x.data.data() + (n * c + ch) * area;
      for (std::size_t i = 0; i < area; ++i) s += p[i];
      y.data[n * c + ch] = s / double(area);
    }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
  Tensor gx(in_shape_);
  const std::size_t b = in_shape_[0], c = in_shape_[1],
                    area = in_shape_[2] * in_shape_[3];
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double g = grad_out.data[n * c + ch] / double(area);
      double* p = gx.data.data() + (n * c + ch) * area;
      for (std::size_t i = 0; i < area; ++i) p[i] = g;
    }
  return gx;
}

Tensor Flatten::forward(const Tensor& x) {
  in_shape_ = x.shape;
  std::size_t rest = x.numel() / x.dim(0);
  return Tensor({x.dim(0), rest}, x.data);
}

Tensor Flatten::backward(const Tensor& grad_out) {
  return Tensor(in_shape_, grad_out.data);
}

Tensor Reshape::forward(const Tensor& x) {
  require_rank(x, 2, "Reshape");
  if (x.dim(1) != ch_ * h_ * w_)
    throw InputError("Reshape: width mismatch, got " + x.shape_str());
  in_shape_ = x.shape;
  return Tensor({x.dim(0), ch_, h_, w_}, x.data);
}

Tensor Reshape::backward(const Tensor& grad_out) {
  return Tensor(in_shape_, grad_out.data);
}

Tensor Sequential::forward(const Tensor& x) {
  Tensor t = x;
  for (auto& l : layers_) t = l->forward(t);
  return t;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
    g = (*it)->backward(g);
  return g;
}

void Sequential::collect_parameters(std::vector<Parameter*>& out) {
  for (auto& l : layers_) l->collect_parameters(out);
}

// --------------------------------------------------------- ResidualBlock

ResidualBlock::ResidualBlock(std::size_t in_ch, std::size_t out_ch,
                             std::size_t stride, std::mt19937_64& rng)
    : conv1_(in_ch, out_ch, 3, stride, 1, rng, "res.conv1"),
      conv2_(out_ch, out_ch, 3, 1, 1, rng, "res.conv2") {
  if (stride != 1 || in_ch != out_ch)
    projection_ = std::make_unique<Conv2d>(in_ch, out_ch, 1, stride, 0, rng,
                                           "res.proj");
}

Tensor ResidualBlock::forward(const Tensor& x) {
  Tensor main = conv2_.forward(relu1_.forward(conv1_.forward(x)));
  Tensor skip = projection_ ? projection_->forward(x) : x;
  pre_activation_ = main;
  for (std::size_t i = 0; i < pre_activation_.numel(); ++i)
    pre_activation_.data[i] += skip.data[i];
  Tensor y = pre_activation_;
  for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor ResidualBlock::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.numel(); ++i)
    if (pre_activation_.data[i] <= 0.0) g.data[i] = 0.0;
  Tensor gx = conv1_.backward(relu1_.backward(conv2_.backward(g)));
  Tensor gskip = projection_ ? projection_->backward(g) : g;
  for (std::size_t i = 0; i < gx.numel(); ++i) gx.data[i] += gskip.data[i];
  return gx;
}

void ResidualBlock::collect_parameters(std::vector<Parameter*>& out) {
  conv1_.collect_parameters(out);
  conv2_.collect_parameters(out);
  if (projection_) projection_->collect_parameters(out);
}

}  // namespace antehoc::nn
