#include "darkhash/layers.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace darkhash {

namespace {

using ConstMatMap = Eigen::Map<const Mat>;
using MatMap = Eigen::Map<Mat>;

void uniform_fill(std::span<double> values, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : values) v = dist(rng);
}

}  // namespace

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::Relu: return "relu";
    case LayerKind::MaxPool2: return "maxpool2";
    case LayerKind::Dense: return "dense";
    case LayerKind::Tanh: return "tanh";
  }
  return "unknown";
}

// ---- Conv2d ---------------------------------------------------------------

Conv2d::Conv2d(Shape input, int out_channels) : Layer(input), out_channels_(out_channels) {
  params_.assign(static_cast<std::size_t>(out_channels) * filter_size() + static_cast<std::size_t>(out_channels),
                 0.0);
}

void Conv2d::init(Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(filter_size()));
  uniform_fill(std::span<double>(params_).first(static_cast<std::size_t>(out_channels_) * filter_size()), bound,
               rng);
}

Mat Conv2d::im2col(const double* sample) const {
  const int c_in = input_.channels, h = input_.height, w = input_.width;
  Mat cols = Mat::Zero(c_in * 9, h * w);
  for (int c = 0; c < c_in; ++c) {
    const double* plane = sample + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = cols.row((c * 3 + ky) * 3 + kx).data();
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            if (sx >= 0 && sx < w) row[y * w + x] = plane[sy * w + sx];
          }
        }
      }
    }
  }
  return cols;
}

void Conv2d::col2im(const Mat& cols, double* sample) const {
  const int c_in = input_.channels, h = input_.height, w = input_.width;
  for (int c = 0; c < c_in; ++c) {
    double* plane = sample + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = cols.row((c * 3 + ky) * 3 + kx).data();
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - 1;
            if (sx >= 0 && sx < w) plane[sy * w + sx] += row[y * w + x];
          }
        }
      }
    }
  }
}

void Conv2d::forward(const Mat& in, Mat& out, LayerCache&) const {
  const Eigen::Index hw = input_.height * input_.width;
  const auto k = static_cast<Eigen::Index>(filter_size());
  ConstMatMap weights(params_.data(), out_channels_, k);
  Eigen::Map<const Vec> bias(params_.data() + out_channels_ * k, out_channels_);
  out.resize(in.rows(), out_channels_ * hw);
  for (Eigen::Index n = 0; n < in.rows(); ++n) {
    const Mat cols = im2col(in.row(n).data());
    MatMap dst(out.row(n).data(), out_channels_, hw);
    dst.noalias() = weights * cols;
    dst.colwise() += bias;
  }
}

void Conv2d::backward(const Mat& in, const Mat&, const Mat& grad_out, const LayerCache&, Mat* grad_in,
                      std::span<double> grad_params) const {
  const Eigen::Index hw = input_.height * input_.width;
  const auto k = static_cast<Eigen::Index>(filter_size());
  ConstMatMap weights(params_.data(), out_channels_, k);
  if (grad_in) grad_in->setZero(in.rows(), in.cols());
  for (Eigen::Index n = 0; n < in.rows(); ++n) {
    ConstMatMap g(grad_out.row(n).data(), out_channels_, hw);
    if (!grad_params.empty()) {
      const Mat cols = im2col(in.row(n).data());
      MatMap dw(grad_params.data(), out_channels_, k);
      Eigen::Map<Vec> db(grad_params.data() + out_channels_ * k, out_channels_);
      dw.noalias() += g * cols.transpose();
      db += g.rowwise().sum();
    }
    if (grad_in) {
      const Mat dcols = weights.transpose() * g;
      col2im(dcols, grad_in->row(n).data());
    }
  }
}

// ---- Relu -----------------------------------------------------------------

void Relu::forward(const Mat& in, Mat& out, LayerCache&) const { out = in.cwiseMax(0.0); }

void Relu::backward(const Mat&, const Mat& out, const Mat& grad_out, const LayerCache&, Mat* grad_in,
                    std::span<double>) const {
  if (grad_in) *grad_in = (out.array() > 0.0).select(grad_out, 0.0);
}

// ---- MaxPool2 -------------------------------------------------------------

void MaxPool2::forward(const Mat& in, Mat& out, LayerCache& cache) const {
  const Shape os = output_shape();
  const int h = input_.height, w = input_.width;
  out.resize(in.rows(), static_cast<Eigen::Index>(os.size()));
  cache.argmax.assign(static_cast<std::size_t>(in.rows()) * os.size(), 0);
  for (Eigen::Index n = 0; n < in.rows(); ++n) {
    const double* src = in.row(n).data();
    double* dst = out.row(n).data();
    int* arg = cache.argmax.data() + static_cast<std::size_t>(n) * os.size();
    for (int c = 0; c < os.channels; ++c) {
      for (int y = 0; y < os.height; ++y) {
        for (int x = 0; x < os.width; ++x) {
          int best = (c * h + 2 * y) * w + 2 * x;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int idx = (c * h + 2 * y + dy) * w + 2 * x + dx;
              if (src[idx] > src[best]) best = idx;
            }
          }
          const int o = (c * os.height + y) * os.width + x;
          dst[o] = src[best];
          arg[o] = best;
        }
      }
    }
  }
}

void MaxPool2::backward(const Mat& in, const Mat&, const Mat& grad_out, const LayerCache& cache, Mat* grad_in,
                        std::span<double>) const {
  if (!grad_in) return;
  const auto per = static_cast<std::size_t>(grad_out.cols());
  grad_in->setZero(in.rows(), in.cols());
  for (Eigen::Index n = 0; n < grad_out.rows(); ++n) {
    const int* arg = cache.argmax.data() + static_cast<std::size_t>(n) * per;
    for (std::size_t o = 0; o < per; ++o) {
      (*grad_in)(n, arg[o]) += grad_out(n, static_cast<Eigen::Index>(o));
    }
  }
}

// ---- Dense ----------------------------------------------------------------

Dense::Dense(Shape input, int outputs) : Layer(input), outputs_(outputs) {
  params_.assign(static_cast<std::size_t>(outputs) * (input.size() + 1), 0.0);
}

void Dense::init(Rng& rng, bool glorot) {
  const auto fan_in = static_cast<double>(input_.size());
  const double bound = glorot ? std::sqrt(6.0 / (fan_in + outputs_)) : std::sqrt(6.0 / fan_in);
  uniform_fill(std::span<double>(params_).first(static_cast<std::size_t>(outputs_) * input_.size()), bound, rng);
}

void Dense::forward(const Mat& in, Mat& out, LayerCache&) const {
  const auto k = static_cast<Eigen::Index>(input_.size());
  ConstMatMap weights(params_.data(), outputs_, k);
  Eigen::Map<const RowVec> bias(params_.data() + outputs_ * k, outputs_);
  out.noalias() = in * weights.transpose();
  out.rowwise() += bias;
}

void Dense::backward(const Mat& in, const Mat&, const Mat& grad_out, const LayerCache&, Mat* grad_in,
                     std::span<double> grad_params) const {
  const auto k = static_cast<Eigen::Index>(input_.size());
  ConstMatMap weights(params_.data(), outputs_, k);
  if (!grad_params.empty()) {
    MatMap dw(grad_params.data(), outputs_, k);
    Eigen::Map<RowVec> db(grad_params.data() + outputs_ * k, outputs_);
    dw.noalias() += grad_out.transpose() * in;
    db += grad_out.colwise().sum();
  }
  if (grad_in) grad_in->noalias() = grad_out * weights;
}

// ---- Tanh -----------------------------------------------------------------

// Saturated values are pulled just inside (-1,1) so emitted features never
// reach the sign boundary's magnitude exactly.
void Tanh::forward(const Mat& in, Mat& out, LayerCache&) const {
  const double edge = std::nextafter(1.0, 0.0);
  out = in.array().tanh().cwiseMin(edge).cwiseMax(-edge).matrix();
}

void Tanh::backward(const Mat&, const Mat& out, const Mat& grad_out, const LayerCache&, Mat* grad_in,
                    std::span<double>) const {
  if (grad_in) *grad_in = (grad_out.array() * (1.0 - out.array().square())).matrix();
}

}  // namespace darkhash
