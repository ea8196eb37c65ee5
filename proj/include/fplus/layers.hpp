#pragma once

// Differentiable layers for the desk-scale networks: dense, valid
// cross-correlation conv2d (stride 1, no padding), 2x2 max pooling, 1-D
// batch normalization, zero padding, and the fused softmax cross-entropy
// loss.

#include <cmath>
#include <random>
#include <vector>

#include "fplus/init.hpp"
#include "fplus/tensor.hpp"

namespace fplus {

// x.w + b for x [n, in], w [in, out], b [out].
inline Tensor dense_forward(const Tensor& w, const Tensor& b, const Tensor& x) {
  return bias_add(matmul(x, w), b);
}

// Valid cross-correlation. kernels [oc, ic, kh, kw]; x either [ic, h, w] or
// batched [n, ic, h, w]; output [(n,) oc, h-kh+1, w-kw+1].
inline Tensor conv2d_forward(const Tensor& kernels, const Tensor& x) {
  if (kernels.rank() != 4) {
    throw std::invalid_argument("conv2d: kernels must be rank 4, got " +
                                shape_to_string(kernels.shape()));
  }
  const bool batched = x.rank() == 4;
  if (!batched && x.rank() != 3) {
    throw std::invalid_argument("conv2d: input must be rank 3 or 4, got " +
                                shape_to_string(x.shape()));
  }
  const std::size_t n = batched ? x.shape()[0] : 1;
  const std::size_t ic = x.shape()[batched ? 1 : 0];
  const std::size_t h = x.shape()[batched ? 2 : 1];
  const std::size_t w = x.shape()[batched ? 3 : 2];
  const std::size_t oc = kernels.shape()[0];
  const std::size_t kh = kernels.shape()[2];
  const std::size_t kw = kernels.shape()[3];
  if (kernels.shape()[1] != ic) {
    throw std::invalid_argument("conv2d: kernel channels " +
                                shape_to_string(kernels.shape()) +
                                " do not match input " + shape_to_string(x.shape()));
  }
  if (kh > h || kw > w) {
    throw std::invalid_argument("conv2d: kernel " + shape_to_string(kernels.shape()) +
                                " larger than input " + shape_to_string(x.shape()));
  }
  const std::size_t oh = h - kh + 1;
  const std::size_t ow = w - kw + 1;

  std::vector<double> out(n * oc * oh * ow, 0.0);
  const double* px = x.data().data();
  const double* pk = kernels.data().data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < oc; ++o) {
      double* out_plane = out.data() + ((b * oc + o) * oh) * ow;
      for (std::size_t c = 0; c < ic; ++c) {
        const double* in_plane = px + ((b * ic + c) * h) * w;
        const double* k_plane = pk + ((o * ic + c) * kh) * kw;
        for (std::size_t p = 0; p < kh; ++p) {
          for (std::size_t q = 0; q < kw; ++q) {
            const double kv = k_plane[p * kw + q];
            for (std::size_t y = 0; y < oh; ++y) {
              const double* in_row = in_plane + (y + p) * w + q;
              double* out_row = out_plane + y * ow;
              for (std::size_t z = 0; z < ow; ++z) out_row[z] += kv * in_row[z];
            }
          }
        }
      }
    }
  }

  Shape out_shape = batched ? Shape{n, oc, oh, ow} : Shape{oc, oh, ow};
  return make_op(
      std::move(out_shape), std::move(out), {kernels, x},
      [n, ic, h, w, oc, kh, kw, oh, ow](detail::Node& self) {
        detail::Node& nk = *self.parents[0];
        detail::Node& nx = *self.parents[1];
        const double* g = self.grad.data();
        for (std::size_t b = 0; b < n; ++b) {
          for (std::size_t o = 0; o < oc; ++o) {
            const double* g_plane = g + ((b * oc + o) * oh) * ow;
            for (std::size_t c = 0; c < ic; ++c) {
              const double* in_plane = nx.values.data() + ((b * ic + c) * h) * w;
              const std::size_t k_base = ((o * ic + c) * kh) * kw;
              for (std::size_t p = 0; p < kh; ++p) {
                for (std::size_t q = 0; q < kw; ++q) {
                  const double kv = nk.values[k_base + p * kw + q];
                  double k_acc = 0.0;
                  for (std::size_t y = 0; y < oh; ++y) {
                    const double* g_row = g_plane + y * ow;
                    const double* in_row = in_plane + (y + p) * w + q;
                    if (nx.requires_grad) {
                      double* gx_row =
                          nx.grad.data() + ((b * ic + c) * h + y + p) * w + q;
                      for (std::size_t z = 0; z < ow; ++z) {
                        k_acc += g_row[z] * in_row[z];
                        gx_row[z] += g_row[z] * kv;
                      }
                    } else {
                      for (std::size_t z = 0; z < ow; ++z) k_acc += g_row[z] * in_row[z];
                    }
                  }
                  detail::Node::add_grad(nk, k_base + p * kw + q, k_acc);
                }
              }
            }
          }
        }
      });
}

// Non-overlapping max pooling; gradient routes to the first occurrence of
// the maximum in row-major window order.
inline Tensor maxpool2d(const Tensor& x, std::size_t size = 2) {
  const bool batched = x.rank() == 4;
  if (!batched && x.rank() != 3) {
    throw std::invalid_argument("maxpool2d: input must be rank 3 or 4, got " +
                                shape_to_string(x.shape()));
  }
  if (size < 1) throw std::invalid_argument("maxpool2d: window must be >= 1");
  const std::size_t n = batched ? x.shape()[0] : 1;
  const std::size_t c = x.shape()[batched ? 1 : 0];
  const std::size_t h = x.shape()[batched ? 2 : 1];
  const std::size_t w = x.shape()[batched ? 3 : 2];
  if (h % size != 0 || w % size != 0) {
    throw std::invalid_argument("maxpool2d: dimensions of " + shape_to_string(x.shape()) +
                                " not divisible by window " + std::to_string(size));
  }
  const std::size_t oh = h / size, ow = w / size;
  std::vector<double> out(n * c * oh * ow);
  std::vector<std::size_t> argmax(out.size());
  const double* px = x.data().data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* in_plane = px + plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t z = 0; z < ow; ++z) {
        std::size_t best = (y * size) * w + z * size;
        double best_v = in_plane[best];
        for (std::size_t p = 0; p < size; ++p) {
          for (std::size_t q = 0; q < size; ++q) {
            const std::size_t idx = (y * size + p) * w + (z * size + q);
            if (in_plane[idx] > best_v) {
              best_v = in_plane[idx];
              best = idx;
            }
          }
        }
        out[(plane * oh + y) * ow + z] = best_v;
        argmax[(plane * oh + y) * ow + z] = plane * h * w + best;
      }
    }
  }
  Shape out_shape = batched ? Shape{n, c, oh, ow} : Shape{c, oh, ow};
  return make_op(std::move(out_shape), std::move(out), {x},
                 [argmax = std::move(argmax)](detail::Node& self) {
                   detail::Node& px = *self.parents[0];
                   for (std::size_t i = 0; i < self.grad.size(); ++i) {
                     detail::Node::add_grad(px, argmax[i], self.grad[i]);
                   }
                 });
}

// Zero padding of the two spatial axes on all four sides.
inline Tensor pad2d(const Tensor& x, std::size_t pad) {
  const bool batched = x.rank() == 4;
  if (!batched && x.rank() != 3) {
    throw std::invalid_argument("pad2d: input must be rank 3 or 4, got " +
                                shape_to_string(x.shape()));
  }
  const std::size_t n = batched ? x.shape()[0] : 1;
  const std::size_t c = x.shape()[batched ? 1 : 0];
  const std::size_t h = x.shape()[batched ? 2 : 1];
  const std::size_t w = x.shape()[batched ? 3 : 2];
  const std::size_t ph = h + 2 * pad, pw = w + 2 * pad;
  std::vector<double> out(n * c * ph * pw, 0.0);
  const double* px = x.data().data();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    for (std::size_t y = 0; y < h; ++y) {
      const double* src = px + (plane * h + y) * w;
      double* dst = out.data() + (plane * ph + y + pad) * pw + pad;
      std::copy(src, src + w, dst);
    }
  }
  Shape out_shape = batched ? Shape{n, c, ph, pw} : Shape{c, ph, pw};
  return make_op(std::move(out_shape), std::move(out), {x},
                 [n, c, h, w, pad, ph, pw](detail::Node& self) {
                   detail::Node& px = *self.parents[0];
                   if (!px.requires_grad) return;
                   for (std::size_t plane = 0; plane < n * c; ++plane) {
                     for (std::size_t y = 0; y < h; ++y) {
                       const double* g_row =
                           self.grad.data() + (plane * ph + y + pad) * pw + pad;
                       double* gx_row = px.grad.data() + (plane * h + y) * w;
                       for (std::size_t z = 0; z < w; ++z) gx_row[z] += g_row[z];
                     }
                   }
                 });
}

// [n, c, h, w] -> [n, c*h*w].
inline Tensor flatten(const Tensor& x) {
  if (x.rank() < 2) {
    throw std::invalid_argument("flatten: input must have a batch axis, got " +
                                shape_to_string(x.shape()));
  }
  return reshape(x, {x.shape()[0], x.size() / x.shape()[0]});
}

// ---------------------------------------------------------------------------
// Batch normalization (1-D)

struct RunningStats {
  std::vector<double> mean;
  std::vector<double> var;
  double momentum = 0.1;
  double eps = 1e-5;

  explicit RunningStats(std::size_t features)
      : mean(features, 0.0), var(features, 1.0) {}
};

// Training mode normalizes by batch statistics (biased variance) and
// updates the running estimates; eval mode normalizes by the running
// estimates.
inline Tensor batchnorm1d_forward(const Tensor& x, const Tensor& gamma,
                                  const Tensor& beta, RunningStats& stats,
                                  bool training) {
  if (x.rank() != 2) {
    throw std::invalid_argument("batchnorm1d: input must be [batch, features], got " +
                                shape_to_string(x.shape()));
  }
  const std::size_t n = x.shape()[0];
  const std::size_t f = x.shape()[1];
  if (gamma.size() != f || beta.size() != f || stats.mean.size() != f) {
    throw std::invalid_argument("batchnorm1d: parameter size does not match features");
  }
  if (training && n < 2) {
    throw std::invalid_argument("batchnorm1d: training mode needs batch >= 2, got " +
                                std::to_string(n));
  }

  std::vector<double> mean(f, 0.0), var(f, 0.0);
  if (training) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < f; ++j) mean[j] += x.data()[i * f + j];
    }
    for (std::size_t j = 0; j < f; ++j) mean[j] /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < f; ++j) {
        const double d = x.data()[i * f + j] - mean[j];
        var[j] += d * d;
      }
    }
    for (std::size_t j = 0; j < f; ++j) var[j] /= static_cast<double>(n);
    for (std::size_t j = 0; j < f; ++j) {
      stats.mean[j] = (1.0 - stats.momentum) * stats.mean[j] + stats.momentum * mean[j];
      stats.var[j] = (1.0 - stats.momentum) * stats.var[j] + stats.momentum * var[j];
    }
  } else {
    mean = stats.mean;
    var = stats.var;
  }

  std::vector<double> inv_std(f);
  for (std::size_t j = 0; j < f; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + stats.eps);

  std::vector<double> xhat(n * f), out(n * f);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      const double xh = (x.data()[i * f + j] - mean[j]) * inv_std[j];
      xhat[i * f + j] = xh;
      out[i * f + j] = gamma.data()[j] * xh + beta.data()[j];
    }
  }

  return make_op(
      x.shape(), std::move(out), {x, gamma, beta},
      [n, f, training, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](detail::Node& self) {
        detail::Node& px = *self.parents[0];
        detail::Node& pg = *self.parents[1];
        detail::Node& pb = *self.parents[2];
        const double* g = self.grad.data();
        std::vector<double> sum_g(f, 0.0), sum_gx(f, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < f; ++j) {
            sum_g[j] += g[i * f + j];
            sum_gx[j] += g[i * f + j] * xhat[i * f + j];
          }
        }
        for (std::size_t j = 0; j < f; ++j) {
          detail::Node::add_grad(pg, j, sum_gx[j]);
          detail::Node::add_grad(pb, j, sum_g[j]);
        }
        if (!px.requires_grad) return;
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < f; ++j) {
            const double gj = pg.values[j] * inv_std[j];
            if (training) {
              // batch statistics contribute: dx = gamma*s*(g - mean(g) - xhat*mean(g*xhat))
              px.grad[i * f + j] +=
                  gj * (g[i * f + j] - inv_n * sum_g[j] -
                        xhat[i * f + j] * inv_n * sum_gx[j]);
            } else {
              px.grad[i * f + j] += gj * g[i * f + j];
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Loss

// Mean over the batch of -log softmax(logits)[label]; the row maximum is
// subtracted before exponentiation.
inline Tensor softmax_cross_entropy(const Tensor& logits,
                                    const std::vector<int>& labels) {
  if (logits.rank() != 2) {
    throw std::invalid_argument("cross_entropy: logits must be [batch, classes], got " +
                                shape_to_string(logits.shape()));
  }
  const std::size_t n = logits.shape()[0];
  const std::size_t k = logits.shape()[1];
  if (labels.size() != n) {
    throw std::invalid_argument("cross_entropy: batch " + std::to_string(n) + " vs " +
                                std::to_string(labels.size()) + " labels");
  }
  std::vector<double> probs(n * k);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= k) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(labels[i]) +
                                  " out of range for " + std::to_string(k) + " classes");
    }
    const double* row = logits.data().data() + i * k;
    double row_max = row[0];
    for (std::size_t j = 1; j < k; ++j) row_max = std::max(row_max, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(row[j] - row_max);
    const double log_denom = std::log(denom);
    for (std::size_t j = 0; j < k; ++j) {
      probs[i * k + j] = std::exp(row[j] - row_max) / denom;
    }
    loss -= (row[labels[i]] - row_max) - log_denom;
  }
  loss /= static_cast<double>(n);

  return make_op({1}, {loss}, {logits},
                 [n, k, probs = std::move(probs), labels](detail::Node& self) {
                   detail::Node& pl = *self.parents[0];
                   if (!pl.requires_grad) return;
                   const double g0 = self.grad[0] / static_cast<double>(n);
                   for (std::size_t i = 0; i < n; ++i) {
                     for (std::size_t j = 0; j < k; ++j) {
                       const double target =
                           (static_cast<std::size_t>(labels[i]) == j) ? 1.0 : 0.0;
                       pl.grad[i * k + j] += g0 * (probs[i * k + j] - target);
                     }
                   }
                 });
}

inline std::vector<int> argmax_rows(const Tensor& t) {
  const std::size_t n = t.shape()[0];
  const std::size_t k = t.size() / n;
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = t.data().data() + i * k;
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layer objects

class DenseLayer {
 public:
  DenseLayer(std::size_t in, std::size_t out, const InitDistribution& weight_init,
             std::mt19937_64& rng)
      : fan_in_(in), fan_out_(out) {
    std::vector<double> wv(in * out);
    for (double& v : wv) v = init_sample(weight_init, in, out, rng);
    w_ = Tensor({in, out}, std::move(wv), /*requires_grad=*/true);
    b_ = Tensor::zeros({out}, /*requires_grad=*/true);
  }

  Tensor forward(const Tensor& x) const { return dense_forward(w_, b_, x); }

  Tensor weights() { return w_; }
  Tensor bias() { return b_; }
  std::size_t fan_in() const { return fan_in_; }
  std::size_t fan_out() const { return fan_out_; }

 private:
  std::size_t fan_in_, fan_out_;
  Tensor w_, b_;
};

class Conv2dLayer {
 public:
  Conv2dLayer(std::size_t in_c, std::size_t out_c, std::size_t kh, std::size_t kw,
              const InitDistribution& weight_init, std::mt19937_64& rng)
      : fan_in_(in_c * kh * kw), fan_out_(out_c * kh * kw) {
    std::vector<double> kv(out_c * in_c * kh * kw);
    for (double& v : kv) v = init_sample(weight_init, fan_in_, fan_out_, rng);
    kernels_ = Tensor({out_c, in_c, kh, kw}, std::move(kv), /*requires_grad=*/true);
  }

  Tensor forward(const Tensor& x) const { return conv2d_forward(kernels_, x); }

  Tensor kernels() { return kernels_; }
  std::size_t fan_in() const { return fan_in_; }
  std::size_t fan_out() const { return fan_out_; }

 private:
  std::size_t fan_in_, fan_out_;
  Tensor kernels_;
};

class BatchNorm1d {
 public:
  explicit BatchNorm1d(std::size_t features)
      : gamma_(Tensor::full({features}, 1.0, /*requires_grad=*/true)),
        beta_(Tensor::zeros({features}, /*requires_grad=*/true)),
        stats_(features) {}

  Tensor forward(const Tensor& x, bool training) {
    return batchnorm1d_forward(x, gamma_, beta_, stats_, training);
  }

  Tensor gamma() { return gamma_; }
  Tensor beta() { return beta_; }
  RunningStats& stats() { return stats_; }

 private:
  Tensor gamma_, beta_;
  RunningStats stats_;
};

}  // namespace fplus
