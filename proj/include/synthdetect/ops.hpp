#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "synthdetect/error.hpp"
#include "synthdetect/gemm.hpp"
#include "synthdetect/rng.hpp"
#include "synthdetect/tensor.hpp"

namespace synthdetect {

namespace detail {

template <class T>
using NodeT = Node<T>;

template <class T>
bool wants_grad(const std::shared_ptr<Node<T>>& n) {
  return n && n->requires_grad;
}

inline void require_rank(const Shape& s, std::size_t r, const char* op) {
  if (s.size() != r) {
    throw ShapeError(std::string(op) + " expects a rank-" + std::to_string(r) + " tensor, got " + shape_str(s));
  }
}

struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kh, kw, stride, pad;
  std::size_t out_h, out_w;
  std::size_t patch() const { return channels * kh * kw; }
  std::size_t positions() const { return out_h * out_w; }
};

// col[(c*kh + i)*kw + j][oy*out_w + ox] = x[c][oy*stride + i - pad][ox*stride + j - pad] (zero outside)
template <class T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t P = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = col + ((c * g.kh + i) * g.kw + j) * P;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long long iy = static_cast<long long>(oy * g.stride + i) - static_cast<long long>(g.pad);
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= static_cast<long long>(g.height)) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = x + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long long ix = static_cast<long long>(ox * g.stride + j) - static_cast<long long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long long>(g.width)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im_add(const ConvGeometry& g, const T* col, T* dx) {
  const std::size_t P = g.positions();
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = col + ((c * g.kh + i) * g.kw + j) * P;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const long long iy = static_cast<long long>(oy * g.stride + i) - static_cast<long long>(g.pad);
          if (iy < 0 || iy >= static_cast<long long>(g.height)) continue;
          T* dst = dx + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const long long ix = static_cast<long long>(ox * g.stride + j) - static_cast<long long>(g.pad);
            if (ix >= 0 && ix < static_cast<long long>(g.width)) dst[ix] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

inline std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride, std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// Cross-correlation with zero padding: out[n][f][y][x] =
// bias[f] + sum_{c,i,j} in[n][c][y*s+i-p][x*s+j-p] * w[f][c][i][j].
// `bias` may be undefined.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias, std::size_t stride,
                 std::size_t padding) {
  detail::require_rank(input.shape(), 4, "conv2d input");
  detail::require_rank(kernels.shape(), 4, "conv2d kernels");
  if (stride < 1) throw ArgumentError("conv2d stride must be >= 1");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t F = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
  if (kernels.dim(1) != C) {
    throw ShapeError("conv2d: input has " + std::to_string(C) + " channels but kernels expect " +
                     std::to_string(kernels.dim(1)));
  }
  if (kh > H + 2 * padding || kw > W + 2 * padding) {
    throw ShapeError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                     " larger than padded input " + shape_str(input.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != F)) {
    throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()) + " does not match " + std::to_string(F) +
                     " filters");
  }
  const detail::ConvGeometry g{C, H, W, kh, kw, stride, padding, conv_out_size(H, kh, stride, padding),
                               conv_out_size(W, kw, stride, padding)};
  const std::size_t K = g.patch(), P = g.positions();
  std::vector<T> out(N * F * P, T(0));
  std::vector<T> col(K * P);
  const T* x = input.data().data();
  const T* w = kernels.data().data();
  for (std::size_t n = 0; n < N; ++n) {
    detail::im2col(g, x + n * C * H * W, col.data());
    T* o = out.data() + n * F * P;
    detail::gemm_nn(F, P, K, w, col.data(), o);
    if (bias.defined()) {
      const T* b = bias.data().data();
      for (std::size_t f = 0; f < F; ++f) {
        for (std::size_t p = 0; p < P; ++p) o[f * P + p] += b[f];
      }
    }
  }
  std::vector<Tensor<T>> inputs{input, kernels};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor<T>::make_result({N, F, g.out_h, g.out_w}, std::move(out), std::move(inputs),
                                [g, N, F](detail::Node<T>& self) {
                                  auto& xin = *self.inputs[0];
                                  auto& win = *self.inputs[1];
                                  const std::size_t K = g.patch(), P = g.positions();
                                  const std::size_t in_sz = g.channels * g.height * g.width;
                                  std::vector<T> col(K * P), dcol(K * P);
                                  for (std::size_t n = 0; n < N; ++n) {
                                    const T* dy = self.grad.data() + n * F * P;
                                    if (win.requires_grad) {
                                      detail::im2col(g, xin.data.data() + n * in_sz, col.data());
                                      detail::gemm_nt(F, K, P, dy, col.data(), win.grad.data());
                                    }
                                    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                                      T* db = self.inputs[2]->grad.data();
                                      for (std::size_t f = 0; f < F; ++f) {
                                        T acc = 0;
                                        for (std::size_t p = 0; p < P; ++p) acc += dy[f * P + p];
                                        db[f] += acc;
                                      }
                                    }
                                    if (xin.requires_grad) {
                                      std::fill(dcol.begin(), dcol.end(), T(0));
                                      detail::gemm_tn(K, P, F, win.data.data(), dy, dcol.data());
                                      detail::col2im_add(g, dcol.data(), xin.grad.data() + n * in_sz);
                                    }
                                  }
                                });
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernels, std::size_t stride, std::size_t padding) {
  return conv2d(input, kernels, Tensor<T>(), stride, padding);
}

// Max over k x k windows, no padding. Gradient goes to the first row-major
// maximum of each window.
template <class T>
Tensor<T> maxpool2d(const Tensor<T>& input, std::size_t k, std::size_t stride) {
  detail::require_rank(input.shape(), 4, "maxpool2d");
  if (k < 1 || stride < 1) throw ArgumentError("maxpool2d window and stride must be >= 1");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (k > H || k > W) {
    throw ShapeError("maxpool2d: window " + std::to_string(k) + " larger than input " + shape_str(input.shape()));
  }
  const std::size_t OH = (H - k) / stride + 1, OW = (W - k) / stride + 1;
  std::vector<T> out(N * C * OH * OW);
  std::vector<std::size_t> arg(out.size());
  const T* x = input.data().data();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* plane = x + nc * H * W;
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        std::size_t best = (oy * stride) * W + ox * stride;
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t j = 0; j < k; ++j) {
            const std::size_t idx = (oy * stride + i) * W + ox * stride + j;
            if (plane[idx] > plane[best]) best = idx;
          }
        }
        const std::size_t o = (nc * OH + oy) * OW + ox;
        out[o] = plane[best];
        arg[o] = nc * H * W + best;
      }
    }
  }
  return Tensor<T>::make_result({N, C, OH, OW}, std::move(out), {input},
                                [arg = std::move(arg)](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  for (std::size_t o = 0; o < arg.size(); ++o) in.grad[arg[o]] += self.grad[o];
                                });
}

template <class T>
Tensor<T> avgpool2d(const Tensor<T>& input, std::size_t k, std::size_t stride) {
  detail::require_rank(input.shape(), 4, "avgpool2d");
  if (k < 1 || stride < 1) throw ArgumentError("avgpool2d window and stride must be >= 1");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  if (k > H || k > W) throw ShapeError("avgpool2d: window larger than input " + shape_str(input.shape()));
  const std::size_t OH = (H - k) / stride + 1, OW = (W - k) / stride + 1;
  const T scale = T(1) / static_cast<T>(k * k);
  std::vector<T> out(N * C * OH * OW);
  const T* x = input.data().data();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    for (std::size_t oy = 0; oy < OH; ++oy) {
      for (std::size_t ox = 0; ox < OW; ++ox) {
        T acc = 0;
        for (std::size_t i = 0; i < k; ++i) {
          for (std::size_t j = 0; j < k; ++j) acc += x[nc * H * W + (oy * stride + i) * W + ox * stride + j];
        }
        out[(nc * OH + oy) * OW + ox] = acc * scale;
      }
    }
  }
  return Tensor<T>::make_result({N, C, OH, OW}, std::move(out), {input},
                                [=](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  for (std::size_t nc = 0; nc < N * C; ++nc) {
                                    for (std::size_t oy = 0; oy < OH; ++oy) {
                                      for (std::size_t ox = 0; ox < OW; ++ox) {
                                        const T g = self.grad[(nc * OH + oy) * OW + ox] * scale;
                                        for (std::size_t i = 0; i < k; ++i) {
                                          for (std::size_t j = 0; j < k; ++j) {
                                            in.grad[nc * H * W + (oy * stride + i) * W + ox * stride + j] += g;
                                          }
                                        }
                                      }
                                    }
                                  }
                                });
}

// N x C x H x W -> N x C
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  detail::require_rank(input.shape(), 4, "global_avg_pool");
  const std::size_t N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  const T scale = T(1) / static_cast<T>(HW);
  std::vector<T> out(N * C);
  const T* x = input.data().data();
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    T acc = 0;
    for (std::size_t p = 0; p < HW; ++p) acc += x[nc * HW + p];
    out[nc] = acc * scale;
  }
  return Tensor<T>::make_result({N, C}, std::move(out), {input}, [=](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t nc = 0; nc < N * C; ++nc) {
      const T g = self.grad[nc] * scale;
      for (std::size_t p = 0; p < HW; ++p) in.grad[nc * HW + p] += g;
    }
  });
}

enum class Activation { RELU, SIGMOID };

template <class T>
Tensor<T> activation(Activation kind, const Tensor<T>& x) {
  const auto in = x.data();
  std::vector<T> out(in.size());
  if (kind == Activation::RELU) {
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
    return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
      auto& in = *self.inputs[0];
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (in.data[i] > T(0)) in.grad[i] += self.grad[i];
      }
    });
  }
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = T(1) / (T(1) + std::exp(-in[i]));
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T s = self.data[i];
      in.grad[i] += self.grad[i] * s * (T(1) - s);
    }
  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  return activation(Activation::RELU, x);
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return activation(Activation::SIGMOID, x);
}

// x[N x D] * W[D x M] + b[M]
template <class T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& W, const Tensor<T>& b) {
  detail::require_rank(x.shape(), 2, "affine input");
  detail::require_rank(W.shape(), 2, "affine weight");
  const std::size_t N = x.dim(0), D = x.dim(1), M = W.dim(1);
  if (W.dim(0) != D) {
    throw ShapeError("affine: input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(W.shape()));
  }
  if (b.defined() && (b.rank() != 1 || b.dim(0) != M)) {
    throw ShapeError("affine: bias " + shape_str(b.shape()) + " does not match output width " + std::to_string(M));
  }
  std::vector<T> out(N * M, T(0));
  detail::gemm_nn(N, M, D, x.data().data(), W.data().data(), out.data());
  if (b.defined()) {
    const T* bp = b.data().data();
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t m = 0; m < M; ++m) out[n * M + m] += bp[m];
    }
  }
  std::vector<Tensor<T>> inputs{x, W};
  if (b.defined()) inputs.push_back(b);
  return Tensor<T>::make_result({N, M}, std::move(out), std::move(inputs), [N, D, M](detail::Node<T>& self) {
    auto& xin = *self.inputs[0];
    auto& win = *self.inputs[1];
    if (win.requires_grad) detail::gemm_tn(D, M, N, xin.data.data(), self.grad.data(), win.grad.data());
    if (xin.requires_grad) detail::gemm_nt(N, D, M, self.grad.data(), win.data.data(), xin.grad.data());
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      T* db = self.inputs[2]->grad.data();
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t m = 0; m < M; ++m) db[m] += self.grad[n * M + m];
      }
    }
  });
}

template <class T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;

  explicit BatchNormStats(std::size_t channels = 0)
      : running_mean(Tensor<T>::zeros({channels})), running_var(Tensor<T>::full({channels}, T(1))) {}
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

// TRAIN: normalize with biased batch moments per channel and fold the batch
// mean / unbiased variance into the running stats with momentum 0.1.
// EVAL: normalize with the running stats.
template <class T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, BatchNormStats<T>& stats,
                      Mode mode) {
  detail::require_rank(x.shape(), 4, "batchnorm2d");
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (gamma.numel() != C || beta.numel() != C || stats.running_mean.numel() != C) {
    throw ShapeError("batchnorm2d: parameters do not match " + std::to_string(C) + " channels");
  }
  const std::size_t M = N * HW;
  const T eps = static_cast<T>(kBatchNormEps);
  const T* xp = x.data().data();
  std::vector<T> xhat(x.numel()), invstd(C), out(x.numel());
  auto rm = stats.running_mean.data();
  auto rv = stats.running_var.data();
  if (mode == Mode::TRAIN) {
    if (M < 2) throw ArgumentError("batchnorm2d: TRAIN mode needs at least 2 values per channel, got " + std::to_string(M));
    const T momentum = static_cast<T>(kBatchNormMomentum);
    for (std::size_t c = 0; c < C; ++c) {
      T sum = 0;
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t p = 0; p < HW; ++p) sum += xp[(n * C + c) * HW + p];
      }
      const T mean = sum / static_cast<T>(M);
      T sq = 0;
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t p = 0; p < HW; ++p) {
          const T d = xp[(n * C + c) * HW + p] - mean;
          sq += d * d;
        }
      }
      const T var = sq / static_cast<T>(M);
      invstd[c] = T(1) / std::sqrt(var + eps);
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t p = 0; p < HW; ++p) {
          const std::size_t i = (n * C + c) * HW + p;
          xhat[i] = (xp[i] - mean) * invstd[c];
        }
      }
      rm[c] = (T(1) - momentum) * rm[c] + momentum * mean;
      rv[c] = (T(1) - momentum) * rv[c] + momentum * (sq / static_cast<T>(M - 1));
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      invstd[c] = T(1) / std::sqrt(rv[c] + eps);
      for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t p = 0; p < HW; ++p) {
          const std::size_t i = (n * C + c) * HW + p;
          xhat[i] = (xp[i] - rm[c]) * invstd[c];
        }
      }
    }
  }
  const T* g = gamma.data().data();
  const T* b = beta.data().data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t p = 0; p < HW; ++p) {
        const std::size_t i = (n * C + c) * HW + p;
        out[i] = g[c] * xhat[i] + b[c];
      }
    }
  }
  const bool train = mode == Mode::TRAIN;
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat), invstd = std::move(invstd)](detail::Node<T>& self) {
        auto& xin = *self.inputs[0];
        auto& gin = *self.inputs[1];
        auto& bin = *self.inputs[2];
        const T* gam = gin.data.data();
        for (std::size_t c = 0; c < C; ++c) {
          T sum_dy = 0, sum_dy_xhat = 0;
          for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t p = 0; p < HW; ++p) {
              const std::size_t i = (n * C + c) * HW + p;
              sum_dy += self.grad[i];
              sum_dy_xhat += self.grad[i] * xhat[i];
            }
          }
          if (gin.requires_grad) gin.grad[c] += sum_dy_xhat;
          if (bin.requires_grad) bin.grad[c] += sum_dy;
          if (!xin.requires_grad) continue;
          const T k = gam[c] * invstd[c];
          if (train) {
            const T inv_m = T(1) / static_cast<T>(M);
            for (std::size_t n = 0; n < N; ++n) {
              for (std::size_t p = 0; p < HW; ++p) {
                const std::size_t i = (n * C + c) * HW + p;
                xin.grad[i] += k * (self.grad[i] - inv_m * sum_dy - inv_m * xhat[i] * sum_dy_xhat);
              }
            }
          } else {
            for (std::size_t n = 0; n < N; ++n) {
              for (std::size_t p = 0; p < HW; ++p) {
                const std::size_t i = (n * C + c) * HW + p;
                xin.grad[i] += k * self.grad[i];
              }
            }
          }
        }
      });
}

// Inverted dropout. EVAL (or p == 0) returns the input unchanged.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, RngStream& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ArgumentError("dropout probability must be in [0, 1), got " + std::to_string(p));
  if (mode == Mode::EVAL || p == 0.0) return x;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  std::vector<T> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() < p ? T(0) : keep_scale;
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * mask[i];
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [mask = std::move(mask)](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < mask.size(); ++i) in.grad[i] += self.grad[i] * mask[i];
  });
}

inline constexpr double kProbClamp = 1e-7;

// -mean(t log p + (1-t) log(1-p)) with p clamped to [1e-7, 1-1e-7].
template <class T>
Tensor<T> binary_cross_entropy(const Tensor<T>& prob, std::span<const T> target) {
  if (prob.numel() != target.size() || (prob.rank() == 2 && prob.dim(1) != 1)) {
    throw ShapeError("binary_cross_entropy: prediction " + shape_str(prob.shape()) + " vs " +
                     std::to_string(target.size()) + " targets");
  }
  const std::size_t N = target.size();
  if (N == 0) throw ShapeError("binary_cross_entropy on an empty batch");
  const T lo = static_cast<T>(kProbClamp), hi = T(1) - static_cast<T>(kProbClamp);
  const auto p = prob.data();
  std::vector<T> clamped(N);
  T acc = 0;
  for (std::size_t i = 0; i < N; ++i) {
    clamped[i] = std::clamp(p[i], lo, hi);
    acc += target[i] * std::log(clamped[i]) + (T(1) - target[i]) * std::log(T(1) - clamped[i]);
  }
  std::vector<T> t(target.begin(), target.end());
  return Tensor<T>::make_result({}, {-acc / static_cast<T>(N)}, {prob},
                                [clamped = std::move(clamped), t = std::move(t), N](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  const T g = self.grad[0] / static_cast<T>(N);
                                  for (std::size_t i = 0; i < N; ++i) {
                                    const T q = clamped[i];
                                    in.grad[i] += g * (q - t[i]) / (q * (T(1) - q));
                                  }
                                });
}

// binary_cross_entropy(sigmoid(z), t) evaluated stably from the logits:
// mean(max(z, 0) - z t + log(1 + exp(-|z|))), gradient (sigmoid(z) - t) / N.
template <class T>
Tensor<T> binary_cross_entropy_with_logits(const Tensor<T>& logits, std::span<const T> target) {
  if (logits.numel() != target.size() || (logits.rank() == 2 && logits.dim(1) != 1)) {
    throw ShapeError("binary_cross_entropy_with_logits: prediction " + shape_str(logits.shape()) + " vs " +
                     std::to_string(target.size()) + " targets");
  }
  const std::size_t N = target.size();
  if (N == 0) throw ShapeError("binary_cross_entropy_with_logits on an empty batch");
  const auto z = logits.data();
  std::vector<T> prob(N);
  T acc = 0;
  for (std::size_t i = 0; i < N; ++i) {
    acc += std::max(z[i], T(0)) - z[i] * target[i] + std::log1p(std::exp(-std::abs(z[i])));
    prob[i] = T(1) / (T(1) + std::exp(-z[i]));
  }
  std::vector<T> t(target.begin(), target.end());
  return Tensor<T>::make_result({}, {acc / static_cast<T>(N)}, {logits},
                                [prob = std::move(prob), t = std::move(t), N](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  const T g = self.grad[0] / static_cast<T>(N);
                                  for (std::size_t i = 0; i < N; ++i) in.grad[i] += g * (prob[i] - t[i]);
                                });
}

// Mean over the batch of -log softmax(logits)[target].
template <class T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> target) {
  detail::require_rank(logits.shape(), 2, "softmax_cross_entropy");
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  if (target.size() != N) throw ShapeError("softmax_cross_entropy: target count does not match batch");
  const auto z = logits.data();
  std::vector<T> prob(N * K);
  T acc = 0;
  for (std::size_t n = 0; n < N; ++n) {
    if (target[n] < 0 || static_cast<std::size_t>(target[n]) >= K) {
      throw ArgumentError("softmax_cross_entropy: class index out of range");
    }
    const T* row = z.data() + n * K;
    const T mx = *std::max_element(row, row + K);
    T sum = 0;
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(row[k] - mx);
    const T lse = mx + std::log(sum);
    for (std::size_t k = 0; k < K; ++k) prob[n * K + k] = std::exp(row[k] - lse);
    acc += lse - row[target[n]];
  }
  std::vector<int> t(target.begin(), target.end());
  return Tensor<T>::make_result({}, {acc / static_cast<T>(N)}, {logits},
                                [prob = std::move(prob), t = std::move(t), N, K](detail::Node<T>& self) {
                                  auto& in = *self.inputs[0];
                                  const T g = self.grad[0] / static_cast<T>(N);
                                  for (std::size_t n = 0; n < N; ++n) {
                                    for (std::size_t k = 0; k < K; ++k) {
                                      const T onehot = static_cast<int>(k) == t[n] ? T(1) : T(0);
                                      in.grad[n * K + k] += g * (prob[n * K + k] - onehot);
                                    }
                                  }
                                });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  }
  std::vector<T> out(a.numel());
  const auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
    }
  });
}

// Concatenate N x C_i x H x W tensors along the channel axis.
template <class T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ArgumentError("concat_channels needs at least one tensor");
  for (const auto& p : parts) detail::require_rank(p.shape(), 4, "concat_channels");
  const std::size_t N = parts[0].dim(0), H = parts[0].dim(2), W = parts[0].dim(3);
  std::size_t C = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.dim(0) != N || p.dim(2) != H || p.dim(3) != W) {
      throw ShapeError("concat_channels: " + shape_str(p.shape()) + " does not match " + shape_str(parts[0].shape()));
    }
    offsets.push_back(C);
    C += p.dim(1);
  }
  const std::size_t HW = H * W;
  std::vector<T> out(N * C * HW);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t ck = parts[k].dim(1);
    const T* src = parts[k].data().data();
    for (std::size_t n = 0; n < N; ++n) {
      std::copy(src + n * ck * HW, src + (n + 1) * ck * HW, out.data() + (n * C + offsets[k]) * HW);
    }
  }
  return Tensor<T>::make_result({N, C, H, W}, std::move(out), parts, [=](detail::Node<T>& self) {
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      auto& in = *self.inputs[k];
      if (!in.requires_grad) continue;
      const std::size_t ck = in.shape[1];
      for (std::size_t n = 0; n < N; ++n) {
        const T* g = self.grad.data() + (n * C + offsets[k]) * HW;
        T* dst = in.grad.data() + n * ck * HW;
        for (std::size_t i = 0; i < ck * HW; ++i) dst[i] += g[i];
      }
    }
  });
}

// N x ... -> N x prod(...)
template <class T>
Tensor<T> flatten(const Tensor<T>& x) {
  if (x.rank() < 1) throw ShapeError("flatten needs a batch axis");
  const std::size_t N = x.dim(0);
  const std::size_t D = N ? x.numel() / N : 0;
  std::vector<T> out(x.data().begin(), x.data().end());
  return Tensor<T>::make_result({N, D}, std::move(out), {x}, [](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  return Tensor<T>::make_result({}, {acc}, {x}, [](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    for (auto& g : in.grad) g += self.grad[0];
  });
}

// sum_i x_i * w_i with constant weights.
template <class T>
Tensor<T> weighted_sum(const Tensor<T>& x, std::span<const T> w) {
  if (w.size() != x.numel()) throw ShapeError("weighted_sum: weight count does not match tensor size");
  T acc = 0;
  const auto v = x.data();
  for (std::size_t i = 0; i < w.size(); ++i) acc += v[i] * w[i];
  std::vector<T> weights(w.begin(), w.end());
  return Tensor<T>::make_result({}, {acc}, {x}, [weights = std::move(weights)](detail::Node<T>& self) {
    auto& in = *self.inputs[0];
    for (std::size_t i = 0; i < weights.size(); ++i) in.grad[i] += self.grad[0] * weights[i];
  });
}

template <class T>
bool all_finite(const Tensor<T>& x) {
  for (T v : x.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace synthdetect
