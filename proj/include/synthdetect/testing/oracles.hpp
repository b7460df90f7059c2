#pragma once

// Slow, independent reference implementations used by the test suites and the
// `selftest` command. Nothing here is used on the production paths.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "synthdetect/image.hpp"
#include "synthdetect/rng.hpp"
#include "synthdetect/svm.hpp"
#include "synthdetect/tensor.hpp"

namespace synthdetect::testing {

// ---- gradients -------------------------------------------------------------

using ScalarFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

struct GradCheck {
  double max_rel_error = 0.0;  // worst tensor, ||analytic - numeric|| / max(||analytic|| + ||numeric||, floor)
  std::size_t worst_input = 0;
};

// Central differences against reverse mode for every input with requires_grad.
inline GradCheck check_gradients(const ScalarFn& f, std::vector<Tensor<double>> inputs, double h = 1e-6) {
  for (auto& t : inputs) {
    if (t.requires_grad()) t.zero_grad();
  }
  Tensor<double> loss = f(inputs);
  backward(loss);
  GradCheck result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& t = inputs[k];
    if (!t.requires_grad()) continue;
    std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<double> numeric(t.numel());
    auto data = t.data();
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double orig = data[i];
      data[i] = orig + h;
      const double up = f(inputs).item();
      data[i] = orig - h;
      const double down = f(inputs).item();
      data[i] = orig;
      numeric[i] = (up - down) / (2.0 * h);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const double rel = std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nn), 1e-8);
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_input = k;
    }
  }
  return result;
}

inline Tensor<double> random_tensor(Shape shape, RngStream& rng, bool requires_grad = true, double lo = -1.0,
                                    double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor<double>::from(std::move(shape), std::move(v), requires_grad);
}

// Direct 7-loop convolution; products summed in (c, i, j) order, bias added last.
inline std::vector<double> brute_force_conv2d(std::span<const double> x, std::size_t N, std::size_t C, std::size_t H,
                                              std::size_t W, std::span<const double> w, std::size_t F, std::size_t k,
                                              std::span<const double> bias, std::size_t stride, std::size_t pad) {
  const std::size_t OH = (H + 2 * pad - k) / stride + 1, OW = (W + 2 * pad - k) / stride + 1;
  std::vector<double> out(N * F * OH * OW, 0.0);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t oy = 0; oy < OH; ++oy)
        for (std::size_t ox = 0; ox < OW; ++ox) {
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j) {
                const long long y = static_cast<long long>(oy * stride + i) - static_cast<long long>(pad);
                const long long xx = static_cast<long long>(ox * stride + j) - static_cast<long long>(pad);
                if (y < 0 || xx < 0 || y >= static_cast<long long>(H) || xx >= static_cast<long long>(W)) continue;
                acc += x[((n * C + c) * H + y) * W + xx] * w[((f * C + c) * k + i) * k + j];
              }
          out[((n * F + f) * OH + oy) * OW + ox] = bias.empty() ? acc : acc + bias[f];
        }
  return out;
}

// ---- ranking metrics -------------------------------------------------------

// P(score of a random positive > score of a random negative), ties count 1/2.
inline double mann_whitney_auc(std::span<const double> scores, std::span<const Label> truth, Label positive = Label::FAKE) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (truth[i] != positive) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (truth[j] == positive) continue;
      ++pairs;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

// Average precision by recounting the confusion at every distinct threshold.
inline double brute_force_average_precision(std::span<const double> scores, std::span<const Label> truth,
                                            Label positive = Label::FAKE) {
  std::vector<double> thresholds(scores.begin(), scores.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::size_t n_pos = 0;
  for (Label l : truth) n_pos += l == positive;
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= t) (truth[i] == positive ? tp : fp) += 1;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

// ---- SVM -------------------------------------------------------------------

inline std::vector<std::vector<double>> gram_matrix(const std::vector<std::vector<double>>& X, double gamma) {
  std::vector<std::vector<double>> K(X.size(), std::vector<double>(X.size()));
  for (std::size_t i = 0; i < X.size(); ++i)
    for (std::size_t j = 0; j < X.size(); ++j) K[i][j] = rbf_kernel(X[i], X[j], gamma);
  return K;
}

// W(alpha) = sum alpha - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij
inline double dual_objective(const std::vector<double>& alpha, const std::vector<int>& y,
                             const std::vector<std::vector<double>>& K) {
  double lin = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    lin += alpha[i];
    for (std::size_t j = 0; j < alpha.size(); ++j) quad += alpha[i] * alpha[j] * y[i] * y[j] * K[i][j];
  }
  return lin - 0.5 * quad;
}

// Euclidean projection onto {0 <= a <= C, sum a_i y_i = 0}: a = clip(v - lambda y),
// lambda found by bisection on the monotone constraint residual.
inline std::vector<double> project_dual(const std::vector<double>& v, const std::vector<int>& y, double C) {
  auto at = [&](double lambda, std::vector<double>& a) {
    double r = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      a[i] = std::clamp(v[i] - lambda * y[i], 0.0, C);
      r += a[i] * y[i];
    }
    return r;
  };
  std::vector<double> a(v.size());
  double lo = -1.0, hi = 1.0;
  while (at(lo, a) < 0.0) lo *= 2.0;
  while (at(hi, a) > 0.0) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (at(mid, a) > 0.0) lo = mid;
    else hi = mid;
  }
  at(0.5 * (lo + hi), a);
  return a;
}

// Accelerated projected gradient ascent on the dual.
inline std::vector<double> solve_dual_qp(const std::vector<std::vector<double>>& K, const std::vector<int>& y, double C,
                                         int iterations = 20000) {
  const std::size_t n = y.size();
  double L = 0.0;  // Gershgorin bound on the largest eigenvalue of Q
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += std::abs(K[i][j]);
    L = std::max(L, row);
  }
  const double step = 1.0 / L;
  std::vector<double> a(n, 0.0), z = a, prev = a, g(n);
  double t = 1.0;
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double q = 0.0;
      for (std::size_t j = 0; j < n; ++j) q += y[i] * y[j] * K[i][j] * z[j];
      g[i] = 1.0 - q;
    }
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = z[i] + step * g[i];
    prev = a;
    a = project_dual(v, y, C);
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    for (std::size_t i = 0; i < n; ++i) z[i] = a[i] + ((t - 1.0) / t_next) * (a[i] - prev[i]);
    t = t_next;
  }
  return a;
}

// Full alpha vector (training order) from a trained model.
inline std::vector<double> model_alphas(const SvmModel& m, const std::vector<int>& y) {
  std::vector<double> alpha(y.size(), 0.0);
  for (std::size_t k = 0; k < m.support_indices.size(); ++k) {
    const std::size_t i = m.support_indices[k];
    alpha[i] = m.dual_coefs[k] * y[i];
  }
  return alpha;
}

// Largest KKT violation: y f(x) >= 1 at alpha = 0, = 1 inside, <= 1 at C.
inline double max_kkt_violation(const SvmModel& m, const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                                double C) {
  const auto alpha = model_alphas(m, y);
  double worst = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const double margin = y[i] * decision_score(m, X[i]);
    double v = 0.0;
    if (alpha[i] <= 0.0) v = std::max(0.0, 1.0 - margin);
    else if (alpha[i] >= C) v = std::max(0.0, margin - 1.0);
    else v = std::abs(margin - 1.0);
    worst = std::max(worst, v);
  }
  return worst;
}

struct LabelledPoints {
  std::vector<std::vector<double>> X;
  std::vector<int> y;
};

inline LabelledPoints two_moons(std::size_t per_moon, double noise, std::uint64_t seed) {
  RngStream rng(seed, "two_moons");
  LabelledPoints d;
  for (std::size_t i = 0; i < per_moon; ++i) {
    const double t = std::numbers::pi * static_cast<double>(i) / static_cast<double>(per_moon - 1);
    d.X.push_back({std::cos(t) + noise * rng.normal(), std::sin(t) + noise * rng.normal()});
    d.y.push_back(+1);
    d.X.push_back({1.0 - std::cos(t) + noise * rng.normal(), 0.5 - std::sin(t) + noise * rng.normal()});
    d.y.push_back(-1);
  }
  return d;
}

inline LabelledPoints xor_points() {
  return {{{0.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}, {1.0, 0.0}}, {+1, +1, -1, -1}};
}

}  // namespace synthdetect::testing
