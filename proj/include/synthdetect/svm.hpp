#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <list>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "synthdetect/error.hpp"
#include "synthdetect/rng.hpp"

namespace synthdetect {

struct SvmConfig {
  double C = 1.0;
  std::optional<double> gamma;  // unset: 1 / (dim * var(X))
  double tol = 1e-3;
  int max_passes = 1000;
  std::uint64_t seed = 0;
  std::size_t kernel_cache_bytes = std::size_t{256} << 20;
};

struct SvmModel {
  std::vector<std::vector<double>> support_vectors;
  std::vector<double> dual_coefs;  // alpha_i * y_i
  double bias = 0.0;
  double gamma = 1.0;
  // Training provenance, not persisted.
  std::vector<std::size_t> support_indices;
  bool converged = true;
  int sweeps = 0;

  std::size_t dim() const { return support_vectors.empty() ? 0 : support_vectors.front().size(); }
};

inline double rbf_kernel(const std::vector<double>& x, const std::vector<double>& y, double gamma) {
  if (x.size() != y.size()) {
    throw ArgumentError("rbf_kernel dimension mismatch: " + std::to_string(x.size()) + " vs " +
                        std::to_string(y.size()));
  }
  if (!(gamma > 0.0)) throw ArgumentError("rbf_kernel requires gamma > 0");
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

// The "scale" heuristic: 1 / (n_features * variance of all entries of X).
inline double scale_gamma(const std::vector<std::vector<double>>& X) {
  if (X.empty() || X.front().empty()) throw ArgumentError("scale_gamma needs a non-empty matrix");
  const std::size_t d = X.front().size();
  double sum = 0.0, sq = 0.0;
  for (const auto& r : X) {
    for (double v : r) {
      sum += v;
      sq += v * v;
    }
  }
  const double n = static_cast<double>(X.size() * d);
  const double var = sq / n - (sum / n) * (sum / n);
  return var > 0.0 ? 1.0 / (static_cast<double>(d) * var) : 1.0;
}

inline double decision_score(const SvmModel& model, const std::vector<double>& x) {
  if (!model.support_vectors.empty() && x.size() != model.dim()) {
    throw ArgumentError("decision_score: input has dimension " + std::to_string(x.size()) + ", model expects " +
                        std::to_string(model.dim()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < model.support_vectors.size(); ++i) {
    s += model.dual_coefs[i] * rbf_kernel(model.support_vectors[i], x, model.gamma);
  }
  return s + model.bias;
}

// +1 is the positive (FAKE) class; a score of exactly zero maps to +1.
inline int predict(const SvmModel& model, const std::vector<double>& x) {
  return decision_score(model, x) >= 0.0 ? +1 : -1;
}

namespace detail {

// LRU cache of kernel matrix rows.
class KernelRows {
 public:
  KernelRows(const std::vector<std::vector<double>>& X, double gamma, std::size_t budget_bytes)
      : X_(X), gamma_(gamma) {
    const std::size_t row_bytes = std::max<std::size_t>(1, X.size() * sizeof(double));
    capacity_ = std::max<std::size_t>(2, budget_bytes / row_bytes);
  }

  const std::vector<double>& row(std::size_t i) {
    if (auto it = index_.find(i); it != index_.end()) {
      order_.splice(order_.begin(), order_, it->second);
      return it->second->second;
    }
    if (index_.size() >= capacity_) {
      index_.erase(order_.back().first);
      order_.pop_back();
    }
    std::vector<double> r(X_.size());
    for (std::size_t j = 0; j < X_.size(); ++j) r[j] = rbf_kernel(X_[i], X_[j], gamma_);
    order_.emplace_front(i, std::move(r));
    index_[i] = order_.begin();
    return order_.front().second;
  }

 private:
  using Entry = std::pair<std::size_t, std::vector<double>>;
  const std::vector<std::vector<double>>& X_;
  double gamma_;
  std::size_t capacity_;
  std::list<Entry> order_;
  std::unordered_map<std::size_t, std::list<Entry>::iterator> index_;
};

}  // namespace detail

// Soft-margin SVM dual solved by SMO. For each KKT violator i the partner j is
// first drawn at random; if that pair makes no progress every other j is tried
// starting from a random offset. Training stops after a sweep with no violator
// left (converged) or when max_passes sweeps have run (best iterate returned,
// converged = false).
inline SvmModel smo_train(const std::vector<std::vector<double>>& X, const std::vector<int>& y,
                          const SvmConfig& cfg = {}) {
  const std::size_t n = X.size();
  if (n == 0 || y.size() != n) throw ArgumentError("smo_train: X and y must be non-empty and equally long");
  if (!(cfg.C > 0.0) || !(cfg.tol > 0.0)) throw ArgumentError("smo_train: C and tol must be positive");
  const std::size_t d = X.front().size();
  bool has_pos = false, has_neg = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (X[i].size() != d) throw ArgumentError("smo_train: rows have inconsistent dimensions");
    for (double v : X[i]) {
      if (!std::isfinite(v)) throw ArgumentError("smo_train: non-finite feature in row " + std::to_string(i));
    }
    if (y[i] == 1) has_pos = true;
    else if (y[i] == -1) has_neg = true;
    else throw ArgumentError("smo_train: labels must be +1 or -1");
  }
  if (!has_pos || !has_neg) throw TrainingError("smo_train: training data contains a single class");
  const double gamma = cfg.gamma ? *cfg.gamma : scale_gamma(X);
  if (!(gamma > 0.0)) throw ArgumentError("smo_train: gamma must be positive");

  const double C = cfg.C;
  const double tol = cfg.tol;
  constexpr double eps = 1e-12;
  detail::KernelRows K(X, gamma, cfg.kernel_cache_bytes);
  RngStream rng(cfg.seed, "smo");

  std::vector<double> alpha(n, 0.0);
  std::vector<double> err(n);  // f(x_k) - y_k, with f including the bias
  for (std::size_t k = 0; k < n; ++k) err[k] = -static_cast<double>(y[k]);
  double b = 0.0;

  auto violates = [&](std::size_t i) {
    const double r = err[i] * y[i];
    return (r < -tol && alpha[i] < C) || (r > tol && alpha[i] > 0.0);
  };

  auto take_step = [&](std::size_t i, std::size_t j) -> bool {
    if (i == j) return false;
    const double yi = y[i], yj = y[j];
    const double ai = alpha[i], aj = alpha[j];
    double L, H;
    if (yi != yj) {
      L = std::max(0.0, aj - ai);
      H = std::min(C, C + aj - ai);
    } else {
      L = std::max(0.0, ai + aj - C);
      H = std::min(C, ai + aj);
    }
    if (H - L < eps) return false;
    const auto& Ki = K.row(i);
    const double kij = Ki[j];
    const double kii = Ki[i];
    const double kjj = K.row(j)[j];
    const double eta = 2.0 * kij - kii - kjj;
    if (eta >= 0.0) return false;
    double aj_new = std::clamp(aj - yj * (err[i] - err[j]) / eta, L, H);
    if (std::abs(aj_new - aj) < eps * (aj_new + aj + eps)) return false;
    double ai_new = ai + yi * yj * (aj - aj_new);
    auto snap = [C](double a) {
      if (a < 1e-12 * C) return 0.0;
      if (a > C * (1.0 - 1e-12)) return C;
      return a;
    };
    ai_new = snap(ai_new);
    aj_new = snap(aj_new);

    const double b1 = b - err[i] - yi * (ai_new - ai) * kii - yj * (aj_new - aj) * kij;
    const double b2 = b - err[j] - yi * (ai_new - ai) * kij - yj * (aj_new - aj) * kjj;
    double b_new;
    if (ai_new > 0.0 && ai_new < C) b_new = b1;
    else if (aj_new > 0.0 && aj_new < C) b_new = b2;
    else b_new = 0.5 * (b1 + b2);

    const double di = yi * (ai_new - ai);
    const double dj = yj * (aj_new - aj);
    const auto& Ri = K.row(i);
    std::vector<double> ri(Ri.begin(), Ri.end());
    const auto& Rj = K.row(j);
    for (std::size_t k = 0; k < n; ++k) err[k] += di * ri[k] + dj * Rj[k] + (b_new - b);
    alpha[i] = ai_new;
    alpha[j] = aj_new;
    b = b_new;
    return true;
  };

  SvmModel model;
  model.converged = false;
  int sweeps = 0;
  while (sweeps < cfg.max_passes) {
    std::size_t changed = 0;
    std::size_t violators = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!violates(i)) continue;
      ++violators;
      std::size_t j = rng.uniform_int(n - 1);
      if (j >= i) ++j;
      if (take_step(i, j)) {
        ++changed;
        continue;
      }
      const std::size_t start = rng.uniform_int(n);
      for (std::size_t t = 0; t < n; ++t) {
        const std::size_t jj = (start + t) % n;
        if (jj != i && take_step(i, jj)) {
          ++changed;
          break;
        }
      }
    }
    ++sweeps;
    if (violators == 0) {
      model.converged = true;
      break;
    }
    if (changed == 0) break;  // stuck: remaining violators admit no feasible step
  }

  model.gamma = gamma;
  model.bias = b;
  model.sweeps = sweeps;
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha[i] > 0.0) {
      model.support_vectors.push_back(X[i]);
      model.dual_coefs.push_back(alpha[i] * y[i]);
      model.support_indices.push_back(i);
    }
  }
  return model;
}

}  // namespace synthdetect
