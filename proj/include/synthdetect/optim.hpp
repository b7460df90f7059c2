#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "synthdetect/error.hpp"
#include "synthdetect/models.hpp"
#include "synthdetect/ops.hpp"
#include "synthdetect/rng.hpp"
#include "synthdetect/tensor.hpp"

namespace synthdetect {

template <class T>
struct AdamState {
  static constexpr double beta1 = 0.9;
  static constexpr double beta2 = 0.999;
  static constexpr double eps = 1e-8;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t t = 0;
};

// One bias-corrected Adam update over `params` using their accumulated grads.
template <class T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state, double lr) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), T(0));
      state.v.emplace_back(p.numel(), T(0));
    }
  }
  if (state.m.size() != params.size()) throw StateError("adam_step: parameter list changed between steps");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].requires_grad() || params[k].grad().size() != params[k].numel()) {
      throw StateError("adam_step: parameter " + std::to_string(k) + " has no gradient");
    }
    if (state.m[k].size() != params[k].numel()) throw StateError("adam_step: parameter shape changed");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(AdamState<T>::beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(AdamState<T>::beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(AdamState<T>::beta1), b2 = static_cast<T>(AdamState<T>::beta2);
  const T step = static_cast<T>(lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(AdamState<T>::eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k].data();
    auto g = params[k].grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      w[i] -= step * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
    }
  }
}

struct StepLrSchedule {
  double base_lr = 0.001;
  int step_size = 10;
  double gamma = 0.1;
};

// base_lr * gamma^floor(epoch / step_size)
inline double step_lr(const StepLrSchedule& s, int epoch) {
  if (epoch < 0) throw ArgumentError("step_lr: epoch must be >= 0");
  return s.base_lr * std::pow(s.gamma, epoch / s.step_size);
}

struct TrainConfig {
  int epochs = 25;
  std::size_t batch_size = 64;
  double lr = 0.01;
  std::optional<StepLrSchedule> schedule;
  std::uint64_t seed = 0;
  int eval_every = 1;
  bool record_wall_time = false;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> test_acc;
  std::optional<double> seconds;
};

enum class TrainStatus { OK, DIVERGED };

struct TrainLog {
  std::vector<EpochRecord> records;
  TrainStatus status = TrainStatus::OK;
};

namespace detail {

inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace detail

// epoch,lr,train_loss,train_acc,test_acc,seconds; empty cells where a value
// was not measured.
inline void write_train_log(std::ostream& out, const TrainLog& log) {
  out << "epoch,lr,train_loss,train_acc,test_acc,seconds\n";
  for (const auto& r : log.records) {
    out << r.epoch << ',' << detail::format_real(r.lr) << ',' << detail::format_real(r.train_loss) << ','
        << detail::format_real(r.train_acc) << ',' << (r.test_acc ? detail::format_real(*r.test_acc) : "") << ','
        << (r.seconds ? detail::format_real(*r.seconds) : "") << '\n';
  }
}

// Random-access view over labelled samples of a fixed shape. Targets are 1 for
// the positive (FAKE) class and 0 otherwise. `fill` writes sample i as it
// should be seen in `epoch`; train-time augmentation may depend on
// (epoch, i) but never on call order.
template <class T>
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual Shape sample_shape() const = 0;
  virtual int target(std::size_t i) const = 0;
  virtual void fill(std::size_t i, std::uint64_t epoch, bool train, std::span<T> out) const = 0;
};

// In-memory feature rows.
template <class T>
class VectorSource : public SampleSource<T> {
 public:
  VectorSource(std::vector<std::vector<T>> rows, std::vector<int> targets, Shape shape = {})
      : rows_(std::move(rows)), targets_(std::move(targets)), shape_(std::move(shape)) {
    if (rows_.size() != targets_.size()) throw ArgumentError("VectorSource: rows and targets differ in length");
    if (shape_.empty() && !rows_.empty()) shape_ = {rows_.front().size()};
  }
  std::size_t size() const override { return rows_.size(); }
  Shape sample_shape() const override { return shape_; }
  int target(std::size_t i) const override { return targets_[i]; }
  void fill(std::size_t i, std::uint64_t, bool, std::span<T> out) const override {
    std::copy(rows_[i].begin(), rows_[i].end(), out.begin());
  }

 private:
  std::vector<std::vector<T>> rows_;
  std::vector<int> targets_;
  Shape shape_;
};

template <class T>
struct Batch {
  Tensor<T> input;
  std::vector<int> targets;
};

template <class T>
Batch<T> make_batch(const SampleSource<T>& src, std::span<const std::size_t> indices, std::uint64_t epoch, bool train) {
  Shape shape{indices.size()};
  const Shape s = src.sample_shape();
  shape.insert(shape.end(), s.begin(), s.end());
  const std::size_t per = shape_numel(s);
  std::vector<T> data(indices.size() * per);
  Batch<T> b;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    src.fill(indices[k], epoch, train, std::span<T>(data.data() + k * per, per));
    b.targets.push_back(src.target(indices[k]));
  }
  b.input = Tensor<T>::from(std::move(shape), std::move(data));
  return b;
}

// Probability of the positive class per sample from forward_logits output.
template <class T>
std::vector<double> positive_scores(const Tensor<T>& logits, OutputKind kind) {
  const std::size_t N = logits.dim(0);
  std::vector<double> s(N);
  const auto d = logits.data();
  if (kind == OutputKind::PROBABILITY) {
    for (std::size_t n = 0; n < N; ++n) s[n] = static_cast<double>(T(1) / (T(1) + std::exp(-d[n])));
    return s;
  }
  const std::size_t K = logits.dim(1);
  for (std::size_t n = 0; n < N; ++n) {
    const T* row = d.data() + n * K;
    double mx = row[0];
    for (std::size_t k = 1; k < K; ++k) mx = std::max<double>(mx, row[k]);
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) sum += std::exp(row[k] - mx);
    s[n] = std::exp(row[1 % K] - mx) / sum;
  }
  return s;
}

// Positive class index 1 for logits; threshold 0.5 for probabilities.
inline int decide(double positive_score) { return positive_score >= 0.5 ? 1 : 0; }

// Loss on forward_logits output: fused sigmoid + binary cross-entropy for a
// probability head, softmax cross-entropy otherwise.
template <class T>
Tensor<T> model_loss(const Model<T>& model, const Tensor<T>& logits, const std::vector<int>& targets) {
  if (model.output() == OutputKind::PROBABILITY) {
    std::vector<T> t(targets.begin(), targets.end());
    return binary_cross_entropy_with_logits(logits, std::span<const T>(t));
  }
  return softmax_cross_entropy(logits, std::span<const int>(targets));
}

struct Predictions {
  std::vector<double> scores;  // positive-class probability
  std::vector<int> targets;
};

// EVAL-mode pass over a source in index order.
template <class T>
Predictions predict_all(Model<T>& model, const SampleSource<T>& src, std::size_t batch_size = 256) {
  const Mode saved = model.mode();
  model.set_mode(Mode::EVAL);
  Predictions p;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < src.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(src.size(), start + batch_size); ++i) idx.push_back(i);
    auto batch = make_batch(src, std::span<const std::size_t>(idx), 0, false);
    auto out = model.forward_logits(batch.input);
    auto s = positive_scores(out, model.output());
    p.scores.insert(p.scores.end(), s.begin(), s.end());
    p.targets.insert(p.targets.end(), batch.targets.begin(), batch.targets.end());
  }
  model.set_mode(saved);
  return p;
}

inline double accuracy_of(const Predictions& p) {
  if (p.scores.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < p.scores.size(); ++i) correct += decide(p.scores[i]) == p.targets[i];
  return static_cast<double>(correct) / static_cast<double>(p.scores.size());
}

// Seeded Fisher-Yates permutation, one independent stream per epoch.
inline std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  RngStream rng(seed, "shuffle", epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform_int(i)]);
  return perm;
}

// Mini-batch Adam training. The last partial batch is kept, so each epoch
// takes ceil(N / batch_size) steps. On a non-finite loss the run stops with
// status DIVERGED and the records gathered so far. The model is left in EVAL
// mode.
template <class T>
TrainLog train(Model<T>& model, const SampleSource<T>& train_data, const SampleSource<T>* test_data,
               const TrainConfig& cfg, std::ostream* progress = nullptr) {
  if (train_data.size() == 0) throw ArgumentError("train: training data is empty");
  if (cfg.epochs < 1) throw ArgumentError("train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw ArgumentError("train: batch_size must be >= 1");
  if (train_data.sample_shape() != model.input_shape()) {
    throw ContractError("train: samples of shape " + shape_str(train_data.sample_shape()) +
                        " do not match model input " + shape_str(model.input_shape()));
  }
  TrainLog log;
  AdamState<T> adam;
  auto params = model.parameters();
  const std::size_t n = train_data.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = cfg.schedule ? step_lr(*cfg.schedule, epoch) : cfg.lr;
    const auto perm = epoch_permutation(n, cfg.seed, static_cast<std::uint64_t>(epoch));
    model.set_mode(Mode::TRAIN);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    bool diverged = false;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      auto batch = make_batch(train_data, std::span<const std::size_t>(perm.data() + start, stop - start),
                              static_cast<std::uint64_t>(epoch), true);
      model.zero_grad();
      auto out = model.forward_logits(batch.input);
      auto loss = model_loss(model, out, batch.targets);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        diverged = true;
        break;
      }
      backward(loss);
      adam_step(std::span<Tensor<T>>(params), adam, lr);
      loss_sum += lv * static_cast<double>(stop - start);
      const auto s = positive_scores(out, model.output());
      for (std::size_t k = 0; k < s.size(); ++k) correct += decide(s[k]) == batch.targets[k];
    }
    if (diverged) {
      log.status = TrainStatus::DIVERGED;
      break;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    const bool eval_now = test_data && test_data->size() > 0 && cfg.eval_every > 0 &&
                          ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs);
    if (eval_now) rec.test_acc = accuracy_of(predict_all(model, *test_data));
    if (cfg.record_wall_time) {
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
    if (progress) {
      *progress << "epoch " << epoch << " lr " << lr << " loss " << rec.train_loss << " train_acc " << rec.train_acc;
      if (rec.test_acc) *progress << " test_acc " << *rec.test_acc;
      *progress << std::endl;
    }
    log.records.push_back(rec);
  }
  model.set_mode(Mode::EVAL);
  return log;
}

}  // namespace synthdetect
