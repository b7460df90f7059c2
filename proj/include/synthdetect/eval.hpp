#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "synthdetect/error.hpp"
#include "synthdetect/image.hpp"

namespace synthdetect {

inline constexpr std::size_t label_index(Label l) { return l == Label::FAKE ? 0 : 1; }

struct ConfusionMatrix {
  // counts[actual][predicted], FAKE first.
  std::array<std::array<std::uint64_t, 2>, 2> counts{};

  std::uint64_t& at(Label actual, Label predicted) { return counts[label_index(actual)][label_index(predicted)]; }
  std::uint64_t at(Label actual, Label predicted) const { return counts[label_index(actual)][label_index(predicted)]; }
  std::uint64_t total() const { return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1]; }
  std::uint64_t correct() const { return counts[0][0] + counts[1][1]; }

  bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix make_confusion(std::uint64_t ff, std::uint64_t fr, std::uint64_t rf, std::uint64_t rr) {
  ConfusionMatrix cm;
  cm.counts = {{{ff, fr}, {rf, rr}}};
  return cm;
}

inline ConfusionMatrix confusion(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size()) {
    throw ArgumentError("confusion: " + std::to_string(predicted.size()) + " predictions for " +
                        std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) throw ArgumentError("confusion: no samples");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) ++cm.at(truth[i], predicted[i]);
  return cm;
}

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t support = 0;
  bool precision_undefined = false;  // no predictions of this class; precision reported as 0
  bool recall_undefined = false;     // no actual samples of this class; recall reported as 0
};

struct ClassificationReport {
  std::array<ClassMetrics, 2> per_class;  // FAKE, REAL
  double accuracy = 0.0;
  std::uint64_t total = 0;
  std::optional<double> roc_auc;
  std::optional<double> pr_auc;

  const ClassMetrics& of(Label l) const { return per_class[label_index(l)]; }
};

inline ClassificationReport classification_report(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ArgumentError("classification_report: empty confusion matrix");
  ClassificationReport r;
  r.total = cm.total();
  r.accuracy = static_cast<double>(cm.correct()) / static_cast<double>(cm.total());
  for (std::size_t c = 0; c < 2; ++c) {
    ClassMetrics m;
    const std::uint64_t tp = cm.counts[c][c];
    const std::uint64_t predicted = cm.counts[0][c] + cm.counts[1][c];
    const std::uint64_t actual = cm.counts[c][0] + cm.counts[c][1];
    m.support = actual;
    if (predicted == 0) {
      m.precision_undefined = true;
    } else {
      m.precision = static_cast<double>(tp) / static_cast<double>(predicted);
    }
    if (actual == 0) {
      m.recall_undefined = true;
    } else {
      m.recall = static_cast<double>(tp) / static_cast<double>(actual);
    }
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    r.per_class[c] = m;
  }
  return r;
}

struct RocCurve {
  std::vector<double> fpr;
  std::vector<double> tpr;
  std::vector<double> thresholds;  // thresholds[0] = +inf for the (0, 0) point
  double auc = 0.0;
};

struct PrCurve {
  std::vector<double> recall;
  std::vector<double> precision;
  std::vector<double> thresholds;  // thresholds[0] = +inf for the (0, 1) anchor
  double ap = 0.0;
};

namespace detail {

struct ThresholdCounts {
  double threshold;
  std::uint64_t tp;
  std::uint64_t fp;
};

// Cumulative (tp, fp) when predicting positive for score >= threshold, one
// entry per distinct score, thresholds descending.
inline std::vector<ThresholdCounts> sweep(std::span<const double> scores, std::span<const Label> truth, Label positive,
                                          std::uint64_t& n_pos, std::uint64_t& n_neg) {
  if (scores.size() != truth.size()) throw ArgumentError("scores and labels differ in length");
  for (double s : scores) {
    if (!std::isfinite(s)) throw ArgumentError("scores must be finite");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  n_pos = 0;
  n_neg = 0;
  for (Label l : truth) (l == positive ? n_pos : n_neg) += 1;
  std::vector<ThresholdCounts> out;
  std::uint64_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    while (k < order.size() && scores[order[k]] == s) {
      (truth[order[k]] == positive ? tp : fp) += 1;
      ++k;
    }
    out.push_back({s, tp, fp});
  }
  return out;
}

}  // namespace detail

inline RocCurve roc_curve(std::span<const double> scores, std::span<const Label> truth, Label positive = Label::FAKE) {
  std::uint64_t n_pos = 0, n_neg = 0;
  const auto pts = detail::sweep(scores, truth, positive, n_pos, n_neg);
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("ROC-AUC is undefined when only one class is present");
  RocCurve c;
  c.fpr.push_back(0.0);
  c.tpr.push_back(0.0);
  c.thresholds.push_back(std::numeric_limits<double>::infinity());
  const double P = static_cast<double>(n_pos), N = static_cast<double>(n_neg);
  double area = 0.0;
  std::uint64_t prev_tp = 0, prev_fp = 0;
  for (const auto& p : pts) {
    area += static_cast<double>(p.fp - prev_fp) * static_cast<double>(p.tp + prev_tp) / 2.0;
    prev_tp = p.tp;
    prev_fp = p.fp;
    c.fpr.push_back(static_cast<double>(p.fp) / N);
    c.tpr.push_back(static_cast<double>(p.tp) / P);
    c.thresholds.push_back(p.threshold);
  }
  c.auc = area / (P * N);
  return c;
}

inline RocCurve roc_auc(std::span<const double> scores, std::span<const Label> truth, Label positive = Label::FAKE) {
  return roc_curve(scores, truth, positive);
}

// Average precision: sum over thresholds of (R_k - R_{k-1}) * P_k.
inline PrCurve pr_curve(std::span<const double> scores, std::span<const Label> truth, Label positive = Label::FAKE) {
  std::uint64_t n_pos = 0, n_neg = 0;
  const auto pts = detail::sweep(scores, truth, positive, n_pos, n_neg);
  if (n_pos == 0) throw UndefinedMetricError("PR-AUC is undefined without positive samples");
  PrCurve c;
  c.recall.push_back(0.0);
  c.precision.push_back(1.0);
  c.thresholds.push_back(std::numeric_limits<double>::infinity());
  const double P = static_cast<double>(n_pos);
  double prev_recall = 0.0;
  for (const auto& p : pts) {
    const double recall = static_cast<double>(p.tp) / P;
    const double precision = static_cast<double>(p.tp) / static_cast<double>(p.tp + p.fp);
    c.ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    c.recall.push_back(recall);
    c.precision.push_back(precision);
    c.thresholds.push_back(p.threshold);
  }
  return c;
}

inline double pr_auc(std::span<const double> scores, std::span<const Label> truth, Label positive = Label::FAKE) {
  return pr_curve(scores, truth, positive).ap;
}

// Confusion matrix, report and curves from positive-class scores; a score at
// or above `threshold` predicts FAKE.
struct Evaluation {
  ConfusionMatrix cm;
  ClassificationReport report;
  std::optional<RocCurve> roc;
  std::optional<PrCurve> pr;
};

inline Evaluation evaluate_scores(std::span<const double> scores, std::span<const Label> truth, double threshold) {
  std::vector<Label> pred(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] >= threshold ? Label::FAKE : Label::REAL;
  Evaluation e;
  e.cm = confusion(pred, truth);
  e.report = classification_report(e.cm);
  const bool both = e.cm.at(Label::FAKE, Label::FAKE) + e.cm.at(Label::FAKE, Label::REAL) > 0 &&
                    e.cm.at(Label::REAL, Label::FAKE) + e.cm.at(Label::REAL, Label::REAL) > 0;
  if (both) {
    e.roc = roc_curve(scores, truth);
    e.report.roc_auc = e.roc->auc;
  }
  if (e.cm.at(Label::FAKE, Label::FAKE) + e.cm.at(Label::FAKE, Label::REAL) > 0) {
    e.pr = pr_curve(scores, truth);
    e.report.pr_auc = e.pr->ap;
  }
  return e;
}

namespace detail {

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string pad_left(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : std::string(w - s.size(), ' ') + s;
}

inline std::string pad_right(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

}  // namespace detail

// Aligned table: class, precision, recall, f1-score, support; then accuracy
// and the threshold-free scores. Values at 2 decimals.
inline void write_report_text(std::ostream& out, const ClassificationReport& r, const std::string& title) {
  out << title << "\n";
  out << "positive class: FAKE\n\n";
  out << detail::pad_right("", 10) << detail::pad_left("precision", 11) << detail::pad_left("recall", 9)
      << detail::pad_left("f1-score", 10) << detail::pad_left("support", 10) << "\n";
  for (Label l : {Label::FAKE, Label::REAL}) {
    const auto& m = r.of(l);
    std::string p = detail::fixed(m.precision, 2);
    if (m.precision_undefined) p += "*";
    out << detail::pad_right(std::string(label_name(l)), 10) << detail::pad_left(p, 11)
        << detail::pad_left(detail::fixed(m.recall, 2), 9) << detail::pad_left(detail::fixed(m.f1, 2), 10)
        << detail::pad_left(std::to_string(m.support), 10) << "\n";
  }
  out << "\n"
      << detail::pad_right("accuracy", 10) << detail::pad_left("", 20) << detail::pad_left(detail::fixed(r.accuracy, 2), 10)
      << detail::pad_left(std::to_string(r.total), 10) << "\n";
  out << "roc_auc   " << (r.roc_auc ? detail::fixed(*r.roc_auc, 4) : std::string("undefined")) << "\n";
  out << "pr_auc    " << (r.pr_auc ? detail::fixed(*r.pr_auc, 4) : std::string("undefined")) << "\n";
  if (r.of(Label::FAKE).precision_undefined || r.of(Label::REAL).precision_undefined) {
    out << "* no predictions for this class; precision reported as 0\n";
  }
}

inline void write_report_kv(std::ostream& out, const ClassificationReport& r) {
  out << "positive_class=FAKE\n";
  out << "accuracy=" << detail::exact(r.accuracy) << "\n";
  out << "total=" << r.total << "\n";
  for (Label l : {Label::FAKE, Label::REAL}) {
    const auto& m = r.of(l);
    const std::string k(label_name(l));
    out << k << ".precision=" << detail::exact(m.precision) << "\n";
    out << k << ".precision_undefined=" << (m.precision_undefined ? 1 : 0) << "\n";
    out << k << ".recall=" << detail::exact(m.recall) << "\n";
    out << k << ".recall_undefined=" << (m.recall_undefined ? 1 : 0) << "\n";
    out << k << ".f1=" << detail::exact(m.f1) << "\n";
    out << k << ".support=" << m.support << "\n";
  }
  out << "roc_auc=" << (r.roc_auc ? detail::exact(*r.roc_auc) : std::string("undefined")) << "\n";
  out << "pr_auc=" << (r.pr_auc ? detail::exact(*r.pr_auc) : std::string("undefined")) << "\n";
}

inline void write_confusion_csv(std::ostream& out, const ConfusionMatrix& cm) {
  out << "actual,predicted_FAKE,predicted_REAL\n";
  out << "FAKE," << cm.counts[0][0] << ',' << cm.counts[0][1] << "\n";
  out << "REAL," << cm.counts[1][0] << ',' << cm.counts[1][1] << "\n";
}

inline ConfusionMatrix read_confusion_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "actual,predicted_FAKE,predicted_REAL") {
    throw FormatError("confusion csv: unexpected header");
  }
  ConfusionMatrix cm;
  for (Label l : {Label::FAKE, Label::REAL}) {
    if (!std::getline(in, line)) throw FormatError("confusion csv: missing row " + std::string(label_name(l)));
    std::istringstream row(line);
    std::string name, a, b;
    if (!std::getline(row, name, ',') || !std::getline(row, a, ',') || !std::getline(row, b) ||
        name != label_name(l)) {
      throw FormatError("confusion csv: malformed row '" + line + "'");
    }
    try {
      std::size_t pa = 0, pb = 0;
      cm.at(l, Label::FAKE) = std::stoull(a, &pa);
      cm.at(l, Label::REAL) = std::stoull(b, &pb);
      if (pa != a.size() || pb != b.size()) throw FormatError("");
    } catch (const std::exception&) {
      throw FormatError("confusion csv: non-integer count in '" + line + "'");
    }
  }
  return cm;
}

inline void write_roc_csv(std::ostream& out, const RocCurve& c) {
  out << "fpr,tpr\n";
  for (std::size_t i = 0; i < c.fpr.size(); ++i) out << detail::exact(c.fpr[i]) << ',' << detail::exact(c.tpr[i]) << "\n";
}

inline void write_pr_csv(std::ostream& out, const PrCurve& c) {
  out << "recall,precision\n";
  for (std::size_t i = 0; i < c.recall.size(); ++i) {
    out << detail::exact(c.recall[i]) << ',' << detail::exact(c.precision[i]) << "\n";
  }
}

// One row per test sample: positive-class score and true label.
inline void write_scores_csv(std::ostream& out, std::span<const double> scores, std::span<const Label> truth) {
  out << "score,label\n";
  for (std::size_t i = 0; i < scores.size(); ++i) out << detail::exact(scores[i]) << ',' << label_name(truth[i]) << "\n";
}

inline void read_scores_csv(std::istream& in, std::vector<double>& scores, std::vector<Label>& truth) {
  std::string line;
  if (!std::getline(in, line) || line != "score,label") throw FormatError("scores csv: unexpected header");
  scores.clear();
  truth.clear();
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("scores csv: line " + std::to_string(lineno) + " has no comma");
    try {
      std::size_t pos = 0;
      const std::string num = line.substr(0, comma);
      scores.push_back(std::stod(num, &pos));
      if (pos != num.size()) throw FormatError("");
      truth.push_back(parse_label(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw FormatError("scores csv: malformed line " + std::to_string(lineno));
    }
  }
}

}  // namespace synthdetect
