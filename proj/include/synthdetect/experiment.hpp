#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "synthdetect/augment.hpp"
#include "synthdetect/checkpoint.hpp"
#include "synthdetect/config.hpp"
#include "synthdetect/dataset.hpp"
#include "synthdetect/eval.hpp"
#include "synthdetect/features.hpp"
#include "synthdetect/models.hpp"
#include "synthdetect/optim.hpp"
#include "synthdetect/svm.hpp"
#include "synthdetect/synthetic.hpp"

namespace synthdetect {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitInvalidConfig = 2;
inline constexpr int kExitDiverged = 3;

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

template <class F>
void write_with(const std::filesystem::path& path, F&& f) {
  std::ostringstream ss;
  f(ss);
  write_text_file(path, ss.str());
}

inline double quantize(double v) { return static_cast<double>(static_cast<float>(v)); }

inline std::string preprocess_tag(const ExperimentConfig& c) {
  switch (c.pipeline) {
    case Pipeline::SVM: return "gray32-hog";
    case Pipeline::CUSTOM_CNN: return "gray32-unit";
    default: return "rgb-crop" + std::to_string(c.aug.crop_size) + "-imagenet-norm";
  }
}

}  // namespace detail

// Test split only, sampled exactly as during training.
inline std::vector<ImageRecord> load_test_split(const ExperimentConfig& c) {
  if (c.synthetic) return synthetic_cifake(0, c.subset_test / 2, c.seed).test;
  const std::filesystem::path root(c.data_root);
  for (const char* label : {"FAKE", "REAL"}) {
    if (!std::filesystem::is_directory(root / "test" / label)) {
      throw StructuralError("dataset root is missing directory 'test/" + std::string(label) + "' under " + root.string());
    }
  }
  auto test = detail::ingest_split(root, "test");
  if (test.empty()) throw ArgumentError("test split under '" + root.string() + "' contains no images");
  if (c.subset_test > 0) test = stratified_subset(test, c.subset_test / 2, c.seed, "subset.test");
  return test;
}

inline DatasetSplit load_dataset(const ExperimentConfig& c) {
  if (c.synthetic) return synthetic_cifake(c.subset_train / 2, c.subset_test / 2, c.seed);
  DatasetSplit ds = ingest_cifake(c.data_root);
  if (c.subset_train > 0) ds.train = stratified_subset(ds.train, c.subset_train / 2, c.seed, "subset.train");
  if (c.subset_test > 0) ds.test = stratified_subset(ds.test, c.subset_test / 2, c.seed, "subset.test");
  return ds;
}

// ---- SVM pipeline pieces -------------------------------------------------

struct SvmBundle {
  HogConfig hog;
  ScalerState scaler;
  SvmModel svm;
};

inline std::vector<FeatureVector> hog_features(const std::vector<ImageRecord>& images, const HogConfig& hog) {
  std::vector<FeatureVector> rows;
  rows.reserve(images.size());
  for (const auto& img : images) rows.push_back(hog_extract(to_grayscale(img), hog));
  return rows;
}

inline int svm_target(Label l) { return l == Label::FAKE ? +1 : -1; }

// Values stored in a checkpoint are float32; the bundle is rounded to what
// will be persisted so that a reloaded model scores identically.
inline SvmBundle quantized(SvmBundle b) {
  for (auto& v : b.scaler.mean) v = detail::quantize(v);
  for (auto& v : b.scaler.std) v = detail::quantize(v);
  for (auto& sv : b.svm.support_vectors) {
    for (auto& v : sv) v = detail::quantize(v);
  }
  for (auto& v : b.svm.dual_coefs) v = detail::quantize(v);
  b.svm.bias = detail::quantize(b.svm.bias);
  b.svm.gamma = detail::quantize(b.svm.gamma);
  return b;
}

inline std::vector<double> svm_scores(const SvmBundle& b, const std::vector<ImageRecord>& images) {
  std::vector<double> s;
  s.reserve(images.size());
  for (const auto& f : hog_features(images, b.hog)) s.push_back(decision_score(b.svm, scaler_apply(b.scaler, f)));
  return s;
}

inline std::vector<ParamBlock> svm_blocks(const SvmBundle& b) {
  auto to_f = [](const std::vector<double>& v) { return std::vector<float>(v.begin(), v.end()); };
  const std::size_t d = b.scaler.dim();
  std::vector<float> sv;
  for (const auto& row : b.svm.support_vectors) sv.insert(sv.end(), row.begin(), row.end());
  return {
      {"scaler.mean", {d}, to_f(b.scaler.mean)},
      {"scaler.std", {d}, to_f(b.scaler.std)},
      {"svm.support_vectors", {b.svm.support_vectors.size(), d}, std::move(sv)},
      {"svm.dual_coefs", {b.svm.dual_coefs.size()}, to_f(b.svm.dual_coefs)},
      {"svm.bias", {1}, {static_cast<float>(b.svm.bias)}},
      {"svm.gamma", {1}, {static_cast<float>(b.svm.gamma)}},
  };
}

inline SvmBundle svm_from_checkpoint(const Checkpoint& ck, const HogConfig& hog) {
  auto get = [&](const char* name) -> const ParamBlock& {
    const ParamBlock* b = ck.find(name);
    if (!b) throw ContractError(std::string("checkpoint has no '") + name + "' block; is it an SVM checkpoint?");
    return *b;
  };
  SvmBundle b;
  b.hog = hog;
  const auto& mean = get("scaler.mean");
  const auto& sd = get("scaler.std");
  const auto& sv = get("svm.support_vectors");
  const auto& coefs = get("svm.dual_coefs");
  const auto& bias = get("svm.bias");
  const auto& gamma = get("svm.gamma");
  const std::size_t d = mean.data.size();
  if (mean.shape.size() != 1 || sd.shape != mean.shape || sv.shape.size() != 2 || sv.shape[1] != d ||
      coefs.shape != Shape{sv.shape[0]} || bias.data.size() != 1 || gamma.data.size() != 1) {
    throw ContractError("SVM checkpoint blocks have inconsistent shapes");
  }
  if (d != hog.descriptor_size(kImageSide, kImageSide)) {
    throw ContractError("SVM checkpoint expects " + std::to_string(d) + " features, HOG settings give " +
                        std::to_string(hog.descriptor_size(kImageSide, kImageSide)));
  }
  b.scaler.mean.assign(mean.data.begin(), mean.data.end());
  b.scaler.std.assign(sd.data.begin(), sd.data.end());
  for (std::size_t i = 0; i < sv.shape[0]; ++i) {
    b.svm.support_vectors.emplace_back(sv.data.begin() + static_cast<std::ptrdiff_t>(i * d),
                                       sv.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
  }
  b.svm.dual_coefs.assign(coefs.data.begin(), coefs.data.end());
  b.svm.bias = bias.data[0];
  b.svm.gamma = gamma.data[0];
  return b;
}

// ---- artifacts -----------------------------------------------------------

struct RunResult {
  int exit_code = kExitOk;
  std::string message;
  std::optional<Evaluation> evaluation;
  TrainLog log;
};

inline std::string report_title(Pipeline p) { return "Classification report: " + std::string(pipeline_name(p)); }

inline void write_evaluation(const std::filesystem::path& dir, Pipeline p, const Evaluation& e,
                             std::span<const double> scores, std::span<const Label> truth) {
  detail::write_with(dir / "report.txt", [&](std::ostream& o) { write_report_text(o, e.report, report_title(p)); });
  detail::write_with(dir / "report.kv", [&](std::ostream& o) {
    o << "pipeline=" << pipeline_name(p) << "\n";
    write_report_kv(o, e.report);
  });
  detail::write_with(dir / "confusion.csv", [&](std::ostream& o) { write_confusion_csv(o, e.cm); });
  detail::write_with(dir / "scores.csv", [&](std::ostream& o) { write_scores_csv(o, scores, truth); });
  if (e.roc) detail::write_with(dir / "roc.csv", [&](std::ostream& o) { write_roc_csv(o, *e.roc); });
  if (e.pr) detail::write_with(dir / "pr.csv", [&](std::ostream& o) { write_pr_csv(o, *e.pr); });
}

inline std::map<std::string, std::string> checkpoint_metadata(const ExperimentConfig& c, std::size_t epochs,
                                                              const ClassificationReport& r) {
  std::map<std::string, std::string> meta;
  for (const auto& [k, v] : config_to_kv(c)) {
    if (k != "out.dir" && k != "data.root") meta["config." + k] = v;
  }
  meta["epoch"] = std::to_string(epochs);
  meta["preprocess"] = detail::preprocess_tag(c);
  meta["metrics.accuracy"] = detail::exact(r.accuracy);
  meta["metrics.roc_auc"] = r.roc_auc ? detail::exact(*r.roc_auc) : "undefined";
  meta["metrics.pr_auc"] = r.pr_auc ? detail::exact(*r.pr_auc) : "undefined";
  return meta;
}

inline ExperimentConfig config_from_checkpoint(const Checkpoint& ck) {
  KeyValues kv;
  for (const auto& [k, v] : ck.metadata) {
    if (k.rfind("config.", 0) == 0) kv[k.substr(7)] = v;
  }
  if (kv.empty()) throw ContractError("checkpoint carries no configuration snapshot");
  return config_from_kv(kv);
}

inline std::vector<Label> labels_of(const std::vector<ImageRecord>& images) {
  std::vector<Label> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(img.label);
  return out;
}

inline std::vector<double> model_scores(Model<float>& model, const ExperimentConfig& c,
                                        const std::vector<ImageRecord>& images) {
  if (c.pipeline == Pipeline::CUSTOM_CNN) {
    GrayImageSource<float> src(images);
    if (src.sample_shape() != model.input_shape()) {
      throw ContractError("images of shape " + shape_str(src.sample_shape()) + " do not fit model input " +
                          shape_str(model.input_shape()));
    }
    return predict_all(model, src).scores;
  }
  AugmentedImageSource<float> src(std::make_shared<const std::vector<ImageRecord>>(images), c.aug, c.train.seed);
  return predict_all(model, src).scores;
}

// Trains the configured pipeline, evaluates on the test split and writes every
// artifact into c.out_dir.
inline RunResult run_experiment(const ExperimentConfig& c, std::ostream* progress = nullptr) {
  RunResult result;
  const std::filesystem::path dir(c.out_dir);
  std::filesystem::create_directories(dir);
  detail::write_with(dir / "config.txt", [&](std::ostream& o) { write_key_values(o, config_to_kv(c)); });

  const DatasetSplit data = load_dataset(c);
  if (data.train.empty()) throw ArgumentError("training split is empty");
  if (data.test.empty()) throw ArgumentError("test split is empty");
  const auto truth = labels_of(data.test);

  Checkpoint ck;
  std::vector<double> scores;
  double threshold = 0.5;
  std::size_t epochs = 0;

  if (c.pipeline == Pipeline::SVM) {
    std::vector<ImageRecord> train = data.train;
    if (train.size() > c.svm_train_cap) train = stratified_subset(train, c.svm_train_cap / 2, c.seed, "svm.cap");
    if (progress) *progress << "extracting HOG features for " << train.size() << " training images" << std::endl;
    const auto raw = hog_features(train, c.hog);
    SvmBundle b;
    b.hog = c.hog;
    b.scaler = scaler_fit(raw);
    std::vector<FeatureVector> X;
    X.reserve(raw.size());
    for (const auto& f : raw) X.push_back(scaler_apply(b.scaler, f));
    std::vector<int> y;
    for (const auto& img : train) y.push_back(svm_target(img.label));
    if (progress) *progress << "training SVM (SMO)" << std::endl;
    b.svm = smo_train(X, y, c.svm);
    const int sweeps = b.svm.sweeps;
    const bool converged = b.svm.converged;
    const std::size_t n_sv = b.svm.support_vectors.size();
    b = quantized(std::move(b));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < X.size(); ++i) correct += predict(b.svm, X[i]) == y[i];
    detail::write_with(dir / "train_log.csv", [&](std::ostream& o) {
      o << "sweeps,converged,support_vectors,train_acc\n";
      o << sweeps << ',' << (converged ? 1 : 0) << ',' << n_sv << ','
        << detail::format_real(static_cast<double>(correct) / static_cast<double>(X.size())) << "\n";
    });
    scores = svm_scores(b, data.test);
    threshold = 0.0;
    ck.blocks = svm_blocks(b);
  } else {
    Model<float> model(c.model, c.train.seed);
    std::unique_ptr<SampleSource<float>> train_src, test_src;
    if (c.pipeline == Pipeline::CUSTOM_CNN) {
      train_src = std::make_unique<GrayImageSource<float>>(data.train);
      test_src = std::make_unique<GrayImageSource<float>>(data.test);
    } else {
      train_src = std::make_unique<AugmentedImageSource<float>>(
          std::make_shared<const std::vector<ImageRecord>>(data.train), c.aug, c.train.seed);
      test_src = std::make_unique<AugmentedImageSource<float>>(
          std::make_shared<const std::vector<ImageRecord>>(data.test), c.aug, c.train.seed);
    }
    result.log = train(model, *train_src, test_src.get(), c.train, progress);
    detail::write_with(dir / "train_log.csv", [&](std::ostream& o) { write_train_log(o, result.log); });
    if (result.log.status == TrainStatus::DIVERGED) {
      result.exit_code = kExitDiverged;
      result.message = "training diverged (non-finite loss) after " + std::to_string(result.log.records.size()) +
                       " completed epochs";
      return result;
    }
    epochs = result.log.records.size();
    scores = predict_all(model, *test_src).scores;
    ck.blocks = model_blocks(model);
  }

  Evaluation e = evaluate_scores(scores, truth, threshold);
  write_evaluation(dir, c.pipeline, e, scores, truth);
  ck.metadata = checkpoint_metadata(c, epochs, e.report);
  save_checkpoint(dir / "model.ckpt", ck);
  result.evaluation = std::move(e);
  return result;
}

// Recomputes test-split artifacts from a checkpoint. `data_root` (when given)
// replaces the snapshot's dataset root.
inline Evaluation evaluate_checkpoint(const std::filesystem::path& ckpt, const std::optional<std::string>& data_root,
                                      const std::filesystem::path& out_dir) {
  const Checkpoint ck = load_checkpoint(ckpt);
  ExperimentConfig c = config_from_checkpoint(ck);
  if (data_root) {
    c.data_root = *data_root;
    c.synthetic = false;
  }
  const auto tag = ck.metadata.find("preprocess");
  if (tag == ck.metadata.end() || tag->second != detail::preprocess_tag(c)) {
    throw ContractError("checkpoint preprocessing '" + (tag == ck.metadata.end() ? std::string("?") : tag->second) +
                        "' does not match pipeline " + std::string(pipeline_name(c.pipeline)));
  }
  const auto test = load_test_split(c);
  if (test.empty()) throw ArgumentError("test split under '" + c.data_root + "' contains no images");
  for (const auto& img : test) {
    if (c.pipeline != Pipeline::SVM && c.pipeline != Pipeline::CUSTOM_CNN && img.channels != 3) {
      throw ContractError("pipeline " + std::string(pipeline_name(c.pipeline)) + " needs RGB images; '" + img.path +
                          "' has one channel");
    }
  }
  std::vector<double> scores;
  double threshold = 0.5;
  if (c.pipeline == Pipeline::SVM) {
    scores = svm_scores(svm_from_checkpoint(ck, c.hog), test);
    threshold = 0.0;
  } else {
    Model<float> model(c.model, c.train.seed);
    load_model_blocks(model, ck);
    scores = model_scores(model, c, test);
  }
  const auto truth = labels_of(test);
  Evaluation e = evaluate_scores(scores, truth, threshold);
  std::filesystem::create_directories(out_dir);
  write_evaluation(out_dir, c.pipeline, e, scores, truth);
  return e;
}

// Re-renders report.txt and report.kv from confusion.csv and scores.csv.
inline ClassificationReport rerender_report(const std::filesystem::path& dir) {
  std::ifstream cm_in(dir / "confusion.csv");
  if (!cm_in) throw IoError("cannot open '" + (dir / "confusion.csv").string() + "'");
  const ConfusionMatrix cm = read_confusion_csv(cm_in);
  ClassificationReport r = classification_report(cm);
  std::ifstream sc_in(dir / "scores.csv");
  if (sc_in) {
    std::vector<double> scores;
    std::vector<Label> truth;
    read_scores_csv(sc_in, scores, truth);
    std::uint64_t pos = 0;
    for (Label l : truth) pos += l == Label::FAKE;
    if (pos > 0 && pos < truth.size()) r.roc_auc = roc_curve(scores, truth).auc;
    if (pos > 0) r.pr_auc = pr_auc(scores, truth);
  }
  std::string pipeline = "?";
  std::ifstream kv_in(dir / "report.kv");
  std::string line;
  while (kv_in && std::getline(kv_in, line)) {
    if (line.rfind("pipeline=", 0) == 0) pipeline = line.substr(9);
  }
  detail::write_with(dir / "report.txt",
                     [&](std::ostream& o) { write_report_text(o, r, "Classification report: " + pipeline); });
  detail::write_with(dir / "report.kv", [&](std::ostream& o) {
    o << "pipeline=" << pipeline << "\n";
    write_report_kv(o, r);
  });
  return r;
}

}  // namespace synthdetect
