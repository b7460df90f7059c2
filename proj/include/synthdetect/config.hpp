#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "synthdetect/augment.hpp"
#include "synthdetect/dataset.hpp"
#include "synthdetect/error.hpp"
#include "synthdetect/features.hpp"
#include "synthdetect/models.hpp"
#include "synthdetect/optim.hpp"
#include "synthdetect/svm.hpp"

namespace synthdetect {

enum class Pipeline { SVM, CUSTOM_CNN, TINY_RESNET, TINY_VGG, TINY_DENSENET };

inline std::string_view pipeline_name(Pipeline p) {
  switch (p) {
    case Pipeline::SVM: return "SVM";
    case Pipeline::CUSTOM_CNN: return "CUSTOM_CNN";
    case Pipeline::TINY_RESNET: return "TINY_RESNET";
    case Pipeline::TINY_VGG: return "TINY_VGG";
    case Pipeline::TINY_DENSENET: return "TINY_DENSENET";
  }
  return "?";
}

inline Pipeline parse_pipeline(std::string_view s) {
  for (auto p : {Pipeline::SVM, Pipeline::CUSTOM_CNN, Pipeline::TINY_RESNET, Pipeline::TINY_VGG, Pipeline::TINY_DENSENET}) {
    if (s == pipeline_name(p)) return p;
  }
  throw ConfigError("pipeline: unknown value '" + std::string(s) + "'");
}

inline ModelKind model_kind_of(Pipeline p) {
  switch (p) {
    case Pipeline::CUSTOM_CNN: return ModelKind::CUSTOM_CNN;
    case Pipeline::TINY_RESNET: return ModelKind::TINY_RESNET;
    case Pipeline::TINY_VGG: return ModelKind::TINY_VGG;
    case Pipeline::TINY_DENSENET: return ModelKind::TINY_DENSENET;
    case Pipeline::SVM: break;
  }
  throw ArgumentError("the SVM pipeline has no neural model");
}

inline bool uses_augmentation(Pipeline p) { return p != Pipeline::SVM && p != Pipeline::CUSTOM_CNN; }

using KeyValues = std::map<std::string, std::string>;

struct ExperimentConfig {
  Pipeline pipeline = Pipeline::CUSTOM_CNN;
  std::string data_root;
  bool synthetic = false;
  std::uint64_t seed = 0;
  std::size_t subset_train = 0;  // total images, split evenly per class; 0 = everything
  std::size_t subset_test = 0;
  std::string out_dir;

  HogConfig hog;
  SvmConfig svm;
  std::size_t svm_train_cap = 10000;

  ModelSpec model;
  TrainConfig train;
  AugmentConfig aug;
};

namespace detail {

inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::string join_reals(std::span<const double> v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_number(v[i]);
  return s;
}

inline std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Collects every field problem before failing.
class FieldReader {
 public:
  explicit FieldReader(const KeyValues& kv) : kv_(kv) {}

  bool has(const std::string& key) const { return kv_.count(key) > 0; }

  std::string text(const std::string& key, std::string fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
  }

  double real(const std::string& key, double fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    double v = 0.0;
    const auto& s = it->second;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
      problem(key, "expected a real number, got '" + s + "'");
      return fallback;
    }
    return v;
  }

  long long integer(const std::string& key, long long fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    long long v = 0;
    const auto& s = it->second;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
      problem(key, "expected an integer, got '" + s + "'");
      return fallback;
    }
    return v;
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    const long long v = integer(key, static_cast<long long>(fallback));
    if (v < 0) {
      problem(key, "must be >= 0");
      return fallback;
    }
    return static_cast<std::size_t>(v);
  }

  bool boolean(const std::string& key, bool fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    problem(key, "expected true or false, got '" + it->second + "'");
    return fallback;
  }

  std::vector<std::size_t> sizes(const std::string& key, std::vector<std::size_t> fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    std::vector<std::size_t> out;
    for (const auto& part : split_commas(it->second)) {
      std::size_t v = 0;
      auto res = std::from_chars(part.data(), part.data() + part.size(), v);
      if (part.empty() || res.ec != std::errc() || res.ptr != part.data() + part.size() || v == 0) {
        problem(key, "expected a comma-separated list of positive integers, got '" + it->second + "'");
        return fallback;
      }
      out.push_back(v);
    }
    return out;
  }

  std::array<double, 3> triple(const std::string& key, std::array<double, 3> fallback) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    const auto parts = split_commas(it->second);
    std::array<double, 3> out{};
    if (parts.size() != 3) {
      problem(key, "expected three comma-separated reals");
      return fallback;
    }
    for (std::size_t i = 0; i < 3; ++i) {
      auto res = std::from_chars(parts[i].data(), parts[i].data() + parts[i].size(), out[i]);
      if (res.ec != std::errc() || res.ptr != parts[i].data() + parts[i].size()) {
        problem(key, "expected three comma-separated reals");
        return fallback;
      }
    }
    return out;
  }

  void problem(const std::string& key, const std::string& what) { problems_.push_back(key + ": " + what); }
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  const KeyValues& kv_;
  std::vector<std::string> problems_;
};

inline const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "pipeline",        "data.root",       "data.synthetic",   "seed",           "subset.train",  "subset.test",
      "out.dir",         "hog.cell",        "hog.block",        "hog.stride",     "hog.bins",      "hog.signed",
      "svm.c",           "svm.gamma",       "svm.tol",          "svm.max_passes", "svm.train_cap", "model.head_classes",
      "model.stages",    "model.growth",    "model.dense_layers", "model.hidden", "train.epochs",  "train.batch_size",
      "train.lr",        "train.seed",      "train.eval_every", "sched.step_size", "sched.gamma",  "aug.crop",
      "aug.flip_prob",   "aug.mean",        "aug.std",          "log.wall_time"};
  return keys;
}

}  // namespace detail

// Flat `key=value` lines; '#' starts a comment. Later duplicates are errors.
inline KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    std::string key = detail::trim(std::string_view(t).substr(0, eq));
    std::string value = detail::trim(std::string_view(t).substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, value).second) throw ConfigError(key + ": given more than once (line " + std::to_string(lineno) + ")");
  }
  return kv;
}

inline std::string default_data_root() {
  const char* env = std::getenv("SYNTHDETECT_DATA");
  return env ? env : "";
}

// Typed config from key-values; missing keys take pipeline defaults. Throws
// ConfigError listing every invalid field.
inline ExperimentConfig config_from_kv(const KeyValues& kv) {
  std::vector<std::string> problems;
  for (const auto& [k, v] : kv) {
    bool known = false;
    for (const auto& name : detail::known_keys()) known = known || name == k;
    if (!known) problems.push_back(k + ": unknown key");
  }
  ExperimentConfig c;
  detail::FieldReader r(kv);
  try {
    c.pipeline = parse_pipeline(r.text("pipeline", "CUSTOM_CNN"));
  } catch (const ConfigError& e) {
    problems.push_back(e.what());
  }
  const Pipeline p = c.pipeline;
  const bool deep = uses_augmentation(p);

  c.data_root = r.text("data.root", default_data_root());
  c.synthetic = r.boolean("data.synthetic", false);
  c.seed = static_cast<std::uint64_t>(r.count("seed", 0));
  c.subset_train = r.count("subset.train", 0);
  c.subset_test = r.count("subset.test", 0);
  std::string lower(pipeline_name(p));
  for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  c.out_dir = r.text("out.dir", "runs/" + lower);

  if (p == Pipeline::SVM) {
    c.hog.cell_size = static_cast<int>(r.integer("hog.cell", c.hog.cell_size));
    c.hog.block_size = static_cast<int>(r.integer("hog.block", c.hog.block_size));
    c.hog.block_stride = static_cast<int>(r.integer("hog.stride", c.hog.block_stride));
    c.hog.n_bins = static_cast<int>(r.integer("hog.bins", c.hog.n_bins));
    c.hog.signed_orientation = r.boolean("hog.signed", false);
    c.svm.C = r.real("svm.c", 1.0);
    const std::string g = r.text("svm.gamma", "scale");
    if (g != "scale") {
      c.svm.gamma = r.real("svm.gamma", 1.0);
      if (!(*c.svm.gamma > 0.0)) r.problem("svm.gamma", "must be > 0 or 'scale'");
    }
    c.svm.tol = r.real("svm.tol", 1e-3);
    c.svm.max_passes = static_cast<int>(r.integer("svm.max_passes", 1000));
    c.svm_train_cap = r.count("svm.train_cap", 10000);
    c.svm.seed = c.seed;
    if (!(c.svm.C > 0.0)) r.problem("svm.c", "must be > 0");
    if (!(c.svm.tol > 0.0)) r.problem("svm.tol", "must be > 0");
    if (c.svm.max_passes < 1) r.problem("svm.max_passes", "must be >= 1");
    if (c.svm_train_cap < 2) r.problem("svm.train_cap", "must be >= 2");
    try {
      c.hog.validate(kImageSide, kImageSide);
    } catch (const Error& e) {
      r.problem("hog", e.what());
    }
  } else {
    c.model = default_spec(model_kind_of(p));
    c.model.head_classes = r.count("model.head_classes", c.model.head_classes);
    if (c.model.head_classes < 1) r.problem("model.head_classes", "must be >= 1");
    if (p == Pipeline::CUSTOM_CNN) {
      c.model.hidden = r.count("model.hidden", c.model.hidden);
      if (c.model.hidden < 1) r.problem("model.hidden", "must be >= 1");
    }
    if (p == Pipeline::TINY_RESNET || p == Pipeline::TINY_VGG) c.model.stages = r.sizes("model.stages", c.model.stages);
    if (p == Pipeline::TINY_RESNET && c.model.stages.empty()) r.problem("model.stages", "needs at least one width");
    if (p == Pipeline::TINY_DENSENET) {
      c.model.growth = r.count("model.growth", c.model.growth);
      c.model.dense_layers = r.count("model.dense_layers", c.model.dense_layers);
      if (c.model.growth < 1) r.problem("model.growth", "must be >= 1");
    }
    c.train.epochs = static_cast<int>(r.integer("train.epochs", deep ? 20 : 25));
    c.train.batch_size = r.count("train.batch_size", 64);
    c.train.lr = r.real("train.lr", deep ? 0.001 : 0.01);
    c.train.seed = static_cast<std::uint64_t>(r.count("train.seed", c.seed));
    c.train.eval_every = static_cast<int>(r.integer("train.eval_every", 1));
    c.train.record_wall_time = r.boolean("log.wall_time", false);
    const long long step = r.integer("sched.step_size", deep ? 10 : 0);
    const double gamma = r.real("sched.gamma", 0.1);
    if (step < 0) r.problem("sched.step_size", "must be >= 0 (0 disables the schedule)");
    if (step > 0) {
      if (!(gamma > 0.0)) r.problem("sched.gamma", "must be > 0");
      c.train.schedule = StepLrSchedule{c.train.lr, static_cast<int>(step), gamma};
    }
    if (c.train.epochs < 1) r.problem("train.epochs", "must be >= 1");
    if (c.train.batch_size < 1) r.problem("train.batch_size", "must be >= 1");
    if (!(c.train.lr > 0.0)) r.problem("train.lr", "must be > 0");
    if (c.train.eval_every < 1) r.problem("train.eval_every", "must be >= 1");
    if (deep) {
      c.aug.crop_size = static_cast<int>(r.integer("aug.crop", c.aug.crop_size));
      c.aug.flip_prob = r.real("aug.flip_prob", c.aug.flip_prob);
      c.aug.mean = r.triple("aug.mean", c.aug.mean);
      c.aug.std_dev = r.triple("aug.std", c.aug.std_dev);
      try {
        c.aug.validate();
      } catch (const Error& e) {
        r.problem("aug", e.what());
      }
      c.model.input_size = static_cast<std::size_t>(std::max(c.aug.crop_size, 1));
    }
  }
  if (c.subset_train % 2 != 0) r.problem("subset.train", "must be even (split equally between FAKE and REAL)");
  if (c.subset_test % 2 != 0) r.problem("subset.test", "must be even (split equally between FAKE and REAL)");
  if (c.synthetic && (c.subset_train == 0 || c.subset_test == 0)) {
    r.problem("subset.train", "synthetic data needs explicit subset.train and subset.test sizes");
  }
  problems.insert(problems.end(), r.problems().begin(), r.problems().end());
  if (!problems.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& s : problems) msg += "\n  " + s;
    throw ConfigError(msg);
  }
  return c;
}

// Every value the run depends on, defaults included.
inline KeyValues config_to_kv(const ExperimentConfig& c) {
  using detail::format_number;
  KeyValues kv;
  kv["pipeline"] = std::string(pipeline_name(c.pipeline));
  kv["data.root"] = c.data_root;
  kv["data.synthetic"] = c.synthetic ? "true" : "false";
  kv["seed"] = std::to_string(c.seed);
  kv["subset.train"] = std::to_string(c.subset_train);
  kv["subset.test"] = std::to_string(c.subset_test);
  kv["out.dir"] = c.out_dir;
  if (c.pipeline == Pipeline::SVM) {
    kv["hog.cell"] = std::to_string(c.hog.cell_size);
    kv["hog.block"] = std::to_string(c.hog.block_size);
    kv["hog.stride"] = std::to_string(c.hog.block_stride);
    kv["hog.bins"] = std::to_string(c.hog.n_bins);
    kv["hog.signed"] = c.hog.signed_orientation ? "true" : "false";
    kv["svm.c"] = format_number(c.svm.C);
    kv["svm.gamma"] = c.svm.gamma ? format_number(*c.svm.gamma) : "scale";
    kv["svm.tol"] = format_number(c.svm.tol);
    kv["svm.max_passes"] = std::to_string(c.svm.max_passes);
    kv["svm.train_cap"] = std::to_string(c.svm_train_cap);
    return kv;
  }
  kv["model.head_classes"] = std::to_string(c.model.head_classes);
  if (c.pipeline == Pipeline::CUSTOM_CNN) kv["model.hidden"] = std::to_string(c.model.hidden);
  if (c.pipeline == Pipeline::TINY_RESNET || c.pipeline == Pipeline::TINY_VGG) {
    kv["model.stages"] = detail::join_sizes(c.model.stages);
  }
  if (c.pipeline == Pipeline::TINY_DENSENET) {
    kv["model.growth"] = std::to_string(c.model.growth);
    kv["model.dense_layers"] = std::to_string(c.model.dense_layers);
  }
  kv["train.epochs"] = std::to_string(c.train.epochs);
  kv["train.batch_size"] = std::to_string(c.train.batch_size);
  kv["train.lr"] = format_number(c.train.lr);
  kv["train.seed"] = std::to_string(c.train.seed);
  kv["train.eval_every"] = std::to_string(c.train.eval_every);
  kv["sched.step_size"] = std::to_string(c.train.schedule ? c.train.schedule->step_size : 0);
  kv["sched.gamma"] = format_number(c.train.schedule ? c.train.schedule->gamma : 0.1);
  kv["log.wall_time"] = c.train.record_wall_time ? "true" : "false";
  if (uses_augmentation(c.pipeline)) {
    kv["aug.crop"] = std::to_string(c.aug.crop_size);
    kv["aug.flip_prob"] = format_number(c.aug.flip_prob);
    kv["aug.mean"] = detail::join_reals(c.aug.mean);
    kv["aug.std"] = detail::join_reals(c.aug.std_dev);
  }
  return kv;
}

inline void write_key_values(std::ostream& out, const KeyValues& kv) {
  for (const auto& [k, v] : kv) out << k << '=' << v << '\n';
}

// Paths referenced by the config must exist unless the data is synthetic.
inline void validate_paths(const ExperimentConfig& c) {
  if (c.synthetic) return;
  if (c.data_root.empty()) throw ConfigError("data.root: not set (and SYNTHDETECT_DATA is empty)");
  if (!std::filesystem::is_directory(c.data_root)) throw ConfigError("data.root: '" + c.data_root + "' is not a directory");
}

}  // namespace synthdetect
