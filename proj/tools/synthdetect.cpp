#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "synthdetect/synthdetect.hpp"
#include "synthdetect/testing/oracles.hpp"

namespace sd = synthdetect;

namespace {

struct RunOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> subset;
  std::optional<std::string> out;
  bool synthetic = false;
  bool quiet = false;
};

sd::ExperimentConfig resolve_config(const RunOptions& o) {
  sd::KeyValues kv;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw sd::ConfigError("--config: cannot open '" + o.config + "'");
    kv = sd::parse_key_values(in);
  }
  if (o.seed) kv["seed"] = std::to_string(*o.seed);
  if (o.subset) {
    kv["subset.train"] = std::to_string(*o.subset);
    if (!kv.count("subset.test")) kv["subset.test"] = std::to_string(*o.subset / 5 / 2 * 2);
  }
  if (o.out) kv["out.dir"] = *o.out;
  if (o.synthetic) {
    kv["data.synthetic"] = "true";
    if (!kv.count("subset.train")) kv["subset.train"] = "5000";
    if (!kv.count("subset.test")) kv["subset.test"] = "1000";
  }
  sd::ExperimentConfig c = sd::config_from_kv(kv);
  sd::validate_paths(c);
  return c;
}

void add_run_flags(CLI::App* app, RunOptions& o) {
  app->add_option("--config", o.config, "key=value experiment configuration");
  app->add_option("--seed", o.seed, "override the top-level seed");
  app->add_option("--subset", o.subset, "stratified training subset size (test defaults to a fifth)");
  app->add_option("--out", o.out, "output directory");
  app->add_flag("--synthetic-data", o.synthetic, "use the generated two-texture surrogate dataset");
}

int cmd_ingest(const RunOptions& o, const std::string& manifest) {
  const auto c = resolve_config(o);
  const auto ds = sd::load_dataset(c);
  const auto n = ds.counts();
  std::cerr << "train FAKE " << n.train_fake << ", train REAL " << n.train_real << ", test FAKE " << n.test_fake
            << ", test REAL " << n.test_real << "\n";
  if (manifest.empty() || manifest == "-") {
    sd::write_manifest(ds, std::cout);
  } else {
    std::ofstream out(manifest);
    if (!out) throw sd::IoError("cannot open '" + manifest + "' for writing");
    sd::write_manifest(ds, out);
  }
  return sd::kExitOk;
}

int cmd_train(const RunOptions& o) {
  const auto c = resolve_config(o);
  const auto result = sd::run_experiment(c, o.quiet ? nullptr : &std::cerr);
  if (result.exit_code != sd::kExitOk) {
    std::cerr << "error: " << result.message << "\n";
    return result.exit_code;
  }
  std::ifstream report(std::filesystem::path(c.out_dir) / "report.txt");
  std::cout << report.rdbuf();
  return sd::kExitOk;
}

int cmd_evaluate(const std::string& ckpt, const std::optional<std::string>& data_root, const std::string& out) {
  std::optional<std::string> root = data_root;
  if (!root) {
    if (const char* env = std::getenv("SYNTHDETECT_DATA"); env && *env) root = env;
  }
  const auto e = sd::evaluate_checkpoint(ckpt, root, out);
  sd::write_report_text(std::cout, e.report, "Evaluation of " + ckpt);
  return sd::kExitOk;
}

int cmd_report(const std::string& dir) {
  const auto r = sd::rerender_report(dir);
  std::ifstream report(std::filesystem::path(dir) / "report.txt");
  std::cout << report.rdbuf();
  (void)r;
  return sd::kExitOk;
}

bool line(const char* name, bool ok, const std::string& detail) {
  std::printf("%s %-40s %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  return ok;
}

int cmd_selftest() {
  namespace t = sd::testing;
  bool all = true;

  {
    double worst = 0.0;
    for (std::uint64_t k = 0; k < 200; ++k) {
      sd::RngStream rng(k, "selftest.auc");
      const std::size_t n = 2 + rng.uniform_int(49);
      std::vector<double> s(n);
      std::vector<sd::Label> y(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = static_cast<double>(rng.uniform_int(8)) / 8.0;
        y[i] = rng.bernoulli(0.5) ? sd::Label::FAKE : sd::Label::REAL;
      }
      y[0] = sd::Label::FAKE;
      y[1] = sd::Label::REAL;
      worst = std::max(worst, std::abs(sd::roc_curve(s, y).auc - t::mann_whitney_auc(s, y)));
      worst = std::max(worst, std::abs(sd::pr_auc(s, y) - t::brute_force_average_precision(s, y)));
    }
    all &= line("ranking metrics vs oracles", worst < 1e-9, "max |diff| " + std::to_string(worst));
  }
  {
    double worst = 0.0;
    for (std::uint64_t k = 0; k < 10; ++k) {
      sd::RngStream rng(k, "selftest.grad");
      auto x = t::random_tensor({2, 2, 5, 5}, rng);
      auto w = t::random_tensor({3, 2, 3, 3}, rng);
      auto b = t::random_tensor({3}, rng);
      auto wts = t::random_tensor({2 * 3 * 5 * 5}, rng, false);
      std::vector<double> weights(wts.data().begin(), wts.data().end());
      auto f = [&](const std::vector<sd::Tensor<double>>& in) {
        return sd::weighted_sum(sd::relu(sd::conv2d(in[0], in[1], in[2], 1, 1)), std::span<const double>(weights));
      };
      worst = std::max(worst, t::check_gradients(f, {x, w, b}).max_rel_error);
    }
    all &= line("conv2d gradients vs finite differences", worst < 1e-4, "max rel error " + std::to_string(worst));
  }
  {
    double worst_kkt = 0.0, worst_gap = 0.0;
    for (std::uint64_t k = 0; k < 5; ++k) {
      sd::RngStream rng(k, "selftest.svm");
      std::vector<std::vector<double>> X;
      std::vector<int> y;
      for (int i = 0; i < 16; ++i) {
        X.push_back({rng.normal(), rng.normal()});
        y.push_back(X.back()[0] * X.back()[1] > 0 ? 1 : -1);
      }
      y[0] = 1;
      y[1] = -1;
      sd::SvmConfig cfg;
      cfg.gamma = 0.5;
      cfg.seed = k;
      const auto m = sd::smo_train(X, y, cfg);
      worst_kkt = std::max(worst_kkt, t::max_kkt_violation(m, X, y, cfg.C));
      const auto K = t::gram_matrix(X, 0.5);
      const double ref = t::dual_objective(t::solve_dual_qp(K, y, cfg.C), y, K);
      worst_gap = std::max(worst_gap, std::abs(t::dual_objective(t::model_alphas(m, y), y, K) - ref));
    }
    all &= line("SMO KKT and dual objective", worst_kkt <= 1e-3 && worst_gap < 1e-4,
                "kkt " + std::to_string(worst_kkt) + ", objective gap " + std::to_string(worst_gap));
  }
  {
    const auto r = sd::classification_report(sd::make_confusion(9769, 231, 221, 9779));
    all &= line("report from a fixed confusion matrix", std::abs(r.accuracy - 0.9774) < 1e-12,
                "accuracy " + std::to_string(r.accuracy));
  }
  return all ? sd::kExitOk : sd::kExitError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic image detection toolkit"};
  app.require_subcommand(1);

  RunOptions ingest_opts, train_opts;
  std::string manifest;
  auto* ingest = app.add_subcommand("ingest", "load the dataset and print a path,label,split manifest");
  add_run_flags(ingest, ingest_opts);
  ingest->add_option("--manifest", manifest, "write the manifest here instead of stdout");

  auto* train = app.add_subcommand("train", "train a pipeline and write its artifacts");
  add_run_flags(train, train_opts);
  train->add_flag("--quiet", train_opts.quiet, "no progress output");

  std::string ckpt, eval_out = "eval";
  std::optional<std::string> data_root;
  auto* evaluate = app.add_subcommand("evaluate", "score the test split with a saved checkpoint");
  evaluate->add_option("--checkpoint", ckpt, "model.ckpt produced by train")->required();
  evaluate->add_option("--data-root", data_root, "dataset root (defaults to SYNTHDETECT_DATA, then the snapshot)");
  evaluate->add_option("--out", eval_out, "output directory");

  std::string report_dir;
  auto* report = app.add_subcommand("report", "re-render report files from confusion.csv and scores.csv");
  report->add_option("--dir", report_dir, "run directory")->required();

  auto* selftest = app.add_subcommand("selftest", "run the built-in oracle comparisons");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : sd::kExitInvalidConfig;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_opts, manifest);
    if (*train) return cmd_train(train_opts);
    if (*evaluate) return cmd_evaluate(ckpt, data_root, eval_out);
    if (*report) return cmd_report(report_dir);
    if (*selftest) return cmd_selftest();
  } catch (const sd::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return sd::kExitInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return sd::kExitError;
  }
  return sd::kExitError;
}
