// pcm_cli: generate synthetic trials, fit level models, evaluate them and run
// parameter sweeps.
//
// Exit codes: 0 success, 2 usage or validation error, 3 I/O error.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pcm/io.hpp"
#include "pcm/pcm.hpp"

namespace {

using pcm::io::json;

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kIo = 3;

std::string replace_extension(const std::string& path, const std::string& suffix) {
  std::filesystem::path p(path);
  p.replace_extension();
  return p.string() + suffix;
}

pcm::SynthSpec load_spec(const std::string& path) {
  return path.empty() ? pcm::default_spec() : pcm::io::read_spec(path);
}

// ------------------------------------------------------------------ generate

struct GenerateArgs {
  std::string spec_path;
  std::string out;
  std::optional<std::size_t> n;
  std::optional<std::uint64_t> seed;
  std::optional<double> sigma;
};

int cmd_generate(const GenerateArgs& a) {
  pcm::SynthSpec spec = load_spec(a.spec_path);
  if (a.n) spec.n = *a.n;
  if (a.seed) spec.seed = *a.seed;
  if (a.sigma) spec.sigma = *a.sigma;
  const pcm::Dataset data = pcm::generate(spec);
  pcm::io::write_file(a.out, pcm::io::dataset_to_csv(data));
  return kOk;
}

int cmd_spec(const std::string& out) {
  const std::string text = pcm::io::spec_to_json(pcm::default_spec()).dump(2) + "\n";
  if (out.empty() || out == "-")
    std::cout << text;
  else
    pcm::io::write_file(out, text);
  return kOk;
}

// ----------------------------------------------------------------------- fit

struct FitArgs {
  std::string data;
  std::string out_model;
  std::string out_assignments;
  std::string cf = "given";
  std::string precluster = "box";
  pcm::PcmConfig config;
};

int cmd_fit(FitArgs a) {
  a.config.cf_mode = pcm::io::parse_cf_mode(a.cf);
  a.config.precluster_mode = pcm::io::parse_precluster_mode(a.precluster);
  pcm::io::DatasetColumns cols;
  const pcm::Dataset data = pcm::io::read_dataset(a.data, &cols);
  if (a.config.cf_mode == pcm::CfMode::Given && !cols.has_ybar)
    throw pcm::Error(pcm::ErrorKind::MissingCounterfactual, "--cf given needs a ybar column in " + a.data);
  const pcm::PcmResult res = pcm::run_pcm(data, a.config);
  const json report = pcm::io::fit_report(res, a.config);
  pcm::io::write_file(a.out_model, report.dump(2) + "\n");
  const std::string assign = a.out_assignments.empty() ? replace_extension(a.out_model, ".assignments.csv")
                                                       : a.out_assignments;
  pcm::io::write_file(assign, pcm::io::assignments_to_csv(res.model));
  if (res.model.did_not_converge)
    std::cerr << "warning: no k <= k_max reached the error threshold; ell_hat=" << res.model.ell_hat << "\n";
  return kOk;
}

// ---------------------------------------------------------------------- eval

struct EvalArgs {
  std::string data;
  std::string model;
  std::string assignments;
  std::string out;
  std::string spec_path;
  std::vector<double> true_mu;
};

int cmd_eval(const EvalArgs& a) {
  pcm::io::DatasetColumns cols;
  const pcm::Dataset data = pcm::io::read_dataset(a.data, &cols);
  json report;
  try {
    report = json::parse(pcm::io::read_file(a.model));
  } catch (const json::exception& e) {
    throw pcm::io::FormatError(std::string("model: ") + e.what());
  }
  const std::string assign_path = a.assignments.empty() ? replace_extension(a.model, ".assignments.csv") : a.assignments;
  const pcm::LevelModel model = pcm::io::model_from_files(report, pcm::io::read_file(assign_path));
  if (model.assignment.size() != data.n())
    throw pcm::io::FormatError("dataset has " + std::to_string(data.n()) + " rows but the model covers " +
                               std::to_string(model.assignment.size()));
  if (!cols.has_label) throw pcm::Error(pcm::ErrorKind::MissingLabels, "supervised metrics need a c_true column");

  std::vector<double> truth = a.true_mu;
  if (truth.empty()) truth = load_spec(a.spec_path).true_effects();

  pcm::PcmConfig config;
  try {
    config = pcm::io::config_from_json(report.at("config"));
  } catch (const json::exception& e) {
    throw pcm::io::FormatError(std::string("model config: ") + e.what());
  }

  // Homogeneity needs the pre-clustering; it is a deterministic function of
  // the data and the recorded configuration.
  const pcm::Dataset prepared = pcm::attach_counterfactuals(data, config.cf_mode, config.knn_k);
  const pcm::EffectInput in = pcm::make_effect_input(prepared, config.cf_mode);
  const pcm::PreClustering pc =
      pcm::precluster(in, config.precluster_mode, pcm::derive_seed(config.seed, 0x7072656eULL));

  pcm::EvalReport r = pcm::evaluate(model, data, truth, &pc);
  if (!a.true_mu.empty() && config.cf_mode != pcm::CfMode::ControlDiff)
    r.bayes = pcm::evaluate_bayes(in.ite, in.eligible, data, a.true_mu);

  json j = pcm::io::eval_to_json(r);
  pcm::io::write_file(a.out, j.dump(2) + "\n");
  pcm::io::write_file(replace_extension(a.out, ".confusion.csv"), pcm::io::matrix_to_csv(r.confusion));
  pcm::io::write_file(replace_extension(a.out, ".hist.csv"), pcm::io::histogram_csv(model.smoothed_ite));
  pcm::io::write_file(replace_extension(a.out, ".effects.csv"), pcm::io::effects_csv(r));
  return kOk;
}

// --------------------------------------------------------------------- sweep

struct SweepArgs {
  std::string spec_path;
  std::vector<std::size_t> ns;
  std::size_t seeds = 3;
  std::uint64_t base_seed = 0;
  std::vector<std::string> modes{"box", "kmeans"};
  std::string out_dir;
  std::string cf = "given";
  pcm::PcmConfig config;
};

std::string csv_num(double v) { return std::isfinite(v) ? pcm::io::format_double(v) : ""; }

int cmd_sweep(SweepArgs a) {
  const pcm::SynthSpec base = load_spec(a.spec_path);
  pcm::validate_spec(base);
  a.config.cf_mode = pcm::io::parse_cf_mode(a.cf);
  for (const std::string& m : a.modes) pcm::io::parse_precluster_mode(m);
  if (a.ns.empty() || a.seeds == 0) throw pcm::io::FormatError("sweep grid is empty");
  std::filesystem::create_directories(a.out_dir);
  const std::vector<double> truth = base.true_effects();

  std::ostringstream out;
  out << "n,seed,mode,mae_mean,mae_std,ell_hat,homogeneity,diag0,diag1,diag2,mu_hat0,mu_hat1,mu_hat2,wall_ms,error\n";
  std::size_t ok_rows = 0;
  for (std::size_t n : a.ns) {
    for (std::size_t s = 0; s < a.seeds; ++s) {
      const std::uint64_t seed = a.base_seed + s;
      for (const std::string& mode : a.modes) {
        out << n << ',' << seed << ',' << mode << ',';
        const auto t0 = std::chrono::steady_clock::now();
        try {
          pcm::SynthSpec spec = base;
          spec.n = n;
          spec.seed = pcm::derive_seed(seed, n);
          const pcm::Dataset data = pcm::generate(spec);
          pcm::PcmConfig cfg = a.config;
          cfg.precluster_mode = pcm::io::parse_precluster_mode(mode);
          cfg.seed = pcm::derive_seed(seed, n, mode == "box" ? 1 : 2);
          const pcm::PcmResult res = pcm::run_pcm(data, cfg);
          const pcm::EvalReport r = pcm::evaluate(res.model, data, truth, &res.preclustering);
          const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
          out << csv_num(r.mae.mean) << ',' << csv_num(r.mae.std) << ',' << r.ell_hat << ','
              << csv_num(*r.homogeneity);
          for (std::size_t c = 0; c < 3; ++c) {
            out << ',';
            if (c < r.confusion.size() && c < r.confusion[c].size()) out << csv_num(r.confusion[c][c]);
          }
          for (std::size_t c = 0; c < 3; ++c) {
            out << ',';
            if (c < r.mu_hat.size()) out << csv_num(r.mu_hat[c]);
          }
          out << ',' << csv_num(std::max(ms, 1e-3)) << ",\n";
          ++ok_rows;
        } catch (const std::exception& e) {
          std::string msg = e.what();
          for (char& ch : msg)
            if (ch == ',' || ch == '\n') ch = ';';
          out << ",,,,,,,,,,," << msg << "\n";
        }
      }
    }
  }
  pcm::io::write_file((std::filesystem::path(a.out_dir) / "summary.csv").string(), out.str());
  return ok_rows > 0 ? kOk : kUsage;
}

void add_fit_flags(CLI::App* app, std::string& cf, pcm::PcmConfig& c) {
  app->add_option("--cf", cf, "counterfactual mode: given, knn or control_diff")
      ->check(CLI::IsMember({"given", "knn", "control_diff"}));
  app->add_option("--em-iters", c.em_iters, "E-M refinement passes")->capture_default_str();
  app->add_option("--tau-multiplier", c.tau_multiplier, "scale of the level-selection threshold")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app->add_option("--k-max", c.k_max, "largest number of levels examined")->capture_default_str()->check(CLI::PositiveNumber);
  app->add_option("--knn-k", c.knn_k, "neighbours for the knn counterfactual (0 = sqrt of #controls)");
  app->add_option("--levels", c.fixed_levels, "fix the number of levels instead of thresholding (0 = off)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pre-cluster-and-merge estimation of subpopulation treatment effects"};
  app.set_version_flag("--version", std::string("pcm_cli ") + PCM_VERSION);
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "write a synthetic trial as CSV");
  g->add_option("--spec", gen.spec_path, "synthetic spec JSON (default layout if omitted)");
  g->add_option("--out", gen.out, "output CSV")->required();
  g->add_option("--n", gen.n, "override subject count");
  g->add_option("--seed", gen.seed, "override seed");
  g->add_option("--sigma", gen.sigma, "override outcome noise");

  std::string spec_out;
  auto* sp = app.add_subcommand("spec", "print the default synthetic spec JSON");
  sp->add_option("--out", spec_out, "output path (stdout if omitted)");

  FitArgs fit;
  auto* f = app.add_subcommand("fit", "fit a level model");
  f->add_option("--data", fit.data, "dataset CSV")->required();
  f->add_option("--out-model", fit.out_model, "fit report JSON")->required();
  f->add_option("--out-assignments", fit.out_assignments, "assignments CSV (default <model>.assignments.csv)");
  f->add_option("--precluster", fit.precluster, "box or kmeans")->check(CLI::IsMember({"box", "kmeans"}));
  f->add_option("--seed", fit.config.seed, "seed for k-means seeding");
  add_fit_flags(f, fit.cf, fit.config);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "evaluate a fitted model against true levels");
  e->add_option("--data", ev.data, "dataset CSV with c_true")->required();
  e->add_option("--model", ev.model, "fit report JSON")->required();
  e->add_option("--assignments", ev.assignments, "assignments CSV (default <model>.assignments.csv)");
  e->add_option("--out", ev.out, "evaluation report JSON")->required();
  e->add_option("--spec", ev.spec_path, "spec supplying the true effects");
  e->add_option("--true-mu", ev.true_mu, "true level effects; also enables the Bayes baseline")->delimiter(',');

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "generate, fit and evaluate over a grid of n, seeds and modes");
  s->add_option("--spec", sw.spec_path, "synthetic spec JSON (default layout if omitted)");
  s->add_option("--n", sw.ns, "subject counts")->delimiter(',')->required();
  s->add_option("--seeds", sw.seeds, "seeds per n")->capture_default_str();
  s->add_option("--seed", sw.base_seed, "first seed")->capture_default_str();
  s->add_option("--modes", sw.modes, "pre-cluster modes")->delimiter(',')->capture_default_str();
  s->add_option("--out-dir", sw.out_dir, "output directory")->required();
  add_fit_flags(s, sw.cf, sw.config);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ok) {
    return app.exit(ok);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kUsage;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*sp) return cmd_spec(spec_out);
    if (*f) return cmd_fit(fit);
    if (*e) return cmd_eval(ev);
    if (*s) return cmd_sweep(sw);
  } catch (const pcm::io::IoError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kIo;
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kIo;
  } catch (const pcm::io::FormatError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  } catch (const pcm::Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
