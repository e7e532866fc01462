// owlkit command-line front end.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "owlkit/config.hpp"
#include "owlkit/owlkit.hpp"

using namespace owlkit;

namespace {

ParamMap parse_params(const std::vector<std::string>& items) {
  ParamMap p;
  for (const auto& kv : items) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--param expects key=value, got '" + kv + "'");
    p[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
  }
  return p;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  return in;
}

TrialDataset load_data(const std::string& path, const std::string& oracle_path) {
  auto in = open_in(path);
  TrialDataset d = read_dataset_csv(in);
  if (!oracle_path.empty()) {
    auto oin = open_in(oracle_path);
    d.oracle = read_oracle_csv(oin);
    if (d.oracle->tau.size() != d.size())
      throw std::runtime_error("oracle file does not match the data file");
  }
  return d;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel outcome weighted learning toolkit"};
  app.require_subcommand(1);

  // psi -------------------------------------------------------------------
  auto* psi = app.add_subcommand("psi", "Psi-transform curve and calibration report");
  std::string psi_loss = "binomial", psi_out, psi_report;
  std::vector<std::string> psi_params;
  double psi_M = 1.0, psi_floor = 1e-3;
  int psi_grid = 513, psi_samples = 1000, psi_workers = 1;
  psi->add_option("--loss", psi_loss, "Loss name, e.g. hinge or cc:tcave")->required();
  psi->add_option("--param", psi_params, "Loss parameter key=value (repeatable)");
  psi->add_option("--M", psi_M, "Bound on mu_plus + mu_minus");
  psi->add_option("--grid", psi_grid, "Number of grid points in [0, M]");
  psi->add_option("--samples", psi_samples, "Sampled mu pairs for the calibration check");
  psi->add_option("--margin-floor", psi_floor, "Minimum |mu_plus - mu_minus| sampled");
  psi->add_option("--workers", psi_workers, "Threads");
  psi->add_option("--out", psi_out, "Curve CSV (stdout if omitted)");
  psi->add_option("--report", psi_report, "Calibration report JSON");

  // generate --------------------------------------------------------------
  auto* gen = app.add_subcommand("generate", "Simulate a randomized trial");
  ScenarioSpec gspec;
  std::string gen_out, gen_oracle;
  bool gen_nonsmooth = false;
  double gen_flip = 0.0;
  gen->add_option("--example", gspec.example_id, "Scenario 1-5")->required();
  gen->add_option("--n", gspec.n, "Sample size");
  gen->add_option("--m", gspec.m, "Covariate dimension");
  gen->add_flag("--nonsmooth", gen_nonsmooth, "Example 1 step target");
  gen->add_option("--contamination", gspec.contamination_rate, "Outlier fraction");
  gen->add_option("--flip", gen_flip, "Fraction of treatments to negate");
  gen->add_option("--seed", gspec.seed, "Random seed");
  gen->add_option("--out", gen_out, "Data CSV")->required();
  gen->add_option("--oracle", gen_oracle, "Oracle sidecar CSV");

  // fit -------------------------------------------------------------------
  auto* fit = app.add_subcommand("fit", "Fit a rule on a data CSV");
  std::string fit_data, fit_out, fit_trace, fit_learner = "rwl", fit_loss = "binomial",
                                            fit_kernel = "gaussian";
  std::vector<std::string> fit_params;
  double fit_lambda = 0.1, fit_bw = 1.0, fit_alpha = 1.5;
  std::string fit_robust;
  double fit_sigma = 1.0;
  fit->add_option("--data", fit_data, "Data CSV")->required();
  fit->add_option("--learner", fit_learner, "owl or rwl");
  fit->add_option("--loss", fit_loss, "Loss (convex, or nonconvex fitted locally)");
  fit->add_option("--param", fit_params, "Loss parameter key=value");
  fit->add_option("--robust", fit_robust, "CC family (acave, bcave, ccave, tcave); fits by IRCO");
  fit->add_option("--sigma", fit_sigma, "Robustness parameter sigma of the CC family");
  fit->add_option("--kernel", fit_kernel, "matern, gaussian or linear");
  fit->add_option("--alpha", fit_alpha, "Matern smoothness");
  fit->add_option("--bandwidth", fit_bw, "Kernel bandwidth");
  fit->add_option("--lambda", fit_lambda, "Regularization");
  fit->add_option("--out", fit_out, "Rule JSON")->required();
  fit->add_option("--trace", fit_trace, "IRCO trace CSV");

  // score -----------------------------------------------------------------
  auto* score = app.add_subcommand("score", "Apply a rule and report metrics");
  std::string score_rule, score_data, score_oracle, score_out;
  score->add_option("--rule", score_rule, "Rule JSON")->required();
  score->add_option("--data", score_data, "Data CSV")->required();
  score->add_option("--oracle", score_oracle, "Oracle sidecar CSV");
  score->add_option("--out", score_out, "Per-row scores CSV");

  // experiment / rate-study -------------------------------------------------
  auto* exp = app.add_subcommand("experiment", "Replicated simulation table");
  std::string exp_config, exp_out;
  int exp_workers = 0;
  exp->add_option("--config", exp_config, "YAML config")->required();
  exp->add_option("--out", exp_out, "Output path (overrides the config)");
  exp->add_option("--workers", exp_workers, "Worker threads (overrides the config)");

  auto* rate = app.add_subcommand("rate-study", "Excess risk against n (Example 1)");
  std::string rate_config, rate_out;
  int rate_workers = 0;
  rate->add_option("--config", rate_config, "YAML config")->required();
  rate->add_option("--out", rate_out, "Output CSV (overrides the config)");
  rate->add_option("--workers", rate_workers, "Worker threads (overrides the config)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*psi) {
      const LossSpec loss = make_loss(psi_loss, parse_params(psi_params));
      const ParamMap params = parse_params(psi_params);
      const PsiCurve c = psi_curve(loss, psi_M, psi_grid, psi_workers);
      std::ofstream file;
      if (!psi_out.empty()) file = open_out(psi_out);
      std::ostream& out = psi_out.empty() ? std::cout : file;
      out << "v,tilde_psi,psi,closed_form\n";
      for (std::size_t k = 0; k < c.grid.size(); ++k) {
        const auto cf = try_closed_form_psi(psi_loss, c.grid[k], psi_M, params);
        out << detail::exact(c.grid[k]) << ',' << detail::exact(c.tilde_values[k]) << ','
            << detail::exact(c.convex_values[k]) << ',' << (cf ? detail::exact(*cf) : "")
            << '\n';
      }
      if (!psi_report.empty()) {
        const auto rep = check_policy_calibration(loss, psi_M, psi_samples, psi_floor);
        Json j = {{"loss", rep.loss},
                  {"M", rep.M},
                  {"n_samples", rep.n_samples},
                  {"margin_floor", rep.margin_floor},
                  {"min_gap", rep.min_gap},
                  {"worst_mu", {rep.worst_mu_plus, rep.worst_mu_minus}},
                  {"policy_calibrated", rep.passed},
                  {"psi_positive_on_grid", [&] {
                     for (std::size_t k = 1; k < c.convex_values.size(); ++k)
                       if (!(c.convex_values[k] > 0.0)) return false;
                     return true;
                   }()}};
        auto out_r = open_out(psi_report);
        out_r << j.dump(2) << '\n';
      }
    } else if (*gen) {
      gspec.smooth = !gen_nonsmooth;
      TrialDataset d = generate(gspec);
      if (gen_flip > 0.0) d = flip_treatments(d, gen_flip, derive_seed(gspec.seed, 0x666c6970));
      auto out = open_out(gen_out);
      write_dataset_csv(d, out);
      if (!gen_oracle.empty()) {
        auto oout = open_out(gen_oracle);
        write_oracle_csv(*d.oracle, oout);
      }
    } else if (*fit) {
      const TrialDataset d = load_data(fit_data, "");
      KernelSpec k;
      k.family = parse_kernel_family(fit_kernel);
      k.bandwidth = fit_bw;
      k.alpha = fit_alpha;
      k.validate();
      const Learner learner = parse_learner(fit_learner);
      if (learner != Learner::owl && learner != Learner::rwl)
        throw std::invalid_argument("fit supports --learner owl or rwl");
      TrialDataset work = d;
      std::optional<ResidualModel> model;
      if (learner == Learner::rwl) {
        model = fit_residual_model(d);
        work = residual_transform(d, compute_residuals(*model, d));
      }
      FittedRule rule;
      if (!fit_robust.empty()) {
        const auto g = ConcaveComponent::from_sigma(parse_concave_family(fit_robust), fit_sigma);
        auto [r, st] = irco_owl(work, g, k, fit_lambda);
        rule = std::move(r);
        if (!fit_trace.empty()) {
          auto tout = open_out(fit_trace);
          write_irco_trace(st, tout);
        }
        std::cerr << "IRCO: " << st.iteration << " convex solves, "
                  << (st.converged ? "converged" : "stopped at max_iter") << '\n';
      } else {
        const auto res = fit_owl(work, make_loss(fit_loss, parse_params(fit_params)), k, fit_lambda);
        rule = res.rule;
        std::cerr << "L-BFGS: " << res.iterations << " iterations, " << res.status << '\n';
      }
      Json j = to_json(rule);
      if (model) j["residual_model"] = to_json(*model);
      auto out = open_out(fit_out);
      out << j.dump(2) << '\n';
    } else if (*score) {
      auto rin = open_in(score_rule);
      const FittedRule rule = rule_from_json(Json::parse(rin));
      const TrialDataset d = load_data(score_data, score_oracle);
      const Vector s = rule.scores(d.covariates);
      const Vector dec = s.unaryExpr([](double x) { return double(treatment_sign(x)); });
      if (!score_out.empty()) {
        auto out = open_out(score_out);
        out << "score,treatment\n";
        for (Eigen::Index i = 0; i < s.size(); ++i)
          out << detail::exact(s(i)) << ',' << static_cast<int>(dec(i)) << '\n';
      }
      Json j;
      j["n"] = d.size();
      j["n_matched"] = (dec.array() == d.treatments.array()).count();
      try {
        j["value_estimate"] = value_of_decisions(dec, d);
      } catch (const UndefinedValue& e) {
        j["value_estimate"] = nullptr;
        j["value_error"] = e.what();
      }
      if (d.oracle) {
        j["misclassification"] = misclassification_of(dec, d);
        j["excess_risk"] = excess_risk_of(dec, d);
      }
      std::cout << j.dump(2) << '\n';
    } else if (*exp) {
      LoadedConfig lc = load_config(exp_config);
      if (exp_workers > 0) lc.experiment.workers = exp_workers;
      if (!exp_out.empty()) lc.output.path = exp_out;
      const auto res = run_experiment(lc.experiment);
      for (const auto& msg : res.diagnostics) std::cerr << msg << '\n';
      if (lc.output.path.empty())
        write_table(res.table, parse_table_format(lc.output.format), std::cout);
      else
        emit(res.table, parse_table_format(lc.output.format), lc.output.path);
    } else if (*rate) {
      LoadedConfig lc = load_config(rate_config);
      RateStudyConfig rc = lc.rate_study ? *lc.rate_study : RateStudyConfig{lc.experiment};
      if (rate_workers > 0) rc.base.workers = rate_workers;
      if (!rate_out.empty()) lc.output.path = rate_out;
      const auto res = run_rate_study(rc);
      for (const auto& msg : res.diagnostics) std::cerr << msg;
      if (lc.output.path.empty()) {
        write_rate_csv(res, std::cout);
      } else {
        auto out = open_out(lc.output.path);
        write_rate_csv(res, out);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
