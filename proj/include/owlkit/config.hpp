#pragma once

// YAML experiment configuration.
//
//   scenario: {example: 2, n: 100, m: 50, smooth: true}
//   perturbation: contamination        # or flip
//   rates: [0, 0.05, 0.10]
//   replicates: 20
//   n_test: 10000
//   master_seed: 2024
//   workers: 4
//   cell_timeout: 120
//   methods:
//     - preset: standard               # the nine table methods
//       sigmas: [2]
//     - name: Exponential-ccave
//       learner: rwl
//       robust: ccave
//       kernel: matern
//       alpha: 0.5
//       grid: {lambdas: [0.01, 0.1], bandwidths: [1], sigmas: [0.7]}
//   output: {path: results.csv, format: csv}
//   rate_study: {n_list: [64, 128, 256, 512], targets: [smooth, nonsmooth]}

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "owlkit/experiment.hpp"

namespace owlkit {

struct OutputSpec {
  std::string path;
  std::string format = "csv";
};

struct LoadedConfig {
  ExperimentConfig experiment;
  OutputSpec output;
  std::optional<RateStudyConfig> rate_study;
};

namespace detail {

template <class T>
T yaml_or(const YAML::Node& n, const char* key, T fallback) {
  return n[key] ? n[key].as<T>() : fallback;
}

/// A list, or {from, to, step} exponents of 10.
inline std::vector<double> yaml_values(const YAML::Node& n, const char* what) {
  if (n.IsSequence()) return n.as<std::vector<double>>();
  if (n.IsMap() && n["log10_from"]) {
    const double a = n["log10_from"].as<double>(), b = n["log10_to"].as<double>(),
                 step = yaml_or<double>(n, "log10_step", 1.0);
    if (!(step > 0.0)) throw std::invalid_argument(std::string(what) + ": step must be positive");
    std::vector<double> out;
    for (int k = 0; a + k * step <= b + 1e-9; ++k) out.push_back(std::pow(10.0, a + k * step));
    return out;
  }
  if (n.IsScalar()) return {n.as<double>()};
  throw std::invalid_argument(std::string(what) + ": expected a list or log10 range");
}

inline MethodSpec method_from_yaml(const YAML::Node& n) {
  MethodSpec m;
  m.name = n["name"].as<std::string>();
  m.learner = parse_learner(yaml_or<std::string>(n, "learner", "rwl"));
  m.loss = yaml_or<std::string>(n, "loss", "binomial");
  if (n["loss_params"])
    for (const auto& kv : n["loss_params"])
      m.loss_params[kv.first.as<std::string>()] = kv.second.as<double>();
  if (n["robust"]) m.robust = parse_concave_family(n["robust"].as<std::string>());
  m.kernel = parse_kernel_family(yaml_or<std::string>(n, "kernel", "gaussian"));
  m.alpha = yaml_or<double>(n, "alpha", m.kernel == KernelFamily::matern ? 1.5 : 0.5);
  m.shift_rewards = yaml_or<bool>(n, "shift_rewards", false);
  m.grid = TuningGrid::standard();
  if (const auto g = n["grid"]) {
    if (g["lambdas"]) m.grid.lambdas = yaml_values(g["lambdas"], "lambdas");
    if (g["bandwidths"]) m.grid.bandwidths = yaml_values(g["bandwidths"], "bandwidths");
    if (g["sigmas"]) m.grid.sigmas = yaml_values(g["sigmas"], "sigmas");
  }
  if (m.learner == Learner::q_learning) m.grid.bandwidths = {1.0};
  return m;
}

}  // namespace detail

inline LoadedConfig config_from_yaml(const YAML::Node& root) {
  LoadedConfig lc;
  ExperimentConfig& c = lc.experiment;
  if (const auto s = root["scenario"]) {
    c.scenario.example_id = detail::yaml_or<int>(s, "example", 2);
    c.scenario.n = detail::yaml_or<long>(s, "n", 100);
    c.scenario.m = detail::yaml_or<long>(s, "m", c.scenario.example_id == 1 ? 1 : 5);
    c.scenario.smooth = detail::yaml_or<bool>(s, "smooth", true);
  }
  const std::string pert = detail::yaml_or<std::string>(root, "perturbation", "contamination");
  if (pert == "contamination") c.perturbation = Perturbation::contamination;
  else if (pert == "flip") c.perturbation = Perturbation::flip;
  else throw std::invalid_argument("perturbation must be 'contamination' or 'flip'");
  if (root["rates"]) c.rates = detail::yaml_values(root["rates"], "rates");
  c.replicates = detail::yaml_or<int>(root, "replicates", 20);
  c.n_test = detail::yaml_or<long>(root, "n_test", 10000);
  c.master_seed = detail::yaml_or<std::uint64_t>(root, "master_seed", 1);
  c.workers = detail::yaml_or<int>(root, "workers", 1);
  c.cell_timeout_seconds = detail::yaml_or<double>(root, "cell_timeout", 120.0);
  c.record_runtime = detail::yaml_or<bool>(root, "record_runtime", false);
  c.standardize = detail::yaml_or<bool>(root, "standardize", false);
  const std::string crit = detail::yaml_or<std::string>(root, "criterion", "value");
  if (crit == "value") c.criterion = Criterion::value;
  else if (crit == "excess_risk") c.criterion = Criterion::excess_risk;
  else throw std::invalid_argument("criterion must be 'value' or 'excess_risk'");
  if (root["data"]) {
    const auto path = root["data"].as<std::string>();
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read data file '" + path + "'");
    c.data = read_dataset_csv(in);
  }
  for (const auto& m : root["methods"]) {
    if (m["preset"]) {
      if (m["preset"].as<std::string>() != "standard")
        throw std::invalid_argument("unknown method preset");
      const auto sig = m["sigmas"] ? detail::yaml_values(m["sigmas"], "sigmas")
                                   : std::vector<double>{1.0};
      for (auto& s : standard_methods(sig)) c.methods.push_back(std::move(s));
    } else {
      c.methods.push_back(detail::method_from_yaml(m));
    }
  }
  if (const auto o = root["output"]) {
    lc.output.path = detail::yaml_or<std::string>(o, "path", "");
    lc.output.format = detail::yaml_or<std::string>(o, "format", "csv");
  }
  if (const auto r = root["rate_study"]) {
    RateStudyConfig rc;
    rc.base = c;
    if (r["n_list"]) rc.n_list = r["n_list"].as<std::vector<Eigen::Index>>();
    if (r["targets"]) {
      rc.targets.clear();
      for (const auto& t : r["targets"]) {
        const auto s = t.as<std::string>();
        if (s != "smooth" && s != "nonsmooth")
          throw std::invalid_argument("rate_study targets are 'smooth' or 'nonsmooth'");
        rc.targets.push_back(s == "smooth");
      }
    }
    lc.rate_study = rc;
  }
  return lc;
}

inline LoadedConfig load_config(const std::string& path) {
  YAML::Node root;
  try {
    root = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    throw std::runtime_error("cannot parse config '" + path + "': " + e.what());
  }
  return config_from_yaml(root);
}

}  // namespace owlkit
