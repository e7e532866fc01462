#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "owlkit/kernels.hpp"

namespace owlkit {

/// sign with sign(0) = +1.
inline int treatment_sign(double x) { return x >= 0.0 ? 1 : -1; }

/// Ground truth attached to synthetic data.
struct Oracle {
  Vector tau;      // baseline effect
  Vector xi;       // interaction effect
  Vector optimal;  // d*(x) in {-1, +1}
  Vector gap;      // |mu_1(x) - mu_-1(x)|
  Vector target;   // score whose sign gives d* (2 xi)
  /// Outcome is log-normal (ln R ~ N(tau + xi a, 1)) rather than Gaussian.
  bool log_normal = false;
};

/// Randomized-trial data (x_i, a_i, r_i, pi_i).
struct TrialDataset {
  Matrix covariates;  // n x m
  Vector treatments;  // +-1
  Vector rewards;
  Vector propensities;
  std::optional<Oracle> oracle;
  /// Rows whose reward was redrawn by contaminate(); empty means none.
  std::vector<bool> contaminated;

  Eigen::Index size() const { return covariates.rows(); }
  Eigen::Index dim() const { return covariates.cols(); }

  bool any_contaminated() const {
    for (bool c : contaminated)
      if (c) return true;
    return false;
  }

  void validate() const {
    const auto n = size();
    if (treatments.size() != n || rewards.size() != n || propensities.size() != n)
      throw std::invalid_argument("dataset columns have inconsistent lengths");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (treatments(i) != 1.0 && treatments(i) != -1.0)
        throw std::invalid_argument("treatments must be +1 or -1");
      if (!(propensities(i) > 0.0 && propensities(i) < 1.0))
        throw std::invalid_argument("propensities must lie in (0, 1)");
      if (!std::isfinite(rewards(i)))
        throw std::invalid_argument("rewards must be finite");
    }
  }

  void require_nonnegative_rewards() const {
    if ((rewards.array() < 0.0).any())
      throw std::invalid_argument(
          "negative rewards on the OWL path; use residual weighted learning "
          "(rwl) for signed outcomes");
  }

  const Oracle& require_oracle() const {
    if (!oracle) throw std::invalid_argument("dataset has no oracle");
    return *oracle;
  }

  /// Rows [begin, begin + count).
  TrialDataset head(Eigen::Index count, Eigen::Index begin = 0) const {
    TrialDataset d;
    d.covariates = covariates.middleRows(begin, count);
    d.treatments = treatments.segment(begin, count);
    d.rewards = rewards.segment(begin, count);
    d.propensities = propensities.segment(begin, count);
    if (oracle) {
      d.oracle = Oracle{oracle->tau.segment(begin, count),
                        oracle->xi.segment(begin, count),
                        oracle->optimal.segment(begin, count),
                        oracle->gap.segment(begin, count),
                        oracle->target.segment(begin, count),
                        oracle->log_normal};
    }
    if (!contaminated.empty())
      d.contaminated.assign(contaminated.begin() + begin,
                            contaminated.begin() + begin + count);
    return d;
  }
};

// ---------------------------------------------------------------------------
// CSV I/O: header x1..xm, a, r [, pi]; oracle sidecar tau, xi, d_star, gap,
// target.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::string format_double(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

inline std::vector<std::vector<double>> read_numeric_csv(
    std::istream& in, std::vector<std::string>& header) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty CSV input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  header = split_csv_line(line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw std::runtime_error("CSV row has " + std::to_string(cells.size()) +
                               " cells, header has " +
                               std::to_string(header.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(std::stod(c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

inline void write_dataset_csv(const TrialDataset& data, std::ostream& out,
                              bool include_propensity = false) {
  for (Eigen::Index j = 0; j < data.dim(); ++j) out << 'x' << (j + 1) << ',';
  out << "a,r" << (include_propensity ? ",pi" : "") << '\n';
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j)
      out << detail::format_double(data.covariates(i, j)) << ',';
    out << static_cast<int>(data.treatments(i)) << ','
        << detail::format_double(data.rewards(i));
    if (include_propensity) out << ',' << detail::format_double(data.propensities(i));
    out << '\n';
  }
}

inline void write_oracle_csv(const Oracle& o, std::ostream& out) {
  out << "tau,xi,d_star,gap,target\n";
  for (Eigen::Index i = 0; i < o.tau.size(); ++i) {
    out << detail::format_double(o.tau(i)) << ',' << detail::format_double(o.xi(i))
        << ',' << static_cast<int>(o.optimal(i)) << ','
        << detail::format_double(o.gap(i)) << ','
        << detail::format_double(o.target(i)) << '\n';
  }
}

/// Reads x1..xm, a, r and an optional pi column (default 1/2).
inline TrialDataset read_dataset_csv(std::istream& in) {
  std::vector<std::string> header;
  const auto rows = detail::read_numeric_csv(in, header);
  int col_a = -1, col_r = -1, col_pi = -1;
  std::vector<int> xcols;
  for (int j = 0; j < static_cast<int>(header.size()); ++j) {
    const auto& h = header[j];
    if (h == "a") col_a = j;
    else if (h == "r") col_r = j;
    else if (h == "pi") col_pi = j;
    else if (!h.empty() && h[0] == 'x') xcols.push_back(j);
    else throw std::runtime_error("unexpected CSV column '" + h + "'");
  }
  if (col_a < 0 || col_r < 0) throw std::runtime_error("CSV needs columns a and r");
  TrialDataset d;
  const auto n = static_cast<Eigen::Index>(rows.size());
  d.covariates.resize(n, static_cast<Eigen::Index>(xcols.size()));
  d.treatments.resize(n);
  d.rewards.resize(n);
  d.propensities.setConstant(n, 0.5);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < xcols.size(); ++j) d.covariates(i, j) = rows[i][xcols[j]];
    d.treatments(i) = rows[i][col_a];
    d.rewards(i) = rows[i][col_r];
    if (col_pi >= 0) d.propensities(i) = rows[i][col_pi];
  }
  d.validate();
  return d;
}

inline Oracle read_oracle_csv(std::istream& in) {
  std::vector<std::string> header;
  const auto rows = detail::read_numeric_csv(in, header);
  const std::vector<std::string> want = {"tau", "xi", "d_star", "gap", "target"};
  if (header != want) throw std::runtime_error("oracle CSV header must be tau,xi,d_star,gap,target");
  const auto n = static_cast<Eigen::Index>(rows.size());
  Oracle o{Vector(n), Vector(n), Vector(n), Vector(n), Vector(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    o.tau(i) = rows[i][0];
    o.xi(i) = rows[i][1];
    o.optimal(i) = rows[i][2];
    o.gap(i) = rows[i][3];
    o.target(i) = rows[i][4];
  }
  return o;
}

}  // namespace owlkit
