#pragma once

// Serialization of fitted rules and result tables (CSV, JSON, Markdown).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "owlkit/experiment.hpp"

namespace owlkit {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Rules

inline Json to_json(const KernelSpec& k) {
  return {{"family", to_string(k.family)}, {"bandwidth", k.bandwidth}, {"alpha", k.alpha}};
}

inline KernelSpec kernel_from_json(const Json& j) {
  KernelSpec k;
  k.family = parse_kernel_family(j.at("family").get<std::string>());
  k.bandwidth = j.value("bandwidth", 1.0);
  k.alpha = j.value("alpha", 1.5);
  k.validate();
  return k;
}

inline Json to_json(const FittedRule& r) {
  Json support = Json::array();
  for (Eigen::Index i = 0; i < r.support.rows(); ++i) {
    std::vector<double> row(r.support.cols());
    for (Eigen::Index j = 0; j < r.support.cols(); ++j) row[j] = r.support(i, j);
    support.push_back(row);
  }
  return {{"kernel", to_json(r.kernel)},
          {"bias", r.bias},
          {"coefficients", std::vector<double>(r.coefficients.data(),
                                               r.coefficients.data() + r.coefficients.size())},
          {"support", support}};
}

inline FittedRule rule_from_json(const Json& j) {
  FittedRule r;
  r.kernel = kernel_from_json(j.at("kernel"));
  r.bias = j.at("bias").get<double>();
  const auto coef = j.at("coefficients").get<std::vector<double>>();
  const auto& sup = j.at("support");
  if (sup.size() != coef.size())
    throw std::runtime_error("rule JSON: support and coefficients differ in length");
  r.coefficients = Eigen::Map<const Vector>(coef.data(), static_cast<Eigen::Index>(coef.size()));
  const Eigen::Index m = sup.empty() ? 0 : static_cast<Eigen::Index>(sup[0].size());
  r.support.resize(static_cast<Eigen::Index>(sup.size()), m);
  for (std::size_t i = 0; i < sup.size(); ++i) {
    const auto row = sup[i].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != m)
      throw std::runtime_error("rule JSON: ragged support matrix");
    for (Eigen::Index c = 0; c < m; ++c) r.support(static_cast<Eigen::Index>(i), c) = row[c];
  }
  return r;
}

inline Json to_json(const ResidualModel& m) {
  return {{"intercept", m.intercept},
          {"slopes", std::vector<double>(m.slopes.data(), m.slopes.data() + m.slopes.size())}};
}

inline ResidualModel residual_model_from_json(const Json& j) {
  ResidualModel m;
  m.intercept = j.at("intercept").get<double>();
  const auto s = j.at("slopes").get<std::vector<double>>();
  m.slopes = Eigen::Map<const Vector>(s.data(), static_cast<Eigen::Index>(s.size()));
  return m;
}

// ---------------------------------------------------------------------------
// Result tables

enum class TableFormat { csv, json, markdown };

inline TableFormat parse_table_format(const std::string& s) {
  if (s == "csv") return TableFormat::csv;
  if (s == "json") return TableFormat::json;
  if (s == "markdown" || s == "md") return TableFormat::markdown;
  throw std::invalid_argument("unknown output format '" + s + "' (csv, json, markdown)");
}

inline const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> cols = {
      "method",   "scenario",      "contamination",    "mean_value",
      "sd_value", "mean_error",    "sd_error",         "mean_runtime",
      "replicates_ok", "replicates_total", "status"};
  return cols;
}

namespace detail {

/// Shortest text that parses back to the same double; NaN becomes empty.
inline std::string exact(double x) {
  if (std::isnan(x)) return "";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline double parse_exact(const std::string& s) {
  return s.empty() ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline Json number_or_null(double x) { return std::isnan(x) ? Json(nullptr) : Json(x); }

inline double number_from(const Json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline std::string pct(double rate) { return exact(100.0 * rate) + "%"; }

inline std::string fixed3(double x) {
  if (std::isnan(x)) return "NA";
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << x;
  return os.str();
}

}  // namespace detail

inline void write_table_csv(const ResultTable& t, std::ostream& out) {
  const auto& cols = result_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : t.rows) {
    out << detail::csv_quote(r.method) << ',' << detail::csv_quote(r.scenario) << ','
        << detail::exact(r.contamination) << ',' << detail::exact(r.mean_value) << ','
        << detail::exact(r.sd_value) << ',' << detail::exact(r.mean_error) << ','
        << detail::exact(r.sd_error) << ',' << detail::exact(r.mean_runtime) << ','
        << r.replicates_ok << ',' << r.replicates_total << ',' << r.status() << '\n';
  }
}

inline ResultTable read_table_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty result CSV");
  if (detail::csv_fields(line) != result_columns())
    throw std::runtime_error("result CSV header does not match the expected columns");
  ResultTable t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = detail::csv_fields(line);
    if (f.size() != result_columns().size())
      throw std::runtime_error("result CSV row has the wrong number of fields");
    ResultRow r;
    r.method = f[0];
    r.scenario = f[1];
    r.contamination = detail::parse_exact(f[2]);
    r.mean_value = detail::parse_exact(f[3]);
    r.sd_value = detail::parse_exact(f[4]);
    r.mean_error = detail::parse_exact(f[5]);
    r.sd_error = detail::parse_exact(f[6]);
    r.mean_runtime = detail::parse_exact(f[7]);
    r.replicates_ok = std::stoi(f[8]);
    r.replicates_total = std::stoi(f[9]);
    t.rows.push_back(r);
  }
  return t;
}

inline Json to_json(const ResultTable& t) {
  Json rows = Json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"method", r.method},
                    {"scenario", r.scenario},
                    {"contamination", r.contamination},
                    {"mean_value", detail::number_or_null(r.mean_value)},
                    {"sd_value", detail::number_or_null(r.sd_value)},
                    {"mean_error", detail::number_or_null(r.mean_error)},
                    {"sd_error", detail::number_or_null(r.sd_error)},
                    {"mean_runtime", detail::number_or_null(r.mean_runtime)},
                    {"replicates_ok", r.replicates_ok},
                    {"replicates_total", r.replicates_total},
                    {"status", r.status()}});
  }
  return {{"rows", rows}};
}

inline ResultTable table_from_json(const Json& j) {
  ResultTable t;
  for (const auto& x : j.at("rows")) {
    ResultRow r;
    r.method = x.at("method").get<std::string>();
    r.scenario = x.at("scenario").get<std::string>();
    r.contamination = x.at("contamination").get<double>();
    r.mean_value = detail::number_from(x.at("mean_value"));
    r.sd_value = detail::number_from(x.at("sd_value"));
    r.mean_error = detail::number_from(x.at("mean_error"));
    r.sd_error = detail::number_from(x.at("sd_error"));
    r.mean_runtime = detail::number_from(x.at("mean_runtime"));
    r.replicates_ok = x.at("replicates_ok").get<int>();
    r.replicates_total = x.at("replicates_total").get<int>();
    t.rows.push_back(r);
  }
  return t;
}

/// One row per method, a value/error pair per contamination level, and a
/// column naming the levels where the method has the best mean value.
inline void write_table_markdown(const ResultTable& t, std::ostream& out) {
  std::vector<std::string> methods;
  std::vector<double> rates;
  std::map<std::pair<std::string, double>, const ResultRow*> cell;
  for (const auto& r : t.rows) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
      methods.push_back(r.method);
    if (std::find(rates.begin(), rates.end(), r.contamination) == rates.end())
      rates.push_back(r.contamination);
    cell[{r.method, r.contamination}] = &r;
  }
  std::map<double, double> best;
  for (const auto& r : t.rows)
    if (!std::isnan(r.mean_value) &&
        (!best.count(r.contamination) || r.mean_value > best[r.contamination]))
      best[r.contamination] = r.mean_value;

  out << "| Method |";
  for (double rate : rates)
    out << ' ' << detail::pct(rate) << " Value | " << detail::pct(rate) << " Error |";
  out << " Best value at |\n|---|";
  for (std::size_t i = 0; i < rates.size(); ++i) out << "---|---|";
  out << "---|\n";
  for (const auto& m : methods) {
    out << "| " << m << " |";
    std::string best_at;
    for (double rate : rates) {
      auto it = cell.find({m, rate});
      if (it == cell.end()) {
        out << " | |";
        continue;
      }
      const ResultRow& r = *it->second;
      const std::string mark = r.complete() ? "" : "*";
      out << ' ' << detail::fixed3(r.mean_value) << " (" << detail::fixed3(r.sd_value) << ")"
          << mark << " | " << detail::fixed3(r.mean_error) << " ("
          << detail::fixed3(r.sd_error) << ")" << mark << " |";
      if (best.count(rate) && r.mean_value == best[rate])
        best_at += (best_at.empty() ? "" : ", ") + detail::pct(rate);
    }
    out << ' ' << best_at << " |\n";
  }
}

inline void write_table(const ResultTable& t, TableFormat format, std::ostream& out) {
  switch (format) {
    case TableFormat::csv: write_table_csv(t, out); break;
    case TableFormat::json: out << to_json(t).dump(2) << '\n'; break;
    case TableFormat::markdown: write_table_markdown(t, out); break;
  }
}

inline void emit(const ResultTable& t, TableFormat format, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_table(t, format, out);
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Rate study

inline void write_rate_csv(const RateStudyResult& r, std::ostream& out) {
  out << "method,target,n,log2_n,mean_excess_risk,sd_excess_risk,log_excess_risk,"
         "replicates_ok,replicates_total\n";
  for (const auto& x : r.rows) {
    out << detail::csv_quote(x.method) << ',' << (x.smooth ? "smooth" : "nonsmooth") << ','
        << x.n << ',' << detail::exact(x.log2_n) << ',' << detail::exact(x.mean_excess_risk)
        << ',' << detail::exact(x.sd_excess_risk) << ',' << detail::exact(x.log_excess_risk)
        << ',' << x.replicates_ok << ',' << x.replicates_total << '\n';
  }
}

}  // namespace owlkit
