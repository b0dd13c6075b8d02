#pragma once

// Expression-matrix ingestion and the command-level pipelines behind the CLI:
// estimate (matrix -> tests -> expected p-values -> every estimator),
// simulate (study driver over n/rho lists), and epv (e_delta tables).

#include <array>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "pi0kit/epv.hpp"
#include "pi0kit/errors.hpp"
#include "pi0kit/estimators.hpp"
#include "pi0kit/simulation.hpp"
#include "pi0kit/testing.hpp"

namespace pi0kit {

struct LabelSpec {
  enum class Source { none, header, inline_list, file };
  Source source = Source::none;
  std::string inline_csv;
  std::string file_path;
};

struct ExpressionMatrix {
  Matrix values;
  std::vector<std::string> gene_ids;
  std::vector<int> group_labels;  // 0/1 per column; empty without labels
  std::array<std::string, 2> group_names{};
  std::size_t rows_in_file = 0;
  std::size_t rows_dropped_nonfinite = 0;
};

namespace detail {

// Splits one delimited line; handles double-quoted fields.
inline std::vector<std::string> split_line(const std::string& line, char delim,
                                           std::size_t line_no) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current.push_back(c);
      }
    } else if (c == '"' && current.empty()) {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(std::move(current));
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  if (quoted) throw parse_error("line " + std::to_string(line_no) + ": unterminated quote");
  fields.push_back(std::move(current));
  return fields;
}

// Full-precision parse; empty fields and textual NaNs become quiet NaN so the
// row-level drop policy can handle them.
inline double parse_cell(const std::string& token, std::size_t line_no) {
  if (token.empty()) return std::numeric_limits<double>::quiet_NaN();
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0')
    throw parse_error("line " + std::to_string(line_no) + ": unparseable value '" + token + "'");
  return v;
}

inline bool looks_numeric(const std::string& token) {
  if (token.empty()) return true;  // empty cell = missing value
  char* end = nullptr;
  std::strtod(token.c_str(), &end);
  return end != token.c_str() && *end == '\0';
}

inline std::vector<std::string> read_label_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open labels file: " + path);
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (!line.empty()) labels.push_back(line);
  }
  return labels;
}

inline std::vector<std::string> split_csv_list(const std::string& csv) {
  std::vector<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

inline void assign_groups(ExpressionMatrix& matrix, const std::vector<std::string>& labels) {
  if (labels.size() != matrix.values.cols)
    throw label_error("label count " + std::to_string(labels.size()) + " does not match " +
                      std::to_string(matrix.values.cols) + " sample columns");
  std::vector<std::string> distinct;
  matrix.group_labels.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::size_t g = distinct.size();
    for (std::size_t k = 0; k < distinct.size(); ++k) {
      if (distinct[k] == labels[i]) {
        g = k;
        break;
      }
    }
    if (g == distinct.size()) {
      if (distinct.size() == 2)
        throw label_error("more than two distinct group labels (first extra: '" + labels[i] +
                          "')");
      distinct.push_back(labels[i]);
    }
    matrix.group_labels[i] = static_cast<int>(g);
  }
  if (distinct.size() < 2) throw label_error("need two distinct group labels");
  matrix.group_names = {distinct[0], distinct[1]};
}

}  // namespace detail

// Reads a delimited expression matrix: header row of sample identifiers,
// optional leading gene-id column, rows = genes. Rows containing non-finite
// values are dropped and counted. Row order is preserved as in the file.
inline ExpressionMatrix ingest_matrix(const std::string& path, char delimiter,
                                      const LabelSpec& labels = {}) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open input file: " + path);

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line != "\r") {
      header = detail::split_line(line, delimiter, line_no);
      break;
    }
  }
  if (header.empty()) throw parse_error("empty input file: " + path);

  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> row_lines;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    rows.push_back(detail::split_line(line, delimiter, line_no));
    row_lines.push_back(line_no);
  }
  if (rows.empty()) throw parse_error("no data rows in " + path);

  // Leading gene-id column: either the header is one token short (R style),
  // or the first data field is non-numeric.
  bool id_column;
  bool drop_header_corner = false;
  if (rows.front().size() == header.size() + 1) {
    id_column = true;
  } else if (rows.front().size() == header.size()) {
    id_column = !detail::looks_numeric(rows.front().front());
    drop_header_corner = id_column;
  } else {
    throw parse_error("line " + std::to_string(row_lines.front()) + ": expected " +
                      std::to_string(header.size()) + " or " +
                      std::to_string(header.size() + 1) + " fields, found " +
                      std::to_string(rows.front().size()));
  }
  if (drop_header_corner) header.erase(header.begin());
  const std::size_t samples = header.size();
  const std::size_t expected_fields = samples + (id_column ? 1 : 0);

  ExpressionMatrix out;
  out.rows_in_file = rows.size();
  std::vector<double> kept_values;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& fields = rows[k];
    if (fields.size() != expected_fields)
      throw parse_error("line " + std::to_string(row_lines[k]) + ": expected " +
                        std::to_string(expected_fields) + " fields, found " +
                        std::to_string(fields.size()));
    std::vector<double> values(samples);
    bool finite = true;
    for (std::size_t j = 0; j < samples; ++j) {
      values[j] = detail::parse_cell(fields[j + (id_column ? 1 : 0)], row_lines[k]);
      finite = finite && std::isfinite(values[j]);
    }
    if (!finite) {
      ++out.rows_dropped_nonfinite;
      continue;
    }
    out.gene_ids.push_back(id_column ? fields.front()
                                     : "row" + std::to_string(out.gene_ids.size() + 1));
    kept_values.insert(kept_values.end(), values.begin(), values.end());
  }
  out.values.rows = out.gene_ids.size();
  out.values.cols = samples;
  out.values.values = std::move(kept_values);
  if (out.values.rows == 0) throw parse_error("every row was dropped while ingesting " + path);

  switch (labels.source) {
    case LabelSpec::Source::none:
      break;
    case LabelSpec::Source::header:
      detail::assign_groups(out, header);
      break;
    case LabelSpec::Source::inline_list:
      detail::assign_groups(out, detail::split_csv_list(labels.inline_csv));
      break;
    case LabelSpec::Source::file:
      detail::assign_groups(out, detail::read_label_file(labels.file_path));
      break;
  }
  return out;
}

inline char delimiter_for(const std::string& format, const std::string& path) {
  if (format == "csv") return ',';
  if (format == "tsv") return '\t';
  if (format == "auto") {
    const auto dot = path.rfind('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    return (ext == "tsv" || ext == "txt") ? '\t' : ',';
  }
  throw config_error("unknown format '" + format + "' (expected csv, tsv or auto)");
}

struct EstimateOptions {
  std::string input_path;
  std::string format = "auto";
  LabelSpec labels{};
  TestFamily family = TestFamily::t_two_sample_two_sided;
  double sigma = 1.0;  // z family only
  EstimatorConfig estimator{};
  std::string report_path = "report.json";
};

struct EstimateReport {
  int schema_version = 1;
  std::string input_path;
  TestFamily family = TestFamily::t_two_sample_two_sided;
  std::size_t rows_in_file = 0;
  std::size_t rows_dropped_nonfinite = 0;
  std::size_t rows_dropped_zero_variance = 0;
  std::size_t m = 0;
  std::array<std::size_t, 2> group_sizes{0, 0};
  std::array<std::string, 2> group_names{};
  EstimatorConfig config;
  EstimateSet results;
};

namespace detail {

// Constant rows are dropped here, with a count, rather than failing the whole
// matrix: real expression files contain them and the estimators cannot use
// them either way.
inline std::size_t drop_zero_variance_rows(ExpressionMatrix& matrix, TestFamily family) {
  if (family == TestFamily::z_one_sided) return 0;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < matrix.values.rows; ++i) {
    const auto row = matrix.values.row(i);
    long double ss = 0.0L;
    if (family == TestFamily::t_one_sample_two_sided) {
      const auto mv = mean_and_ss(row);
      ss = mv.ss;
    } else {
      std::vector<double> x, y;
      for (std::size_t j = 0; j < row.size(); ++j)
        (matrix.group_labels[j] == 0 ? x : y).push_back(row[j]);
      ss = mean_and_ss(x).ss + mean_and_ss(y).ss;
    }
    if (ss > 0.0L) keep.push_back(i);
  }
  if (keep.size() == matrix.values.rows) return 0;
  const std::size_t dropped = matrix.values.rows - keep.size();
  Matrix pruned(keep.size(), matrix.values.cols);
  std::vector<std::string> ids;
  ids.reserve(keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    ids.push_back(matrix.gene_ids[keep[k]]);
    for (std::size_t j = 0; j < matrix.values.cols; ++j)
      pruned.at(k, j) = matrix.values.at(keep[k], j);
  }
  matrix.values = std::move(pruned);
  matrix.gene_ids = std::move(ids);
  return dropped;
}

}  // namespace detail

// matrix -> test_matrix -> epv_for_outcomes -> estimate_all.
inline EstimateReport cmd_estimate(const EstimateOptions& options) {
  options.estimator.validate();
  if (options.family == TestFamily::t_two_sample_two_sided &&
      options.labels.source == LabelSpec::Source::none)
    throw config_error("two-sample analysis requires group labels");

  ExpressionMatrix matrix =
      ingest_matrix(options.input_path, delimiter_for(options.format, options.input_path),
                    options.labels);

  EstimateReport report;
  report.input_path = options.input_path;
  report.family = options.family;
  report.rows_in_file = matrix.rows_in_file;
  report.rows_dropped_nonfinite = matrix.rows_dropped_nonfinite;
  report.rows_dropped_zero_variance = detail::drop_zero_variance_rows(matrix, options.family);
  report.m = matrix.values.rows;
  report.config = options.estimator;
  if (options.labels.source != LabelSpec::Source::none) {
    report.group_names = matrix.group_names;
    for (const int g : matrix.group_labels) ++report.group_sizes[g];
  }

  const auto outcomes =
      test_matrix(matrix.values, options.family, matrix.group_labels,
                  options.family == TestFamily::z_one_sided ? std::optional<double>(options.sigma)
                                                            : std::nullopt);
  std::vector<double> p(outcomes.size());
  for (std::size_t i = 0; i < outcomes.size(); ++i) p[i] = outcomes[i].p_value;
  report.results = estimate_all(p, outcomes, options.estimator);
  return report;
}

namespace detail {

inline nlohmann::json estimator_config_json(const EstimatorConfig& config) {
  nlohmann::json j;
  j["storey_lambda_grid"] = config.storey_lambda_grid;
  j["cheng_lambda_grid"] = config.cheng_lambda_grid;
  j["bootstrap_reps"] = config.bootstrap_reps;
  switch (config.initial_estimator) {
    case InitialEstimator::storey_bootstrap: j["initial_estimator"] = "storey_bootstrap"; break;
    case InitialEstimator::external_value: j["initial_estimator"] = "external_value"; break;
    case InitialEstimator::previous_e: j["initial_estimator"] = "previous_e"; break;
  }
  if (config.initial_estimator == InitialEstimator::external_value)
    j["external_pi0"] = config.external_pi0;
  j["seed"] = config.seed;
  j["memo_step"] = config.epv.memo_step;
  std::vector<std::string> names;
  for (const Method m : config.methods) names.push_back(method_name(m));
  j["methods"] = names;
  return j;
}

inline nlohmann::json estimate_json(const Pi0Estimate& est) {
  nlohmann::json j;
  j["value"] = est.value;
  j["intermediates"] = est.intermediates;
  if (!est.lambda_details.empty()) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& d : est.lambda_details) {
      nlohmann::json row;
      row["lambda"] = d.lambda;
      row["estimate"] = d.estimate;
      if (!std::isnan(d.mse)) row["mse"] = d.mse;
      row["skipped"] = d.skipped;
      rows.push_back(row);
    }
    j["lambda_details"] = rows;
  }
  if (!est.warnings.empty()) j["warnings"] = est.warnings;
  return j;
}

}  // namespace detail

inline void write_report_json(const EstimateReport& report, std::ostream& os) {
  nlohmann::json j;
  j["schema_version"] = report.schema_version;
  j["input"] = {{"path", report.input_path},
                {"family", to_string(report.family)},
                {"rows_in_file", report.rows_in_file},
                {"rows_dropped_nonfinite", report.rows_dropped_nonfinite},
                {"rows_dropped_zero_variance", report.rows_dropped_zero_variance},
                {"m", report.m}};
  if (report.family == TestFamily::t_two_sample_two_sided) {
    j["input"]["groups"] = {{report.group_names[0], report.group_sizes[0]},
                            {report.group_names[1], report.group_sizes[1]}};
  }
  j["config"] = detail::estimator_config_json(report.config);
  nlohmann::json estimates;
  for (const auto& [name, est] : report.results.estimates)
    estimates[name] = detail::estimate_json(est);
  j["estimates"] = estimates;
  if (!report.results.errors.empty()) j["errors"] = report.results.errors;
  os << j.dump(2) << "\n";
}

// Table-shaped machine-readable stdout: one method per row.
inline void write_estimate_table(const EstimateReport& report, std::ostream& os) {
  os << "method,pi0_estimate\n";
  for (const auto& [name, est] : report.results.estimates) {
    os << name << ',' << format_double(est.value) << "\n";
  }
  for (const auto& entry : report.results.errors) {
    os << entry.first << ",error\n";
  }
}

struct SimulateOptions {
  SimulationConfig base{};
  std::vector<int> n_values = {25};
  std::vector<double> rho_values = {0.0};
  std::string out_prefix;
  bool write_files = true;
};

inline nlohmann::json summary_json(const SimSummary& summary,
                                   const std::vector<int>& n_values,
                                   const std::vector<double>& rho_values) {
  const auto& c = summary.config;
  nlohmann::json j;
  j["schema_version"] = 1;
  j["config"] = {{"m", c.m},
                 {"n", n_values},
                 {"rho", rho_values},
                 {"pi0_grid", c.pi0_grid},
                 {"b", c.b},
                 {"r", c.r},
                 {"replications", c.replications},
                 {"seed", c.seed},
                 {"mu0", c.mu0},
                 {"effect_range", c.effect_range},
                 {"variance_exp_param", c.variance_exp_param},
                 {"variance_reading",
                  c.variance_reading == VarianceReading::rate ? "rate" : "mean"},
                 {"variance_divisor", c.variance_divisor},
                 {"estimator", detail::estimator_config_json(c.estimator)}};
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& cell : summary.cells) {
    nlohmann::json row{{"pi0", cell.pi0},       {"n", cell.n},
                       {"rho", cell.rho},       {"method", cell.method},
                       {"bias", cell.bias},     {"mse", cell.mse},
                       {"replications", cell.replications}};
    if (!std::isnan(cell.kurtosis)) row["kurtosis"] = cell.kurtosis;
    if (!std::isnan(cell.mean_e)) {
      row["e"] = cell.mean_e;
      row["e_tilde"] = cell.mean_e_tilde;
      row["e_hat"] = cell.mean_e_hat;
    }
    cells.push_back(row);
  }
  j["cells"] = cells;
  if (!summary.raw.empty()) {
    nlohmann::json raw = nlohmann::json::array();
    for (const auto& rec : summary.raw) {
      raw.push_back({{"pi0", rec.pi0},
                     {"n", rec.n},
                     {"rho", rec.rho},
                     {"replication", rec.replication},
                     {"method", rec.method},
                     {"estimate", rec.estimate}});
    }
    j["raw"] = raw;
  }
  if (!summary.oracle.empty()) {
    nlohmann::json oracle = nlohmann::json::array();
    for (const auto& rec : summary.oracle) {
      nlohmann::json row{{"pi0", rec.pi0},   {"n", rec.n},
                         {"rho", rec.rho},   {"replication", rec.replication},
                         {"d", rec.d},       {"m1", rec.m1}};
      if (!std::isnan(rec.e)) {
        row["e"] = rec.e;
        row["e_tilde"] = rec.e_tilde;
        row["e_hat"] = rec.e_hat;
        row["e_mid"] = rec.e_mid;
      }
      oracle.push_back(row);
    }
    j["oracle"] = oracle;
  }
  return j;
}

inline void write_oracle_csv(const SimSummary& summary, std::ostream& os) {
  os << "pi0,n,rho,replication,e,e_tilde,e_hat,e_mid,d,m1\n";
  for (const auto& rec : summary.oracle) {
    os << format_double(rec.pi0) << ',' << rec.n << ',' << format_double(rec.rho) << ','
       << rec.replication << ',' << format_double(rec.e) << ',' << format_double(rec.e_tilde)
       << ',' << format_double(rec.e_hat) << ',' << format_double(rec.e_mid) << ',' << rec.d
       << ',' << rec.m1 << "\n";
  }
}

// Runs the study over every (n, rho) pair, merging the per-pair summaries.
// Progress goes to the provided stream (standard error in the CLI).
inline SimSummary cmd_simulate(const SimulateOptions& options, std::ostream* progress = nullptr) {
  if (options.n_values.empty() || options.rho_values.empty())
    throw config_error("simulate needs at least one n and one rho");
  std::optional<SimSummary> merged;
  for (const int n : options.n_values) {
    for (const double rho : options.rho_values) {
      SimulationConfig config = options.base;
      config.n = n;
      config.rho = rho;
      config.validate();
      if (progress)
        *progress << "simulate: n=" << n << " rho=" << format_double(rho) << " ("
                  << config.pi0_grid.size() << " pi0 cells x " << config.replications
                  << " replications)\n";
      SimSummary part = run_study(config);
      if (!merged) {
        merged = std::move(part);
      } else {
        merge_into(*merged, std::move(part));
      }
    }
  }

  if (options.write_files) {
    const auto open = [&](const std::string& name) {
      std::ofstream out(options.out_prefix + name, std::ios::binary);
      if (!out) throw error("cannot write " + options.out_prefix + name);
      return out;
    };
    auto csv = open("summary.csv");
    write_summary_csv(*merged, csv);
    auto json = open("summary.json");
    json << summary_json(*merged, options.n_values, options.rho_values).dump(2) << "\n";
    if (options.base.collect_raw) {
      auto raw = open("raw.csv");
      write_raw_csv(*merged, raw);
    }
    if (options.base.collect_oracle) {
      auto oracle = open("oracle.csv");
      write_oracle_csv(*merged, oracle);
    }
  }
  return std::move(*merged);
}

struct EpvTableOptions {
  TestFamily family = TestFamily::t_one_sample_two_sided;
  int n = 25;
  int n1 = 47;
  int n2 = 25;
  std::vector<double> delta_grid;  // defaults to 0:0.05:2 when empty
};

inline std::vector<std::pair<double, double>> cmd_epv(const EpvTableOptions& options) {
  std::vector<double> grid = options.delta_grid;
  if (grid.empty()) {
    for (int k = 0; k <= 40; ++k) grid.push_back(0.05 * k);
  }
  std::vector<std::pair<double, double>> rows;
  rows.reserve(grid.size());
  for (const double delta : grid) {
    double e;
    switch (options.family) {
      case TestFamily::z_one_sided: e = e_delta_z(delta, options.n); break;
      case TestFamily::t_one_sample_two_sided: e = e_delta_t1(delta, options.n); break;
      case TestFamily::t_two_sample_two_sided:
        e = e_delta_t2(delta, options.n1, options.n2);
        break;
      default: throw config_error("unknown epv family");
    }
    rows.emplace_back(delta, e);
  }
  return rows;
}

inline void write_epv_csv(const std::vector<std::pair<double, double>>& rows, std::ostream& os) {
  os << "delta,e_delta\n";
  for (const auto& [delta, e] : rows) {
    os << format_double(delta) << ',' << format_double(e) << "\n";
  }
}

}  // namespace pi0kit
