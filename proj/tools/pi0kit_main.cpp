// pi0kit command line: estimate pi0 from an expression matrix, reproduce the
// simulation study, or print expected-p-value tables.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pi0kit/io.hpp"

namespace {

using namespace pi0kit;

std::vector<double> parse_double_list(const std::string& csv, const char* what) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw config_error(std::string("cannot parse ") + what + " entry '" + item + "'");
    }
  }
  if (out.empty()) throw config_error(std::string("empty list for ") + what);
  return out;
}

std::vector<int> parse_int_list(const std::string& csv, const char* what) {
  std::vector<int> out;
  for (const double v : parse_double_list(csv, what)) out.push_back(static_cast<int>(v));
  return out;
}

// "start:step:stop" or a plain comma list.
std::vector<double> parse_delta_grid(const std::string& text) {
  if (text.find(':') == std::string::npos) return parse_double_list(text, "delta grid");
  std::stringstream ss(text);
  std::string a, b, c;
  if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, c))
    throw config_error("delta grid must be start:step:stop or a comma list");
  const double start = std::stod(a), step = std::stod(b), stop = std::stod(c);
  if (!(step > 0.0) || stop < start) throw config_error("bad delta grid range");
  std::vector<double> grid;
  for (double v = start; v <= stop + 1e-12; v += step) grid.push_back(v);
  return grid;
}

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<Method> methods;
  for (const auto& name : names) {
    if (name == "storey_bootstrap" || name == "storey") {
      methods.push_back(Method::storey_bootstrap);
    } else if (name == "E1" || name == "e1") {
      methods.push_back(Method::e1);
    } else if (name == "E3" || name == "e3") {
      methods.push_back(Method::e3);
    } else if (name == "U" || name == "u") {
      methods.push_back(Method::u);
    } else {
      throw config_error("unknown method '" + name + "' (storey_bootstrap, E1, E3, U)");
    }
  }
  return methods;
}

TestFamily parse_family(const std::string& name) {
  if (name == "t2") return TestFamily::t_two_sample_two_sided;
  if (name == "t1") return TestFamily::t_one_sample_two_sided;
  if (name == "z") return TestFamily::z_one_sided;
  throw config_error("unknown family '" + name + "' (t2, t1, z)");
}

int run(int argc, char** argv) {
  CLI::App app{"pi0kit: estimators for the proportion of true null hypotheses"};
  app.require_subcommand(1);

  // --- estimate ---
  auto* estimate = app.add_subcommand("estimate", "estimate pi0 from an expression matrix");
  std::string input_path, format = "auto", labels_csv, labels_file, family_name = "t2";
  std::string report_path = "report.json", lambda_grid_csv, cheng_grid_csv;
  std::vector<std::string> method_names;
  double sigma = 1.0, initial_pi0 = -1.0;
  int bootstrap_reps = 100;
  std::uint64_t seed = 0;
  estimate->add_option("input", input_path, "expression matrix (CSV/TSV)")->required();
  estimate->add_option("--format", format, "csv, tsv or auto (default auto)");
  estimate->add_option("--labels", labels_csv, "comma list of group labels per sample column");
  estimate->add_option("--labels-file", labels_file, "file with one group label per line");
  estimate->add_option("--family", family_name, "t2 (default), t1 or z");
  estimate->add_option("--sigma", sigma, "known sigma for the z family");
  estimate->add_option("--method", method_names, "methods to run (repeatable or comma list)")
      ->delimiter(',');
  estimate->add_option("--lambda-grid", lambda_grid_csv, "storey lambda grid (comma list)");
  estimate->add_option("--cheng-lambda-grid", cheng_grid_csv, "cheng lambda grid (comma list)");
  estimate->add_option("--bootstrap-reps", bootstrap_reps, "bootstrap replications (default 100)");
  estimate->add_option("--seed", seed, "rng seed");
  estimate->add_option("--initial-pi0", initial_pi0,
                       "external initial pi0 estimate (switches the initial estimator)");
  estimate->add_option("--output", report_path, "report path (default report.json)");

  // --- simulate ---
  auto* simulate = app.add_subcommand("simulate", "run the bias/MSE simulation study");
  std::string n_csv = "25", rho_csv = "0", pi0_csv, out_prefix;
  std::string sim_methods_csv, exp_reading = "rate";
  SimulationConfig sim;
  sim.replications = 100;
  bool oracle = false, raw = false;
  int threads = 0;
  simulate->add_option("--m", sim.m, "hypotheses per dataset (default 1000)");
  simulate->add_option("--n", n_csv, "sample size(s), comma list (default 25)");
  simulate->add_option("--rho", rho_csv, "AR(1) correlation(s), comma list (default 0)");
  simulate->add_option("--pi0", pi0_csv, "pi0 grid (default 0.1..0.9 step 0.1)");
  simulate->add_option("--b", sim.b, "block size (default 100)");
  simulate->add_option("--r", sim.r, "block count (default 10)");
  simulate->add_option("--reps", sim.replications, "replications per cell (default 100)");
  simulate->add_option("--seed", sim.seed, "rng seed");
  simulate->add_option("--method", sim_methods_csv, "methods to run (comma list)");
  simulate->add_option("--bootstrap-reps", sim.estimator.bootstrap_reps,
                       "bootstrap replications (default 100)");
  simulate->add_option("--exp-reading", exp_reading,
                       "block-variance exponential parameter reading: rate (default) or mean");
  simulate->add_flag("--oracle", oracle, "collect e / e_tilde / e_hat oracle columns");
  simulate->add_flag("--raw", raw, "write per-replication raw estimates");
  simulate->add_option("--out-prefix", out_prefix, "output path prefix");
  simulate->add_option("--threads", threads, "worker threads (default: PI0KIT_THREADS or all)");

  // --- epv ---
  auto* epv = app.add_subcommand("epv", "print expected p-value tables");
  std::string epv_family = "t1", delta_grid_text, epv_output;
  EpvTableOptions epv_options;
  epv->add_option("--family", epv_family, "t1 (default), t2 or z");
  epv->add_option("--n", epv_options.n, "sample size for t1/z (default 25)");
  epv->add_option("--n1", epv_options.n1, "first group size for t2 (default 47)");
  epv->add_option("--n2", epv_options.n2, "second group size for t2 (default 25)");
  epv->add_option("--delta-grid", delta_grid_text,
                  "effect grid, start:step:stop or comma list (default 0:0.05:2)");
  epv->add_option("--output", epv_output, "write CSV here instead of stdout");

  CLI11_PARSE(app, argc, argv);

  if (estimate->parsed()) {
    EstimateOptions options;
    options.input_path = input_path;
    options.format = format;
    options.family = parse_family(family_name);
    options.sigma = sigma;
    options.report_path = report_path;
    if (!labels_csv.empty() && !labels_file.empty())
      throw config_error("pass either --labels or --labels-file, not both");
    if (!labels_csv.empty()) {
      options.labels = {LabelSpec::Source::inline_list, labels_csv, ""};
    } else if (!labels_file.empty()) {
      options.labels = {LabelSpec::Source::file, "", labels_file};
    } else if (options.family == TestFamily::t_two_sample_two_sided) {
      options.labels.source = LabelSpec::Source::header;
    }
    options.estimator.bootstrap_reps = bootstrap_reps;
    options.estimator.seed = seed;
    if (!method_names.empty()) options.estimator.methods = parse_methods(method_names);
    if (!lambda_grid_csv.empty())
      options.estimator.storey_lambda_grid = parse_double_list(lambda_grid_csv, "lambda grid");
    if (!cheng_grid_csv.empty())
      options.estimator.cheng_lambda_grid =
          parse_double_list(cheng_grid_csv, "cheng lambda grid");
    if (initial_pi0 >= 0.0) {
      options.estimator.initial_estimator = InitialEstimator::external_value;
      options.estimator.external_pi0 = initial_pi0;
    }

    const EstimateReport report = cmd_estimate(options);
    std::ofstream json_out(options.report_path, std::ios::binary);
    if (!json_out) throw error("cannot write report to " + options.report_path);
    write_report_json(report, json_out);
    write_estimate_table(report, std::cout);
    std::cerr << "report written to " << options.report_path << " (m=" << report.m
              << ", dropped " << report.rows_dropped_nonfinite << " non-finite, "
              << report.rows_dropped_zero_variance << " zero-variance rows)\n";
    if (!report.results.errors.empty()) {
      for (const auto& [name, what] : report.results.errors)
        std::cerr << "method " << name << " failed: " << what << "\n";
      return 2;
    }
    return 0;
  }

  if (simulate->parsed()) {
    SimulateOptions options;
    sim.collect_oracle = oracle;
    sim.collect_raw = raw;
    sim.threads = threads;
    if (!pi0_csv.empty()) sim.pi0_grid = parse_double_list(pi0_csv, "pi0 grid");
    if (!sim_methods_csv.empty()) {
      std::vector<std::string> names;
      std::stringstream ss(sim_methods_csv);
      std::string item;
      while (std::getline(ss, item, ',')) names.push_back(item);
      sim.estimator.methods = parse_methods(names);
    }
    if (exp_reading == "rate") {
      sim.variance_reading = VarianceReading::rate;
    } else if (exp_reading == "mean") {
      sim.variance_reading = VarianceReading::mean;
    } else {
      throw config_error("--exp-reading must be rate or mean");
    }
    options.base = sim;
    options.n_values = parse_int_list(n_csv, "n");
    options.rho_values = parse_double_list(rho_csv, "rho");
    options.out_prefix = out_prefix;
    cmd_simulate(options, &std::cerr);
    std::cerr << "wrote " << options.out_prefix << "summary.csv and "
              << options.out_prefix << "summary.json\n";
    return 0;
  }

  // epv
  epv_options.family = parse_family(epv_family);
  if (!delta_grid_text.empty()) epv_options.delta_grid = parse_delta_grid(delta_grid_text);
  const auto rows = cmd_epv(epv_options);
  if (epv_output.empty()) {
    write_epv_csv(rows, std::cout);
  } else {
    std::ofstream out(epv_output, std::ios::binary);
    if (!out) throw error("cannot write " + epv_output);
    write_epv_csv(rows, out);
    std::cerr << "wrote " << epv_output << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& ex) {
    nlohmann::json err{{"error", ex.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
}
