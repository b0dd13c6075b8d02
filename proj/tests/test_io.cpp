#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "pi0kit/io.hpp"
#include "pi0kit/rng.hpp"

using namespace pi0kit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("pi0kit_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Null two-sample matrix file: header row carries the group labels.
std::string write_null_matrix(const TempDir& dir, const std::string& name, std::size_t genes,
                              std::size_t per_group, std::uint64_t seed,
                              bool add_constant_row = false) {
  CounterRng rng(seed, stream_id({genes, per_group}));
  std::ostringstream os;
  os << "gene";
  for (std::size_t j = 0; j < 2 * per_group; ++j)
    os << ',' << (j < per_group ? "ctrl" : "case");
  os << '\n';
  for (std::size_t i = 0; i < genes; ++i) {
    os << 'g' << i;
    for (std::size_t j = 0; j < 2 * per_group; ++j) os << ',' << rng.normal();
    os << '\n';
  }
  if (add_constant_row) {
    os << "flat";
    for (std::size_t j = 0; j < 2 * per_group; ++j) os << ",3.25";
    os << '\n';
  }
  const std::string path = dir.file(name);
  write_file(path, os.str());
  return path;
}

}  // namespace

TEST_CASE("ingest a toy matrix with ids and header labels") {
  TempDir dir;
  const auto path = dir.file("toy.csv");
  write_file(path,
             "gene,a,a,b,b\n"
             "g1,1.0,2.0,3.0,4.0\n"
             "g2,5.0,6.0,7.0,8.0\n");
  LabelSpec labels;
  labels.source = LabelSpec::Source::header;
  const auto matrix = ingest_matrix(path, ',', labels);
  REQUIRE(matrix.values.rows == 2);
  REQUIRE(matrix.values.cols == 4);
  REQUIRE(matrix.gene_ids[0] == "g1");
  REQUIRE(matrix.gene_ids[1] == "g2");
  REQUIRE(matrix.values.at(1, 2) == 7.0);
  REQUIRE(matrix.group_labels == std::vector<int>{0, 0, 1, 1});
  REQUIRE(matrix.group_names[0] == "a");
  REQUIRE(matrix.group_names[1] == "b");
}

TEST_CASE("rows with non-finite cells are dropped and counted") {
  TempDir dir;
  const auto path = dir.file("nan.csv");
  write_file(path,
             "s1,s2,s3\n"
             "g1,1.0,2.0,3.0\n"
             "g2,4.0,NaN,6.0\n"
             "g3,7.0,8.0,9.0\n");
  const auto matrix = ingest_matrix(path, ',');
  REQUIRE(matrix.rows_in_file == 3);
  REQUIRE(matrix.rows_dropped_nonfinite == 1);
  REQUIRE(matrix.values.rows == 2);
  REQUIRE(matrix.gene_ids == std::vector<std::string>{"g1", "g3"});
}

TEST_CASE("matrix without an id column generates row names") {
  TempDir dir;
  const auto path = dir.file("bare.tsv");
  write_file(path, "s1\ts2\n1.5\t2.5\n3.5\t4.5\n");
  const auto matrix = ingest_matrix(path, '\t');
  REQUIRE(matrix.values.rows == 2);
  REQUIRE(matrix.gene_ids[0] == "row1");
  REQUIRE(matrix.values.at(0, 1) == 2.5);
}

TEST_CASE("ingestion errors carry line numbers and label context") {
  TempDir dir;
  const auto bad = dir.file("bad.csv");
  write_file(bad, "s1,s2\n1.0,oops\n");
  try {
    ingest_matrix(bad, ',');
    FAIL("expected parse error");
  } catch (const parse_error& ex) {
    REQUIRE(std::string(ex.what()).find("line 2") != std::string::npos);
  }

  const auto ragged = dir.file("ragged.csv");
  write_file(ragged, "s1,s2\n1.0,2.0\n1.0,2.0,3.0,4.0\n");
  REQUIRE_THROWS_AS(ingest_matrix(ragged, ','), parse_error);

  const auto toy = dir.file("toy.csv");
  write_file(toy, "s1,s2,s3,s4\n1.0,2.0,3.0,4.0\n");
  LabelSpec labels;
  labels.source = LabelSpec::Source::inline_list;
  labels.inline_csv = "a,a,b";  // one short
  REQUIRE_THROWS_AS(ingest_matrix(toy, ',', labels), label_error);
  labels.inline_csv = "a,a,b,c";  // three groups
  REQUIRE_THROWS_AS(ingest_matrix(toy, ',', labels), label_error);
  labels.inline_csv = "a,a,a,a";  // one group
  REQUIRE_THROWS_AS(ingest_matrix(toy, ',', labels), label_error);
}

TEST_CASE("parsed values round-trip at full precision") {
  TempDir dir;
  const auto path = dir.file("precise.csv");
  const std::string text = "0.12345678901234567";
  write_file(path, "s1,s2\n" + text + ",2.7182818284590452\n");
  const auto matrix = ingest_matrix(path, ',');
  REQUIRE(matrix.values.at(0, 0) == std::strtod(text.c_str(), nullptr));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.15g", matrix.values.at(0, 0));
  REQUIRE(std::string(buf) == "0.123456789012346");
}

TEST_CASE("Golub-shaped ingestion: 7128 genes, 47/25 labels") {
  TempDir dir;
  CounterRng rng(3, stream_id({7128}));
  std::ostringstream os;
  os << "id";
  for (int j = 0; j < 72; ++j) os << "\tsample" << j;
  os << '\n';
  for (int i = 0; i < 7128; ++i) {
    os << "gene" << i;
    for (int j = 0; j < 72; ++j) os << '\t' << rng.normal();
    os << '\n';
  }
  const auto path = dir.file("golub.tsv");
  write_file(path, os.str());

  std::ostringstream labels;
  for (int j = 0; j < 72; ++j) labels << (j < 47 ? "ALL" : "AML") << '\n';
  const auto labels_path = dir.file("labels.txt");
  write_file(labels_path, labels.str());

  LabelSpec spec;
  spec.source = LabelSpec::Source::file;
  spec.file_path = labels_path;
  const auto matrix = ingest_matrix(path, '\t', spec);
  REQUIRE(matrix.values.rows == 7128);
  REQUIRE(matrix.values.cols == 72);
  const auto zeros = std::count(matrix.group_labels.begin(), matrix.group_labels.end(), 0);
  REQUIRE(zeros == 47);
  REQUIRE(matrix.group_labels.size() - zeros == 25);
}

TEST_CASE("cmd_estimate on a pure-null matrix reports values near one") {
  TempDir dir;
  const auto path = write_null_matrix(dir, "null.csv", 600, 10, 99, /*add_constant_row=*/true);
  EstimateOptions options;
  options.input_path = path;
  options.labels.source = LabelSpec::Source::header;
  options.estimator.seed = 4;
  const auto report = cmd_estimate(options);
  REQUIRE(report.m == 600);
  REQUIRE(report.rows_in_file == 601);
  REQUIRE(report.rows_dropped_zero_variance == 1);
  REQUIRE(report.group_sizes[0] == 10);
  REQUIRE(report.group_sizes[1] == 10);
  REQUIRE(report.results.errors.empty());
  for (const auto& [name, est] : report.results.estimates) {
    REQUIRE(est.value >= 0.9);
  }
}

TEST_CASE("estimates are invariant under gene-row permutation") {
  TempDir dir;
  CounterRng rng(17, stream_id({0xD00D}));
  const std::size_t genes = 300, cols = 16;
  std::vector<std::vector<double>> rows(genes, std::vector<double>(cols));
  for (std::size_t i = 0; i < genes; ++i) {
    const double mu = (i % 3 == 0) ? 0.8 : 0.0;  // some signal rows
    for (std::size_t j = 0; j < cols; ++j)
      rows[i][j] = rng.normal() + (j >= cols / 2 ? mu : 0.0);
  }
  const auto render = [&](const std::vector<std::size_t>& order, const std::string& name) {
    std::ostringstream os;
    os << "id";
    for (std::size_t j = 0; j < cols; ++j) os << ',' << (j < cols / 2 ? 'x' : 'y');
    os << '\n';
    for (const std::size_t i : order) {
      os << 'g' << i;
      for (std::size_t j = 0; j < cols; ++j) os << ',' << format_double(rows[i][j]);
      os << '\n';
    }
    const auto path = dir.file(name);
    write_file(path, os.str());
    return path;
  };
  std::vector<std::size_t> forward(genes), backward(genes);
  for (std::size_t i = 0; i < genes; ++i) {
    forward[i] = i;
    backward[i] = genes - 1 - i;
  }
  EstimateOptions options;
  options.labels.source = LabelSpec::Source::header;
  options.estimator.seed = 21;
  options.input_path = render(forward, "fwd.csv");
  const auto a = cmd_estimate(options);
  options.input_path = render(backward, "bwd.csv");
  const auto b = cmd_estimate(options);
  REQUIRE(a.results.errors.empty());
  for (const auto& [name, est] : a.results.estimates) {
    REQUIRE(est.value == b.results.estimates.at(name).value);
  }
}

TEST_CASE("estimate report json carries schema, config echo and external initial") {
  TempDir dir;
  const auto path = write_null_matrix(dir, "null.csv", 80, 6, 5);
  EstimateOptions options;
  options.input_path = path;
  options.labels.source = LabelSpec::Source::header;
  options.estimator.methods = {Method::e1};
  options.estimator.initial_estimator = InitialEstimator::external_value;
  options.estimator.external_pi0 = 0.8;
  const auto report = cmd_estimate(options);
  std::ostringstream os;
  write_report_json(report, os);
  const auto j = nlohmann::json::parse(os.str());
  REQUIRE(j["schema_version"] == 1);
  REQUIRE(j["config"]["initial_estimator"] == "external_value");
  REQUIRE(j["config"]["external_pi0"] == 0.8);
  REQUIRE(j["input"]["m"] == 80);
  REQUIRE(j["estimates"].contains("E1"));
  REQUIRE(j["estimates"]["E1"]["intermediates"]["pi0_initial"] == 0.8);

  std::ostringstream table;
  write_estimate_table(report, table);
  REQUIRE(table.str().rfind("method,pi0_estimate\nE1,", 0) == 0);
}

TEST_CASE("cmd_epv matches the epv module exactly") {
  EpvTableOptions options;
  options.family = TestFamily::t_two_sample_two_sided;
  options.n1 = 47;
  options.n2 = 25;
  options.delta_grid = {0.0, 0.25, 0.5};
  const auto rows = cmd_epv(options);
  REQUIRE(rows.size() == 3);
  REQUIRE(rows[0].second == 0.5);
  REQUIRE(rows[1].second == e_delta_t2(0.25, 47, 25));
  REQUIRE(rows[2].second == e_delta_t2(0.5, 47, 25));

  options.family = TestFamily::z_one_sided;
  options.n = 25;
  options.delta_grid = {0.0, 1.0};
  const auto zrows = cmd_epv(options);
  REQUIRE(zrows[0].second == 0.5);
  REQUIRE(zrows[1].second == e_delta_z(1.0, 25));
}

TEST_CASE("cmd_simulate writes deterministic files with the expected shape") {
  TempDir dir;
  SimulateOptions options;
  options.base.m = 100;
  options.base.b = 10;
  options.base.r = 10;
  options.base.replications = 2;
  options.base.seed = 7;
  options.base.collect_oracle = true;
  options.base.collect_raw = true;
  options.base.estimator.bootstrap_reps = 20;
  options.n_values = {10};
  options.rho_values = {0.0};
  options.out_prefix = dir.file("a_");
  const auto summary = cmd_simulate(options);
  REQUIRE(summary.cells.size() == 9 * 4);  // default pi0 grid x default methods

  options.out_prefix = dir.file("b_");
  cmd_simulate(options);
  REQUIRE(read_file(dir.file("a_summary.csv")) == read_file(dir.file("b_summary.csv")));
  REQUIRE(read_file(dir.file("a_summary.json")) == read_file(dir.file("b_summary.json")));
  REQUIRE(read_file(dir.file("a_raw.csv")) == read_file(dir.file("b_raw.csv")));
  REQUIRE(read_file(dir.file("a_oracle.csv")) == read_file(dir.file("b_oracle.csv")));

  const auto json = nlohmann::json::parse(read_file(dir.file("a_summary.json")));
  REQUIRE(json["config"]["seed"] == 7);
  REQUIRE(json["cells"].size() == 36);
  REQUIRE(json["raw"].size() == 9 * 4 * 2);
  const auto csv = read_file(dir.file("a_summary.csv"));
  REQUIRE(csv.find(",e,e_tilde,e_hat") != std::string::npos);
}
