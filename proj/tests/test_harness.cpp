#include "transpar/errors.hpp"
#include "transpar/harness.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

using namespace transpar;
using namespace transpar::harness;

namespace {

TrainConfig small_config(Method method, int epochs = 3) {
  TrainConfig c;
  c.method = method;
  c.epochs = epochs;
  c.e_prime = 3;
  c.scenario.n_source = 200;
  c.scenario.n_target = 200;
  c.batch_size = 32;
  return c;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t line_count(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("transpar_test_harness_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("method names") {
  CHECK(parse_method("source-only") == Method::SourceOnly);
  CHECK(parse_method("transpar_dann") == Method::TransparDann);
  CHECK(to_string(Method::Dann) == "dann");
  CHECK_THROWS_AS(parse_method("mdd"), ConfigError);
}

TEST_CASE("config JSON round trip and validation") {
  TrainConfig c;
  c.seed = 17;
  c.eta = 0.05;
  c.scope = {true, false, true};
  c.mode = optim::MaskMode::OneShotStart;
  c.scenario.kind = data::ShiftKind::GaussianTranslation;
  c.scenario.translation = {1.5, -0.5};
  const TrainConfig back = config_from_json(nlohmann::json::parse(to_json(c).dump()));
  CHECK(to_json(back).dump() == to_json(c).dump());
  CHECK(back.scope == c.scope);
  CHECK(back.scenario.translation == c.scenario.translation);

  const TrainConfig defaults = config_from_json(nlohmann::json::object());
  CHECK(defaults.eta == 0.01);
  CHECK(defaults.lambda == 0.002);
  CHECK(defaults.alpha == 0.1);
  CHECK(defaults.beta == 1.0);
  CHECK(defaults.batch_size == 64);
  CHECK(defaults.epochs == 30);
  CHECK(defaults.e_prime == 10);
  CHECK(defaults.m_floor == 0.1);

  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"learning_rate": 0.1})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"eta": "fast"})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"eta": -1})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"scope": ["XX"]})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"scope": []})")), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("transpar_dann needs a ratio") {
  const TrainConfig c = small_config(Method::TransparDann);
  CHECK_THROWS_AS(run_stage2(c, std::nullopt, prepare_data(c)), ConfigError);
}

TEST_CASE("evaluate") {
  const model::Network net = model::init_network({}, 0);
  data::Matrix x(6, 2);
  x << 0.1, 0.2, -1, 0.5, 2, 2, 0.3, -0.7, -2, 1, 1, 1;
  const std::vector<int> pred = model::predict(net, x);
  std::vector<int> flipped;
  for (int p : pred) flipped.push_back(1 - p);
  const data::DomainDataset right(x, pred, data::Domain::Target, data::Split::Test, {}, 0);
  const data::DomainDataset wrong(x, flipped, data::Domain::Target, data::Split::Test, {}, 0);
  CHECK(evaluate(net, right) == 1.0);
  CHECK(evaluate(net, wrong) == 0.0);
  CHECK_THROWS_AS(evaluate(net, data::DomainDataset{}), ConfigError);
}

TEST_CASE("median") {
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
  CHECK(median({1.0, std::nan(""), 5.0}) == 3.0);
  CHECK(std::isnan(median({})));
}

TEST_CASE("untrained network sits near chance") {
  double total = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TrainConfig c = small_config(Method::SourceOnly, 0);
    c.seed = seed;
    const RunResult r = run_stage2(c, std::nullopt, prepare_data(c));
    CHECK(r.metrics.empty());
    total += r.source_test_acc;
  }
  CHECK(std::abs(total / 10.0 - 0.5) <= 0.1);
}

TEST_CASE("training never reads target-train labels") {
  for (Method m : {Method::SourceOnly, Method::Dann, Method::TransparDann}) {
    const TrainConfig c = small_config(m, 2);
    const PreparedData prepared = prepare_data(c);
    const auto ratio = run_stage1(c, prepared);
    const RunResult r = run_stage2(c, ratio, prepared);
    CHECK(r.target_label_reads == 0);
    CHECK(r.metrics.size() == 2);
    for (const MetricsRow& row : r.metrics) {
      CHECK((row.acc_src >= 0.0 && row.acc_src <= 1.0));
      CHECK((row.acc_tgt >= 0.0 && row.acc_tgt <= 1.0));
    }
  }
}

TEST_CASE("source-only excludes the domain loss; metrics carry partition counts") {
  const TrainConfig so = small_config(Method::SourceOnly, 2);
  const RunResult r = run_stage2(so, std::nullopt, prepare_data(so));
  for (const MetricsRow& row : r.metrics) {
    CHECK(row.loss_dom == 0.0);
    CHECK(row.tau == 1.0);
    CHECK(row.m_t == row.m);
  }

  const TrainConfig tp = small_config(Method::TransparDann, 2);
  const auto ratio = discrepancy::estimate_from_error(0.5, 0.1, 3, 0, discrepancy::FeatureSource::FrozenInit);
  const RunResult t = run_stage2(tp, ratio, prepare_data(tp));
  const MetricsRow& row = t.metrics.back();
  CHECK(row.tau == 0.75);
  CHECK(row.m[0] == 4352);
  CHECK(row.m_t[0] == 3264);  // floor(0.75 * 4352)
  CHECK(row.m_t[1] == 97);    // floor(0.75 * 130)
  CHECK(row.m_t[2] == 264);   // floor(0.25 * 1057)
  CHECK(row.loss_dom > 0.0);
}

TEST_CASE("degenerate transpar run reproduces DANN") {
  TrainConfig dann = small_config(Method::Dann, 3);
  dann.alpha = 0.0;
  TrainConfig tp = dann;
  tp.method = Method::TransparDann;
  tp.force_full_partition = true;
  const PreparedData prepared = prepare_data(dann);
  const auto ratio = run_stage1(tp, prepared);
  const RunResult a = run_stage2(dann, std::nullopt, prepared);
  const RunResult b = run_stage2(tp, ratio, prepared);
  REQUIRE(a.metrics.size() == b.metrics.size());
  for (std::size_t e = 0; e < a.metrics.size(); ++e) {
    CHECK(std::abs(a.metrics[e].loss_src - b.metrics[e].loss_src) <= 1e-9);
    CHECK(std::abs(a.metrics[e].loss_dom - b.metrics[e].loss_dom) <= 1e-9);
  }
}

TEST_CASE("stage 1 ratio anchors") {
  SUBCASE("zero shift gives the maximum ratio") {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      TrainConfig c;
      c.seed = seed;
      c.scenario.theta_deg = 0.0;
      total += run_stage1(c).tau;
    }
    CHECK(std::abs(total / 10.0 - 0.75) <= 0.03);
  }
  SUBCASE("separated blobs give the d_A = 1 ratio") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      TrainConfig c;
      c.seed = seed;
      c.scenario.kind = data::ShiftKind::GaussianTranslation;
      c.scenario.translation = {20.0, 0.0};
      CHECK(std::abs(run_stage1(c).tau - 0.46555335461147697) <= 0.02);
    }
  }
  SUBCASE("raw-input features and determinism") {
    TrainConfig c = small_config(Method::TransparDann);
    c.feature_source = discrepancy::FeatureSource::RawInput;
    const auto a = run_stage1(c);
    const auto b = run_stage1(c);
    CHECK(discrepancy::to_json(a).dump() == discrepancy::to_json(b).dump());
    CHECK(a.feature_source == discrepancy::FeatureSource::RawInput);
  }
}

TEST_CASE("suite cells") {
  const auto minimal = suite_cells("minimal");
  CHECK(minimal.size() == 3);
  const auto full = suite_cells("full");
  std::set<std::string> ids;
  for (const auto& c : full) ids.insert(c.id);
  for (const char* id : {"source_only", "dann", "transpar_dann", "scope_FE", "scope_SH", "scope_DD",
                         "scope_FE+SH", "scope_FE+DD", "scope_FE+SH-entropy", "scope_FE+SH+DD",
                         "rule_iterative", "rule_one_shot_start", "rule_one_shot_last",
                         "rule_weight_only", "rule_grad_only", "rule_both"}) {
    CHECK(ids.count(id) == 1);
  }
  CHECK_THROWS_AS(suite_cells("huge"), ConfigError);
}

TEST_CASE("minimal suite: completeness, reports and reproducibility") {
  TrainConfig c = small_config(Method::TransparDann, 2);
  c.grid = "minimal";
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < 10; ++s) seeds.push_back(s);
  const SuiteReport report = run_suite(c, seeds);
  std::size_t runs = 0;
  for (const CellReport& cell : report.cells) {
    CHECK(cell.runs.size() == 10);
    for (const CellRun& run : cell.runs) CHECK(run.ok);
    runs += cell.runs.size();
  }
  CHECK(runs == 30);
  CHECK(report.metrics.size() == 30 * 2);
  CHECK(report.stage1.size() == 10);
  CHECK_THROWS_AS((void)report.cell("scope_FE"), ConfigError);

  const auto dir = scratch("suite_a");
  emit_reports(report, dir.string());
  const std::string csv = slurp(dir / "metrics.csv");
  CHECK(csv.substr(0, csv.find('\n')) == kMetricsHeader);
  CHECK(line_count(csv) == 1 + 30 * 2);
  const auto json = nlohmann::json::parse(slurp(dir / "suite.json"));
  for (const char* id : {"source_only", "dann", "transpar_dann"}) {
    bool found = false;
    for (const auto& cell : json.at("cells")) found = found || cell.at("id") == id;
    CHECK(found);
  }
  CHECK(slurp(dir / "summary.md").find("transpar_dann") != std::string::npos);

  const auto dir_b = scratch("suite_b");
  emit_reports(run_suite(c, seeds), dir_b.string());
  for (const char* file : {"metrics.csv", "suite.json", "summary.md"}) {
    CHECK(slurp(dir / file) == slurp(dir_b / file));
  }

  CHECK_THROWS_AS(run_suite(c, {0}), ConfigError);
  CHECK_THROWS_AS(emit_reports(report, (dir / "metrics.csv" / "nested").string()), ConfigError);
}

TEST_CASE("mask dump lists every role and step") {
  TrainConfig c = small_config(Method::TransparDann, 1);
  const PreparedData prepared = prepare_data(c);
  RunOptions options;
  options.dump_masks = true;
  const RunResult r = run_stage2(c, run_stage1(c, prepared), prepared, options);
  // 160 training rows per domain at batch 32.
  CHECK(r.mask_log.size() == 5);
  const auto path = scratch("masks").string() + ".txt";
  write_mask_dump(r.mask_log, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "iteration,role,mode,m,m_t,bits");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const std::string bits = line.substr(line.rfind(',') + 1);
    const auto ones = static_cast<std::size_t>(std::count(bits.begin(), bits.end(), '1'));
    std::stringstream fields(line);
    std::string it, role, mode, m, m_t;
    std::getline(fields, it, ',');
    std::getline(fields, role, ',');
    std::getline(fields, mode, ',');
    std::getline(fields, m, ',');
    std::getline(fields, m_t, ',');
    CHECK(bits.size() == std::stoul(m));
    CHECK(ones == std::stoul(m_t));
  }
  CHECK(rows == 5 * 3);
}

TEST_CASE("divergent training raises a numeric failure after flushing epochs") {
  TrainConfig c = small_config(Method::SourceOnly, 5);
  c.eta = 1e6;
  std::vector<MetricsRow> rows;
  RunOptions options;
  options.on_epoch = [&rows](const MetricsRow& row) { rows.push_back(row); };
  CHECK_THROWS_AS(run_stage2(c, std::nullopt, prepare_data(c), options), NumericFailure);
  CHECK(rows.size() < 5);
}
