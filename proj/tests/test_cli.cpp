#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "transpar_test_cli";

int run(const std::string& args, const std::string& stdout_file = "") {
  const std::string out = stdout_file.empty() ? "/dev/null" : stdout_file;
  const std::string cmd = std::string(TRANSPAR_CLI) + " " + args + " > " + out + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

std::string p(const fs::path& path) { return path.string(); }

}  // namespace

TEST_CASE("cli end to end") {
  fs::remove_all(kRoot);
  fs::create_directories(kRoot);
  const fs::path data = kRoot / "data";
  const fs::path config = kRoot / "config.json";
  const fs::path ratio = kRoot / "ratio.json";
  const fs::path run_dir = kRoot / "run";
  write(config, R"({"scenario": {"n_source": 200, "n_target": 200}, "epochs": 2, "e_prime": 2})");

  REQUIRE(run("gen-data --scenario two-moons-rot --theta 30 --n 200 --seed 3 --out " + p(data)) == 0);
  CHECK(fs::exists(data / "source.csv"));
  CHECK(fs::exists(data / "target.csv"));
  const auto meta = nlohmann::json::parse(slurp(data / "metadata.json"));
  CHECK(meta.at("seed") == 3);

  REQUIRE(run("estimate-ratio --config " + p(config) + " --out " + p(ratio)) == 0);
  const auto r = nlohmann::json::parse(slurp(ratio));
  CHECK(r.at("tau").get<double>() > 0.4);
  CHECK(r.at("tau").get<double>() <= 0.75);

  SUBCASE("transpar without a ratio is a configuration error") {
    CHECK(run("train --config " + p(config) + " --method transpar-dann --out " + p(run_dir)) == 2);
  }

  SUBCASE("train then eval; predictions recount to the reported accuracy") {
    REQUIRE(run("train --config " + p(config) + " --ratio " + p(ratio) +
                " --method transpar-dann --dump-masks --out " + p(run_dir)) == 0);
    const std::string metrics = slurp(run_dir / "metrics.csv");
    CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 3);
    CHECK(fs::exists(run_dir / "masks.txt"));
    const auto result = nlohmann::json::parse(slurp(run_dir / "result.json"));
    CHECK(result.at("target_label_reads") == 0);

    const fs::path report = kRoot / "eval.json";
    const fs::path predictions = kRoot / "pred.csv";
    REQUIRE(run("eval --checkpoint " + p(run_dir / "checkpoint.json") + " --data " + p(data) +
                    " --predictions " + p(predictions),
                p(report)) == 0);
    const auto acc = nlohmann::json::parse(slurp(report));
    std::ifstream in(predictions);
    std::string line;
    std::getline(in, line);
    CHECK(line == "domain,row,y,pred");
    std::map<std::string, std::pair<int, int>> tally;
    while (std::getline(in, line)) {
      std::stringstream fields(line);
      std::string domain, row, y, pred;
      std::getline(fields, domain, ',');
      std::getline(fields, row, ',');
      std::getline(fields, y, ',');
      std::getline(fields, pred, ',');
      tally[domain].first += (y == pred) ? 1 : 0;
      tally[domain].second += 1;
    }
    for (const char* domain : {"source", "target"}) {
      const auto [correct, total] = tally[domain];
      CHECK(total == 40);
      CHECK(acc.at(std::string(domain) + "_test_acc").get<double>() ==
            doctest::Approx(static_cast<double>(correct) / total).epsilon(1e-15));
    }
  }

  SUBCASE("baseline training needs no ratio") {
    CHECK(run("train --config " + p(config) + " --method dann --out " + p(run_dir)) == 0);
  }

  SUBCASE("configuration errors exit with 2") {
    const fs::path bad = kRoot / "bad.json";
    write(bad, R"({"learning_rate": 0.1})");
    CHECK(run("train --config " + p(bad) + " --method dann --out " + p(run_dir)) == 2);
    CHECK(run("train --config " + p(kRoot / "missing.json") + " --method dann --out " + p(run_dir)) == 2);
    CHECK(run("gen-data --scenario spirals --out " + p(data)) == 2);
    CHECK(run("gen-data --scenario two-moons-rot --theta 200 --out " + p(kRoot / "d2")) == 2);
    CHECK(run("fly") == 2);
  }

  SUBCASE("numeric failure exits with 3 and keeps the metrics file") {
    const fs::path hot = kRoot / "hot.json";
    write(hot, R"({"scenario": {"n_source": 200, "n_target": 200}, "epochs": 3, "eta": 1e6})");
    const fs::path out = kRoot / "hot_run";
    CHECK(run("train --config " + p(hot) + " --method source-only --out " + p(out)) == 3);
    const std::string metrics = slurp(out / "metrics.csv");
    CHECK(metrics.rfind("run_id,epoch,", 0) == 0);
  }

  SUBCASE("suite writes all three reports") {
    const fs::path cfg = kRoot / "suite.json";
    write(cfg, R"({"scenario": {"n_source": 200, "n_target": 200}, "epochs": 1, "e_prime": 1, "grid": "minimal"})");
    const fs::path out = kRoot / "suite";
    REQUIRE(run("suite --config " + p(cfg) + " --seeds 2 --out " + p(out)) == 0);
    for (const char* file : {"metrics.csv", "suite.json", "summary.md"}) CHECK(fs::exists(out / file));
    CHECK(run("suite --config " + p(cfg) + " --seeds 1 --out " + p(out)) == 2);
  }
}
