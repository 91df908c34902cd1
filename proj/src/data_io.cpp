#include "transpar/data_io.hpp"

#include "transpar/errors.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace transpar::data {

namespace {

constexpr const char* kHeader = "x0,x1,y,d,split";

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_rows(std::ostream& out, const DomainDataset& d) {
  const std::vector<int>& y = d.labels();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    out << fmt(d.features()(row, 0)) << ',' << fmt(d.features()(row, 1)) << ',' << y[i] << ','
        << d.domain_flag() << ',' << to_string(d.split()) << '\n';
  }
}

}  // namespace

void write_domain_csv(const DomainSplits& splits, const std::string& path) {
  if (splits.train.features().cols() != 2) {
    throw ConfigError("write_domain_csv: only 2-feature datasets are supported");
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << kHeader << '\n';
  write_rows(out, splits.train);
  write_rows(out, splits.test);
}

DomainSplits read_domain_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != kHeader) {
    throw ConfigError(path + ": expected header '" + std::string(kHeader) + "'");
  }
  struct Rows {
    std::vector<double> x;
    std::vector<int> y;
  } train, test;
  int domain_flag = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string x0, x1, y, d, split;
    if (!std::getline(ss, x0, ',') || !std::getline(ss, x1, ',') || !std::getline(ss, y, ',') ||
        !std::getline(ss, d, ',') || !std::getline(ss, split)) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 5 columns");
    }
    try {
      const int flag = std::stoi(d);
      if (flag != 0 && flag != 1) throw ConfigError("domain flag must be 0 or 1");
      if (domain_flag >= 0 && flag != domain_flag) throw ConfigError("mixed domain flags");
      domain_flag = flag;
      Rows& dst = split == "train" ? train : split == "test" ? test : throw ConfigError(
                                                                 "split must be train or test");
      dst.x.push_back(std::stod(x0));
      dst.x.push_back(std::stod(x1));
      dst.y.push_back(std::stoi(y));
    } catch (const std::logic_error& ex) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  if (domain_flag < 0) throw ConfigError(path + ": no rows");
  const Domain domain = domain_flag == 1 ? Domain::Source : Domain::Target;
  auto build = [&](Rows& rows, Split split) {
    Matrix x = Eigen::Map<Matrix>(rows.x.data(), static_cast<Eigen::Index>(rows.y.size()), 2);
    return DomainDataset(std::move(x), std::move(rows.y), domain, split, ShiftScenario{}, 0);
  };
  return DomainSplits{build(train, Split::Train), build(test, Split::Test)};
}

void write_generated(const GeneratedData& data, const ShiftScenario& scenario, std::uint64_t seed,
                     const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create '" + dir + "': " + ec.message());
  const std::filesystem::path root(dir);
  write_domain_csv(data.source, (root / "source.csv").string());
  write_domain_csv(data.target, (root / "target.csv").string());

  nlohmann::ordered_json meta;
  meta["scenario"] = to_string(scenario.kind);
  meta["params"] = {{"theta", scenario.theta_deg},
                    {"translation", {scenario.translation.x(), scenario.translation.y()}},
                    {"proportions", scenario.target_proportions},
                    {"noise", scenario.noise},
                    {"n_source", scenario.n_source},
                    {"n_target", scenario.n_target}};
  meta["seed"] = seed;
  meta["counts"] = {{"source_train", data.source.train.size()},
                    {"source_test", data.source.test.size()},
                    {"target_train", data.target.train.size()},
                    {"target_test", data.target.test.size()}};
  std::ofstream out(root / "metadata.json");
  if (!out) throw ConfigError("cannot write metadata.json in '" + dir + "'");
  out << meta.dump(2) << '\n';
}

}  // namespace transpar::data
