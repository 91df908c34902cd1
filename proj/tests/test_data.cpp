#include "transpar/data.hpp"
#include "transpar/data_io.hpp"
#include "transpar/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace transpar;
using namespace transpar::data;

namespace {

ShiftScenario moons(double theta, std::size_t n = 1000) {
  ShiftScenario s;
  s.kind = ShiftKind::TwoMoonsRotation;
  s.theta_deg = theta;
  s.n_source = n;
  s.n_target = n;
  return s;
}

Matrix stack(const DomainSplits& splits) {
  Matrix out(static_cast<Eigen::Index>(splits.train.size() + splits.test.size()), 2);
  out << splits.train.features(), splits.test.features();
  return out;
}

std::vector<int> stack_labels(const DomainSplits& splits) {
  std::vector<int> y = splits.train.labels();
  const auto& t = splits.test.labels();
  y.insert(y.end(), t.begin(), t.end());
  return y;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("transpar_test_data_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("scenario validation") {
  ShiftScenario s;
  CHECK_NOTHROW(s.validate());
  s.theta_deg = 180.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.theta_deg = -1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = ShiftScenario{};
  s.target_proportions = {0.7, 0.2};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = ShiftScenario{};
  s.n_target = 9;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("shift names parse in both spellings") {
  CHECK(parse_shift_kind("two_moons_rotation") == ShiftKind::TwoMoonsRotation);
  CHECK(parse_shift_kind("two-moons-rot") == ShiftKind::TwoMoonsRotation);
  CHECK(parse_shift_kind("gauss-trans") == ShiftKind::GaussianTranslation);
  CHECK(parse_shift_kind("target_label_shift") == ShiftKind::TargetLabelShift);
  CHECK(parse_shift_kind("label-shift") == ShiftKind::TargetLabelShift);
  CHECK_THROWS_AS(parse_shift_kind("moons"), ConfigError);
}

TEST_CASE("zero rotation gives sample-for-sample identical domains") {
  const GeneratedData g = generate(moons(0.0), 3);
  CHECK(g.source.train.features() == g.target.train.features());
  CHECK(g.source.test.features() == g.target.test.features());
  CHECK(g.source.train.domain_flag() == 1);
  CHECK(g.target.train.domain_flag() == 0);
}

TEST_CASE("generation is deterministic in (scenario, seed)") {
  const GeneratedData a = generate(moons(30.0), 7);
  const GeneratedData b = generate(moons(30.0), 7);
  CHECK(a.source.train.features() == b.source.train.features());
  CHECK(a.target.test.features() == b.target.test.features());
  CHECK(a.source.train.labels() == b.source.train.labels());

  const auto dir_a = scratch("det_a");
  const auto dir_b = scratch("det_b");
  write_generated(a, moons(30.0), 7, dir_a.string());
  write_generated(b, moons(30.0), 7, dir_b.string());
  for (const char* file : {"source.csv", "target.csv", "metadata.json"}) {
    std::ifstream fa(dir_a / file);
    std::ifstream fb(dir_b / file);
    std::stringstream sa;
    std::stringstream sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    CHECK(sa.str() == sb.str());
    CHECK(!sa.str().empty());
  }

  const GeneratedData c = generate(moons(30.0), 8);
  CHECK(a.source.train.features() != c.source.train.features());
}

TEST_CASE("80/20 split and domain flags") {
  const GeneratedData g = generate(moons(30.0, 1000), 1);
  CHECK(g.source.train.size() == 800);
  CHECK(g.source.test.size() == 200);
  CHECK(g.target.train.size() == 800);
  CHECK(g.target.test.size() == 200);
  CHECK(g.target.test.domain() == Domain::Target);
  CHECK(g.source.test.split() == Split::Test);
  CHECK(g.source.train.features().allFinite());
}

TEST_CASE("label shift uses exact quota counts") {
  ShiftScenario s;
  s.kind = ShiftKind::TargetLabelShift;
  s.target_proportions = {0.8, 0.2};
  s.n_target = 1000;
  const GeneratedData g = generate(s, 11);
  const std::vector<int> y = stack_labels(g.target);
  CHECK(std::count(y.begin(), y.end(), 0) == 800);
  CHECK(std::count(y.begin(), y.end(), 1) == 200);

  SUBCASE("largest remainder on uneven proportions") {
    s.target_proportions = {1.0 / 3.0, 2.0 / 3.0};
    s.n_target = 100;
    const std::vector<int> yy = stack_labels(generate(s, 2).target);
    CHECK(std::count(yy.begin(), yy.end(), 0) == 33);
    CHECK(std::count(yy.begin(), yy.end(), 1) == 67);
  }
}

TEST_CASE("label shift keeps class-conditional means within 3 sigma") {
  ShiftScenario s;
  s.kind = ShiftKind::TargetLabelShift;
  s.target_proportions = {0.8, 0.2};
  const GeneratedData g = generate(s, 5);
  const Matrix xs = stack(g.source);
  const Matrix xt = stack(g.target);
  const std::vector<int> ys = stack_labels(g.source);
  const std::vector<int> yt = stack_labels(g.target);
  for (int k = 0; k < 2; ++k) {
    for (Eigen::Index j = 0; j < 2; ++j) {
      std::vector<double> a;
      std::vector<double> b;
      for (std::size_t i = 0; i < ys.size(); ++i) {
        if (ys[i] == k) a.push_back(xs(static_cast<Eigen::Index>(i), j));
      }
      for (std::size_t i = 0; i < yt.size(); ++i) {
        if (yt[i] == k) b.push_back(xt(static_cast<Eigen::Index>(i), j));
      }
      auto moments = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - m) * (x - m);
        return std::pair{m, var / static_cast<double>(v.size() - 1)};
      };
      const auto [ma, va] = moments(a);
      const auto [mb, vb] = moments(b);
      const double se = std::sqrt(va / static_cast<double>(a.size()) + vb / static_cast<double>(b.size()));
      CHECK(std::abs(ma - mb) < 3.0 * se);
    }
  }
}

TEST_CASE("rotating the target back recovers the source distribution") {
  // Independent draws (different seeds) so the comparison is a genuine two-sample test.
  const double theta = 30.0 * std::numbers::pi / 180.0;
  Eigen::Matrix2d back;
  back << std::cos(-theta), -std::sin(-theta), std::sin(-theta), std::cos(-theta);
  const Matrix xs = stack(generate(moons(30.0), 21).source);
  const Matrix xt = stack(generate(moons(30.0), 22).target) * back.transpose();
  for (Eigen::Index j = 0; j < 2; ++j) {
    const double ma = xs.col(j).mean();
    const double mb = xt.col(j).mean();
    const double va = (xs.col(j).array() - ma).square().sum() / static_cast<double>(xs.rows() - 1);
    const double vb = (xt.col(j).array() - mb).square().sum() / static_cast<double>(xt.rows() - 1);
    const double se = std::sqrt(va / static_cast<double>(xs.rows()) + vb / static_cast<double>(xt.rows()));
    CHECK(std::abs(ma - mb) < 3.0 * se);
  }
  // Same seed: the inverse rotation is exact up to rounding.
  const GeneratedData g = generate(moons(30.0), 4);
  CHECK((stack(g.target) * back.transpose() - stack(g.source)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("translation shifts the target by the requested vector") {
  ShiftScenario s;
  s.kind = ShiftKind::GaussianTranslation;
  s.translation = {2.0, -1.0};
  const GeneratedData g = generate(s, 6);
  const Matrix diff = stack(g.target) - stack(g.source);
  CHECK((diff.col(0).array() - 2.0).abs().maxCoeff() < 1e-12);
  CHECK((diff.col(1).array() + 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("standardize") {
  GeneratedData g = generate(moons(30.0), 9);
  const Standardizer s = standardize(g);
  const Matrix& x = g.source.train.features();
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::RowVectorXd sd =
      ((x.rowwise() - mean).array().square().colwise().sum() / static_cast<double>(x.rows())).sqrt();
  CHECK(mean.cwiseAbs().maxCoeff() < 1e-9);
  CHECK((sd.array() - 1.0).abs().maxCoeff() < 1e-9);
  CHECK(g.target.train.features().colwise().mean().cwiseAbs().maxCoeff() > 1e-3);
  CHECK(s.mean.size() == 2);

  SUBCASE("constant feature maps to zeros") {
    Matrix c(4, 2);
    c << 1, 5, 2, 5, 3, 5, 4, 5;
    const Standardizer st = Standardizer::fit(c);
    const Matrix out = st.apply(c);
    CHECK(out.col(1).cwiseAbs().maxCoeff() == 0.0);
    CHECK(out.allFinite());
  }
  CHECK_THROWS_AS(Standardizer::fit(Matrix(0, 2)), ConfigError);
}

TEST_CASE("batch iterator") {
  Matrix x(10, 2);
  for (Eigen::Index i = 0; i < 10; ++i) x.row(i) << static_cast<double>(i), 0.0;
  const DomainDataset source(x, std::vector<int>(10, 1), Domain::Source, Split::Train, {}, 0);
  const DomainDataset target(x, std::vector<int>(10, 1), Domain::Target, Split::Train, {}, 0);

  auto sizes = [](BatchIterator it) {
    std::vector<std::size_t> out;
    while (auto b = it.next()) out.push_back(b->indices.size());
    return out;
  };
  CHECK(sizes(batches(source, 4, 1)) == std::vector<std::size_t>{4, 4, 2});
  CHECK(batches(source, 4, 1).batch_count() == 3);

  auto order = [](BatchIterator it) {
    std::vector<std::size_t> out;
    while (auto b = it.next()) out.insert(out.end(), b->indices.begin(), b->indices.end());
    return out;
  };
  CHECK(order(batches(source, 3, 42)) == order(batches(source, 3, 42)));
  std::vector<std::size_t> all = order(batches(source, 3, 42));
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);

  SUBCASE("rows, domain flags and label visibility") {
    auto it = batches(source, 4, 5);
    auto b = it.next();
    REQUIRE(b);
    for (std::size_t r = 0; r < b->indices.size(); ++r) {
      CHECK(b->x(static_cast<Eigen::Index>(r), 0) == static_cast<double>(b->indices[r]));
    }
    CHECK(b->y.size() == 4);
    CHECK(b->d == std::vector<int>(4, 1));

    const std::size_t reads = target.label_reads();
    auto tb = batches(target, 4, 5).next();
    REQUIRE(tb);
    CHECK(tb->y.empty());
    CHECK(tb->d == std::vector<int>(4, 0));
    CHECK(target.label_reads() == reads);
  }
  CHECK_THROWS_AS(batches(source, 0, 1), ConfigError);
}

TEST_CASE("label read guard counts every access") {
  const GeneratedData g = generate(moons(30.0, 100), 0);
  const std::size_t before = g.target.train.label_reads();
  (void)g.target.train.labels();
  (void)g.target.train.label(0);
  CHECK(g.target.train.label_reads() == before + 2);
}

TEST_CASE("domain CSV round trip") {
  const GeneratedData g = generate(moons(30.0, 50), 3);
  const auto dir = scratch("csv");
  write_generated(g, moons(30.0, 50), 3, dir.string());
  const DomainSplits back = read_domain_csv((dir / "target.csv").string());
  CHECK(back.train.features() == g.target.train.features());
  CHECK(back.test.features() == g.target.test.features());
  CHECK(back.test.labels() == g.target.test.labels());
  CHECK(back.test.domain() == Domain::Target);

  std::ofstream(dir / "bad.csv") << "x0,x1,y,d,split\n1,2,zero,1,train\n";
  CHECK_THROWS_AS(read_domain_csv((dir / "bad.csv").string()), ConfigError);
  CHECK_THROWS_AS(read_domain_csv((dir / "missing.csv").string()), ConfigError);
}

TEST_CASE("derive_seed separates streams") {
  CHECK(derive_seed(1, 2) == derive_seed(1, 2));
  CHECK(derive_seed(1, 2) != derive_seed(1, 3));
  CHECK(derive_seed(1, 2) != derive_seed(2, 2));
}
