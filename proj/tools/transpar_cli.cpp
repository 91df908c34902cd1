// transpar command-line driver: gen-data, estimate-ratio, train, eval, suite.

#include "transpar/checkpoint.hpp"
#include "transpar/data_io.hpp"
#include "transpar/errors.hpp"
#include "transpar/harness.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using namespace transpar;

constexpr int kConfigExit = 2;
constexpr int kNumericExit = 3;

int gen_data(const std::string& scenario_name, double theta, std::size_t n, double noise,
             std::uint64_t seed, const std::string& out) {
  data::ShiftScenario scenario;
  scenario.kind = data::parse_shift_kind(scenario_name);
  scenario.theta_deg = theta;
  scenario.noise = noise;
  scenario.n_source = n;
  scenario.n_target = n;
  const data::GeneratedData generated = data::generate(scenario, seed);
  data::write_generated(generated, scenario, seed, out);
  std::cout << "wrote " << out << "/source.csv, target.csv, metadata.json\n";
  return 0;
}

int estimate_ratio(const std::string& config_path, const std::string& out) {
  const harness::TrainConfig config = harness::load_config(config_path);
  const auto estimate = harness::run_stage1(config);
  discrepancy::write_ratio(estimate, out);
  std::cout << discrepancy::to_json(estimate).dump() << '\n';
  return 0;
}

int train(const std::string& config_path, const std::string& ratio_path,
          const std::string& method, const std::string& out, bool dump_masks) {
  harness::TrainConfig config = harness::load_config(config_path);
  if (!method.empty()) config.method = harness::parse_method(method);
  config.validate();

  std::optional<discrepancy::TransferRatioEstimate> ratio;
  if (!ratio_path.empty()) ratio = discrepancy::read_ratio(ratio_path);
  if (config.method == harness::Method::TransparDann && !ratio) {
    throw ConfigError("train: --ratio is required for transpar-dann (run estimate-ratio first)");
  }

  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec) throw ConfigError("cannot create output directory '" + out + "'");
  const std::filesystem::path root(out);

  const harness::PreparedData prepared = harness::prepare_data(config);
  std::vector<harness::MetricsRow> rows;
  harness::RunOptions options;
  options.run_id = harness::to_string(config.method) + "/seed=" + std::to_string(config.seed);
  options.dump_masks = dump_masks;
  options.on_epoch = [&rows](const harness::MetricsRow& row) { rows.push_back(row); };

  harness::RunResult result;
  try {
    result = harness::run_stage2(config, ratio, prepared, options);
  } catch (const NumericFailure&) {
    harness::write_metrics_csv(rows, (root / "metrics.csv").string());
    throw;
  }
  harness::write_metrics_csv(rows, (root / "metrics.csv").string());
  model::save_checkpoint((root / "checkpoint.json").string(), result.network,
                         prepared.standardizer);
  if (dump_masks) harness::write_mask_dump(result.mask_log, (root / "masks.txt").string());

  nlohmann::ordered_json summary;
  summary["method"] = harness::to_string(config.method);
  summary["seed"] = config.seed;
  summary["tau"] = ratio ? ratio->tau : 1.0;
  summary["source_test_acc"] = result.source_test_acc;
  summary["target_test_acc"] = result.target_test_acc;
  summary["target_label_reads"] = result.target_label_reads;
  std::ofstream(root / "result.json") << summary.dump(2) << '\n';
  std::cout << summary.dump() << '\n';
  return 0;
}

int eval(const std::string& checkpoint_path, const std::string& data_dir,
         const std::string& predictions_path) {
  const model::Checkpoint ckpt = model::load_checkpoint(checkpoint_path);
  const std::filesystem::path root(data_dir);
  nlohmann::ordered_json report;
  std::ofstream predictions;
  if (!predictions_path.empty()) {
    predictions.open(predictions_path);
    if (!predictions) throw ConfigError("cannot write '" + predictions_path + "'");
    predictions << "domain,row,y,pred\n";
  }
  for (const char* domain : {"source", "target"}) {
    data::DomainSplits splits = data::read_domain_csv((root / (std::string(domain) + ".csv")).string());
    data::DomainDataset& test = splits.test;
    if (ckpt.standardizer) test.mutable_features() = ckpt.standardizer->apply(test.features());
    const double acc = harness::evaluate(ckpt.network, test);
    report[std::string(domain) + "_test_acc"] = acc;
    report[std::string(domain) + "_test_n"] = test.size();
    if (predictions.is_open()) {
      const std::vector<int> pred = model::predict(ckpt.network, test.features());
      const std::vector<int>& y = test.labels();
      for (std::size_t i = 0; i < pred.size(); ++i) {
        predictions << domain << ',' << i << ',' << y[i] << ',' << pred[i] << '\n';
      }
    }
  }
  std::cout << report.dump() << '\n';
  return 0;
}

int suite(const std::string& config_path, std::size_t n_seeds, const std::string& out) {
  const harness::TrainConfig config = harness::load_config(config_path);
  std::vector<std::uint64_t> seeds;
  for (std::size_t k = 0; k < n_seeds; ++k) seeds.push_back(config.seed + k);
  const harness::SuiteReport report = harness::run_suite(config, seeds);
  harness::emit_reports(report, out);
  std::cout << harness::summary_markdown(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transferable parameter learning for unsupervised domain adaptation"};
  app.require_subcommand(1);

  std::string scenario = "two-moons-rot";
  double theta = 30.0;
  std::size_t n = 1000;
  double noise = 0.1;
  std::uint64_t seed = 0;
  std::string out;
  auto* gen = app.add_subcommand("gen-data", "Generate source/target CSV datasets");
  gen->add_option("--scenario", scenario, "two-moons-rot | gauss-trans | label-shift")
      ->check(CLI::IsMember({"two-moons-rot", "gauss-trans", "label-shift"}));
  gen->add_option("--theta", theta, "Rotation angle in degrees");
  gen->add_option("--n", n, "Samples per domain");
  gen->add_option("--noise", noise, "Noise standard deviation");
  gen->add_option("--seed", seed, "Generator seed");
  gen->add_option("--out", out, "Output directory")->required();

  std::string config_path;
  std::string ratio_out;
  auto* est = app.add_subcommand("estimate-ratio", "Stage 1: estimate the transfer ratio");
  est->add_option("--config", config_path, "TrainConfig JSON")->required()->check(CLI::ExistingFile);
  est->add_option("--out", ratio_out, "ratio.json path")->required();

  std::string ratio_path;
  std::string method;
  std::string train_out;
  bool dump_masks = false;
  auto* tr = app.add_subcommand("train", "Stage 2: train a UDA network");
  tr->add_option("--config", config_path, "TrainConfig JSON")->required()->check(CLI::ExistingFile);
  tr->add_option("--ratio", ratio_path, "ratio.json from estimate-ratio");
  tr->add_option("--method", method, "source-only | dann | transpar-dann")
      ->check(CLI::IsMember({"source-only", "dann", "transpar-dann"}));
  tr->add_option("--out", train_out, "Output directory")->required();
  tr->add_flag("--dump-masks", dump_masks, "Write every partition mask to masks.txt");

  std::string checkpoint;
  std::string data_dir;
  std::string predictions;
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on gen-data test splits");
  ev->add_option("--checkpoint", checkpoint, "checkpoint.json")->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data_dir, "Directory written by gen-data")->required()->check(CLI::ExistingDirectory);
  ev->add_option("--predictions", predictions, "Optional per-sample predictions CSV");

  std::size_t n_seeds = 10;
  std::string suite_out;
  auto* su = app.add_subcommand("suite", "Multi-seed baseline and ablation suite");
  su->add_option("--config", config_path, "TrainConfig JSON")->required()->check(CLI::ExistingFile);
  su->add_option("--seeds", n_seeds, "Number of seeds (config.seed, config.seed+1, ...)");
  su->add_option("--out", suite_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  }

  try {
    if (*gen) return gen_data(scenario, theta, n, noise, seed, out);
    if (*est) return estimate_ratio(config_path, ratio_out);
    if (*tr) return train(config_path, ratio_path, method, train_out, dump_masks);
    if (*ev) return eval(checkpoint, data_dir, predictions);
    if (*su) return suite(config_path, n_seeds, suite_out);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kNumericExit;
  }
  return kConfigExit;
}
