#pragma once

// End-to-end experiment orchestration: ratio estimation, UDA training with or
// without transferable-parameter updates, multi-seed ablation suites and reports.

#include "transpar/data.hpp"
#include "transpar/discrepancy.hpp"
#include "transpar/model.hpp"
#include "transpar/optimizer.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace transpar::harness {

enum class Method { SourceOnly, Dann, TransparDann };

std::string to_string(Method method);
/// Accepts source_only / source-only, dann, transpar_dann / transpar-dann.
Method parse_method(const std::string& name);

struct TrainConfig {
  data::ShiftScenario scenario;
  std::uint64_t seed = 0;
  model::NetworkConfig net;
  Method method = Method::TransparDann;
  double eta = 0.01;
  double lambda = 0.002;
  double alpha = 0.1;
  double beta = 1.0;
  std::size_t batch_size = 64;
  int epochs = 30;
  int e_prime = 10;
  double m_floor = 0.1;  // "M"
  optim::Criterion criterion = optim::Criterion::Both;
  optim::MaskMode mode = optim::MaskMode::Iterative;
  optim::RoleSet scope = optim::kAllScope;
  bool entropy_enabled = true;
  discrepancy::FeatureSource feature_source = discrepancy::FeatureSource::FrozenInit;
  double probe_lr = 0.05;
  std::size_t probe_batch_size = 64;
  bool probe_standardize = true;
  bool adversarial_discriminator = true;
  bool force_full_partition = false;
  std::string grid = "full";  // suite only: "full" or "minimal"

  void validate() const;
  [[nodiscard]] discrepancy::ProbeConfig probe() const;
  [[nodiscard]] std::uint64_t init_seed() const;
  [[nodiscard]] std::uint64_t probe_seed() const;
};

nlohmann::ordered_json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig load_config(const std::string& path);

/// Generated and standardized datasets for one (scenario, seed).
struct PreparedData {
  data::GeneratedData data;
  data::Standardizer standardizer;
};

PreparedData prepare_data(const TrainConfig& config);

struct MetricsRow {
  std::string run_id;
  int epoch = 0;
  double loss_src = 0.0;
  double loss_ent = 0.0;
  double loss_dom = 0.0;
  double acc_src = 0.0;
  double acc_tgt = 0.0;
  double tau = 1.0;
  std::array<std::size_t, 3> m{};
  std::array<std::size_t, 3> m_t{};
  std::array<double, 3> decay_norm{};
};

struct RunResult {
  model::Network network;
  std::vector<MetricsRow> metrics;
  double source_test_acc = 0.0;
  double target_test_acc = 0.0;
  std::size_t target_label_reads = 0;
  std::vector<optim::StepRecord> mask_log;  // filled when dump_masks is set
};

struct RunOptions {
  std::string run_id = "run";
  bool dump_masks = false;
  /// Called after every completed epoch, so callers keep partial metrics on failure.
  std::function<void(const MetricsRow&)> on_epoch;
};

/// Stage 1: probe on frozen-init (or raw) features, proxy A-distance, tau.
discrepancy::TransferRatioEstimate run_stage1(const TrainConfig& config,
                                              const PreparedData& prepared);
discrepancy::TransferRatioEstimate run_stage1(const TrainConfig& config);

/// Stage 2: trains the network. Requires `ratio` for transpar_dann. Throws if
/// any training code path read a target-train label.
RunResult run_stage2(const TrainConfig& config,
                     const std::optional<discrepancy::TransferRatioEstimate>& ratio,
                     const PreparedData& prepared, const RunOptions& options = {});

/// Fraction of correct predictions; ConfigError on an empty dataset.
double evaluate(const model::Network& net, const data::DomainDataset& dataset);

/// Proxy A-distance of a fresh probe trained on `net`'s features of the two
/// training splits.
double adapted_proxy_a_distance(const model::Network& net, const PreparedData& prepared,
                                const TrainConfig& config);

struct CellSpec {
  std::string id;
  Method method = Method::TransparDann;
  optim::Criterion criterion = optim::Criterion::Both;
  optim::MaskMode mode = optim::MaskMode::Iterative;
  optim::RoleSet scope = optim::kAllScope;
  bool entropy_enabled = true;
  std::string alias_of;  // non-empty when the cell reuses another cell's runs
};

/// "minimal": the three methods. "full": methods plus scope and update-rule ablations.
std::vector<CellSpec> suite_cells(const std::string& grid);

struct CellRun {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double target_acc = 0.0;
  double source_acc = 0.0;
  double d_a_adapted = 0.0;
};

struct CellReport {
  CellSpec spec;
  std::vector<CellRun> runs;
  double median_target_acc = 0.0;
  double median_source_acc = 0.0;
  double median_d_a_adapted = 0.0;
};

struct Stage1Record {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  discrepancy::TransferRatioEstimate estimate;
};

struct SuiteReport {
  TrainConfig config;
  std::vector<std::uint64_t> seeds;
  std::vector<Stage1Record> stage1;
  double median_d_a_frozen = 0.0;
  std::vector<CellReport> cells;
  std::vector<MetricsRow> metrics;

  [[nodiscard]] const CellReport& cell(const std::string& id) const;
};

/// Median of the finite values; NaN when there are none.
double median(std::vector<double> values);

/// Runs every cell of config.grid for each seed. Cell failures are recorded
/// and the suite continues.
SuiteReport run_suite(const TrainConfig& config, const std::vector<std::uint64_t>& seeds);

inline constexpr const char* kMetricsHeader =
    "run_id,epoch,loss_src,loss_ent,loss_dom,acc_src,acc_tgt,tau,m_f,m_f_t,m_c,m_c_t,m_d,m_d_t,"
    "decay_norm_f,decay_norm_c,decay_norm_d";

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path);
nlohmann::ordered_json suite_to_json(const SuiteReport& report);
std::string summary_markdown(const SuiteReport& report);
/// Writes metrics.csv, suite.json and summary.md into `out_dir`.
void emit_reports(const SuiteReport& report, const std::string& out_dir);

/// One line per step and role: iteration,role,mode,m,m_t,bits.
void write_mask_dump(const std::vector<optim::StepRecord>& log, const std::string& path);

}  // namespace transpar::harness
