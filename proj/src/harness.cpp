#include "transpar/harness.hpp"

#include "transpar/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace transpar::harness {

namespace {

constexpr std::uint64_t kInitStream = 100;
constexpr std::uint64_t kProbeStream = 200;
constexpr std::uint64_t kEpochStream = 1000;

using model::ModuleRole;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

std::vector<std::string> scope_names(const optim::RoleSet& scope) {
  std::vector<std::string> out;
  for (ModuleRole role : model::kAllRoles) {
    if (scope[static_cast<std::size_t>(role)]) out.push_back(model::short_name(role));
  }
  return out;
}

optim::RoleSet parse_scope(const nlohmann::json& j) {
  optim::RoleSet scope{false, false, false};
  for (const auto& name : j) scope[static_cast<std::size_t>(model::parse_role(name.get<std::string>()))] = true;
  return scope;
}

std::string scope_label(const optim::RoleSet& scope) {
  std::string out;
  for (const auto& name : scope_names(scope)) out += (out.empty() ? "" : "+") + name;
  return out;
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::SourceOnly: return "source_only";
    case Method::Dann: return "dann";
    case Method::TransparDann: return "transpar_dann";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  if (name == "source_only" || name == "source-only") return Method::SourceOnly;
  if (name == "dann") return Method::Dann;
  if (name == "transpar_dann" || name == "transpar-dann") return Method::TransparDann;
  throw ConfigError("unknown method '" + name + "'");
}

void TrainConfig::validate() const {
  scenario.validate();
  net.validate();
  if (!(eta > 0.0)) throw ConfigError("config: eta must be > 0");
  if (!(lambda >= 0.0)) throw ConfigError("config: lambda must be >= 0");
  if (!(alpha >= 0.0)) throw ConfigError("config: alpha must be >= 0");
  if (!(beta >= 0.0)) throw ConfigError("config: beta must be >= 0");
  if (batch_size < 1) throw ConfigError("config: batch must be >= 1");
  if (epochs < 0) throw ConfigError("config: epochs must be >= 0");
  if (e_prime < 0) throw ConfigError("config: e_prime must be >= 0");
  if (!(m_floor > 0.0 && m_floor < 1.0)) throw ConfigError("config: M must lie in (0, 1)");
  if (!(probe_lr > 0.0) || probe_batch_size < 1) throw ConfigError("config: invalid probe settings");
  if (method == Method::TransparDann && !(scope[0] || scope[1] || scope[2])) {
    throw ConfigError("config: scope must be nonempty for transpar_dann");
  }
  if (grid != "full" && grid != "minimal") throw ConfigError("config: grid must be full or minimal");
}

discrepancy::ProbeConfig TrainConfig::probe() const {
  discrepancy::ProbeConfig p;
  p.epochs = e_prime;
  p.learning_rate = probe_lr;
  p.batch_size = probe_batch_size;
  p.standardize = probe_standardize;
  p.hidden = net.disc_hidden;
  return p;
}

std::uint64_t TrainConfig::init_seed() const { return data::derive_seed(seed, kInitStream); }
std::uint64_t TrainConfig::probe_seed() const { return data::derive_seed(seed, kProbeStream); }

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["scenario"] = {{"kind", data::to_string(c.scenario.kind)},
                   {"theta", c.scenario.theta_deg},
                   {"translation", {c.scenario.translation.x(), c.scenario.translation.y()}},
                   {"proportions", c.scenario.target_proportions},
                   {"noise", c.scenario.noise},
                   {"n_source", c.scenario.n_source},
                   {"n_target", c.scenario.n_target}};
  j["seed"] = c.seed;
  j["net"] = {{"input_dim", c.net.input_dim},
              {"hidden", c.net.hidden},
              {"classes", c.net.classes},
              {"disc_hidden", c.net.disc_hidden}};
  j["method"] = to_string(c.method);
  j["eta"] = c.eta;
  j["lambda"] = c.lambda;
  j["alpha"] = c.alpha;
  j["beta"] = c.beta;
  j["batch"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["e_prime"] = c.e_prime;
  j["M"] = c.m_floor;
  j["criterion"] = optim::to_string(c.criterion);
  j["mode"] = optim::to_string(c.mode);
  j["scope"] = scope_names(c.scope);
  j["entropy_enabled"] = c.entropy_enabled;
  j["feature_source"] = discrepancy::to_string(c.feature_source);
  j["probe_lr"] = c.probe_lr;
  j["probe_batch"] = c.probe_batch_size;
  j["probe_standardize"] = c.probe_standardize;
  j["adversarial_discriminator"] = c.adversarial_discriminator;
  j["force_full_partition"] = c.force_full_partition;
  j["grid"] = c.grid;
  return j;
}

TrainConfig config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKeys{
      "scenario", "seed", "net", "method", "eta", "lambda", "alpha", "beta", "batch", "epochs",
      "e_prime", "M", "criterion", "mode", "scope", "entropy_enabled", "feature_source",
      "probe_lr", "probe_batch", "probe_standardize", "adversarial_discriminator", "force_full_partition", "grid"};
  static const std::set<std::string> kScenarioKeys{"kind", "theta", "translation", "proportions",
                                                   "noise", "n_source", "n_target"};
  static const std::set<std::string> kNetKeys{"input_dim", "hidden", "classes", "disc_hidden"};
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  auto check_keys = [](const nlohmann::json& obj, const std::set<std::string>& allowed,
                       const std::string& where) {
    for (const auto& item : obj.items()) {
      if (!allowed.contains(item.key())) {
        throw ConfigError("config: unknown key '" + item.key() + "' in " + where);
      }
    }
  };
  check_keys(j, kKeys, "config");

  TrainConfig c;
  try {
    if (j.contains("scenario")) {
      const auto& s = j.at("scenario");
      check_keys(s, kScenarioKeys, "scenario");
      if (s.contains("kind")) c.scenario.kind = data::parse_shift_kind(s.at("kind").get<std::string>());
      if (s.contains("theta")) c.scenario.theta_deg = s.at("theta").get<double>();
      if (s.contains("translation")) {
        const auto t = s.at("translation").get<std::vector<double>>();
        if (t.size() != 2) throw ConfigError("config: translation must have 2 entries");
        c.scenario.translation = {t[0], t[1]};
      }
      if (s.contains("proportions")) c.scenario.target_proportions = s.at("proportions").get<std::vector<double>>();
      if (s.contains("noise")) c.scenario.noise = s.at("noise").get<double>();
      if (s.contains("n_source")) c.scenario.n_source = s.at("n_source").get<std::size_t>();
      if (s.contains("n_target")) c.scenario.n_target = s.at("n_target").get<std::size_t>();
    }
    if (j.contains("net")) {
      const auto& n = j.at("net");
      check_keys(n, kNetKeys, "net");
      if (n.contains("input_dim")) c.net.input_dim = n.at("input_dim").get<int>();
      if (n.contains("hidden")) c.net.hidden = n.at("hidden").get<int>();
      if (n.contains("classes")) c.net.classes = n.at("classes").get<int>();
      if (n.contains("disc_hidden")) c.net.disc_hidden = n.at("disc_hidden").get<int>();
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("method")) c.method = parse_method(j.at("method").get<std::string>());
    if (j.contains("eta")) c.eta = j.at("eta").get<double>();
    if (j.contains("lambda")) c.lambda = j.at("lambda").get<double>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("beta")) c.beta = j.at("beta").get<double>();
    if (j.contains("batch")) c.batch_size = j.at("batch").get<std::size_t>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("e_prime")) c.e_prime = j.at("e_prime").get<int>();
    if (j.contains("M")) c.m_floor = j.at("M").get<double>();
    if (j.contains("criterion")) c.criterion = optim::parse_criterion(j.at("criterion").get<std::string>());
    if (j.contains("mode")) c.mode = optim::parse_mask_mode(j.at("mode").get<std::string>());
    if (j.contains("scope")) c.scope = parse_scope(j.at("scope"));
    if (j.contains("entropy_enabled")) c.entropy_enabled = j.at("entropy_enabled").get<bool>();
    if (j.contains("feature_source")) {
      c.feature_source = discrepancy::parse_feature_source(j.at("feature_source").get<std::string>());
    }
    if (j.contains("probe_lr")) c.probe_lr = j.at("probe_lr").get<double>();
    if (j.contains("probe_batch")) c.probe_batch_size = j.at("probe_batch").get<std::size_t>();
    if (j.contains("probe_standardize")) c.probe_standardize = j.at("probe_standardize").get<bool>();
    if (j.contains("adversarial_discriminator")) {
      c.adversarial_discriminator = j.at("adversarial_discriminator").get<bool>();
    }
    if (j.contains("force_full_partition")) c.force_full_partition = j.at("force_full_partition").get<bool>();
    if (j.contains("grid")) c.grid = j.at("grid").get<std::string>();
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& ex) {
    throw ConfigError(std::string("config: ") + ex.what());
  }
}

PreparedData prepare_data(const TrainConfig& config) {
  PreparedData p{data::generate(config.scenario, config.seed), {}};
  p.standardizer = data::standardize(p.data);
  return p;
}

discrepancy::TransferRatioEstimate run_stage1(const TrainConfig& config,
                                              const PreparedData& prepared) {
  config.validate();
  const model::Network frozen = model::init_network(config.net, config.init_seed());
  const auto fs = discrepancy::frozen_features(frozen, prepared.data.source.train.features(),
                                               config.feature_source);
  const auto ft = discrepancy::frozen_features(frozen, prepared.data.target.train.features(),
                                               config.feature_source);
  const auto probe = discrepancy::train_probe(fs, ft, config.probe(), config.probe_seed());
  return discrepancy::estimate_from_error(probe.err, config.m_floor, config.e_prime,
                                          config.probe_seed(), config.feature_source);
}

discrepancy::TransferRatioEstimate run_stage1(const TrainConfig& config) {
  return run_stage1(config, prepare_data(config));
}

double evaluate(const model::Network& net, const data::DomainDataset& dataset) {
  if (dataset.empty()) throw ConfigError("evaluate: empty dataset");
  const std::vector<int> predicted = model::predict(net, dataset.features());
  const std::vector<int>& labels = dataset.labels();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double adapted_proxy_a_distance(const model::Network& net, const PreparedData& prepared,
                                const TrainConfig& config) {
  const auto probe = discrepancy::train_probe(net.features(prepared.data.source.train.features()),
                                              net.features(prepared.data.target.train.features()),
                                              config.probe(), config.probe_seed());
  return discrepancy::proxy_a_distance(probe.err);
}

RunResult run_stage2(const TrainConfig& config,
                     const std::optional<discrepancy::TransferRatioEstimate>& ratio,
                     const PreparedData& prepared, const RunOptions& options) {
  config.validate();
  const bool transpar = config.method == Method::TransparDann;
  if (transpar && !ratio) {
    throw ConfigError("transpar_dann requires a transfer ratio estimate");
  }

  const data::DomainDataset& source = prepared.data.source.train;
  const data::DomainDataset& target = prepared.data.target.train;
  const std::size_t target_reads_before = target.label_reads();

  RunResult result;
  result.network = model::init_network(config.net, config.init_seed());
  model::ParameterRegistry reg(result.network);

  const double tau = transpar ? ratio->tau : 1.0;
  const optim::PartitionSpec spec =
      transpar ? optim::PartitionSpec::from(reg, tau, config.adversarial_discriminator,
                                            config.force_full_partition)
               : optim::PartitionSpec::from(reg, 1.0, false, true);
  std::optional<optim::TransparOptimizer> optimizer;
  if (transpar) {
    optimizer.emplace(optim::UpdateConfig{config.eta, config.lambda, config.criterion, config.mode},
                      spec, config.scope);
  }

  model::LossWeights weights;
  weights.alpha = transpar && config.entropy_enabled ? config.alpha : 0.0;
  weights.beta = config.beta;
  weights.domain = config.method != Method::SourceOnly;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::uint64_t base = kEpochStream + 4 * static_cast<std::uint64_t>(epoch);
    const std::uint64_t src_seed = data::derive_seed(config.seed, base);
    const std::uint64_t tgt_seed = data::derive_seed(config.seed, base + 1);
    data::BatchIterator src_it = data::batches(source, config.batch_size, src_seed);
    data::BatchIterator tgt_it = data::batches(target, config.batch_size, tgt_seed);
    const std::size_t iterations = std::max(src_it.batch_count(), tgt_it.batch_count());

    // Lockstep pairing; the shorter stream restarts with a fresh shuffle.
    std::uint64_t src_restarts = 0;
    std::uint64_t tgt_restarts = 0;
    auto fetch = [&](data::BatchIterator& it, const data::DomainDataset& ds, std::uint64_t seed,
                     std::uint64_t& restarts) {
      auto batch = it.next();
      if (!batch) {
        it = data::batches(ds, config.batch_size, data::derive_seed(seed, ++restarts));
        batch = it.next();
      }
      return *batch;
    };

    MetricsRow row;
    row.run_id = options.run_id;
    row.epoch = epoch;
    row.tau = tau;
    row.m = spec.m;
    row.m_t = spec.m;
    optim::StepRecord last;
    for (std::size_t t = 0; t < iterations; ++t) {
      const data::Batch sb = fetch(src_it, source, src_seed, src_restarts);
      const data::Batch tb = fetch(tgt_it, target, tgt_seed, tgt_restarts);
      const model::UdaOutputs out = model::forward_uda(result.network, sb, tb, weights);
      row.loss_src += out.loss_src;
      row.loss_ent += out.loss_ent;
      row.loss_dom += out.loss_dom;
      if (optimizer) {
        last = optimizer->step(reg);
        if (options.dump_masks) result.mask_log.push_back(last);
      } else {
        optim::sgd_step(reg, config.eta, config.lambda);
      }
    }
    if (optimizer && epoch == config.epochs) {
      if (auto zeroed = optimizer->finalize(reg)) {
        last = *zeroed;
        if (options.dump_masks) result.mask_log.push_back(*zeroed);
      }
    }
    const double denom = static_cast<double>(std::max<std::size_t>(iterations, 1));
    row.loss_src /= denom;
    row.loss_ent /= denom;
    row.loss_dom /= denom;
    for (std::size_t r = 0; r < 3; ++r) {
      if (last.masks[r]) {
        row.m_t[r] = last.masks[r]->count();
        row.decay_norm[r] = last.untransferable_mean_abs[r];
      }
    }
    row.acc_src = evaluate(result.network, prepared.data.source.test);
    row.acc_tgt = evaluate(result.network, prepared.data.target.test);
    result.metrics.push_back(row);
    if (options.on_epoch) options.on_epoch(row);
  }

  result.source_test_acc = evaluate(result.network, prepared.data.source.test);
  result.target_test_acc = evaluate(result.network, prepared.data.target.test);
  result.target_label_reads = target.label_reads() - target_reads_before;
  if (result.target_label_reads != 0) {
    throw std::logic_error("training read target-train labels");
  }
  return result;
}

std::vector<CellSpec> suite_cells(const std::string& grid) {
  if (grid != "full" && grid != "minimal") throw ConfigError("suite: grid must be full or minimal");
  using optim::Criterion;
  using optim::MaskMode;
  const optim::RoleSet fe{true, false, false};
  const optim::RoleSet sh{false, true, false};
  const optim::RoleSet dd{false, false, true};
  const optim::RoleSet fe_sh{true, true, false};
  const optim::RoleSet fe_dd{true, false, true};

  std::vector<CellSpec> cells{
      {"source_only", Method::SourceOnly, Criterion::Both, MaskMode::Iterative, optim::kAllScope, false, ""},
      {"dann", Method::Dann, Criterion::Both, MaskMode::Iterative, optim::kAllScope, false, ""},
      {"transpar_dann", Method::TransparDann, Criterion::Both, MaskMode::Iterative, optim::kAllScope, true, ""},
  };
  if (grid == "minimal") return cells;
  auto tp = [](std::string id, Criterion c, MaskMode m, optim::RoleSet s, bool ent,
               std::string alias = "") {
    return CellSpec{std::move(id), Method::TransparDann, c, m, s, ent, std::move(alias)};
  };
  cells.push_back(tp("scope_FE", Criterion::Both, MaskMode::Iterative, fe, true));
  cells.push_back(tp("scope_SH", Criterion::Both, MaskMode::Iterative, sh, true));
  cells.push_back(tp("scope_DD", Criterion::Both, MaskMode::Iterative, dd, true));
  cells.push_back(tp("scope_FE+SH", Criterion::Both, MaskMode::Iterative, fe_sh, true));
  cells.push_back(tp("scope_FE+DD", Criterion::Both, MaskMode::Iterative, fe_dd, true));
  cells.push_back(tp("scope_FE+SH-entropy", Criterion::Both, MaskMode::Iterative, fe_sh, false));
  cells.push_back(tp("scope_FE+SH+DD", Criterion::Both, MaskMode::Iterative, optim::kAllScope, true,
                     "transpar_dann"));
  cells.push_back(tp("rule_iterative", Criterion::Both, MaskMode::Iterative, optim::kAllScope, true,
                     "transpar_dann"));
  cells.push_back(tp("rule_one_shot_start", Criterion::Both, MaskMode::OneShotStart, optim::kAllScope, true));
  cells.push_back(tp("rule_one_shot_last", Criterion::Both, MaskMode::OneShotLast, optim::kAllScope, true));
  cells.push_back(tp("rule_weight_only", Criterion::WeightOnly, MaskMode::Iterative, optim::kAllScope, true));
  cells.push_back(tp("rule_grad_only", Criterion::GradOnly, MaskMode::Iterative, optim::kAllScope, true));
  cells.push_back(tp("rule_both", Criterion::Both, MaskMode::Iterative, optim::kAllScope, true,
                     "transpar_dann"));
  return cells;
}

double median(std::vector<double> values) {
  std::erase_if(values, [](double v) { return !std::isfinite(v); });
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

const CellReport& SuiteReport::cell(const std::string& id) const {
  for (const auto& c : cells) {
    if (c.spec.id == id) return c;
  }
  throw ConfigError("suite report has no cell '" + id + "'");
}

SuiteReport run_suite(const TrainConfig& config, const std::vector<std::uint64_t>& seeds) {
  config.validate();
  if (seeds.size() < 2) throw ConfigError("suite: at least 2 seeds are required");

  SuiteReport report;
  report.config = config;
  report.seeds = seeds;

  std::vector<PreparedData> prepared;
  std::vector<double> frozen_d_a;
  for (std::uint64_t seed : seeds) {
    TrainConfig c = config;
    c.seed = seed;
    prepared.push_back(prepare_data(c));
    Stage1Record rec;
    rec.seed = seed;
    try {
      rec.estimate = run_stage1(c, prepared.back());
      rec.ok = true;
      frozen_d_a.push_back(rec.estimate.d_a);
    } catch (const NumericFailure& ex) {
      rec.error = ex.what();
    }
    report.stage1.push_back(rec);
  }
  report.median_d_a_frozen = median(frozen_d_a);

  const std::vector<CellSpec> specs = suite_cells(config.grid);
  std::map<std::string, std::size_t> index_of;
  for (const CellSpec& spec : specs) {
    CellReport cell;
    cell.spec = spec;
    if (!spec.alias_of.empty()) {
      const CellReport& source = report.cells.at(index_of.at(spec.alias_of));
      cell.runs = source.runs;
    } else {
      for (std::size_t s = 0; s < seeds.size(); ++s) {
        TrainConfig c = config;
        c.seed = seeds[s];
        c.method = spec.method;
        c.criterion = spec.criterion;
        c.mode = spec.mode;
        c.scope = spec.scope;
        c.entropy_enabled = spec.entropy_enabled;

        CellRun run;
        run.seed = seeds[s];
        RunOptions options;
        options.run_id = spec.id + "/seed=" + std::to_string(seeds[s]);
        std::vector<MetricsRow> partial;
        options.on_epoch = [&partial](const MetricsRow& row) { partial.push_back(row); };
        try {
          std::optional<discrepancy::TransferRatioEstimate> ratio;
          if (spec.method == Method::TransparDann) {
            if (!report.stage1[s].ok) throw NumericFailure("stage 1 failed: " + report.stage1[s].error);
            ratio = report.stage1[s].estimate;
          }
          RunResult r = run_stage2(c, ratio, prepared[s], options);
          run.target_acc = r.target_test_acc;
          run.source_acc = r.source_test_acc;
          run.d_a_adapted = adapted_proxy_a_distance(r.network, prepared[s], c);
          run.ok = true;
        } catch (const NumericFailure& ex) {
          run.error = ex.what();
        }
        report.metrics.insert(report.metrics.end(), partial.begin(), partial.end());
        cell.runs.push_back(run);
      }
    }
    std::vector<double> tgt, src, dist;
    for (const CellRun& run : cell.runs) {
      if (!run.ok) continue;
      tgt.push_back(run.target_acc);
      src.push_back(run.source_acc);
      dist.push_back(run.d_a_adapted);
    }
    cell.median_target_acc = median(tgt);
    cell.median_source_acc = median(src);
    cell.median_d_a_adapted = median(dist);
    index_of[spec.id] = report.cells.size();
    report.cells.push_back(std::move(cell));
  }
  return report;
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << kMetricsHeader << '\n';
  for (const MetricsRow& r : rows) {
    out << r.run_id << ',' << r.epoch << ',' << fmt(r.loss_src) << ',' << fmt(r.loss_ent) << ','
        << fmt(r.loss_dom) << ',' << fmt(r.acc_src) << ',' << fmt(r.acc_tgt) << ',' << fmt(r.tau);
    for (std::size_t k = 0; k < 3; ++k) out << ',' << r.m[k] << ',' << r.m_t[k];
    for (std::size_t k = 0; k < 3; ++k) out << ',' << fmt(r.decay_norm[k]);
    out << '\n';
  }
}

nlohmann::ordered_json suite_to_json(const SuiteReport& report) {
  nlohmann::ordered_json j;
  j["config"] = to_json(report.config);
  j["seeds"] = report.seeds;
  j["stage1"] = nlohmann::ordered_json::array();
  for (const Stage1Record& s : report.stage1) {
    nlohmann::ordered_json e;
    e["seed"] = s.seed;
    e["status"] = s.ok ? "ok" : "failed";
    if (s.ok) {
      e["err"] = s.estimate.err;
      e["d_A"] = s.estimate.d_a;
      e["tau"] = s.estimate.tau;
    } else {
      e["error"] = s.error;
    }
    j["stage1"].push_back(std::move(e));
  }
  j["median_d_A_frozen_init"] = number_or_null(report.median_d_a_frozen);
  j["cells"] = nlohmann::ordered_json::array();
  for (const CellReport& cell : report.cells) {
    nlohmann::ordered_json c;
    c["id"] = cell.spec.id;
    if (!cell.spec.alias_of.empty()) c["alias_of"] = cell.spec.alias_of;
    c["method"] = to_string(cell.spec.method);
    c["criterion"] = optim::to_string(cell.spec.criterion);
    c["mode"] = optim::to_string(cell.spec.mode);
    c["scope"] = scope_names(cell.spec.scope);
    c["entropy_enabled"] = cell.spec.entropy_enabled;
    c["runs"] = nlohmann::ordered_json::array();
    std::size_t failures = 0;
    for (const CellRun& run : cell.runs) {
      nlohmann::ordered_json r;
      r["seed"] = run.seed;
      r["status"] = run.ok ? "ok" : "failed";
      if (run.ok) {
        r["target_acc"] = run.target_acc;
        r["source_acc"] = run.source_acc;
        r["d_A_adapted"] = run.d_a_adapted;
      } else {
        r["error"] = run.error;
        ++failures;
      }
      c["runs"].push_back(std::move(r));
    }
    c["failures"] = failures;
    c["median_target_acc"] = number_or_null(cell.median_target_acc);
    c["median_source_acc"] = number_or_null(cell.median_source_acc);
    c["median_d_A_adapted"] = number_or_null(cell.median_d_a_adapted);
    j["cells"].push_back(std::move(c));
  }
  return j;
}

std::string summary_markdown(const SuiteReport& report) {
  std::ostringstream out;
  out << "# Suite summary\n\n";
  out << "Scenario: " << data::to_string(report.config.scenario.kind)
      << ", seeds: " << report.seeds.size() << ", epochs: " << report.config.epochs << "\n\n";
  out << "Median proxy A-distance on frozen-init features: " << fmt(report.median_d_a_frozen)
      << "\n\n";
  out << "| cell | method | scope | criterion | mode | entropy | median target acc | median source acc "
         "| median d_A (adapted) | failed |\n";
  out << "|---|---|---|---|---|---|---|---|---|---|\n";
  for (const CellReport& cell : report.cells) {
    std::size_t failures = 0;
    for (const CellRun& run : cell.runs) failures += run.ok ? 0 : 1;
    const bool tp = cell.spec.method == Method::TransparDann;
    out << "| " << cell.spec.id << " | " << to_string(cell.spec.method) << " | "
        << (tp ? scope_label(cell.spec.scope) : "-") << " | "
        << (tp ? optim::to_string(cell.spec.criterion) : "-") << " | "
        << (tp ? optim::to_string(cell.spec.mode) : "-") << " | "
        << (tp && cell.spec.entropy_enabled ? "yes" : "no") << " | "
        << fmt(cell.median_target_acc) << " | " << fmt(cell.median_source_acc) << " | "
        << fmt(cell.median_d_a_adapted) << " | " << failures << " |\n";
  }
  return out.str();
}

void emit_reports(const SuiteReport& report, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw ConfigError("cannot create output directory '" + out_dir + "'");
  }
  const std::filesystem::path root(out_dir);
  write_metrics_csv(report.metrics, (root / "metrics.csv").string());
  {
    std::ofstream out(root / "suite.json");
    if (!out) throw ConfigError("cannot write suite.json in '" + out_dir + "'");
    out << suite_to_json(report).dump(2) << '\n';
  }
  std::ofstream out(root / "summary.md");
  if (!out) throw ConfigError("cannot write summary.md in '" + out_dir + "'");
  out << summary_markdown(report);
}

void write_mask_dump(const std::vector<optim::StepRecord>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << "iteration,role,mode,m,m_t,bits\n";
  for (const optim::StepRecord& rec : log) {
    for (const auto& mask : rec.masks) {
      if (!mask) continue;
      std::string bits(static_cast<std::size_t>(mask->transferable.size()), '0');
      for (Eigen::Index i = 0; i < mask->transferable.size(); ++i) {
        if (mask->transferable(i)) bits[static_cast<std::size_t>(i)] = '1';
      }
      out << rec.iteration << ',' << model::short_name(mask->role) << ','
          << optim::to_string(mask->mode) << ',' << mask->transferable.size() << ','
          << mask->count() << ',' << bits << '\n';
    }
  }
}

}  // namespace transpar::harness
