#include "transpar/checkpoint.hpp"

#include "transpar/errors.hpp"

#include <fstream>
#include <map>

namespace transpar::model {

nlohmann::ordered_json checkpoint_to_json(const Network& net,
                                          const std::optional<data::Standardizer>& standardizer) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["modules"] = nlohmann::ordered_json::array();
  for (ModuleRole role : kAllRoles) {
    nlohmann::ordered_json module;
    module["role"] = to_string(role);
    module["tensors"] = nlohmann::ordered_json::array();
    for (const Parameter& p : net.parameters()) {
      if (p.role != role) continue;
      nlohmann::ordered_json t;
      t["name"] = p.name;
      t["shape"] = {p.value.rows(), p.value.cols()};
      t["data"] = std::vector<double>(p.value.data(), p.value.data() + p.value.size());
      module["tensors"].push_back(std::move(t));
    }
    j["modules"].push_back(std::move(module));
  }
  if (standardizer) {
    j["standardizer"] = {
        {"mean", std::vector<double>(standardizer->mean.data(),
                                     standardizer->mean.data() + standardizer->mean.size())},
        {"std", std::vector<double>(standardizer->stddev.data(),
                                    standardizer->stddev.data() + standardizer->stddev.size())}};
  }
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j,
                                const std::optional<NetworkConfig>& expected) {
  try {
    if (j.at("format_version").get<int>() != 1) {
      throw ConfigError("checkpoint: unsupported format_version");
    }
    std::map<std::string, std::pair<ModuleRole, Matrix>> tensors;
    for (const auto& module : j.at("modules")) {
      const ModuleRole role = parse_role(module.at("role").get<std::string>());
      for (const auto& t : module.at("tensors")) {
        const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
        const auto values = t.at("data").get<std::vector<double>>();
        if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0 ||
            static_cast<std::size_t>(shape[0] * shape[1]) != values.size()) {
          throw ConfigError("checkpoint: tensor data does not match its shape");
        }
        Matrix m = Eigen::Map<const Matrix>(values.data(), shape[0], shape[1]);
        tensors[t.at("name").get<std::string>()] = {role, std::move(m)};
      }
    }

    auto take = [&](const std::string& name, ModuleRole role) -> Parameter {
      auto it = tensors.find(name);
      if (it == tensors.end()) throw ConfigError("checkpoint: missing tensor '" + name + "'");
      if (it->second.first != role) {
        throw ConfigError("checkpoint: tensor '" + name + "' filed under the wrong role");
      }
      return Parameter{name, role, it->second.second, {}};
    };
    std::vector<Parameter> params{
        take("F.fc1.weight", ModuleRole::FeatureExtractor),
        take("F.fc1.bias", ModuleRole::FeatureExtractor),
        take("F.fc2.weight", ModuleRole::FeatureExtractor),
        take("F.fc2.bias", ModuleRole::FeatureExtractor),
        take("C.fc.weight", ModuleRole::SourceHypothesis),
        take("C.fc.bias", ModuleRole::SourceHypothesis),
        take("D.fc1.weight", ModuleRole::DomainDiscriminator),
        take("D.fc1.bias", ModuleRole::DomainDiscriminator),
        take("D.fc2.weight", ModuleRole::DomainDiscriminator),
        take("D.fc2.bias", ModuleRole::DomainDiscriminator),
    };
    if (tensors.size() != params.size()) throw ConfigError("checkpoint: unexpected extra tensors");

    NetworkConfig config;
    config.input_dim = static_cast<int>(params[0].value.rows());
    config.hidden = static_cast<int>(params[0].value.cols());
    config.classes = static_cast<int>(params[4].value.cols());
    config.disc_hidden = static_cast<int>(params[6].value.cols());
    if (expected && (expected->input_dim != config.input_dim || expected->hidden != config.hidden ||
                     expected->classes != config.classes ||
                     expected->disc_hidden != config.disc_hidden)) {
      throw ConfigError("checkpoint: dimensions do not match the configured network");
    }

    Checkpoint out{Network(config, std::move(params), 0), std::nullopt};
    if (j.contains("standardizer")) {
      const auto mean = j.at("standardizer").at("mean").get<std::vector<double>>();
      const auto sd = j.at("standardizer").at("std").get<std::vector<double>>();
      if (mean.size() != sd.size() || static_cast<int>(mean.size()) != config.input_dim) {
        throw ConfigError("checkpoint: standardizer does not match input_dim");
      }
      data::Standardizer s;
      s.mean = Eigen::Map<const Eigen::RowVectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
      s.stddev = Eigen::Map<const Eigen::RowVectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
      out.standardizer = std::move(s);
    }
    return out;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("checkpoint: ") + ex.what());
  }
}

void save_checkpoint(const std::string& path, const Network& net,
                     const std::optional<data::Standardizer>& standardizer) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write checkpoint '" + path + "'");
  out << checkpoint_to_json(net, standardizer).dump() << '\n';
}

Checkpoint load_checkpoint(const std::string& path, const std::optional<NetworkConfig>& expected) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& ex) {
    throw ConfigError(std::string("checkpoint: ") + ex.what());
  }
  return checkpoint_from_json(j, expected);
}

}  // namespace transpar::model
