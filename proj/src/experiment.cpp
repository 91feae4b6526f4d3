#include "hnca/experiment.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace hnca::cli {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& path) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (allowed.find(key) == allowed.end()) {
      throw SpecError("unknown key \"" + key + "\" at " + path);
    }
  }
}

void require_keys(const json& obj, const std::vector<std::string>& required,
                  const std::string& path) {
  for (const auto& key : required) {
    if (!obj.contains(key)) {
      throw SpecError("missing key \"" + key + "\" at " + path);
    }
  }
}

NetworkSpec parse_network(const json& j) {
  reject_unknown_keys(j, {"input_dim", "hidden_layers", "num_classes",
                          "output_mapping", "seed"},
                      "$.network");
  require_keys(j, {"input_dim", "hidden_layers", "num_classes",
                   "output_mapping", "seed"},
               "$.network");
  NetworkSpec spec;
  spec.input_dim = j.at("input_dim").get<int>();
  spec.hidden_layers = j.at("hidden_layers").get<std::vector<int>>();
  spec.num_classes = j.at("num_classes").get<int>();
  spec.output_mapping =
      output_mapping_from_string(j.at("output_mapping").get<std::string>());
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.validate();
  return spec;
}

DatasetConfig parse_dataset(const json& j) {
  require_keys(j, {"kind"}, "$.dataset");
  DatasetConfig d;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "idx") {
    d.kind = DatasetConfig::Kind::Idx;
    reject_unknown_keys(j, {"kind", "images", "labels", "limit"}, "$.dataset");
    require_keys(j, {"images", "labels"}, "$.dataset");
    d.images = j.at("images").get<std::string>();
    d.labels = j.at("labels").get<std::string>();
    if (j.contains("limit")) d.limit = j.at("limit").get<int>();
    return d;
  }
  if (kind == "xor_bits" || kind == "linearly_separable") {
    d.kind = kind == "xor_bits" ? DatasetConfig::Kind::XorBits
                                : DatasetConfig::Kind::LinearlySeparable;
    reject_unknown_keys(j, {"kind", "n", "d", "num_classes", "seed"},
                        "$.dataset");
    require_keys(j, {"n", "d", "num_classes", "seed"}, "$.dataset");
    d.n = j.at("n").get<int>();
    d.d = j.at("d").get<int>();
    d.num_classes = j.at("num_classes").get<int>();
    d.seed = j.at("seed").get<std::uint64_t>();
    return d;
  }
  throw SpecError("unknown dataset kind \"" + kind + "\" at $.dataset.kind");
}

SweepConfig parse_sweep(const json& j) {
  reject_unknown_keys(j, {"learning_rates", "seeds"}, "$.sweep");
  require_keys(j, {"learning_rates", "seeds"}, "$.sweep");
  SweepConfig s;
  s.learning_rates = j.at("learning_rates").get<std::vector<double>>();
  s.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  return s;
}

}  // namespace

ExperimentFile ExperimentFile::parse(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SpecError(std::string("experiment file is not valid JSON: ") +
                    e.what());
  }
  reject_unknown_keys(j, {"network", "train", "dataset", "sweep", "out_dir"},
                      "$");
  require_keys(j, {"network", "train", "dataset"}, "$");

  ExperimentFile exp;
  exp.network = parse_network(j.at("network"));

  const json& t = j.at("train");
  reject_unknown_keys(t, {"estimator", "learning_rate", "batch_size",
                          "epochs", "seed", "eval_every", "eval_subset"},
                      "$.train");
  require_keys(t, {"estimator", "learning_rate", "batch_size", "epochs",
                   "seed"},
               "$.train");
  exp.train.network = exp.network;
  exp.train.estimator = estimator_from_string(t.at("estimator"));
  exp.train.learning_rate = t.at("learning_rate").get<double>();
  exp.train.batch_size = t.at("batch_size").get<int>();
  exp.train.epochs = t.at("epochs").get<int>();
  exp.train.seed = t.at("seed").get<std::uint64_t>();
  if (t.contains("eval_every")) {
    exp.train.eval_every = t.at("eval_every").get<int>();
  }
  if (t.contains("eval_subset")) {
    exp.train.eval_subset = t.at("eval_subset").get<int>();
  }
  exp.train.validate();

  exp.dataset = parse_dataset(j.at("dataset"));
  if (j.contains("sweep")) exp.sweep = parse_sweep(j.at("sweep"));
  if (j.contains("out_dir")) exp.out_dir = j.at("out_dir").get<std::string>();
  return exp;
}

ExperimentFile ExperimentFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open experiment file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string ExperimentFile::to_json() const {
  json j;
  j["network"] = json::parse(network.to_json());
  j["train"] = {{"estimator", to_string(train.estimator)},
                {"learning_rate", train.learning_rate},
                {"batch_size", train.batch_size},
                {"epochs", train.epochs},
                {"seed", train.seed},
                {"eval_every", train.eval_every},
                {"eval_subset", train.eval_subset}};
  switch (dataset.kind) {
    case DatasetConfig::Kind::Idx:
      j["dataset"] = {{"kind", "idx"},
                      {"images", dataset.images},
                      {"labels", dataset.labels},
                      {"limit", dataset.limit}};
      break;
    case DatasetConfig::Kind::XorBits:
    case DatasetConfig::Kind::LinearlySeparable:
      j["dataset"] = {{"kind", dataset.kind == DatasetConfig::Kind::XorBits
                                   ? "xor_bits"
                                   : "linearly_separable"},
                      {"n", dataset.n},
                      {"d", dataset.d},
                      {"num_classes", dataset.num_classes},
                      {"seed", dataset.seed}};
      break;
  }
  if (sweep.has_value()) {
    j["sweep"] = {{"learning_rates", sweep->learning_rates},
                  {"seeds", sweep->seeds}};
  }
  if (!out_dir.empty()) j["out_dir"] = out_dir;
  return j.dump(2);
}

bandit::Dataset load_dataset(const DatasetConfig& config,
                             const std::string& data_dir) {
  auto resolve = [&data_dir](const std::string& path) {
    if (data_dir.empty() || path.empty() || path.front() == '/') return path;
    return data_dir + "/" + path;
  };
  switch (config.kind) {
    case DatasetConfig::Kind::Idx: {
      bandit::Dataset d = bandit::load_idx(resolve(config.images),
                                           resolve(config.labels));
      if (config.limit > 0 && config.limit < d.size()) {
        d = bandit::subset(d, config.limit);
      }
      return d;
    }
    case DatasetConfig::Kind::XorBits: {
      RngStream rng(config.seed, 0xDA7A);
      return bandit::synthetic_dataset(bandit::SyntheticKind::XorBits,
                                       config.n, config.d, config.num_classes,
                                       rng);
    }
    case DatasetConfig::Kind::LinearlySeparable: {
      RngStream rng(config.seed, 0xDA7A);
      return bandit::synthetic_dataset(
          bandit::SyntheticKind::LinearlySeparable, config.n, config.d,
          config.num_classes, rng);
    }
  }
  throw SpecError("unreachable dataset kind");
}

}  // namespace hnca::cli
