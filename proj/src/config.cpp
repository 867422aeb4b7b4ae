#include "fednmap/config.hpp"

#include <fstream>
#include <set>

#include "fednmap/idx.hpp"

namespace fednmap {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& prefix,
                const std::set<std::string>& allowed) {
  if (!obj.is_object())
    throw ConfigError("'" + prefix + "' must be a table");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key))
      throw ConfigError("unknown key " +
                        (prefix.empty() ? key : prefix + "." + key));
  }
}

template <typename T>
T get_or(const json& obj, const std::string& prefix, const std::string& key,
         T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for " + prefix + "." + key);
  }
}

template <typename T>
T require(const json& obj, const std::string& prefix, const std::string& key) {
  if (!obj.contains(key))
    throw ConfigError("missing required key " + prefix + "." + key);
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for " + prefix + "." + key);
  }
}

NoiseModel noise_from_json(const json& j, const std::string& prefix) {
  check_keys(j, prefix, {"kind", "sigma", "batch_size"});
  std::string kind = get_or<std::string>(j, prefix, "kind", "gaussian");
  if (kind == "gaussian")
    return NoiseModel::gaussian(get_or<double>(j, prefix, "sigma", 0.0));
  if (kind == "minibatch")
    return NoiseModel::minibatch(get_or<int>(j, prefix, "batch_size", 1));
  throw ConfigError(prefix + ".kind must be 'gaussian' or 'minibatch'");
}

struct DataSpec {
  std::shared_ptr<const Dataset> train;
  std::shared_ptr<const Dataset> eval;
};

DataSpec dataset_from_json(const json& j, const std::string& prefix,
                           double eval_fraction) {
  check_keys(j, prefix,
             {"kind", "samples", "side", "classes", "images", "labels",
              "seed"});
  std::string kind = require<std::string>(j, prefix, "kind");
  Dataset full;
  if (kind == "synthetic_images") {
    full = make_synthetic_image_dataset(
        get_or<int>(j, prefix, "samples", 2000),
        get_or<int>(j, prefix, "side", 8),
        get_or<int>(j, prefix, "classes", 10),
        get_or<std::uint64_t>(j, prefix, "seed", 0));
  } else if (kind == "idx") {
    full = load_idx(require<std::string>(j, prefix, "images"),
                    require<std::string>(j, prefix, "labels"));
  } else {
    throw ConfigError(prefix + ".kind must be 'synthetic_images' or 'idx'");
  }
  DataSpec out;
  int total = full.size();
  int eval_count = static_cast<int>(eval_fraction * total);
  if (eval_count <= 0) {
    out.train = std::make_shared<Dataset>(std::move(full));
    return out;
  }
  int train_count = total - eval_count;
  Dataset train, eval;
  train.num_classes = eval.num_classes = full.num_classes;
  train.features = full.features.topRows(train_count);
  train.labels = full.labels.head(train_count);
  eval.features = full.features.bottomRows(eval_count);
  eval.labels = full.labels.tail(eval_count);
  out.train = std::make_shared<Dataset>(std::move(train));
  out.eval = std::make_shared<Dataset>(std::move(eval));
  return out;
}

// Lane tag for the data partition stream.
constexpr std::uint64_t kPartitionLane = 0xfffffffeULL;

enum class PartitionKind { Sorted, Dirichlet };

}  // namespace

Regularizer regularizer_from_json(const json& j, const std::string& prefix) {
  check_keys(j, prefix, {"kind", "nu1", "nu2", "lo", "hi"});
  std::string kind = get_or<std::string>(j, prefix, "kind", "zero");
  try {
    if (kind == "zero") return Regularizer::zero();
    if (kind == "l1")
      return Regularizer::l1(get_or<double>(j, prefix, "nu1", 0.0));
    if (kind == "elastic_net")
      return Regularizer::elastic_net(get_or<double>(j, prefix, "nu1", 0.0),
                                      get_or<double>(j, prefix, "nu2", 0.0));
    if (kind == "box")
      return Regularizer::box(get_or<double>(j, prefix, "lo", 0.0),
                              get_or<double>(j, prefix, "hi", 1.0));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(prefix + ": " + e.what());
  }
  throw ConfigError(prefix + ".kind must be zero, l1, elastic_net, or box");
}

LoadedConfig load_config_json(const json& j) {
  check_keys(j, "", {"problem", "regularizer", "algorithm", "fed", "seed",
                     "run", "sweep"});
  LoadedConfig out;
  RunSpec& spec = out.spec;

  // --- regularizer
  if (j.contains("regularizer"))
    spec.reg = regularizer_from_json(j.at("regularizer"));

  // --- algorithm
  spec.algo = algo_from_name(get_or<std::string>(j, "", "algorithm", "fednmap"));

  // --- fed
  const json fed = j.contains("fed") ? j.at("fed") : json::object();
  check_keys(fed, "fed",
             {"n", "Q", "T", "eta_a", "eta_s", "gamma", "schedule", "mu",
              "delta_psi", "eta_a_times_q"});
  spec.fed.n = get_or<int>(fed, "fed", "n", 5);
  spec.fed.Q = get_or<int>(fed, "fed", "Q", 1);
  spec.fed.T = get_or<int>(fed, "fed", "T", 10);
  spec.fed.eta_a = get_or<double>(fed, "fed", "eta_a", 0.1);
  spec.fed.eta_s = get_or<double>(fed, "fed", "eta_s", 1.0);
  spec.fed.gamma = get_or<double>(fed, "fed", "gamma", 1.0);
  if (fed.contains("eta_a_times_q"))
    spec.eta_a_times_q = require<double>(fed, "fed", "eta_a_times_q");
  if (fed.contains("mu")) spec.schedule_mu = require<double>(fed, "fed", "mu");
  if (fed.contains("delta_psi"))
    spec.schedule_delta_psi = require<double>(fed, "fed", "delta_psi");
  std::string sched = get_or<std::string>(fed, "fed", "schedule", "manual");
  if (sched == "manual")
    spec.schedule = ScheduleKind::Manual;
  else if (sched == "theorem1")
    spec.schedule = ScheduleKind::Theorem1;
  else if (sched == "theorem2")
    spec.schedule = ScheduleKind::Theorem2;
  else
    throw ConfigError("fed.schedule must be manual, theorem1, or theorem2");

  // --- seed
  spec.seed = get_or<std::uint64_t>(j, "", "seed", 0);

  // --- run block
  const json runj = j.contains("run") ? j.at("run") : json::object();
  check_keys(runj, "run",
             {"metrics_every", "record_draws", "workers", "timing", "init",
              "psi_star", "auto_psi_star"});
  spec.metrics_every = get_or<int>(runj, "run", "metrics_every", 1);
  spec.record_draws = get_or<bool>(runj, "run", "record_draws", false);
  spec.workers = get_or<int>(runj, "run", "workers", 1);
  spec.timing = get_or<bool>(runj, "run", "timing", false);
  spec.auto_psi_star = get_or<bool>(runj, "run", "auto_psi_star", true);
  if (runj.contains("psi_star"))
    spec.psi_star = require<double>(runj, "run", "psi_star");
  if (runj.contains("init")) {
    const json& init = runj.at("init");
    check_keys(init, "run.init", {"kind", "scale"});
    std::string kind = get_or<std::string>(init, "run.init", "kind", "zeros");
    if (kind == "zeros")
      spec.init.kind = InitSpec::Kind::Zeros;
    else if (kind == "gaussian")
      spec.init.kind = InitSpec::Kind::Gaussian;
    else
      throw ConfigError("run.init.kind must be zeros or gaussian");
    spec.init.scale = get_or<double>(init, "run.init", "scale", 0.1);
  }

  // --- problem (a factory so sweeps can re-partition per client count)
  const json prob = j.contains("problem") ? j.at("problem") : json::object();
  check_keys(prob, "problem",
             {"kind", "p", "hetero", "noise", "data", "partition", "hidden",
              "eval_fraction", "l_probe_pairs"});
  std::string pkind = get_or<std::string>(prob, "problem", "kind", "quadratic");
  NoiseModel noise =
      prob.contains("noise")
          ? noise_from_json(prob.at("noise"), "problem.noise")
          : NoiseModel::gaussian(0.0);

  if (pkind == "quadratic") {
    int p = get_or<int>(prob, "problem", "p", 10);
    double hetero = get_or<double>(prob, "problem", "hetero", 1.0);
    if (noise.kind == NoiseKind::Minibatch)
      throw ConfigError("quadratic problems support gaussian noise only");
    spec.make_problem = [p, hetero, noise](int n, std::uint64_t seed) {
      auto q = make_composite_quadratic(n, p, hetero, seed);
      q->set_noise(noise);
      return std::shared_ptr<const Problem>(std::move(q));
    };
  } else if (pkind == "logistic" || pkind == "mlp") {
    if (!prob.contains("data"))
      throw ConfigError("problem.data is required for " + pkind);
    double eval_fraction =
        get_or<double>(prob, "problem", "eval_fraction", 0.0);
    DataSpec data =
        dataset_from_json(prob.at("data"), "problem.data", eval_fraction);
    spec.eval = data.eval;

    PartitionKind part_kind = PartitionKind::Sorted;
    double alpha = 0.1;
    if (prob.contains("partition")) {
      const json& part = prob.at("partition");
      check_keys(part, "problem.partition", {"kind", "alpha"});
      std::string pk =
          get_or<std::string>(part, "problem.partition", "kind", "sorted");
      if (pk == "sorted")
        part_kind = PartitionKind::Sorted;
      else if (pk == "dirichlet")
        part_kind = PartitionKind::Dirichlet;
      else
        throw ConfigError("problem.partition.kind must be sorted or dirichlet");
      alpha = get_or<double>(part, "problem.partition", "alpha", 0.1);
    }
    int hidden = get_or<int>(prob, "problem", "hidden", 32);
    int probe_pairs = get_or<int>(prob, "problem", "l_probe_pairs", 1000);
    bool is_mlp = pkind == "mlp";
    auto train = data.train;
    spec.make_problem = [train, part_kind, alpha, hidden, probe_pairs, noise,
                         is_mlp](int n, std::uint64_t seed) {
      std::vector<ClientShard> shards;
      if (part_kind == PartitionKind::Sorted) {
        shards = partition_sorted_by_label(*train, n);
      } else {
        RngStream rng(seed, kPartitionLane);
        shards = partition_dirichlet(*train, n, alpha, rng);
      }
      std::shared_ptr<Problem> built;
      if (is_mlp)
        built = std::make_shared<MlpOneHidden>(train, std::move(shards),
                                               hidden, seed, probe_pairs);
      else
        built = std::make_shared<LogisticRegression>(train, std::move(shards));
      built->set_noise(noise);
      return std::shared_ptr<const Problem>(built);
    };
  } else {
    throw ConfigError("problem.kind must be quadratic, logistic, or mlp");
  }

  // --- sweep grid
  out.sweep_ns = {spec.fed.n};
  out.sweep_qs = {spec.fed.Q};
  out.sweep_seeds = {spec.seed};
  if (j.contains("sweep")) {
    const json& sw = j.at("sweep");
    check_keys(sw, "sweep", {"ns", "Qs", "seeds"});
    if (sw.contains("ns"))
      out.sweep_ns = require<std::vector<int>>(sw, "sweep", "ns");
    if (sw.contains("Qs"))
      out.sweep_qs = require<std::vector<int>>(sw, "sweep", "Qs");
    if (sw.contains("seeds"))
      out.sweep_seeds =
          require<std::vector<std::uint64_t>>(sw, "sweep", "seeds");
  }
  return out;
}

LoadedConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    // nlohmann messages carry line/column position.
    throw ConfigError(path + ": " + e.what());
  }
  return load_config_json(j);
}

void apply_override(json& j, const std::string& key_eq_value) {
  auto eq = key_eq_value.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + key_eq_value + "' is not key=value");
  std::string dotted = key_eq_value.substr(0, eq);
  std::string value = key_eq_value.substr(eq + 1);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;  // plain string
  }
  json* node = &j;
  std::size_t pos = 0;
  while (true) {
    auto dot = dotted.find('.', pos);
    std::string part = dotted.substr(pos, dot == std::string::npos
                                              ? std::string::npos
                                              : dot - pos);
    if (part.empty()) throw ConfigError("override key has an empty segment");
    if (dot == std::string::npos) {
      (*node)[part] = parsed;
      break;
    }
    node = &(*node)[part];
    pos = dot + 1;
  }
}

}  // namespace fednmap
