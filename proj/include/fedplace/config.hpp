#pragma once

// JSON experiment configuration: parsing with defaults and field-level
// validation, canonical serialization, and the config fingerprint.
//
// Unknown keys are rejected so that typos surface as errors instead of
// silently falling back to defaults.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedplace/error.hpp"
#include "fedplace/cluster.hpp"
#include "fedplace/engine.hpp"
#include "fedplace/placement.hpp"
#include "fedplace/population.hpp"
#include "fedplace/time_model.hpp"

namespace fedplace {

using json = nlohmann::json;

struct ModelConfig {
  std::size_t dimension = 64;
  double perturbation_bound = 0.1;
  bool running_sum = false;
};

struct LbConfig {
  // 0 keeps every record.
  std::uint64_t window_rounds = 0;
  FitPooling pooling = FitPooling::kGpuType;
};

struct ExperimentConfig {
  PopulationSpec population;
  // Population seed; derived from the master seed when unset.
  std::optional<std::uint64_t> population_seed;
  std::map<std::string, GpuModelParams> gpu_catalog;
  std::vector<NodeSpec> nodes;
  WorkerOverrides workers_per_gpu;
  ContentionModel contention;
  Policy policy = Policy::kRoundRobin;
  ProtocolConfig protocol;
  std::uint64_t clients_per_round = 100;
  std::uint64_t num_rounds = 100;
  std::optional<std::uint64_t> total_clients;
  std::uint64_t seed = 0;
  std::string output_dir;
  ModelConfig model;
  LbConfig lb;

  // With total_clients set the run has ceil(total / clients_per_round)
  // rounds and the last one trains the remainder.
  std::uint64_t effective_rounds() const {
    if (total_clients) return (*total_clients + clients_per_round - 1) / clients_per_round;
    return num_rounds;
  }

  std::uint64_t cohort_size(std::uint64_t round_index) const {
    if (!total_clients) return clients_per_round;
    const std::uint64_t done = round_index * clients_per_round;
    return std::min(clients_per_round, *total_clients - done);
  }

  std::uint64_t effective_population_seed() const {
    return population_seed ? *population_seed : derive_seed(seed, {static_cast<std::uint64_t>(StreamTag::kPopulation)});
  }
};

// Checks cross-field constraints. Individual sub-objects are validated when
// they are built (GpuModel, Cluster, population).
inline void validate(const ExperimentConfig& c) {
  if (c.clients_per_round < 1) throw ConfigError("clients_per_round", "must be >= 1");
  if (c.total_clients) {
    if (*c.total_clients < 1) throw ConfigError("total_clients", "must be >= 1");
  } else if (c.num_rounds < 1) {
    throw ConfigError("num_rounds", "must be >= 1");
  }
  if (c.clients_per_round > c.population.num_clients) {
    throw ConfigError("clients_per_round", "exceeds population.num_clients (" +
                                               std::to_string(c.population.num_clients) + ")");
  }
  if (c.nodes.empty()) throw ConfigError("nodes", "at least one node is required");
  if (c.model.dimension < 1) throw ConfigError("model.dimension", "must be >= 1");
  if (!(c.model.perturbation_bound >= 0.0) || !std::isfinite(c.model.perturbation_bound)) {
    throw ConfigError("model.perturbation_bound", "must be finite and >= 0");
  }
  validate(c.protocol);
  validate(c.population);
  for (const auto& [name, params] : c.gpu_catalog) {
    if (params.gpu_type != name) throw ConfigError("gpu_catalog." + name, "gpu_type must match its key");
    GpuModel{params};
  }
}

inline GpuCatalog build_catalog(const ExperimentConfig& c) {
  GpuCatalog out;
  for (const auto& [name, params] : c.gpu_catalog) out.emplace(name, GpuModel(params));
  return out;
}

inline Cluster build_cluster(const ExperimentConfig& c) {
  return Cluster::build(c.nodes, build_catalog(c), c.workers_per_gpu, c.contention);
}

inline constexpr std::string_view kToolVersion = "1.0.0";
inline constexpr std::string_view kOutputDirEnv = "POLLEN_SIM_OUT";

inline std::string default_output_dir() {
  if (const char* env = std::getenv(std::string(kOutputDirEnv).c_str()); env && *env) return env;
  return "fedplace-out";
}

// Defaults: openimage-like population, one a40-like node plus one
// rtx2080ti-like node, round-robin, push, 100 clients x 100 rounds.
inline ExperimentConfig default_config() {
  ExperimentConfig c;
  c.population = *population_preset("openimage-like");
  for (const auto& name : gpu_preset_names()) c.gpu_catalog.emplace(name, *gpu_preset(name));
  c.nodes = {NodeSpec{0, {GpuGroup{"a40-like", 1}}, 88}, NodeSpec{1, {GpuGroup{"rtx2080ti-like", 1}}, 56}};
  c.contention = ContentionModel{0.05};
  c.output_dir = default_output_dir();
  return c;
}

namespace detail {

inline void reject_unknown(const json& obj, const std::string& path, std::initializer_list<std::string_view> keys) {
  for (const auto& [k, v] : obj.items()) {
    bool known = false;
    for (auto key : keys) known = known || key == k;
    if (!known) throw ConfigError(path.empty() ? k : path + "." + k, "unknown key");
  }
}

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path.empty() ? "<root>" : path, "expected an object");
}

// Parsed text yields unsigned values; trees built in code may hold signed ones.
inline bool is_non_negative_integer(const json& j) {
  return j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0);
}

template <class T>
void read(const json& obj, std::string_view key, const std::string& path, T& out) {
  const auto it = obj.find(key);
  if (it == obj.end()) return;
  const std::string field = path.empty() ? std::string(key) : path + "." + std::string(key);
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw ConfigError(field, "expected true or false");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!is_non_negative_integer(*it)) throw ConfigError(field, "expected a non-negative integer");
      if (it->template get<std::uint64_t>() > std::numeric_limits<T>::max()) throw ConfigError(field, "out of range");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!it->is_number()) throw ConfigError(field, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!it->is_string()) throw ConfigError(field, "expected a string");
    }
    out = it->template get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(field, e.what());
  }
}

inline SizeDistribution parse_distribution(const json& j, const std::string& path) {
  require_object(j, path);
  std::string type;
  read(j, "type", path, type);
  if (type == "constant") {
    reject_unknown(j, path, {"type", "samples"});
    dist::Constant d;
    read(j, "samples", path, d.samples);
    return d;
  }
  if (type == "uniform") {
    reject_unknown(j, path, {"type", "lo", "hi"});
    dist::Uniform d;
    read(j, "lo", path, d.lo);
    read(j, "hi", path, d.hi);
    return d;
  }
  if (type == "lognormal") {
    reject_unknown(j, path, {"type", "mu", "sigma"});
    dist::LogNormal d;
    read(j, "mu", path, d.mu);
    read(j, "sigma", path, d.sigma);
    return d;
  }
  if (type == "zipf") {
    reject_unknown(j, path, {"type", "s", "max"});
    dist::Zipf d;
    read(j, "s", path, d.s);
    read(j, "max", path, d.max);
    return d;
  }
  throw ConfigError(path + ".type", "expected one of constant, uniform, lognormal, zipf; got '" + type + "'");
}

inline json distribution_to_json(const SizeDistribution& d) {
  return std::visit(
      [](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, dist::Constant>) return {{"type", "constant"}, {"samples", x.samples}};
        else if constexpr (std::is_same_v<T, dist::Uniform>) return {{"type", "uniform"}, {"lo", x.lo}, {"hi", x.hi}};
        else if constexpr (std::is_same_v<T, dist::LogNormal>) return {{"type", "lognormal"}, {"mu", x.mu}, {"sigma", x.sigma}};
        else return {{"type", "zipf"}, {"s", x.s}, {"max", x.max}};
      },
      d);
}

inline void parse_population(const json& j, ExperimentConfig& c) {
  const std::string path = "population";
  require_object(j, path);
  reject_unknown(j, path, {"preset", "num_clients", "batch_size", "distribution", "seed"});
  if (const auto it = j.find("preset"); it != j.end()) {
    std::string name;
    read(j, "preset", path, name);
    const auto preset = population_preset(name);
    if (!preset) throw ConfigError(path + ".preset", "unknown population preset '" + name + "'");
    c.population = *preset;
  }
  read(j, "num_clients", path, c.population.num_clients);
  read(j, "batch_size", path, c.population.batch_size);
  if (const auto it = j.find("distribution"); it != j.end()) {
    c.population.size_distribution = parse_distribution(*it, path + ".distribution");
  }
  if (j.contains("seed")) {
    std::uint64_t s = 0;
    read(j, "seed", path, s);
    c.population_seed = s;
  }
}

inline GpuModelParams parse_gpu(const json& j, const std::string& name) {
  const std::string path = "gpu_catalog." + name;
  require_object(j, path);
  reject_unknown(j, path,
                 {"preset", "latency_linear", "latency_log_coeff", "latency_log_scale", "latency_offset",
                  "latency_quadratic", "noise_sigma_small", "noise_sigma_large", "small_client_threshold",
                  "max_workers"});
  GpuModelParams p;
  if (j.contains("preset")) {
    std::string preset;
    read(j, "preset", path, preset);
    const auto found = gpu_preset(preset);
    if (!found) throw ConfigError(path + ".preset", "unknown gpu preset '" + preset + "'");
    p = *found;
  }
  p.gpu_type = name;
  read(j, "latency_linear", path, p.latency_linear);
  read(j, "latency_log_coeff", path, p.latency_log_coeff);
  read(j, "latency_log_scale", path, p.latency_log_scale);
  read(j, "latency_offset", path, p.latency_offset);
  read(j, "latency_quadratic", path, p.latency_quadratic);
  read(j, "noise_sigma_small", path, p.noise_sigma_small);
  read(j, "noise_sigma_large", path, p.noise_sigma_large);
  read(j, "small_client_threshold", path, p.small_client_threshold);
  read(j, "max_workers", path, p.max_workers);
  return p;
}

inline json gpu_to_json(const GpuModelParams& p) {
  return {{"latency_linear", p.latency_linear},
          {"latency_log_coeff", p.latency_log_coeff},
          {"latency_log_scale", p.latency_log_scale},
          {"latency_offset", p.latency_offset},
          {"latency_quadratic", p.latency_quadratic},
          {"noise_sigma_small", p.noise_sigma_small},
          {"noise_sigma_large", p.noise_sigma_large},
          {"small_client_threshold", p.small_client_threshold},
          {"max_workers", p.max_workers}};
}

inline std::vector<NodeSpec> parse_nodes(const json& j) {
  if (!j.is_array()) throw ConfigError("nodes", "expected an array");
  std::vector<NodeSpec> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string path = "nodes[" + std::to_string(i) + "]";
    const json& n = j[i];
    require_object(n, path);
    reject_unknown(n, path, {"node_id", "cpu_cores", "gpus"});
    NodeSpec node{static_cast<std::uint32_t>(i), {}, 1};
    read(n, "node_id", path, node.node_id);
    read(n, "cpu_cores", path, node.cpu_cores);
    const auto g = n.find("gpus");
    if (g == n.end() || !g->is_array()) throw ConfigError(path + ".gpus", "expected an array");
    for (std::size_t k = 0; k < g->size(); ++k) {
      const std::string gpath = path + ".gpus[" + std::to_string(k) + "]";
      const json& e = (*g)[k];
      require_object(e, gpath);
      reject_unknown(e, gpath, {"type", "count"});
      GpuGroup group;
      read(e, "type", gpath, group.gpu_type);
      read(e, "count", gpath, group.count);
      if (group.gpu_type.empty()) throw ConfigError(gpath + ".type", "required");
      if (group.count < 1) throw ConfigError(gpath + ".count", "must be >= 1");
      node.gpus.push_back(group);
    }
    out.push_back(std::move(node));
  }
  return out;
}

}  // namespace detail

// Builds a validated config from a JSON tree; missing fields take the values
// of default_config().
inline ExperimentConfig config_from_json(const json& j) {
  using detail::read;
  detail::require_object(j, "");
  detail::reject_unknown(j, "",
                         {"population", "gpu_catalog", "nodes", "workers_per_gpu", "contention", "policy", "protocol",
                          "clients_per_round", "num_rounds", "total_clients", "seed", "output_dir", "model", "lb"});
  ExperimentConfig c = default_config();

  if (const auto it = j.find("population"); it != j.end()) detail::parse_population(*it, c);
  if (const auto it = j.find("gpu_catalog"); it != j.end()) {
    detail::require_object(*it, "gpu_catalog");
    for (const auto& [name, g] : it->items()) c.gpu_catalog[name] = detail::parse_gpu(g, name);
  }
  if (const auto it = j.find("nodes"); it != j.end()) c.nodes = detail::parse_nodes(*it);
  // GPU types referenced by nodes but not declared resolve to presets.
  for (const auto& node : c.nodes) {
    for (const auto& g : node.gpus) {
      if (c.gpu_catalog.contains(g.gpu_type)) continue;
      auto preset = gpu_preset(g.gpu_type);
      if (!preset) throw ConfigError("nodes", "gpu type '" + g.gpu_type + "' is neither declared nor a preset");
      c.gpu_catalog.emplace(g.gpu_type, *preset);
    }
  }
  if (const auto it = j.find("workers_per_gpu"); it != j.end()) {
    detail::require_object(*it, "workers_per_gpu");
    for (const auto& [name, v] : it->items()) {
      std::uint32_t n = 0;
      read(*it, name, "workers_per_gpu", n);
      c.workers_per_gpu[name] = n;
    }
  }
  if (const auto it = j.find("contention"); it != j.end()) {
    detail::require_object(*it, "contention");
    detail::reject_unknown(*it, "contention", {"slowdown_per_extra_worker"});
    read(*it, "slowdown_per_extra_worker", "contention", c.contention.slowdown_per_extra_worker);
  }
  if (j.contains("policy")) {
    std::string name;
    read(j, "policy", "", name);
    const auto p = parse_policy(name);
    if (!p) throw ConfigError("policy", "expected one of rr, srr, bu, lb; got '" + name + "'");
    c.policy = *p;
  }
  if (const auto it = j.find("protocol"); it != j.end()) {
    const std::string path = "protocol";
    detail::require_object(*it, path);
    detail::reject_unknown(*it, path,
                           {"mode", "per_message_latency", "result_payload_latency", "final_aggregation_time",
                            "include_final_aggregation"});
    if (it->contains("mode")) {
      std::string mode;
      read(*it, "mode", path, mode);
      if (mode == "push") c.protocol.mode = ProtocolMode::kPush;
      else if (mode == "pull") c.protocol.mode = ProtocolMode::kPull;
      else throw ConfigError("protocol.mode", "expected push or pull; got '" + mode + "'");
    }
    read(*it, "per_message_latency", path, c.protocol.per_message_latency);
    read(*it, "result_payload_latency", path, c.protocol.result_payload_latency);
    read(*it, "final_aggregation_time", path, c.protocol.final_aggregation_time);
    read(*it, "include_final_aggregation", path, c.protocol.include_final_aggregation);
  }
  read(j, "clients_per_round", "", c.clients_per_round);
  read(j, "num_rounds", "", c.num_rounds);
  if (j.contains("total_clients") && !j["total_clients"].is_null()) {
    std::uint64_t t = 0;
    read(j, "total_clients", "", t);
    c.total_clients = t;
  }
  read(j, "seed", "", c.seed);
  read(j, "output_dir", "", c.output_dir);
  if (const auto it = j.find("model"); it != j.end()) {
    detail::require_object(*it, "model");
    detail::reject_unknown(*it, "model", {"dimension", "perturbation_bound", "running_sum"});
    read(*it, "dimension", "model", c.model.dimension);
    read(*it, "perturbation_bound", "model", c.model.perturbation_bound);
    read(*it, "running_sum", "model", c.model.running_sum);
  }
  if (const auto it = j.find("lb"); it != j.end()) {
    detail::require_object(*it, "lb");
    detail::reject_unknown(*it, "lb", {"window_rounds", "pooling"});
    read(*it, "window_rounds", "lb", c.lb.window_rounds);
    if (it->contains("pooling")) {
      std::string pooling;
      read(*it, "pooling", "lb", pooling);
      if (pooling == "gpu_type") c.lb.pooling = FitPooling::kGpuType;
      else if (pooling == "physical_gpu") c.lb.pooling = FitPooling::kPhysicalGpu;
      else throw ConfigError("lb.pooling", "expected gpu_type or physical_gpu; got '" + pooling + "'");
    }
  }

  validate(c);
  // Surface topology errors (unknown types, oversubscription) at load time.
  build_cluster(c);
  return c;
}

// Fully explicit serialization: presets are expanded, every field written.
inline json config_to_json(const ExperimentConfig& c) {
  json j;
  j["population"] = {{"num_clients", c.population.num_clients},
                     {"batch_size", c.population.batch_size},
                     {"distribution", detail::distribution_to_json(c.population.size_distribution)}};
  if (c.population_seed) j["population"]["seed"] = *c.population_seed;
  j["gpu_catalog"] = json::object();
  for (const auto& [name, p] : c.gpu_catalog) j["gpu_catalog"][name] = detail::gpu_to_json(p);
  j["nodes"] = json::array();
  for (const auto& n : c.nodes) {
    json gpus = json::array();
    for (const auto& g : n.gpus) gpus.push_back({{"type", g.gpu_type}, {"count", g.count}});
    j["nodes"].push_back({{"node_id", n.node_id}, {"cpu_cores", n.cpu_cores}, {"gpus", gpus}});
  }
  j["workers_per_gpu"] = json::object();
  for (const auto& [name, n] : c.workers_per_gpu) j["workers_per_gpu"][name] = n;
  j["contention"] = {{"slowdown_per_extra_worker", c.contention.slowdown_per_extra_worker}};
  j["policy"] = std::string(policy_name(c.policy));
  j["protocol"] = {{"mode", std::string(protocol_name(c.protocol.mode))},
                   {"per_message_latency", c.protocol.per_message_latency},
                   {"result_payload_latency", c.protocol.result_payload_latency},
                   {"final_aggregation_time", c.protocol.final_aggregation_time},
                   {"include_final_aggregation", c.protocol.include_final_aggregation}};
  j["clients_per_round"] = c.clients_per_round;
  j["num_rounds"] = c.num_rounds;
  j["total_clients"] = c.total_clients ? json(*c.total_clients) : json(nullptr);
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["model"] = {{"dimension", c.model.dimension},
                {"perturbation_bound", c.model.perturbation_bound},
                {"running_sum", c.model.running_sum}};
  j["lb"] = {{"window_rounds", c.lb.window_rounds},
             {"pooling", c.lb.pooling == FitPooling::kGpuType ? "gpu_type" : "physical_gpu"}};
  return j;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

// Hash of every field that influences results (the output directory does not).
inline std::string config_fingerprint(const ExperimentConfig& c) {
  json j = config_to_json(c);
  j.erase("output_dir");
  return hex64(fnv1a64(j.dump()));
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open file");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path, std::string("parse error: ") + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  const json j = read_json_file(path);
  try {
    return config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(e.field(), std::string(e.what()).substr(e.field().size() + 2) + " (in " + path + ")");
  }
}

}  // namespace fedplace
