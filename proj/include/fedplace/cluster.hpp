#pragma once

// Heterogeneous GPU hardware: ground-truth latency curves with noise and
// co-residency contention, and the resource allocator that turns a node
// inventory into workers.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedplace/error.hpp"
#include "fedplace/rng.hpp"

namespace fedplace {

using WorkerId = std::uint32_t;

// Raw curve parameters. Expected time for a client with m batches is
//   linear*m + log_coeff*log(log_scale*m) + offset + quadratic*m^2
// where the quadratic term is zero unless a model-mismatch experiment asks
// for it.
struct GpuModelParams {
  std::string gpu_type;
  double latency_linear = 0.0;
  double latency_log_coeff = 0.0;
  double latency_log_scale = 1.0;
  double latency_offset = 0.0;
  double latency_quadratic = 0.0;
  double noise_sigma_small = 0.0;
  double noise_sigma_large = 0.0;
  double small_client_threshold = 0.0;
  std::uint32_t max_workers = 1;
};

class GpuModel {
 public:
  // Throws ConfigError unless the curve is strictly positive on m >= 1.
  // Non-negative linear, log and quadratic coefficients make the curve
  // non-decreasing, so positivity at m = 1 covers the whole range.
  explicit GpuModel(GpuModelParams p) : p_(std::move(p)) {
    const std::string f = "gpu_catalog." + p_.gpu_type;
    auto finite = [&](double v, const char* name) {
      if (!std::isfinite(v)) throw ConfigError(f + "." + name, "must be finite");
    };
    finite(p_.latency_linear, "latency_linear");
    finite(p_.latency_log_coeff, "latency_log_coeff");
    finite(p_.latency_log_scale, "latency_log_scale");
    finite(p_.latency_offset, "latency_offset");
    finite(p_.latency_quadratic, "latency_quadratic");
    finite(p_.noise_sigma_small, "noise_sigma_small");
    finite(p_.noise_sigma_large, "noise_sigma_large");
    finite(p_.small_client_threshold, "small_client_threshold");
    if (p_.gpu_type.empty()) throw ConfigError("gpu_catalog", "gpu_type must be non-empty");
    if (p_.latency_linear < 0) throw ConfigError(f + ".latency_linear", "must be >= 0");
    if (p_.latency_log_coeff < 0) throw ConfigError(f + ".latency_log_coeff", "must be >= 0");
    if (!(p_.latency_log_scale > 0)) throw ConfigError(f + ".latency_log_scale", "must be > 0");
    if (p_.latency_quadratic < 0) throw ConfigError(f + ".latency_quadratic", "must be >= 0");
    if (p_.noise_sigma_small < 0) throw ConfigError(f + ".noise_sigma_small", "must be >= 0");
    if (p_.noise_sigma_large < 0) throw ConfigError(f + ".noise_sigma_large", "must be >= 0");
    if (p_.max_workers < 1) throw ConfigError(f + ".max_workers", "must be >= 1");
    if (!(curve(1.0) > 0.0)) {
      throw ConfigError(f, "expected time must be positive for every m >= 1 (value at m=1 is " +
                               std::to_string(curve(1.0)) + ")");
    }
  }

  const GpuModelParams& params() const noexcept { return p_; }
  const std::string& gpu_type() const noexcept { return p_.gpu_type; }
  std::uint32_t max_workers() const noexcept { return p_.max_workers; }

  double curve(double m) const noexcept {
    return p_.latency_linear * m + p_.latency_log_coeff * std::log(p_.latency_log_scale * m) + p_.latency_offset +
           p_.latency_quadratic * m * m;
  }

  double noise_sigma(double m) const noexcept {
    return m < p_.small_client_threshold ? p_.noise_sigma_small : p_.noise_sigma_large;
  }

 private:
  GpuModelParams p_;
};

using GpuCatalog = std::map<std::string, GpuModel, std::less<>>;

// Linear slowdown applied to the mean client time for every co-resident
// worker beyond the first on the same physical GPU.
struct ContentionModel {
  double slowdown_per_extra_worker = 0.0;

  double factor(std::uint32_t co_resident_workers) const {
    return 1.0 + slowdown_per_extra_worker * static_cast<double>(co_resident_workers - 1);
  }
};

inline double expected_time(const GpuModel& gpu, double m) {
  if (!(m >= 1.0)) throw DomainError("expected_time: batch count must be >= 1");
  return gpu.curve(m);
}

inline double sample_training_time(const GpuModel& gpu, double m, std::uint32_t co_resident_workers,
                                   const ContentionModel& contention, Rng& rng) {
  if (!(m >= 1.0)) throw DomainError("sample_training_time: batch count must be >= 1");
  if (co_resident_workers < 1) throw DomainError("sample_training_time: co-resident workers must be >= 1");
  const double mean = gpu.curve(m) * contention.factor(co_resident_workers);
  const double sigma = gpu.noise_sigma(m);
  if (sigma == 0.0) return mean;
  // Truncated Gaussian by rejection: keep 1 + eps > 0.
  constexpr int kMaxRejections = 64;
  for (int i = 0; i < kMaxRejections; ++i) {
    const double eps = rng.normal(0.0, sigma);
    if (1.0 + eps > 0.0) return mean * (1.0 + eps);
  }
  return mean * 1e-3;
}

// Offline-calibrated stand-ins for the two GPU families. The a40-like curve
// is below the 2080-like curve at every m.
inline std::optional<GpuModelParams> gpu_preset(std::string_view name) {
  if (name == "a40-like") {
    return GpuModelParams{"a40-like", 0.25, 0.4, 1.0, 0.8, 0.0, 0.3, 0.1, 5.0, 13};
  }
  if (name == "rtx2080ti-like") {
    return GpuModelParams{"rtx2080ti-like", 0.75, 0.6, 1.0, 1.2, 0.0, 0.3, 0.1, 5.0, 4};
  }
  return std::nullopt;
}

inline std::vector<std::string> gpu_preset_names() { return {"a40-like", "rtx2080ti-like"}; }

struct GpuGroup {
  std::string gpu_type;
  std::uint32_t count = 1;
};

struct NodeSpec {
  std::uint32_t node_id = 0;
  std::vector<GpuGroup> gpus;
  std::uint32_t cpu_cores = 1;
};

struct WorkerSpec {
  WorkerId worker_id = 0;
  std::uint32_t node_id = 0;
  std::string gpu_type;
  std::uint32_t gpu_index = 0;

  friend bool operator==(const WorkerSpec&, const WorkerSpec&) = default;
};

using WorkerOverrides = std::map<std::string, std::uint32_t, std::less<>>;

// Fills every physical GPU with min(max_workers, override) workers. Worker ids
// are dense and ordered by node, then GPU index within the node, then slot.
inline std::vector<WorkerSpec> allocate_workers(std::span<const NodeSpec> nodes, const GpuCatalog& catalog,
                                                const WorkerOverrides& overrides = {}) {
  for (const auto& [type, n] : overrides) {
    const auto it = catalog.find(type);
    if (it == catalog.end()) throw ConfigError("workers_per_gpu." + type, "unknown gpu_type");
    if (n < 1) throw ConfigError("workers_per_gpu." + type, "must be >= 1");
    if (n > it->second.max_workers()) {
      throw ConfigError("workers_per_gpu." + type, "override " + std::to_string(n) + " exceeds max_workers " +
                                                       std::to_string(it->second.max_workers()));
    }
  }
  std::vector<WorkerSpec> workers;
  for (const auto& node : nodes) {
    const std::string f = "nodes[" + std::to_string(node.node_id) + "]";
    if (node.cpu_cores < 1) throw ConfigError(f + ".cpu_cores", "must be >= 1");
    std::uint32_t gpu_index = 0;
    for (const auto& group : node.gpus) {
      const auto it = catalog.find(group.gpu_type);
      if (it == catalog.end()) throw ConfigError(f + ".gpus", "unknown gpu_type '" + group.gpu_type + "'");
      if (group.count < 1) throw ConfigError(f + ".gpus." + group.gpu_type + ".count", "must be >= 1");
      std::uint32_t per_gpu = it->second.max_workers();
      if (const auto o = overrides.find(group.gpu_type); o != overrides.end()) per_gpu = o->second;
      for (std::uint32_t g = 0; g < group.count; ++g, ++gpu_index) {
        for (std::uint32_t slot = 0; slot < per_gpu; ++slot) {
          workers.push_back({static_cast<WorkerId>(workers.size()), node.node_id, group.gpu_type, gpu_index});
        }
      }
    }
  }
  return workers;
}

// Allocated workers plus everything needed to time a client on any of them.
class Cluster {
 public:
  Cluster(GpuCatalog catalog, std::vector<WorkerSpec> workers, ContentionModel contention)
      : catalog_(std::move(catalog)), workers_(std::move(workers)), contention_(contention) {
    if (workers_.empty()) throw ConfigError("nodes", "topology yields no workers");
    if (contention_.slowdown_per_extra_worker < 0 || !std::isfinite(contention_.slowdown_per_extra_worker)) {
      throw ConfigError("contention.slowdown_per_extra_worker", "must be finite and >= 0");
    }
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> per_gpu;
    for (std::size_t i = 0; i < workers_.size(); ++i) {
      if (workers_[i].worker_id != i) throw ConfigError("workers", "worker ids must be dense from 0");
      if (!catalog_.contains(workers_[i].gpu_type)) {
        throw ConfigError("workers", "unknown gpu_type '" + workers_[i].gpu_type + "'");
      }
      ++per_gpu[{workers_[i].node_id, workers_[i].gpu_index}];
    }
    co_resident_.reserve(workers_.size());
    for (const auto& w : workers_) {
      const std::uint32_t n = per_gpu[{w.node_id, w.gpu_index}];
      if (n > model_for(w.worker_id).max_workers()) {
        throw ConfigError("workers", "physical GPU exceeds max_workers for '" + w.gpu_type + "'");
      }
      co_resident_.push_back(n);
    }
  }

  static Cluster build(std::span<const NodeSpec> nodes, GpuCatalog catalog, const WorkerOverrides& overrides,
                       ContentionModel contention) {
    auto workers = allocate_workers(nodes, catalog, overrides);
    return Cluster(std::move(catalog), std::move(workers), contention);
  }

  const std::vector<WorkerSpec>& workers() const noexcept { return workers_; }
  std::size_t num_workers() const noexcept { return workers_.size(); }
  const GpuCatalog& catalog() const noexcept { return catalog_; }
  const ContentionModel& contention() const noexcept { return contention_; }

  const GpuModel& model_for(WorkerId w) const { return catalog_.find(workers_.at(w).gpu_type)->second; }
  std::uint32_t co_resident(WorkerId w) const { return co_resident_.at(w); }

  double sample_time(WorkerId w, double m, Rng& rng) const {
    return sample_training_time(model_for(w), m, co_resident(w), contention_, rng);
  }

 private:
  GpuCatalog catalog_;
  std::vector<WorkerSpec> workers_;
  ContentionModel contention_;
  std::vector<std::uint32_t> co_resident_;
};

}  // namespace fedplace
