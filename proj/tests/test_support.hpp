#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "fedplace/fedplace.hpp"

namespace fedplace::testing {

// t(m) = m seconds, no noise, no contention: training times equal batch
// counts, which makes hand traces exact.
inline GpuModelParams unit_gpu(std::string name = "unit", double scale = 1.0, std::uint32_t max_workers = 16) {
  return GpuModelParams{std::move(name), scale, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, max_workers};
}

// One client per entry; batch size 1 so num_batches == num_samples.
inline std::vector<ClientProfile> population_of(std::initializer_list<std::uint64_t> batches) {
  std::vector<ClientProfile> out;
  ClientId id = 0;
  for (std::uint64_t m : batches) out.push_back({id++, m, m});
  return out;
}

inline std::vector<ClientProfile> population_of(const std::vector<std::uint64_t>& batches) {
  std::vector<ClientProfile> out;
  ClientId id = 0;
  for (std::uint64_t m : batches) out.push_back({id++, m, m});
  return out;
}

inline Cohort cohort_of(std::size_t n, std::uint64_t round = 0) {
  Cohort c{round, {}};
  for (std::size_t i = 0; i < n; ++i) c.client_ids.push_back(static_cast<ClientId>(i));
  return c;
}

// Workers with one per physical GPU so that contention never applies.
inline std::vector<WorkerSpec> flat_workers(std::size_t k, const std::string& type = "unit") {
  std::vector<WorkerSpec> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back({static_cast<WorkerId>(i), 0, type, static_cast<std::uint32_t>(i)});
  return out;
}

inline Cluster flat_cluster(std::size_t k, const GpuModelParams& gpu = unit_gpu()) {
  GpuCatalog catalog;
  catalog.emplace(gpu.gpu_type, GpuModel(gpu));
  return Cluster(std::move(catalog), flat_workers(k, gpu.gpu_type), ContentionModel{0.0});
}

inline ProtocolConfig zero_latency(ProtocolMode mode) {
  ProtocolConfig p;
  p.mode = mode;
  p.per_message_latency = 0.0;
  p.result_payload_latency = 0.0;
  p.final_aggregation_time = 0.0;
  return p;
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("fedplace-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Small experiment on the default heterogeneous topology.
inline ExperimentConfig small_config(Policy policy, std::uint64_t rounds = 10, std::uint64_t seed = 1) {
  ExperimentConfig c = default_config();
  c.policy = policy;
  c.num_rounds = rounds;
  c.seed = seed;
  c.model.dimension = 8;
  return c;
}

}  // namespace fedplace::testing
