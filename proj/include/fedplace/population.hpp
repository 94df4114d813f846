#pragma once

// Synthetic client populations with long-tailed dataset sizes, and uniform
// cohort sampling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "fedplace/error.hpp"
#include "fedplace/rng.hpp"

namespace fedplace {

using ClientId = std::uint32_t;

struct ClientProfile {
  ClientId client_id = 0;
  std::uint64_t num_samples = 0;
  std::uint64_t num_batches = 0;

  friend bool operator==(const ClientProfile&, const ClientProfile&) = default;
};

inline constexpr std::uint64_t batches_for(std::uint64_t num_samples, std::uint64_t batch_size) {
  return (num_samples + batch_size - 1) / batch_size;
}

namespace dist {

struct Constant {
  std::uint64_t samples = 1;
};

// Integer uniform on [lo, hi].
struct Uniform {
  std::uint64_t lo = 1;
  std::uint64_t hi = 1;
};

// Sample counts are round(exp(N(mu, sigma^2))).
struct LogNormal {
  double mu = 0.0;
  double sigma = 1.0;
};

// P(k) proportional to k^-s on k = 1..max.
struct Zipf {
  double s = 2.0;
  std::uint64_t max = 1000;
};

}  // namespace dist

using SizeDistribution = std::variant<dist::Constant, dist::Uniform, dist::LogNormal, dist::Zipf>;

struct PopulationSpec {
  std::uint64_t num_clients = 1;
  std::uint64_t batch_size = 1;
  SizeDistribution size_distribution = dist::Constant{};
  std::uint64_t seed = 0;
};

inline void validate(const PopulationSpec& spec) {
  if (spec.num_clients < 1) throw ConfigError("population.num_clients", "must be >= 1");
  if (spec.num_clients > std::numeric_limits<ClientId>::max())
    throw ConfigError("population.num_clients", "exceeds the client id range");
  if (spec.batch_size < 1) throw ConfigError("population.batch_size", "must be >= 1");
  std::visit(
      [](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, dist::Constant>) {
          if (d.samples < 1) throw ConfigError("population.distribution.samples", "must be >= 1");
        } else if constexpr (std::is_same_v<T, dist::Uniform>) {
          if (d.lo < 1) throw ConfigError("population.distribution.lo", "must be >= 1");
          if (d.lo > d.hi) throw ConfigError("population.distribution.lo", "must be <= hi");
        } else if constexpr (std::is_same_v<T, dist::LogNormal>) {
          if (!std::isfinite(d.mu)) throw ConfigError("population.distribution.mu", "must be finite");
          if (!(d.sigma > 0.0) || !std::isfinite(d.sigma))
            throw ConfigError("population.distribution.sigma", "must be > 0");
        } else {
          if (!(d.s > 1.0) || !std::isfinite(d.s))
            throw ConfigError("population.distribution.s", "must be > 1");
          if (d.max < 1) throw ConfigError("population.distribution.max", "must be >= 1");
        }
      },
      spec.size_distribution);
}

namespace detail {

class SizeSampler {
 public:
  explicit SizeSampler(const SizeDistribution& d) : dist_(d) {
    if (const auto* z = std::get_if<dist::Zipf>(&dist_)) {
      cdf_.resize(z->max);
      double acc = 0.0;
      for (std::uint64_t k = 1; k <= z->max; ++k) {
        acc += std::pow(static_cast<double>(k), -z->s);
        cdf_[k - 1] = acc;
      }
      for (double& c : cdf_) c /= acc;
    }
  }

  std::uint64_t draw(Rng& rng) const {
    return std::visit(
        [&](const auto& d) -> std::uint64_t {
          using T = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<T, dist::Constant>) {
            return d.samples;
          } else if constexpr (std::is_same_v<T, dist::Uniform>) {
            return d.lo + rng.below(d.hi - d.lo + 1);
          } else if constexpr (std::is_same_v<T, dist::LogNormal>) {
            const double x = std::exp(rng.normal(d.mu, d.sigma));
            return x >= 1.8e19 ? std::uint64_t{1} << 62 : static_cast<std::uint64_t>(std::llround(x));
          } else {
            const double u = rng.uniform01();
            const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
            return static_cast<std::uint64_t>(std::min<std::ptrdiff_t>(it - cdf_.begin(),
                                                                       static_cast<std::ptrdiff_t>(cdf_.size()) - 1)) +
                   1;
          }
        },
        dist_);
  }

 private:
  SizeDistribution dist_;
  std::vector<double> cdf_;
};

}  // namespace detail

inline constexpr int kMaxSizeRedraws = 100;

// Clients drawn below one batch are redrawn up to kMaxSizeRedraws times and
// then clamped to one full batch, so every client has at least one batch.
inline std::vector<ClientProfile> generate_population(const PopulationSpec& spec) {
  validate(spec);
  Rng rng = Rng::stream(spec.seed, StreamTag::kPopulation);
  const detail::SizeSampler sampler(spec.size_distribution);

  std::vector<ClientProfile> out;
  out.reserve(spec.num_clients);
  for (std::uint64_t i = 0; i < spec.num_clients; ++i) {
    std::uint64_t samples = sampler.draw(rng);
    for (int attempt = 1; samples < spec.batch_size && attempt < kMaxSizeRedraws; ++attempt) {
      samples = sampler.draw(rng);
    }
    samples = std::max(samples, spec.batch_size);
    out.push_back({static_cast<ClientId>(i), samples, batches_for(samples, spec.batch_size)});
  }
  return out;
}

// Calibrated stand-ins for the three naturally partitioned datasets. Client
// counts and batch sizes follow the reference workloads; mu is solved so the
// mean of the lognormal conditioned on >= one batch equals the target mean
// samples per client (116.2, 72.4 and 600 respectively).
inline std::optional<PopulationSpec> population_preset(std::string_view name) {
  if (name == "openimage-like") return PopulationSpec{13771, 20, dist::LogNormal{4.135467634987127, 1.0}, 0};
  if (name == "speech-like") return PopulationSpec{2168, 20, dist::LogNormal{3.970349388148425, 0.7}, 0};
  if (name == "shakespeare-like") return PopulationSpec{648, 4, dist::LogNormal{5.267101844460538, 1.5}, 0};
  return std::nullopt;
}

inline std::vector<std::string> population_preset_names() {
  return {"openimage-like", "speech-like", "shakespeare-like"};
}

struct Cohort {
  std::uint64_t round_index = 0;
  std::vector<ClientId> client_ids;
};

// Uniform sampling without replacement (partial Fisher-Yates).
inline Cohort sample_cohort(std::span<const ClientProfile> population, std::uint64_t n,
                            std::uint64_t round_index, Rng& rng) {
  if (n < 1) throw CohortError("cohort size must be >= 1");
  if (n > population.size()) {
    throw CohortError("cohort size " + std::to_string(n) + " exceeds population size " +
                      std::to_string(population.size()));
  }
  std::vector<ClientId> ids(population.size());
  std::transform(population.begin(), population.end(), ids.begin(),
                 [](const ClientProfile& p) { return p.client_id; });
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint64_t j = i + rng.below(ids.size() - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(n);
  return Cohort{round_index, std::move(ids)};
}

// Lookup from client id to profile. Ids produced by generate_population are
// dense, but imported populations need not be.
class ProfileIndex {
 public:
  explicit ProfileIndex(std::span<const ClientProfile> population) {
    for (std::size_t i = 0; i < population.size(); ++i) {
      const ClientId id = population[i].client_id;
      if (id >= slots_.size()) slots_.resize(static_cast<std::size_t>(id) + 1, kMissing);
      slots_[id] = i;
    }
    profiles_.assign(population.begin(), population.end());
  }

  const ClientProfile* find(ClientId id) const {
    if (id >= slots_.size() || slots_[id] == kMissing) return nullptr;
    return &profiles_[slots_[id]];
  }

  std::size_t size() const { return profiles_.size(); }

 private:
  static constexpr std::size_t kMissing = ~std::size_t{0};
  std::vector<std::size_t> slots_;
  std::vector<ClientProfile> profiles_;
};

inline void write_population_csv(std::ostream& os, std::span<const ClientProfile> population) {
  os << "client_id,num_samples,num_batches\n";
  for (const auto& p : population) os << p.client_id << ',' << p.num_samples << ',' << p.num_batches << '\n';
}

inline std::vector<ClientProfile> read_population_csv(std::istream& is, std::uint64_t batch_size) {
  if (batch_size < 1) throw ConfigError("population.batch_size", "must be >= 1");
  std::string line;
  if (!std::getline(is, line) || line != "client_id,num_samples,num_batches") {
    throw IoError("population file: expected header 'client_id,num_samples,num_batches'");
  }
  std::vector<ClientProfile> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    ClientProfile p;
    char c1 = 0, c2 = 0;
    if (!(row >> p.client_id >> c1 >> p.num_samples >> c2 >> p.num_batches) || c1 != ',' || c2 != ',') {
      throw IoError("population file line " + std::to_string(lineno) + ": malformed record");
    }
    if (p.num_batches < 1 || p.num_batches != batches_for(p.num_samples, batch_size)) {
      throw IoError("population file line " + std::to_string(lineno) +
                    ": num_batches inconsistent with batch size");
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace fedplace
