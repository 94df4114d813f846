#pragma once

// Worker-side partial aggregation and server-side final aggregation of model
// parameters (sample-weighted federated averaging).
//
// A worker keeps a running weighted mean theta and the number of samples N it
// has folded in. Folding client parameters theta_c trained on n samples:
//
//   theta' = (theta * N + theta_c * n) / (N + n),   N' = N + n
//
// The empty aggregate is (zero vector, 0), so the first fold returns the
// client's parameters unchanged.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "fedplace/error.hpp"
#include "fedplace/population.hpp"
#include "fedplace/rng.hpp"

namespace fedplace {

struct ModelParams {
  std::vector<double> values;

  ModelParams() = default;
  explicit ModelParams(std::vector<double> v) : values(std::move(v)) {}
  static ModelParams zeros(std::size_t dim) { return ModelParams(std::vector<double>(dim, 0.0)); }

  std::size_t dim() const noexcept { return values.size(); }
  bool finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

struct PartialAggregate {
  ModelParams params;
  std::uint64_t total_samples = 0;

  static PartialAggregate empty(std::size_t dim) { return {ModelParams::zeros(dim), 0}; }
  bool is_empty() const noexcept { return total_samples == 0; }
};

// In-place form of fold_client.
inline void fold_into(PartialAggregate& agg, const ModelParams& client, std::uint64_t n) {
  if (n < 1) throw DomainError("fold_client: sample count must be >= 1");
  if (client.dim() != agg.params.dim()) {
    throw AggregationError("fold_client: dimension mismatch (" + std::to_string(client.dim()) + " vs " +
                           std::to_string(agg.params.dim()) + ")");
  }
  const double prev = static_cast<double>(agg.total_samples);
  const std::uint64_t total = agg.total_samples + n;
  const double next = static_cast<double>(total);
  const double weight = static_cast<double>(n);
  for (std::size_t i = 0; i < client.dim(); ++i) {
    agg.params.values[i] = (agg.params.values[i] * prev + client.values[i] * weight) / next;
  }
  agg.total_samples = total;
}

inline PartialAggregate fold_client(PartialAggregate agg, const ModelParams& client, std::uint64_t n) {
  fold_into(agg, client, n);
  return agg;
}

// Alternative accumulator that keeps sum(theta_i * n_i) and divides once at
// the end. Selected by the engine's running-sum flag.
class RunningSumAggregate {
 public:
  explicit RunningSumAggregate(std::size_t dim) : sum_(dim, 0.0) {}

  void fold(const ModelParams& client, std::uint64_t n) {
    if (n < 1) throw DomainError("fold_client: sample count must be >= 1");
    if (client.dim() != sum_.size()) throw AggregationError("fold_client: dimension mismatch");
    const double weight = static_cast<double>(n);
    for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += client.values[i] * weight;
    total_ += n;
  }

  PartialAggregate finish() const {
    PartialAggregate out = PartialAggregate::empty(sum_.size());
    if (total_ == 0) return out;
    const double t = static_cast<double>(total_);
    for (std::size_t i = 0; i < sum_.size(); ++i) out.params.values[i] = sum_[i] / t;
    out.total_samples = total_;
    return out;
  }

 private:
  std::vector<double> sum_;
  std::uint64_t total_ = 0;
};

// Sample-weighted mean of the non-empty partials.
inline ModelParams final_aggregate(std::span<const PartialAggregate> partials) {
  const PartialAggregate* first = nullptr;
  std::uint64_t total = 0;
  for (const auto& p : partials) {
    if (p.is_empty()) continue;
    if (!first) first = &p;
    if (p.params.dim() != first->params.dim()) throw AggregationError("final_aggregate: dimension mismatch");
    total += p.total_samples;
  }
  if (!first) throw AggregationError("final_aggregate: every partial aggregate is empty");

  std::vector<double> out(first->params.dim(), 0.0);
  const double t = static_cast<double>(total);
  for (const auto& p : partials) {
    if (p.is_empty()) continue;
    const double w = static_cast<double>(p.total_samples);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += p.params.values[i] * w;
  }
  for (double& v : out) v /= t;
  return ModelParams(std::move(out));
}

// Stand-in for local training: global parameters plus a deterministic
// perturbation drawn from the (round, client) stream. Every coordinate is
// uniform in [-bound/sqrt(dim), bound/sqrt(dim)], so the perturbation's
// Euclidean norm never exceeds bound. bound == 0 is the identity.
inline ModelParams client_update(const ModelParams& global, ClientId client_id, std::uint64_t round_index,
                                 std::uint64_t seed, double bound) {
  if (!global.finite()) throw DomainError("client_update: global parameters must be finite");
  if (!(bound >= 0.0) || !std::isfinite(bound)) throw DomainError("client_update: bound must be finite and >= 0");
  ModelParams out = global;
  if (bound == 0.0 || out.dim() == 0) return out;
  Rng rng = Rng::stream(seed, StreamTag::kClientUpdate, {round_index, client_id});
  const double half_width = bound / std::sqrt(static_cast<double>(out.dim()));
  for (double& v : out.values) v += rng.uniform(-half_width, half_width);
  return out;
}

// 64-bit FNV-1a over the raw bytes of the parameters, for determinism audits.
inline std::uint64_t params_checksum(const ModelParams& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : p.values) {
    std::uint64_t bits;
    static_assert(sizeof bits == sizeof v);
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

}  // namespace fedplace
