#pragma once

// Client placement policies. Each policy maps a cohort onto the allocated
// workers and returns one ordered client list per worker:
//
//   rr   round-robin in cohort order
//   srr  round-robin after sorting by batch count, largest first
//   bu   largest-first greedy on summed batch counts
//   lb   largest-first greedy on summed predicted seconds, using per-GPU
//        time models fitted on previous rounds

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "fedplace/cluster.hpp"
#include "fedplace/error.hpp"
#include "fedplace/population.hpp"
#include "fedplace/time_model.hpp"

namespace fedplace {

enum class Policy { kRoundRobin, kSortedRoundRobin, kBatchUniform, kLearningBased };

inline std::string_view policy_name(Policy p) {
  switch (p) {
    case Policy::kRoundRobin: return "rr";
    case Policy::kSortedRoundRobin: return "srr";
    case Policy::kBatchUniform: return "bu";
    case Policy::kLearningBased: return "lb";
  }
  return "?";
}

inline std::optional<Policy> parse_policy(std::string_view name) {
  if (name == "rr") return Policy::kRoundRobin;
  if (name == "srr") return Policy::kSortedRoundRobin;
  if (name == "bu") return Policy::kBatchUniform;
  if (name == "lb") return Policy::kLearningBased;
  return std::nullopt;
}

struct PlacementPlan {
  std::uint64_t round_index = 0;
  // Indexed by worker id; empty lists are allowed.
  std::vector<std::vector<ClientId>> assignments;

  std::size_t num_nonempty() const {
    return static_cast<std::size_t>(
        std::count_if(assignments.begin(), assignments.end(), [](const auto& l) { return !l.empty(); }));
  }

  friend bool operator==(const PlacementPlan&, const PlacementPlan&) = default;
};

// Throws PlacementError unless the plan has one list per worker and its
// clients are exactly the cohort.
inline void check_plan(const PlacementPlan& plan, const Cohort& cohort, std::size_t num_workers) {
  if (plan.assignments.size() != num_workers) {
    throw PlacementError("plan has " + std::to_string(plan.assignments.size()) + " worker lists, expected " +
                         std::to_string(num_workers));
  }
  std::vector<ClientId> placed;
  for (const auto& l : plan.assignments) placed.insert(placed.end(), l.begin(), l.end());
  std::vector<ClientId> expected = cohort.client_ids;
  std::sort(placed.begin(), placed.end());
  std::sort(expected.begin(), expected.end());
  if (placed != expected) throw PlacementError("plan clients differ from the cohort");
}

namespace detail {

inline void require_workers(std::span<const WorkerSpec> workers) {
  if (workers.empty()) throw PlacementError("no workers to place clients on");
}

inline PlacementPlan round_robin(std::span<const ClientId> order, std::size_t k, std::uint64_t round_index) {
  PlacementPlan plan{round_index, std::vector<std::vector<ClientId>>(k)};
  for (std::size_t i = 0; i < order.size(); ++i) plan.assignments[i % k].push_back(order[i]);
  return plan;
}

struct SizedClient {
  ClientId id;
  std::uint64_t m;
};

// Largest batch count first, ties by ascending client id.
inline std::vector<SizedClient> sort_by_batches(const Cohort& cohort, const ProfileIndex& profiles) {
  std::vector<SizedClient> out;
  out.reserve(cohort.client_ids.size());
  for (ClientId id : cohort.client_ids) {
    const ClientProfile* p = profiles.find(id);
    if (!p) throw PlacementError("no profile for client " + std::to_string(id));
    out.push_back({id, p->num_batches});
  }
  std::sort(out.begin(), out.end(), [](const SizedClient& x, const SizedClient& y) {
    return std::tie(y.m, x.id) < std::tie(x.m, y.id);
  });
  return out;
}

// Greedy list scheduling: each client goes to the slot with the lowest load,
// ties broken by lowest slot index. cost(slot, client) is the load the client
// adds to that slot.
template <class Load, class CostFn>
std::vector<std::vector<ClientId>> greedy_min_load(std::span<const SizedClient> clients, std::size_t slots,
                                                   CostFn&& cost) {
  using Item = std::pair<Load, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  for (std::size_t s = 0; s < slots; ++s) heap.emplace(Load{}, s);
  std::vector<std::vector<ClientId>> lists(slots);
  for (const auto& c : clients) {
    auto [load, s] = heap.top();
    heap.pop();
    lists[s].push_back(c.id);
    heap.emplace(load + cost(s, c), s);
  }
  return lists;
}

}  // namespace detail

inline PlacementPlan assign_round_robin(const Cohort& cohort, std::span<const WorkerSpec> workers) {
  detail::require_workers(workers);
  return detail::round_robin(cohort.client_ids, workers.size(), cohort.round_index);
}

inline PlacementPlan assign_sorted_round_robin(const Cohort& cohort, const ProfileIndex& profiles,
                                               std::span<const WorkerSpec> workers) {
  detail::require_workers(workers);
  const auto sorted = detail::sort_by_batches(cohort, profiles);
  std::vector<ClientId> order(sorted.size());
  std::transform(sorted.begin(), sorted.end(), order.begin(), [](const auto& c) { return c.id; });
  return detail::round_robin(order, workers.size(), cohort.round_index);
}

// The first k clients land one per worker (all loads start equal), after which
// each client joins the least-loaded worker.
inline PlacementPlan assign_batch_uniform(const Cohort& cohort, const ProfileIndex& profiles,
                                          std::span<const WorkerSpec> workers) {
  detail::require_workers(workers);
  const auto sorted = detail::sort_by_batches(cohort, profiles);
  auto lists = detail::greedy_min_load<std::uint64_t>(
      sorted, workers.size(), [](std::size_t, const detail::SizedClient& c) { return c.m; });
  return PlacementPlan{cohort.round_index, std::move(lists)};
}

// Round 0 is plain round-robin (no data yet). Later rounds order workers from
// fastest to slowest by the predicted time of the cohort's largest client and
// run the greedy on predicted seconds; load ties go to the faster position.
inline PlacementPlan assign_learning_based(const Cohort& cohort, const ProfileIndex& profiles,
                                           std::span<const WorkerSpec> workers,
                                           const std::map<std::string, TimeModelFit>& fits,
                                           std::uint64_t round_index,
                                           FitPooling pooling = FitPooling::kGpuType) {
  detail::require_workers(workers);
  if (round_index == 0) return assign_round_robin(cohort, workers);

  std::vector<const TimeModelFit*> worker_fit(workers.size());
  for (std::size_t w = 0; w < workers.size(); ++w) {
    const auto it = fits.find(fit_key(workers[w], pooling));
    if (it == fits.end()) {
      throw PlacementError("no time model for '" + fit_key(workers[w], pooling) + "' (worker " +
                           std::to_string(w) + ")");
    }
    worker_fit[w] = &it->second;
  }
  const auto sorted = detail::sort_by_batches(cohort, profiles);
  PlacementPlan plan{cohort.round_index, std::vector<std::vector<ClientId>>(workers.size())};
  if (sorted.empty()) return plan;

  const double biggest = static_cast<double>(sorted.front().m);
  std::vector<std::size_t> order(workers.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return predict_time(*worker_fit[x], biggest) < predict_time(*worker_fit[y], biggest);
  });

  auto lists = detail::greedy_min_load<double>(sorted, order.size(), [&](std::size_t slot, const auto& c) {
    return predict_time(*worker_fit[order[slot]], static_cast<double>(c.m));
  });
  for (std::size_t slot = 0; slot < order.size(); ++slot) plan.assignments[order[slot]] = std::move(lists[slot]);
  return plan;
}

// Predicted finish time of every worker under a plan, used for diagnostics
// and tests. time_of(w, client) returns the seconds the client costs on w.
template <class TimeFn>
std::vector<double> plan_loads(const PlacementPlan& plan, TimeFn&& time_of) {
  std::vector<double> loads(plan.assignments.size(), 0.0);
  for (std::size_t w = 0; w < plan.assignments.size(); ++w) {
    for (ClientId c : plan.assignments[w]) loads[w] += time_of(w, c);
  }
  return loads;
}

}  // namespace fedplace
