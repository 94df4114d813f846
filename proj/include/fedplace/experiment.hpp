#pragma once

// Multi-round experiment driver: population -> workers -> for each round
// (sample cohort, place, execute, feed records back, aggregate).

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedplace/aggregation.hpp"
#include "fedplace/cluster.hpp"
#include "fedplace/config.hpp"
#include "fedplace/engine.hpp"
#include "fedplace/error.hpp"
#include "fedplace/placement.hpp"
#include "fedplace/population.hpp"
#include "fedplace/rng.hpp"
#include "fedplace/time_model.hpp"

namespace fedplace {

struct SummaryStats {
  double mean = 0.0;
  double stddev = 0.0;
};

// Mean and sample standard deviation (n - 1); stddev is 0 for one value.
inline SummaryStats summarize(std::span<const double> xs) {
  SummaryStats s;
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

struct RoundFits {
  std::uint64_t round_index = 0;
  std::vector<TimeModelFit> fits;
};

struct ExperimentResult {
  std::vector<RoundMetrics> rounds;
  SummaryStats throughput;
  SummaryStats timedelta;
  ModelParams final_params;
  std::string config_fingerprint;
  std::uint64_t seed = 0;
  Policy policy = Policy::kRoundRobin;
  ProtocolMode protocol = ProtocolMode::kPush;
  // Time models used by LB, one entry per round that used them.
  std::vector<RoundFits> fits;
  // Rounds where LB lacked a model for some worker and used BU instead.
  std::vector<std::uint64_t> lb_fallback_rounds;

  std::uint64_t total_clients_trained() const {
    std::uint64_t n = 0;
    for (const auto& r : rounds) n += r.clients_trained;
    return n;
  }
};

inline void refresh_summary(ExperimentResult& res) {
  std::vector<double> tp, td;
  for (const auto& r : res.rounds) {
    tp.push_back(r.throughput);
    td.push_back(r.timedelta_workers);
  }
  res.throughput = summarize(tp);
  res.timedelta = summarize(td);
}

inline PlacementPlan place_clients(Policy policy, const Cohort& cohort, const ProfileIndex& profiles,
                                   const Cluster& cluster, const std::map<std::string, TimeModelFit>& fits,
                                   FitPooling pooling) {
  switch (policy) {
    case Policy::kRoundRobin: return assign_round_robin(cohort, cluster.workers());
    case Policy::kSortedRoundRobin: return assign_sorted_round_robin(cohort, profiles, cluster.workers());
    case Policy::kBatchUniform: return assign_batch_uniform(cohort, profiles, cluster.workers());
    case Policy::kLearningBased:
      return assign_learning_based(cohort, profiles, cluster.workers(), fits, cohort.round_index, pooling);
  }
  throw PlacementError("unknown policy");
}

inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  validate(config);
  PopulationSpec pop_spec = config.population;
  pop_spec.seed = config.effective_population_seed();
  const auto population = generate_population(pop_spec);
  const ProfileIndex profiles(population);
  const Cluster cluster = build_cluster(config);

  ExperimentResult res;
  res.seed = config.seed;
  res.policy = config.policy;
  res.protocol = config.protocol.mode;
  res.config_fingerprint = config_fingerprint(config);

  RecordStore store(config.lb.window_rounds);
  ModelParams global = ModelParams::zeros(config.model.dimension);
  const std::uint64_t rounds = config.effective_rounds();
  res.rounds.reserve(rounds);

  for (std::uint64_t r = 0; r < rounds; ++r) {
    try {
      Rng cohort_rng = Rng::stream(config.seed, StreamTag::kCohort, {r});
      const Cohort cohort = sample_cohort(population, config.cohort_size(r), r, cohort_rng);
      const RoundContext ctx{profiles,    cluster,
                             config.protocol, global,
                             config.seed, config.model.perturbation_bound,
                             config.model.running_sum};

      RoundOutcome outcome;
      if (config.protocol.mode == ProtocolMode::kPull) {
        outcome = run_round_pull(cohort, ctx);
      } else {
        std::map<std::string, TimeModelFit> fits;
        Policy policy = config.policy;
        if (policy == Policy::kLearningBased && r > 0) {
          fits = store.fit_all();
          const bool complete = std::all_of(cluster.workers().begin(), cluster.workers().end(),
                                            [&](const WorkerSpec& w) { return fits.contains(fit_key(w, config.lb.pooling)); });
          if (complete) {
            RoundFits rf{r, {}};
            for (const auto& [k, f] : fits) rf.fits.push_back(f);
            res.fits.push_back(std::move(rf));
          } else {
            // Not enough history for some GPU: use the batch-count proxy.
            policy = Policy::kBatchUniform;
            res.lb_fallback_rounds.push_back(r);
          }
        }
        const PlacementPlan plan = place_clients(policy, cohort, profiles, cluster, fits, config.lb.pooling);
        outcome = run_round_push(cohort, plan, ctx);
      }

      std::map<std::string, std::vector<TrainingRecord>> by_key;
      for (auto& rec : outcome.records) {
        by_key[fit_key(cluster.workers()[rec.worker_id], config.lb.pooling)].push_back(std::move(rec));
      }
      store.append_round(r, by_key);
      global = final_aggregate(outcome.partials);
      res.rounds.push_back(std::move(outcome.metrics));
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw EngineError("round " + std::to_string(r) + ": " + e.what());
    }
  }
  res.final_params = std::move(global);
  refresh_summary(res);
  return res;
}

}  // namespace fedplace
