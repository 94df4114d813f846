#pragma once

// Virtual-time execution of one federated round under either protocol.
//
// push: the server sends every non-empty worker its whole client list in one
//       message; the worker trains the list sequentially, folding each result
//       into its partial aggregate, and returns one result message.
// pull: clients sit in a server-side FIFO queue. An idle worker reads the head
//       client, trains it, pings the server, waits for the server's reply and
//       then uploads the result: four wire messages per client. The server
//       is a single resource: queue reads and reply/upload handshakes are
//       served one at a time.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "fedplace/aggregation.hpp"
#include "fedplace/cluster.hpp"
#include "fedplace/error.hpp"
#include "fedplace/placement.hpp"
#include "fedplace/population.hpp"
#include "fedplace/rng.hpp"
#include "fedplace/time_model.hpp"

namespace fedplace {

enum class ProtocolMode { kPush, kPull };

inline std::string_view protocol_name(ProtocolMode m) { return m == ProtocolMode::kPush ? "push" : "pull"; }

struct ProtocolConfig {
  ProtocolMode mode = ProtocolMode::kPush;
  double per_message_latency = 0.05;
  double result_payload_latency = 0.2;
  double final_aggregation_time = 0.5;
  // When false the round ends at the last worker result and throughput
  // excludes the server-side aggregation step.
  bool include_final_aggregation = true;
};

inline void validate(const ProtocolConfig& p) {
  auto check = [](double v, const char* field) {
    if (!std::isfinite(v) || v < 0.0) throw ConfigError(std::string("protocol.") + field, "must be finite and >= 0");
  };
  check(p.per_message_latency, "per_message_latency");
  check(p.result_payload_latency, "result_payload_latency");
  check(p.final_aggregation_time, "final_aggregation_time");
}

inline constexpr std::uint64_t kPushMessagesPerWorker = 2;
inline constexpr std::uint64_t kPullMessagesPerClient = 4;

struct RoundMetrics {
  std::uint64_t round_index = 0;
  double round_duration = 0.0;
  double throughput = 0.0;
  double timedelta_workers = 0.0;
  // Only workers that trained at least one client.
  std::map<WorkerId, double> per_worker_finish;
  std::uint64_t messages_sent = 0;
  std::uint64_t clients_trained = 0;

  friend bool operator==(const RoundMetrics&, const RoundMetrics&) = default;
};

// Derives duration, throughput and timedelta from the worker finish times and
// checks the relations between them.
inline RoundMetrics make_round_metrics(std::uint64_t round_index, std::map<WorkerId, double> finish,
                                       std::uint64_t messages, std::uint64_t clients,
                                       const ProtocolConfig& protocol) {
  if (finish.empty() || clients == 0) throw EngineError("round " + std::to_string(round_index) + " trained no clients");
  auto [lo, hi] = std::minmax_element(finish.begin(), finish.end(),
                                      [](const auto& x, const auto& y) { return x.second < y.second; });
  RoundMetrics m;
  m.round_index = round_index;
  m.round_duration = hi->second + (protocol.include_final_aggregation ? protocol.final_aggregation_time : 0.0);
  m.timedelta_workers = hi->second - lo->second;
  m.messages_sent = messages;
  m.clients_trained = clients;
  m.throughput = static_cast<double>(clients) / m.round_duration;
  m.per_worker_finish = std::move(finish);
  if (!(m.round_duration > 0.0) || !std::isfinite(m.round_duration)) {
    throw EngineError("round " + std::to_string(round_index) + ": non-positive round duration");
  }
  return m;
}

// Everything a round needs besides the cohort and plan.
struct RoundContext {
  const ProfileIndex& profiles;
  const Cluster& cluster;
  const ProtocolConfig& protocol;
  const ModelParams& global;
  std::uint64_t seed = 0;
  double perturbation_bound = 0.0;
  bool running_sum = false;
};

struct RoundOutcome {
  RoundMetrics metrics;
  // One record per client, in training order per worker.
  std::vector<TrainingRecord> records;
  // Indexed by worker id; idle workers hold empty aggregates.
  std::vector<PartialAggregate> partials;
};

namespace detail {

// Per-worker sequential trainer shared by both protocols.
class WorkerState {
 public:
  WorkerState(std::size_t dim, bool running_sum)
      : running_sum_(running_sum), agg_(PartialAggregate::empty(dim)), sum_(dim) {}

  void fold(const ModelParams& p, std::uint64_t n) {
    if (running_sum_) {
      sum_.fold(p, n);
    } else {
      fold_into(agg_, p, n);
    }
  }

  PartialAggregate finish() const { return running_sum_ ? sum_.finish() : agg_; }

 private:
  bool running_sum_;
  PartialAggregate agg_;
  RunningSumAggregate sum_;
};

// Trains one client on a worker: draws its time from the (round, client)
// stream, so the draw does not depend on which worker or in which order.
inline double train_client(const RoundContext& ctx, std::uint64_t round_index, WorkerId w, ClientId c,
                           WorkerState& state, std::vector<TrainingRecord>& records) {
  const ClientProfile* p = ctx.profiles.find(c);
  if (!p) throw EngineError("no profile for client " + std::to_string(c));
  Rng rng = Rng::stream(ctx.seed, StreamTag::kTrainingTime, {round_index, c});
  const double t = ctx.cluster.sample_time(w, static_cast<double>(p->num_batches), rng);
  state.fold(client_update(ctx.global, c, round_index, ctx.seed, ctx.perturbation_bound), p->num_samples);
  records.push_back({c, p->num_batches, t, ctx.cluster.workers()[w].gpu_type, round_index, w});
  return t;
}

}  // namespace detail

inline RoundOutcome run_round_push(const Cohort& cohort, const PlacementPlan& plan, const RoundContext& ctx) {
  if (ctx.protocol.mode != ProtocolMode::kPush) throw EngineError("run_round_push: protocol mode is not push");
  try {
    check_plan(plan, cohort, ctx.cluster.num_workers());
  } catch (const PlacementError& e) {
    throw EngineError(std::string("plan/cohort mismatch: ") + e.what());
  }
  const std::uint64_t r = cohort.round_index;
  RoundOutcome out;
  out.records.reserve(cohort.client_ids.size());
  out.partials.reserve(plan.assignments.size());
  std::map<WorkerId, double> finish;
  std::uint64_t nonempty = 0;
  for (WorkerId w = 0; w < plan.assignments.size(); ++w) {
    detail::WorkerState state(ctx.global.dim(), ctx.running_sum);
    const auto& list = plan.assignments[w];
    if (!list.empty()) {
      ++nonempty;
      double clock = ctx.protocol.per_message_latency;
      for (ClientId c : list) {
        const double before = clock;
        clock += detail::train_client(ctx, r, w, c, state, out.records);
        if (clock < before) throw EngineError("virtual time decreased");
      }
      finish.emplace(w, clock + ctx.protocol.result_payload_latency);
    }
    out.partials.push_back(state.finish());
  }
  out.metrics = make_round_metrics(r, std::move(finish), kPushMessagesPerWorker * nonempty,
                                   cohort.client_ids.size(), ctx.protocol);
  return out;
}

inline RoundOutcome run_round_pull(const Cohort& cohort, const RoundContext& ctx) {
  if (ctx.protocol.mode != ProtocolMode::kPull) throw EngineError("run_round_pull: protocol mode is not pull");
  const std::uint64_t r = cohort.round_index;
  const std::size_t k = ctx.cluster.num_workers();
  const double msg = ctx.protocol.per_message_latency;
  const double payload = ctx.protocol.result_payload_latency;

  std::vector<detail::WorkerState> states(k, detail::WorkerState(ctx.global.dim(), ctx.running_sum));
  RoundOutcome out;
  out.records.reserve(cohort.client_ids.size());
  std::map<WorkerId, double> finish;

  // Events ordered by (time, kind, worker). A ping sorts before an idle
  // worker at the same instant so the server sees it first.
  enum Kind : int { kPing = 0, kIdle = 1 };
  using Event = std::tuple<double, int, WorkerId>;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events;
  for (WorkerId w = 0; w < k; ++w) events.emplace(0.0, kIdle, w);

  double now = 0.0;
  double server_free = 0.0;
  std::size_t head = 0;
  std::uint64_t messages = 0;
  while (!events.empty()) {
    const auto [t, kind, w] = events.top();
    events.pop();
    if (t < now) throw EngineError("virtual time decreased");
    now = t;
    if (kind == kPing) {
      // The server handles one reply/upload handshake at a time, in ping
      // arrival order. A queue read is one more server action.
      const double start = std::max(now, server_free);
      server_free = start + msg + payload;
      finish[w] = server_free;
      events.emplace(server_free, kIdle, w);
    } else if (head < cohort.client_ids.size()) {
      // Reads from the synchronised queue are serialized on the server too.
      const ClientId c = cohort.client_ids[head++];
      server_free = std::max(now, server_free) + msg;
      const double train = detail::train_client(ctx, r, w, c, states[w], out.records);
      messages += kPullMessagesPerClient;
      events.emplace(server_free + train + msg, kPing, w);
    }
  }
  out.partials.reserve(k);
  for (const auto& s : states) out.partials.push_back(s.finish());
  out.metrics = make_round_metrics(r, std::move(finish), messages, cohort.client_ids.size(), ctx.protocol);
  return out;
}

}  // namespace fedplace
