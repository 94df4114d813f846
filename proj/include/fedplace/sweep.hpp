#pragma once

// One-axis parameter sweeps over a base config, repeated per seed.

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "fedplace/config.hpp"
#include "fedplace/error.hpp"
#include "fedplace/experiment.hpp"
#include "fedplace/report.hpp"

namespace fedplace {

enum class SweepAxis { kClientsPerRound, kPolicy, kGpuCounts, kProtocol };

inline std::optional<SweepAxis> parse_sweep_axis(std::string_view s) {
  if (s == "clients_per_round") return SweepAxis::kClientsPerRound;
  if (s == "policy") return SweepAxis::kPolicy;
  if (s == "gpu_counts") return SweepAxis::kGpuCounts;
  if (s == "protocol") return SweepAxis::kProtocol;
  return std::nullopt;
}

inline std::string_view sweep_axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::kClientsPerRound: return "clients_per_round";
    case SweepAxis::kPolicy: return "policy";
    case SweepAxis::kGpuCounts: return "gpu_counts";
    case SweepAxis::kProtocol: return "protocol";
  }
  return "?";
}

struct SweepSpec {
  ExperimentConfig base;
  SweepAxis axis = SweepAxis::kPolicy;
  // clients_per_round: integers; policy: names; protocol: "push" | "pull";
  // gpu_counts: arrays with one GPU count per node (nodes must hold a single
  // GPU group each).
  std::vector<json> values;
  std::vector<std::uint64_t> seeds;
};

inline std::string value_label(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_array()) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "-" : "") + value_label(v[i]);
    return s;
  }
  return v.dump();
}

// Returns the base config with one axis value applied.
inline ExperimentConfig apply_axis(const ExperimentConfig& base, SweepAxis axis, const json& value) {
  ExperimentConfig c = base;
  const std::string field = "values[" + value_label(value) + "]";
  switch (axis) {
    case SweepAxis::kClientsPerRound:
      if (!detail::is_non_negative_integer(value)) throw ConfigError(field, "clients_per_round values must be integers");
      c.clients_per_round = value.get<std::uint64_t>();
      break;
    case SweepAxis::kPolicy: {
      const auto p = value.is_string() ? parse_policy(value.get<std::string>()) : std::nullopt;
      if (!p) throw ConfigError(field, "expected one of rr, srr, bu, lb");
      c.policy = *p;
      break;
    }
    case SweepAxis::kProtocol:
      if (value == "push") c.protocol.mode = ProtocolMode::kPush;
      else if (value == "pull") c.protocol.mode = ProtocolMode::kPull;
      else throw ConfigError(field, "expected push or pull");
      break;
    case SweepAxis::kGpuCounts:
      if (!value.is_array() || value.size() != c.nodes.size()) {
        throw ConfigError(field, "expected an array with one count per node (" + std::to_string(c.nodes.size()) + ")");
      }
      for (std::size_t i = 0; i < c.nodes.size(); ++i) {
        if (c.nodes[i].gpus.size() != 1) throw ConfigError(field, "gpu_counts needs one GPU group per node");
        if (!detail::is_non_negative_integer(value[i]) || value[i].get<std::uint64_t>() < 1) {
          throw ConfigError(field, "gpu counts must be integers >= 1");
        }
        c.nodes[i].gpus[0].count = value[i].get<std::uint32_t>();
      }
      break;
  }
  validate(c);
  build_cluster(c);
  return c;
}

inline void validate(const SweepSpec& s) {
  if (s.values.empty()) throw ConfigError("values", "must be non-empty");
  if (s.seeds.empty()) throw ConfigError("seeds", "must be non-empty");
  for (const auto& v : s.values) apply_axis(s.base, s.axis, v);
}

inline SweepSpec sweep_from_json(const json& j, const std::filesystem::path& base_dir = {}) {
  detail::require_object(j, "");
  detail::reject_unknown(j, "", {"base", "axis", "values", "seeds"});
  SweepSpec s;
  const auto base = j.find("base");
  if (base == j.end()) {
    s.base = default_config();
  } else if (base->is_string()) {
    s.base = load_config((base_dir / base->get<std::string>()).string());
  } else {
    s.base = config_from_json(*base);
  }
  std::string axis;
  detail::read(j, "axis", "", axis);
  const auto a = parse_sweep_axis(axis);
  if (!a) throw ConfigError("axis", "expected clients_per_round, policy, gpu_counts or protocol; got '" + axis + "'");
  s.axis = *a;
  const auto values = j.find("values");
  if (values == j.end() || !values->is_array()) throw ConfigError("values", "expected an array");
  s.values.assign(values->begin(), values->end());
  const auto seeds = j.find("seeds");
  if (seeds == j.end() || !seeds->is_array()) throw ConfigError("seeds", "expected an array");
  for (const auto& v : *seeds) {
    if (!detail::is_non_negative_integer(v)) throw ConfigError("seeds", "seeds must be non-negative integers");
    s.seeds.push_back(v.get<std::uint64_t>());
  }
  validate(s);
  return s;
}

inline SweepSpec load_sweep(const std::string& path) {
  const json j = read_json_file(path);
  try {
    return sweep_from_json(j, std::filesystem::path(path).parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(e.field(), std::string(e.what()).substr(e.field().size() + 2) + " (in " + path + ")");
  }
}

struct SweepCell {
  std::string value_label;
  std::uint64_t seed = 0;
  ExperimentConfig config;
  std::optional<ExperimentResult> result;
  std::string error;

  std::string label() const { return value_label + "_seed" + std::to_string(seed); }
};

// Pooled over every round of every seed for one axis value.
struct SweepRow {
  std::string value_label;
  std::size_t cells = 0;
  std::size_t failed = 0;
  SummaryStats throughput;
  SummaryStats timedelta;
};

struct SweepReport {
  SweepAxis axis = SweepAxis::kPolicy;
  std::vector<SweepCell> cells;
  std::vector<SweepRow> rows;

  bool all_ok() const {
    return std::all_of(cells.begin(), cells.end(), [](const SweepCell& c) { return c.result.has_value(); });
  }
};

// Runs every (value, seed) cell; a failing cell is recorded and the sweep
// continues. Cells are independent and may run on up to `jobs` threads.
inline SweepReport run_sweep(const SweepSpec& spec, unsigned jobs = 1) {
  SweepReport rep;
  rep.axis = spec.axis;
  for (const auto& v : spec.values) {
    for (std::uint64_t seed : spec.seeds) {
      SweepCell cell;
      cell.value_label = std::string(sweep_axis_name(spec.axis)) + "=" + value_label(v);
      cell.seed = seed;
      try {
        cell.config = apply_axis(spec.base, spec.axis, v);
        cell.config.seed = seed;
      } catch (const Error& e) {
        cell.error = e.what();
      }
      rep.cells.push_back(std::move(cell));
    }
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < rep.cells.size(); i = next++) {
      auto& cell = rep.cells[i];
      if (!cell.error.empty()) continue;
      try {
        cell.result = run_experiment(cell.config);
      } catch (const Error& e) {
        cell.error = e.what();
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(rep.cells.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
  }

  for (const auto& cell : rep.cells) {
    auto it = std::find_if(rep.rows.begin(), rep.rows.end(),
                           [&](const SweepRow& r) { return r.value_label == cell.value_label; });
    if (it == rep.rows.end()) {
      SweepRow row;
      row.value_label = cell.value_label;
      rep.rows.push_back(std::move(row));
      it = std::prev(rep.rows.end());
    }
    ++it->cells;
    if (!cell.result) ++it->failed;
  }
  for (auto& row : rep.rows) {
    std::vector<double> tp, td;
    for (const auto& cell : rep.cells) {
      if (cell.value_label != row.value_label || !cell.result) continue;
      for (const auto& r : cell.result->rounds) {
        tp.push_back(r.throughput);
        td.push_back(r.timedelta_workers);
      }
    }
    row.throughput = summarize(tp);
    row.timedelta = summarize(td);
  }
  return rep;
}

inline std::string format_sweep_table(const SweepReport& rep) {
  auto pm = [](const SummaryStats& s) { return format_rate(s.mean) + " +- " + format_rate(s.stddev); };
  std::vector<std::vector<std::string>> cells{{"cell", "runs", "failed", "throughput_cps", "timedelta_s"}};
  for (const auto& r : rep.rows) {
    cells.push_back({r.value_label, std::to_string(r.cells), std::to_string(r.failed), pm(r.throughput), pm(r.timedelta)});
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& row : cells)
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  std::ostringstream os;
  for (const auto& row : cells) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      os << row[i];
      if (i + 1 < row.size()) os << std::string(width[i] - row[i].size() + 2, ' ');
    }
    os << '\n';
  }
  return os.str();
}

// Layout: cells/<label>/{metrics.csv,fits.csv}, summary.csv (one row per
// cell), table.txt (one row per axis value) and manifest.json.
inline void emit_sweep_report(const std::filesystem::path& dir, const SweepSpec& spec, const SweepReport& rep) {
  detail::make_dir(dir);
  std::vector<SummaryRow> rows;
  for (const auto& cell : rep.cells) {
    if (cell.result) write_result_files(dir / "cells" / cell.label(), *cell.result);
    rows.push_back({cell.label(), cell.result ? &*cell.result : nullptr, std::string(policy_name(cell.config.policy)),
                    std::string(protocol_name(cell.config.protocol.mode)), cell.seed, cell.error});
  }
  {
    const auto p = dir / "summary.csv";
    auto out = detail::open_output(p);
    write_summary_csv(out, rows);
    detail::close_checked(out, p);
  }
  {
    const auto p = dir / "table.txt";
    auto out = detail::open_output(p);
    out << format_sweep_table(rep);
    detail::close_checked(out, p);
  }
  {
    json cells = json::array();
    for (const auto& cell : rep.cells) {
      json c = {{"cell", cell.label()}, {"seed", cell.seed}, {"status", cell.result ? "ok" : "failed"}};
      if (cell.result) {
        c["config_fingerprint"] = cell.result->config_fingerprint;
        c["final_params_checksum"] = hex64(params_checksum(cell.result->final_params));
      } else {
        c["error"] = cell.error;
      }
      cells.push_back(std::move(c));
    }
    json values = json::array();
    for (const auto& v : spec.values) values.push_back(v);
    const json manifest = {{"tool", "fedplace"},
                           {"tool_version", std::string(kToolVersion)},
                           {"axis", std::string(sweep_axis_name(spec.axis))},
                           {"values", values},
                           {"seeds", spec.seeds},
                           {"base_config_fingerprint", config_fingerprint(spec.base)},
                           {"base_config", config_to_json(spec.base)},
                           {"cells", cells}};
    const auto p = dir / "manifest.json";
    auto out = detail::open_output(p);
    out << manifest.dump(2) << '\n';
    detail::close_checked(out, p);
  }
}

}  // namespace fedplace
