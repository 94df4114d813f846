#pragma once

// Result files: per-round metrics CSV, per-cell summary CSV, fitted time
// models CSV and a JSON run manifest.
//
// Numbers use '.' as decimal separator regardless of locale. Durations are
// written with the shortest representation that round-trips exactly; derived
// rates use 6 significant digits. Integral values keep a trailing ".0".

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedplace/config.hpp"
#include "fedplace/error.hpp"
#include "fedplace/experiment.hpp"

namespace fedplace {

inline constexpr std::string_view kMetricsHeader = "round,policy,clients,duration_s,throughput_cps,timedelta_s,messages";
inline constexpr std::string_view kSummaryHeader =
    "cell,policy,protocol,seed,rounds,clients_trained,throughput_mean,throughput_std,timedelta_mean,timedelta_std,"
    "status";
inline constexpr std::string_view kFitsHeader = "round,gpu_type,a,b,c,d,mse,num_points,linear_fallback";

namespace detail {

inline std::string ensure_decimal_point(std::string s) {
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

}  // namespace detail

inline std::string format_duration(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return detail::ensure_decimal_point(std::string(buf, res.ptr));
}

inline std::string format_rate(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
  return detail::ensure_decimal_point(std::string(buf, res.ptr));
}

inline void write_metrics_csv(std::ostream& os, const ExperimentResult& res) {
  os << kMetricsHeader << '\n';
  const std::string_view policy = res.protocol == ProtocolMode::kPull ? "pull" : policy_name(res.policy);
  for (const auto& r : res.rounds) {
    os << r.round_index << ',' << policy << ',' << r.clients_trained << ',' << format_duration(r.round_duration)
       << ',' << format_rate(r.throughput) << ',' << format_duration(r.timedelta_workers) << ',' << r.messages_sent
       << '\n';
  }
}

inline void write_fits_csv(std::ostream& os, const ExperimentResult& res) {
  os << kFitsHeader << '\n';
  for (const auto& rf : res.fits) {
    for (const auto& f : rf.fits) {
      os << rf.round_index << ',' << f.gpu_type << ',' << format_duration(f.a) << ',' << format_duration(f.b) << ','
         << format_duration(f.c) << ',' << format_duration(f.d) << ',' << format_duration(f.mse) << ','
         << f.num_points << ',' << (f.linear_fallback ? 1 : 0) << '\n';
    }
  }
}

// One row of a summary file: a labelled experiment, or a failed cell.
struct SummaryRow {
  std::string cell;
  const ExperimentResult* result = nullptr;
  std::string policy;
  std::string protocol;
  std::uint64_t seed = 0;
  std::string error;
};

inline void write_summary_csv(std::ostream& os, std::span<const SummaryRow> rows) {
  os << kSummaryHeader << '\n';
  for (const auto& row : rows) {
    os << row.cell << ',' << row.policy << ',' << row.protocol << ',' << row.seed << ',';
    if (row.result) {
      const auto& r = *row.result;
      os << r.rounds.size() << ',' << r.total_clients_trained() << ',' << format_rate(r.throughput.mean) << ','
         << format_rate(r.throughput.stddev) << ',' << format_duration(r.timedelta.mean) << ','
         << format_duration(r.timedelta.stddev) << ",ok\n";
    } else {
      os << ",,,,,,failed\n";
    }
  }
}

inline json run_manifest(const ExperimentConfig& config, const ExperimentResult& res) {
  return {{"tool", "fedplace"},
          {"tool_version", std::string(kToolVersion)},
          {"seed", res.seed},
          {"config_fingerprint", res.config_fingerprint},
          {"policy", std::string(policy_name(res.policy))},
          {"protocol", std::string(protocol_name(res.protocol))},
          {"rounds", res.rounds.size()},
          {"clients_trained", res.total_clients_trained()},
          {"final_params_checksum", hex64(params_checksum(res.final_params))},
          {"lb_fallback_rounds", res.lb_fallback_rounds},
          {"config", config_to_json(config)}};
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  return out;
}

inline void make_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

inline void close_checked(std::ofstream& out, const std::filesystem::path& p) {
  out.close();
  if (!out) throw IoError("error writing " + p.string());
}

}  // namespace detail

// Writes metrics.csv (and fits.csv when time models were used) into dir.
inline void write_result_files(const std::filesystem::path& dir, const ExperimentResult& res) {
  detail::make_dir(dir);
  {
    const auto p = dir / "metrics.csv";
    auto out = detail::open_output(p);
    write_metrics_csv(out, res);
    detail::close_checked(out, p);
  }
  if (!res.fits.empty()) {
    const auto p = dir / "fits.csv";
    auto out = detail::open_output(p);
    write_fits_csv(out, res);
    detail::close_checked(out, p);
  }
}

// Single experiment: metrics.csv, fits.csv (LB only), summary.csv and
// manifest.json under dir.
inline void emit_run_report(const std::filesystem::path& dir, const ExperimentConfig& config,
                            const ExperimentResult& res) {
  write_result_files(dir, res);
  const SummaryRow row{"run", &res, std::string(policy_name(res.policy)), std::string(protocol_name(res.protocol)),
                       res.seed, {}};
  {
    const auto p = dir / "summary.csv";
    auto out = detail::open_output(p);
    write_summary_csv(out, std::span(&row, 1));
    detail::close_checked(out, p);
  }
  {
    const auto p = dir / "manifest.json";
    auto out = detail::open_output(p);
    out << run_manifest(config, res).dump(2) << '\n';
    detail::close_checked(out, p);
  }
}

}  // namespace fedplace
