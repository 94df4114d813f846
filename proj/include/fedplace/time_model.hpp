#pragma once

// Per-GPU-type regression of client training time against batch count,
//
//   t(m) = a*m + b*log(c*m) + d,
//
// fitted by damped least squares (Levenberg-Marquardt) with several starting
// points, plus the record store that feeds it between rounds.
//
// Note that b*log(c*m) + d == b*log(m) + (b*log(c) + d): (b, c, d) are not
// individually identifiable, only the predictions are. The solver works on
// log(c) so c stays positive, and the damping term keeps the step defined
// even though the log(c) and d directions are collinear.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedplace/cluster.hpp"
#include "fedplace/error.hpp"
#include "fedplace/population.hpp"

namespace fedplace {

struct TrainingRecord {
  ClientId client_id = 0;
  std::uint64_t m = 1;
  double observed_time = 0.0;
  std::string gpu_type;
  std::uint64_t round_index = 0;
  WorkerId worker_id = 0;
};

struct TimeModelFit {
  std::string gpu_type;
  double a = 0.0;
  double b = 0.0;
  double c = 1.0;
  double d = 0.0;
  double mse = 0.0;
  std::uint64_t num_points = 0;
  // Predictions are guaranteed positive on the observed range [min_m, max_m]
  // and clamped to kMinPredictedTime outside it.
  double min_m = 1.0;
  double max_m = 1.0;
  // True when the nonlinear fit was rejected and the linear fallback is used.
  bool linear_fallback = false;
};

inline constexpr double kMinPredictedTime = 1e-9;
inline constexpr std::size_t kMinFitPoints = 4;

inline double evaluate_curve(double a, double b, double c, double d, double m) {
  return a * m + b * std::log(c * m) + d;
}

inline double predict_time(const TimeModelFit& fit, double m) {
  m = std::max(m, 1.0);
  const double y = evaluate_curve(fit.a, fit.b, fit.c, fit.d, m);
  return std::isfinite(y) ? std::max(y, kMinPredictedTime) : kMinPredictedTime;
}

// Minimum of a*m + b*log(c*m) + d over [lo, hi]. The second derivative has
// the sign of -b, so there is at most one interior critical point, m = -b/a.
inline double curve_minimum(double a, double b, double c, double d, double lo, double hi) {
  double best = std::min(evaluate_curve(a, b, c, d, lo), evaluate_curve(a, b, c, d, hi));
  if (a != 0.0) {
    const double crit = -b / a;
    if (crit > lo && crit < hi) best = std::min(best, evaluate_curve(a, b, c, d, crit));
  }
  return best;
}

namespace detail {

struct Point {
  double m;
  double y;
};

struct CurveParams {
  double a, b, log_c, d;
};

inline double sse(std::span<const Point> pts, const CurveParams& p) {
  double s = 0.0;
  for (const auto& q : pts) {
    const double r = p.a * q.m + p.b * (p.log_c + std::log(q.m)) + p.d - q.y;
    s += r * r;
  }
  return s;
}

inline CurveParams levenberg_marquardt(std::span<const Point> pts, CurveParams p) {
  constexpr int kMaxIterations = 200;
  constexpr double kTolerance = 1e-14;
  double lambda = 1e-3;
  double cost = sse(pts, p);
  for (int it = 0; it < kMaxIterations && std::isfinite(cost); ++it) {
    Eigen::Matrix4d jtj = Eigen::Matrix4d::Zero();
    Eigen::Vector4d jtr = Eigen::Vector4d::Zero();
    for (const auto& q : pts) {
      const double logm = std::log(q.m);
      const Eigen::Vector4d j(q.m, p.log_c + logm, p.b, 1.0);
      const double r = p.a * q.m + p.b * (p.log_c + logm) + p.d - q.y;
      jtj.noalias() += j * j.transpose();
      jtr.noalias() += j * r;
    }
    bool improved = false;
    while (lambda < 1e16) {
      Eigen::Matrix4d damped = jtj;
      for (int k = 0; k < 4; ++k) damped(k, k) += lambda * (jtj(k, k) + 1e-12);
      const Eigen::Vector4d step = damped.ldlt().solve(-jtr);
      const CurveParams trial{p.a + step[0], p.b + step[1], p.log_c + step[2], p.d + step[3]};
      const double trial_cost = sse(pts, trial);
      if (std::isfinite(trial_cost) && trial_cost <= cost) {
        const double rel = (cost - trial_cost) / std::max(cost, std::numeric_limits<double>::min());
        p = trial;
        cost = trial_cost;
        lambda = std::max(lambda * 0.1, 1e-15);
        improved = true;
        if (rel < kTolerance) return p;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) break;
  }
  return p;
}

// Ordinary least-squares line through (m, y). Returns (slope, intercept).
inline std::pair<double, double> least_squares_line(std::span<const Point> pts) {
  const double n = static_cast<double>(pts.size());
  double sm = 0, sy = 0;
  for (const auto& q : pts) {
    sm += q.m;
    sy += q.y;
  }
  const double mm = sm / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (const auto& q : pts) {
    sxx += (q.m - mm) * (q.m - mm);
    sxy += (q.m - mm) * (q.y - my);
  }
  const double slope = sxx > 0 ? sxy / sxx : 0.0;
  return {slope, my - slope * mm};
}

inline TimeModelFit linear_fallback(std::span<const Point> pts, const std::string& gpu_type, double min_m,
                                    double max_m) {
  auto [a, d] = least_squares_line(pts);
  if (a < 0.0 || a + d <= 0.0) {
    // Non-negative slope, positive at m = 1: fall back to the mean.
    a = 0.0;
    d = std::accumulate(pts.begin(), pts.end(), 0.0, [](double s, const Point& q) { return s + q.y; }) /
        static_cast<double>(pts.size());
  }
  TimeModelFit fit{gpu_type, a, 0.0, 1.0, d, 0.0, pts.size(), min_m, max_m, true};
  fit.mse = sse(pts, {a, 0.0, 0.0, d}) / static_cast<double>(pts.size());
  return fit;
}

}  // namespace detail

// Throws InsufficientDataError below kMinFitPoints records, DomainError on
// mixed GPU types or invalid records. A nonlinear fit is accepted only if its
// parameters are finite, its slope is non-negative and it predicts positive
// times on the observed range of m; otherwise the linear fallback is returned.
inline TimeModelFit fit_time_model(std::span<const TrainingRecord> records) {
  if (records.size() < kMinFitPoints) {
    throw InsufficientDataError("fit_time_model: need at least " + std::to_string(kMinFitPoints) +
                                " records, got " + std::to_string(records.size()));
  }
  const std::string& gpu_type = records.front().gpu_type;
  std::vector<detail::Point> pts;
  pts.reserve(records.size());
  double min_m = std::numeric_limits<double>::infinity(), max_m = 1.0;
  for (const auto& r : records) {
    if (r.gpu_type != gpu_type) throw DomainError("fit_time_model: records mix gpu types");
    if (r.m < 1) throw DomainError("fit_time_model: record with m < 1");
    if (!(r.observed_time > 0.0) || !std::isfinite(r.observed_time)) {
      throw DomainError("fit_time_model: observed_time must be positive and finite");
    }
    pts.push_back({static_cast<double>(r.m), r.observed_time});
    min_m = std::min(min_m, static_cast<double>(r.m));
    max_m = std::max(max_m, static_cast<double>(r.m));
  }

  const auto [slope, intercept] = detail::least_squares_line(pts);
  std::optional<TimeModelFit> best;
  for (double b0 : {0.1, 1.0, 10.0}) {
    const auto p = detail::levenberg_marquardt(pts, {slope, b0, 0.0, intercept});
    const double c = std::exp(p.log_c);
    if (!std::isfinite(p.a) || !std::isfinite(p.b) || !std::isfinite(p.d) || !std::isfinite(c) || !(c > 0.0)) {
      continue;
    }
    if (p.a < 0.0 || !(curve_minimum(p.a, p.b, c, p.d, min_m, max_m) > 0.0)) continue;
    const double mse = detail::sse(pts, p) / static_cast<double>(pts.size());
    if (!std::isfinite(mse)) continue;
    if (!best || mse < best->mse) best = TimeModelFit{gpu_type, p.a, p.b, c, p.d, mse, pts.size(), min_m, max_m, false};
  }
  return best ? *best : detail::linear_fallback(pts, gpu_type, min_m, max_m);
}

// How training records are pooled into datasets.
enum class FitPooling {
  kGpuType,      // one dataset per GPU model
  kPhysicalGpu,  // one dataset per physical device
};

inline std::string fit_key(const WorkerSpec& w, FitPooling pooling) {
  if (pooling == FitPooling::kGpuType) return w.gpu_type;
  return w.gpu_type + "@" + std::to_string(w.node_id) + ":" + std::to_string(w.gpu_index);
}

// Training records from completed rounds, grouped by fit key. Appended by the
// engine after each round and read during placement.
class RecordStore {
 public:
  // window_rounds == 0 keeps everything.
  explicit RecordStore(std::uint64_t window_rounds = 0) : window_(window_rounds) {}

  void append_round(std::uint64_t round_index, const std::map<std::string, std::vector<TrainingRecord>>& by_key) {
    for (const auto& [key, recs] : by_key) {
      auto& dst = data_[key];
      dst.insert(dst.end(), recs.begin(), recs.end());
    }
    if (window_ > 0 && round_index + 1 > window_) {
      const std::uint64_t oldest_kept = round_index + 1 - window_;
      for (auto& [key, recs] : data_) {
        std::erase_if(recs, [&](const TrainingRecord& r) { return r.round_index < oldest_kept; });
      }
    }
  }

  const std::vector<TrainingRecord>* records(const std::string& key) const {
    const auto it = data_.find(key);
    return it == data_.end() ? nullptr : &it->second;
  }

  // Fits for every key with enough data. Keys without enough records are
  // absent from the result.
  std::map<std::string, TimeModelFit> fit_all() const {
    std::map<std::string, TimeModelFit> out;
    for (const auto& [key, recs] : data_) {
      if (recs.size() < kMinFitPoints) continue;
      auto fit = fit_time_model(recs);
      fit.gpu_type = key;
      out.emplace(key, std::move(fit));
    }
    return out;
  }

  std::size_t total_records() const {
    std::size_t n = 0;
    for (const auto& [k, v] : data_) n += v.size();
    return n;
  }

 private:
  std::uint64_t window_;
  std::map<std::string, std::vector<TrainingRecord>> data_;
};

}  // namespace fedplace
