#include "kpservo/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace kpservo {

namespace {

void check_series(const std::vector<double>& t, const std::vector<double>& e) {
  if (t.empty() || t.size() != e.size()) {
    throw std::domain_error("metric series must be non-empty and aligned");
  }
}

}  // namespace

std::optional<double> rise_time(const std::vector<double>& t,
                                const std::vector<double>& err_norm) {
  check_series(t, err_norm);
  const double e0 = err_norm.front();
  if (e0 <= 0.0) return 0.0;

  const double hi_level = 0.9 * e0;
  const double lo_level = 0.1 * e0;
  std::optional<double> t_hi;
  for (std::size_t i = 0; i < err_norm.size(); ++i) {
    if (!t_hi && err_norm[i] <= hi_level) t_hi = t[i];
    if (err_norm[i] <= lo_level) {
      // 90% crossing precedes the 10% one by construction (e0 > lo_level).
      return t[i] - *t_hi;
    }
  }
  return std::nullopt;
}

std::optional<double> settling_time(const std::vector<double>& t,
                                    const std::vector<double>& err_norm,
                                    double band_fraction) {
  check_series(t, err_norm);
  if (!(band_fraction > 0.0)) throw std::domain_error("band fraction must be positive");
  const double e0 = err_norm.front();
  if (e0 <= 0.0) return 0.0;
  const double band = band_fraction * e0;

  // Last sample outside the band decides; everything after it is settled.
  std::size_t first_settled = err_norm.size();
  for (std::size_t i = err_norm.size(); i-- > 0;) {
    if (err_norm[i] > band) {
      first_settled = i + 1;
      break;
    }
    first_settled = i;
  }
  if (first_settled >= err_norm.size()) return std::nullopt;
  return t[first_settled];
}

double overshoot(const std::vector<Eigen::VectorXd>& per_feature_errors) {
  if (per_feature_errors.empty()) throw std::domain_error("empty error series");
  const Eigen::VectorXd& e0 = per_feature_errors.front();
  const double norm0 = e0.norm();
  if (norm0 <= 0.0) return 0.0;

  double worst = 0.0;
  for (const auto& e : per_feature_errors) {
    if (e.size() != e0.size()) throw std::domain_error("error dimensions disagree");
    for (int i = 0; i < e.size(); ++i) {
      if (e0(i) == 0.0) continue;  // no approach direction for this feature
      const double beyond = (e0(i) > 0.0) ? -e(i) : e(i);
      worst = std::max(worst, beyond);
    }
  }
  return worst / norm0 * 100.0;
}

DetectionAccuracy detection_accuracy(const std::vector<std::vector<Eigen::Vector2d>>& pred,
                                     const std::vector<std::vector<Eigen::Vector2d>>& gt,
                                     const std::vector<double>& thresholds) {
  if (pred.size() != gt.size()) throw std::domain_error("series lengths disagree");
  DetectionAccuracy out;
  double err_sum = 0.0;
  std::map<double, long> within;
  for (const double th : thresholds) within[th] = 0;

  for (std::size_t f = 0; f < pred.size(); ++f) {
    if (pred[f].size() != gt[f].size()) throw std::domain_error("keypoint counts disagree");
    for (std::size_t i = 0; i < pred[f].size(); ++i) {
      const double err = (pred[f][i] - gt[f][i]).norm();
      err_sum += err;
      ++out.total;
      for (const double th : thresholds) {
        if (err <= th) ++within[th];
      }
    }
  }
  if (out.total == 0) throw std::domain_error("empty detection series");
  out.mean_error_px = err_sum / out.total;
  for (const double th : thresholds) {
    out.accuracy_pct[th] = 100.0 * within[th] / out.total;
  }
  return out;
}

FilterEval filter_eval(const std::vector<std::vector<Eigen::Vector2d>>& pred,
                       const std::vector<std::vector<Eigen::Vector2d>>& gt,
                       double failure_threshold_px) {
  if (pred.size() != gt.size()) throw std::domain_error("series lengths disagree");
  double err_sum = 0.0;
  double sq_sum = 0.0;
  long failures = 0;
  long total = 0;
  for (std::size_t f = 0; f < pred.size(); ++f) {
    if (pred[f].size() != gt[f].size()) throw std::domain_error("keypoint counts disagree");
    for (std::size_t i = 0; i < pred[f].size(); ++i) {
      const double err = (pred[f][i] - gt[f][i]).norm();
      err_sum += err;
      sq_sum += err * err;
      if (err > failure_threshold_px) ++failures;
      ++total;
    }
  }
  if (total == 0) throw std::domain_error("empty filter-eval series");
  FilterEval out;
  out.mean_error_px = err_sum / total;
  out.rmse_px = std::sqrt(sq_sum / total);
  out.failure_rate_pct = 100.0 * failures / total;
  return out;
}

AggregateStat aggregate(const std::vector<std::optional<double>>& values) {
  AggregateStat out;
  double sum = 0.0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++out.defined;
    } else {
      ++out.undefined;
    }
  }
  if (out.defined == 0) return out;
  out.mean = sum / out.defined;
  double sq = 0.0;
  for (const auto& v : values) {
    if (v) sq += (*v - out.mean) * (*v - out.mean);
  }
  out.stddev = (out.defined > 1) ? std::sqrt(sq / (out.defined - 1)) : 0.0;
  return out;
}

TransientSummary summarize_run(const TrajectoryRecord& record, double band_fraction) {
  TransientSummary out;
  if (record.ticks.empty()) return out;

  const auto t = record.times();
  const auto norms = record.error_norms();
  const auto errors = record.feature_errors();

  out.rise_time_s = rise_time(t, norms);
  out.settling_time_s = settling_time(t, norms, band_fraction);
  out.overshoot_pct = overshoot(errors);
  out.success = record.outcome == RunOutcome::success;
  if (record.success_tick) out.success_time_s = *record.success_tick * record.dt;

  // End-effector view: the last feature pair of the error vector.
  const int dim = static_cast<int>(errors.front().size());
  if (dim >= 2) {
    std::vector<double> ee_norm(errors.size());
    for (std::size_t k = 0; k < errors.size(); ++k) {
      ee_norm[k] = errors[k].segment<2>(dim - 2).norm();
    }
    out.ee_rise_time_s = rise_time(t, ee_norm);
    out.ee_settling_time_s = settling_time(t, ee_norm, band_fraction);
  }
  return out;
}

TransientReport aggregate_runs(const std::vector<TransientSummary>& runs) {
  TransientReport report;
  report.runs = runs;
  std::vector<std::optional<double>> rise, settle, ee_rise, ee_settle, over;
  for (const auto& r : runs) {
    rise.push_back(r.rise_time_s);
    settle.push_back(r.settling_time_s);
    ee_rise.push_back(r.ee_rise_time_s);
    ee_settle.push_back(r.ee_settling_time_s);
    over.push_back(r.overshoot_pct);
    if (r.success) ++report.successes;
  }
  report.rise_time_s = aggregate(rise);
  report.settling_time_s = aggregate(settle);
  report.ee_rise_time_s = aggregate(ee_rise);
  report.ee_settling_time_s = aggregate(ee_settle);
  report.overshoot_pct = aggregate(over);
  return report;
}

}  // namespace kpservo
