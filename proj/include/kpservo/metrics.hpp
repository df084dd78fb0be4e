#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <vector>

#include "kpservo/trajectory.hpp"

namespace kpservo {

// Time from the first crossing of 90% of the initial error down to the
// first crossing of 10% of it. A signal that starts at zero reports 0; a
// signal that never reaches the 10% level reports nothing.
std::optional<double> rise_time(const std::vector<double>& t,
                                const std::vector<double>& err_norm);

// Earliest time after which the signal stays within band_fraction of the
// initial error magnitude about zero for all remaining samples.
std::optional<double> settling_time(const std::vector<double>& t,
                                    const std::vector<double>& err_norm,
                                    double band_fraction = 0.05);

// Worst excursion of any signed per-feature error beyond its target,
// normalized by the initial error norm, in percent. Features that start
// exactly on target carry no direction and are skipped. Monotone per-feature
// decay yields exactly 0.
double overshoot(const std::vector<Eigen::VectorXd>& per_feature_errors);

struct DetectionAccuracy {
  std::map<double, double> accuracy_pct;  // threshold (px) -> percentage
  double mean_error_px = 0.0;
  long total = 0;
};

// Percentage of keypoints whose Euclidean error stays within each
// threshold, plus the mean error, over aligned frame series.
DetectionAccuracy detection_accuracy(const std::vector<std::vector<Eigen::Vector2d>>& pred,
                                     const std::vector<std::vector<Eigen::Vector2d>>& gt,
                                     const std::vector<double>& thresholds = {5.0, 10.0});

struct FilterEval {
  double mean_error_px = 0.0;
  double rmse_px = 0.0;
  double failure_rate_pct = 0.0;  // fraction of errors above the threshold
};

FilterEval filter_eval(const std::vector<std::vector<Eigen::Vector2d>>& pred,
                       const std::vector<std::vector<Eigen::Vector2d>>& gt,
                       double failure_threshold_px = 10.0);

// Mean and sample standard deviation over the defined entries.
struct AggregateStat {
  double mean = 0.0;
  double stddev = 0.0;
  int defined = 0;
  int undefined = 0;
};

AggregateStat aggregate(const std::vector<std::optional<double>>& values);

// Transient metrics of one servo run. The end-effector variants use only
// the most distal feature's error components.
struct TransientSummary {
  std::optional<double> rise_time_s;
  std::optional<double> settling_time_s;
  double overshoot_pct = 0.0;
  std::optional<double> ee_rise_time_s;
  std::optional<double> ee_settling_time_s;
  bool success = false;
  std::optional<double> success_time_s;
};

TransientSummary summarize_run(const TrajectoryRecord& record, double band_fraction = 0.05);

struct TransientReport {
  std::vector<TransientSummary> runs;
  AggregateStat rise_time_s;
  AggregateStat settling_time_s;
  AggregateStat overshoot_pct;
  AggregateStat ee_rise_time_s;
  AggregateStat ee_settling_time_s;
  int successes = 0;
};

TransientReport aggregate_runs(const std::vector<TransientSummary>& runs);

}  // namespace kpservo
