#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kpservo/config.hpp"
#include "kpservo/metrics.hpp"

namespace kpservo {

inline constexpr const char* kToolName = "kpservo";
inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes shared by all subcommands: 0 when every run completed (success
// or a recorded failure outcome), 1 on runtime errors, 2 on config errors.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

struct CommandOptions {
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;  // overrides config.run.seed
  std::optional<int> repeats;         // overrides config.run.repeats
};

// Seeded servo runs with per-run trajectory CSVs and an aggregate
// transient-metrics summary.
int cmd_servo(const ExperimentConfig& config, const CommandOptions& opts);

// Five scripted occlusion experiments evaluated with the raw detector, the
// KF and UKF correction pipelines and UKF with the inpainting switch on.
int cmd_track_eval(const ExperimentConfig& config, const CommandOptions& opts);

// Excitation near a fixed configuration, reporting the relative Frobenius
// error of the online estimate against the finite-difference oracle.
int cmd_jacobian_check(const ExperimentConfig& config, const CommandOptions& opts);

// Workspace sweep writing one annotation document per captured
// configuration.
int cmd_dataset_export(const ExperimentConfig& config, const CommandOptions& opts);

// Library-level entry points behind the subcommands so tests can assert on
// structured results instead of parsing the emitted files.

struct TrackExperimentResult {
  std::string name;
  FilterEval raw;           // detector output, last-known hold for gaps
  FilterEval kf;            // correction pipeline on the linear filter
  FilterEval ukf;           // correction pipeline on the UKF
  FilterEval ukf_inpaint;   // UKF with the inpainting severity switch on
  // Detection accuracy @10 px on the inpainting-on stream, before and
  // after UKF correction (the inpainted detector is the baseline the
  // correction is judged against).
  double acc10_only_inpaint_pct = 0.0;
  double acc10_after_ukf_pct = 0.0;
};

std::vector<TrackExperimentResult> run_track_eval(const ExperimentConfig& config,
                                                  std::uint64_t seed);

struct JacobianCheckResult {
  std::vector<double> rel_errors;  // per collected sample, vs the oracle
  bool rank_deficient = false;
};

JacobianCheckResult run_jacobian_check(const ExperimentConfig& config, std::uint64_t seed);

// True when the stacked joint-velocity samples cannot span the controlled
// joint space (insufficient excitation).
bool excitation_rank_deficient(const Eigen::MatrixXd& q_stack, int joint_count);

}  // namespace kpservo
