#include "kpservo/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include "kpservo/errors.hpp"
#include "kpservo/rng.hpp"
#include "kpservo/servo.hpp"

namespace kpservo {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

ExperimentConfig with_overrides(const ExperimentConfig& config, const CommandOptions& opts) {
  ExperimentConfig cfg = config;
  if (opts.seed) cfg.run.seed = *opts.seed;
  if (opts.repeats) cfg.run.repeats = *opts.repeats;
  cfg.validate();
  return cfg;
}

void write_manifest(const ExperimentConfig& cfg, const fs::path& out_dir,
                    const std::string& command, const std::vector<std::string>& outputs) {
  nlohmann::json m;
  m["tool"] = kToolName;
  m["version"] = kToolVersion;
  m["command"] = command;
  m["scenario"] = cfg.scenario_name;
  m["seed"] = cfg.run.seed;
  m["repeats"] = cfg.run.repeats;
  m["config_hash"] = config_hash(cfg);
  m["outputs"] = outputs;
  std::ofstream f(out_dir / "manifest.json");
  f << m.dump(2) << '\n';
}

std::string aggregate_cell(const AggregateStat& s) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << s.mean << " +/- " << s.stddev;
  if (s.undefined > 0) os << " (" << s.undefined << " undefined)";
  return os.str();
}

// Joint trajectory of a scripted tracking experiment at tick k.
Eigen::VectorXd scripted_q(const ExperimentConfig& cfg, const ScriptedExperiment& exp,
                           const Eigen::VectorXd& home, int tick) {
  Eigen::VectorXd q = home;
  const double t = tick * cfg.tracker_noise.dt;
  for (std::size_t j = 0; j < cfg.manipulator.active_joints.size(); ++j) {
    const int idx = cfg.manipulator.active_joints[j];
    const double omega = 2.0 * std::numbers::pi / exp.periods_s[j];
    double v = home(idx) + exp.amplitudes[j] * std::sin(omega * t + exp.phases[j]);
    const auto& [lo, hi] = cfg.manipulator.joint_limits[idx];
    q(idx) = std::clamp(v, lo, hi);
  }
  return q;
}

Eigen::VectorXd config_home(const ExperimentConfig& cfg) {
  if (cfg.run.start_q) return *cfg.run.start_q;
  Eigen::VectorXd home(cfg.manipulator.joint_count());
  for (int j = 0; j < cfg.manipulator.joint_count(); ++j) {
    home(j) = 0.5 * (cfg.manipulator.joint_limits[j].first +
                     cfg.manipulator.joint_limits[j].second);
  }
  return home;
}

}  // namespace

int cmd_servo(const ExperimentConfig& config, const CommandOptions& opts) {
  const ExperimentConfig cfg = with_overrides(config, opts);
  fs::create_directories(opts.out_dir);

  std::vector<std::string> outputs;
  std::vector<TransientSummary> summaries;
  std::vector<TrajectoryRecord> records;
  for (int i = 0; i < cfg.run.repeats; ++i) {
    const std::uint64_t seed = run_seed(cfg.run.seed, i);
    TrajectoryRecord record = run_servo_loop(cfg, seed);
    char name[32];
    std::snprintf(name, sizeof(name), "run_%03d.csv", i);
    write_trajectory_csv(record, opts.out_dir / name);
    outputs.push_back(name);
    summaries.push_back(summarize_run(record));
    records.push_back(std::move(record));
  }

  // Per-run table.
  {
    std::ofstream f(opts.out_dir / "summary.csv");
    f << "run,seed,outcome,success_time_s,rise_time_s,settling_time_s,overshoot_pct,"
         "ee_rise_time_s,ee_settling_time_s\n";
    for (std::size_t i = 0; i < summaries.size(); ++i) {
      const auto& s = summaries[i];
      f << i << ',' << records[i].seed << ',' << to_string(records[i].outcome) << ','
        << fmt_opt(s.success_time_s) << ',' << fmt_opt(s.rise_time_s) << ','
        << fmt_opt(s.settling_time_s) << ',' << fmt(s.overshoot_pct) << ','
        << fmt_opt(s.ee_rise_time_s) << ',' << fmt_opt(s.ee_settling_time_s) << '\n';
    }
  }

  const TransientReport report = aggregate_runs(summaries);
  {
    std::ofstream f(opts.out_dir / "summary.txt");
    f << "Scenario: " << cfg.scenario_name << "\n";
    f << "Runs: " << summaries.size() << "  successes: " << report.successes << "\n\n";
    f << "Performance metrics\n";
    f << "  System rise time (s):         " << aggregate_cell(report.rise_time_s) << "\n";
    f << "  System settling time (s):     " << aggregate_cell(report.settling_time_s) << "\n";
    f << "  End effector rise time (s):   " << aggregate_cell(report.ee_rise_time_s) << "\n";
    f << "  End effector settling time (s): " << aggregate_cell(report.ee_settling_time_s)
      << "\n";
    f << "  Overshoot (%):                " << aggregate_cell(report.overshoot_pct) << "\n";
  }
  outputs.push_back("summary.csv");
  outputs.push_back("summary.txt");
  write_manifest(cfg, opts.out_dir, "servo", outputs);
  return kExitOk;
}

std::vector<TrackExperimentResult> run_track_eval(const ExperimentConfig& config,
                                                  std::uint64_t seed) {
  if (config.track_eval.empty()) {
    throw ConfigError("track_eval.experiments is empty");
  }
  const ManipulatorModel& model = config.manipulator;
  const PinholeCamera camera = config.camera.build();
  const Eigen::VectorXd home = config_home(config);
  const int k_count = model.keypoint_count();

  std::vector<TrackExperimentResult> results;
  for (const auto& exp : config.track_eval) {
    // Ground-truth pixel series for the scripted motion; the unoccluded
    // stream stands in for the reference video.
    std::vector<std::vector<Eigen::Vector2d>> truth(exp.ticks);
    std::vector<std::vector<bool>> in_frame(exp.ticks);
    for (int k = 0; k < exp.ticks; ++k) {
      const auto pts = forward_keypoints(model, {scripted_q(config, exp, home, k)});
      const auto proj = project_keypoints(camera, pts);
      truth[k].resize(k_count);
      in_frame[k].assign(k_count, false);
      for (int i = 0; i < k_count; ++i) {
        truth[k][i] = proj[i].pixel;
        in_frame[k][i] = proj[i].in_frustum;
      }
    }

    auto observe_stream = [&](bool inpainting) {
      OcclusionScenario scenario = exp.scenario;
      scenario.inpainting_on = inpainting;
      RngStream rng(seed, "perception/" + exp.name);
      std::vector<KeypointObservation> stream;
      stream.reserve(exp.ticks);
      for (int k = 0; k < exp.ticks; ++k) {
        KeypointObservation obs = observe(truth[k], scenario, k, rng);
        for (int i = 0; i < k_count; ++i) {
          if (!in_frame[k][i]) {
            obs.keypoints[i].visible = false;
            obs.keypoints[i].u = obs.keypoints[i].v =
                std::numeric_limits<double>::quiet_NaN();
          }
        }
        stream.push_back(std::move(obs));
      }
      return stream;
    };

    const auto stream = observe_stream(false);
    const auto stream_inpaint = observe_stream(true);

    // Raw variant: detections as reported, holding the last known position
    // across gaps (image center before the first sighting).
    auto hold_last = [&](const std::vector<KeypointObservation>& obs_stream) {
      std::vector<std::vector<Eigen::Vector2d>> out(exp.ticks);
      std::vector<Eigen::Vector2d> last(
          k_count, Eigen::Vector2d(camera.image_width / 2.0, camera.image_height / 2.0));
      for (int k = 0; k < exp.ticks; ++k) {
        out[k].resize(k_count);
        for (int i = 0; i < k_count; ++i) {
          const auto& kp = obs_stream[k].keypoints[i];
          if (kp.visible) last[i] = {kp.u, kp.v};
          out[k][i] = last[i];
        }
      }
      return out;
    };
    const auto raw = hold_last(stream);
    const auto raw_inpaint = hold_last(stream_inpaint);

    auto corrected_series = [&](const std::vector<KeypointObservation>& obs_stream,
                                FilterKind kind) {
      TrackerBank bank(k_count, config.tracker_noise, config.sigma_params, config.gate, kind);
      std::vector<std::vector<Eigen::Vector2d>> out(exp.ticks);
      for (int k = 0; k < exp.ticks; ++k) {
        out[k] = bank.process_frame(obs_stream[k]).corrected;
      }
      return out;
    };

    const auto kf_series = corrected_series(stream, FilterKind::kf);
    const auto ukf_series = corrected_series(stream, FilterKind::ukf);
    const auto inpaint_series = corrected_series(stream_inpaint, FilterKind::ukf);

    TrackExperimentResult r;
    r.name = exp.name;
    r.raw = filter_eval(raw, truth);
    r.kf = filter_eval(kf_series, truth);
    r.ukf = filter_eval(ukf_series, truth);
    r.ukf_inpaint = filter_eval(inpaint_series, truth);
    r.acc10_only_inpaint_pct =
        detection_accuracy(raw_inpaint, truth, {10.0}).accuracy_pct.at(10.0);
    r.acc10_after_ukf_pct =
        detection_accuracy(inpaint_series, truth, {10.0}).accuracy_pct.at(10.0);
    results.push_back(std::move(r));
  }
  return results;
}

int cmd_track_eval(const ExperimentConfig& config, const CommandOptions& opts) {
  const ExperimentConfig cfg = with_overrides(config, opts);
  const auto results = run_track_eval(cfg, cfg.run.seed);
  fs::create_directories(opts.out_dir);

  auto avg = [&](auto get) {
    FilterEval sum;
    for (const auto& r : results) {
      const FilterEval& e = get(r);
      sum.mean_error_px += e.mean_error_px;
      sum.rmse_px += e.rmse_px;
      sum.failure_rate_pct += e.failure_rate_pct;
    }
    const double n = static_cast<double>(results.size());
    return FilterEval{sum.mean_error_px / n, sum.rmse_px / n, sum.failure_rate_pct / n};
  };
  const FilterEval avg_raw = avg([](const auto& r) { return r.raw; });
  const FilterEval avg_kf = avg([](const auto& r) { return r.kf; });
  const FilterEval avg_ukf = avg([](const auto& r) { return r.ukf; });
  const FilterEval avg_inp = avg([](const auto& r) { return r.ukf_inpaint; });

  {
    std::ofstream f(opts.out_dir / "filter_table.csv");
    f << "experiment,variant,mean_error_px,rmse_px,failure_rate_pct\n";
    auto row = [&](const std::string& exp, const char* variant, const FilterEval& e) {
      f << exp << ',' << variant << ',' << fmt(e.mean_error_px) << ',' << fmt(e.rmse_px)
        << ',' << fmt(e.failure_rate_pct) << '\n';
    };
    for (const auto& r : results) {
      row(r.name, "raw", r.raw);
      row(r.name, "kalman", r.kf);
      row(r.name, "unscented_kalman", r.ukf);
      row(r.name, "inpainting_with_ukf", r.ukf_inpaint);
    }
    row("average", "raw", avg_raw);
    row("average", "kalman", avg_kf);
    row("average", "unscented_kalman", avg_ukf);
    row("average", "inpainting_with_ukf", avg_inp);
  }
  {
    std::ofstream f(opts.out_dir / "filter_table.txt");
    f << "Filter evaluation averaged across " << results.size() << " experiments\n\n";
    f << std::left << std::setw(22) << "Filters" << std::right << std::setw(16)
      << "Mean Error (px)" << std::setw(12) << "RMSE (px)" << std::setw(16)
      << "Failure Rate %" << "\n";
    auto row = [&](const char* name, const FilterEval& e) {
      std::ostringstream m, r2, fr;
      m << std::fixed << std::setprecision(2) << e.mean_error_px;
      r2 << std::fixed << std::setprecision(2) << e.rmse_px;
      fr << std::fixed << std::setprecision(2) << e.failure_rate_pct;
      f << std::left << std::setw(22) << name << std::right << std::setw(16) << m.str()
        << std::setw(12) << r2.str() << std::setw(16) << fr.str() << "\n";
    };
    row("Raw detections", avg_raw);
    row("Kalman", avg_kf);
    row("Unscented Kalman", avg_ukf);
    row("Inpainting with UKF", avg_inp);
  }
  {
    std::ofstream f(opts.out_dir / "accuracy_table.csv");
    f << "experiment,only_inpainting_pct,after_ukf_correction_pct\n";
    for (const auto& r : results) {
      f << r.name << ',' << fmt(r.acc10_only_inpaint_pct) << ','
        << fmt(r.acc10_after_ukf_pct) << '\n';
    }
  }
  write_manifest(cfg, opts.out_dir, "track-eval",
                 {"filter_table.csv", "filter_table.txt", "accuracy_table.csv"});
  return kExitOk;
}

bool excitation_rank_deficient(const Eigen::MatrixXd& q_stack, int joint_count) {
  if (q_stack.rows() < joint_count) return true;
  const Eigen::VectorXd sv = q_stack.jacobiSvd().singularValues();
  if (sv.size() < joint_count) return true;
  return sv(joint_count - 1) <= 1e-9 * std::max(1.0, sv(0));
}

JacobianCheckResult run_jacobian_check(const ExperimentConfig& config, std::uint64_t seed) {
  const ManipulatorModel& model = config.manipulator;
  const PinholeCamera camera = config.camera.build();
  const int j_active = config.active_joint_count();
  const double dt = config.tracker_noise.dt;

  RngStream perception_rng(seed, "perception");
  Eigen::VectorXd q_full = config_home(config);

  TrackerBank bank(model.keypoint_count(), config.tracker_noise, config.sigma_params,
                   config.gate);
  VisuoMotorWindow window(config.servo.window_size);
  JacobianEstimate est;
  est.j_hat = Eigen::MatrixXd::Zero(config.feature_dim(), j_active);
  est.gamma = config.servo.gamma;
  est.mode = config.servo.gamma_mode;
  if (config.jacobian_check.warm_start == "oracle") {
    est.j_hat = select_feature_rows(oracle_image_jacobian(model, camera, {q_full}, 1e-5),
                                    config.feature_indices);
    est.initialized = true;
  }

  const auto excitation = excitation_trajectory(
      j_active, config.servo.excitation_amplitude, config.servo.excitation_steps_per_joint);

  JacobianCheckResult result;
  Eigen::MatrixXd all_commands(config.jacobian_check.samples, j_active);

  Eigen::VectorXd q_prev;
  Eigen::VectorXd p_prev;
  for (int k = 0; k < config.jacobian_check.samples; ++k) {
    const auto pts = forward_keypoints(model, {q_full});
    const auto proj = project_keypoints(camera, pts);
    std::vector<Eigen::Vector2d> pixels(proj.size());
    for (std::size_t i = 0; i < proj.size(); ++i) pixels[i] = proj[i].pixel;
    KeypointObservation obs = observe(pixels, config.scenario, k, perception_rng);
    for (std::size_t i = 0; i < proj.size(); ++i) {
      if (!proj[i].in_frustum) obs.keypoints[i].visible = false;
    }

    const CorrectionResult corrected = bank.process_frame(obs);
    Eigen::VectorXd p(config.feature_dim());
    for (std::size_t i = 0; i < config.feature_indices.size(); ++i) {
      p.segment<2>(2 * i) = corrected.corrected[config.feature_indices[i]];
    }

    if (k > 0) {
      Eigen::VectorXd q_dot(j_active);
      for (int j = 0; j < j_active; ++j) {
        q_dot(j) = (q_full(model.active_joints[j]) - q_prev(model.active_joints[j])) / dt;
      }
      window.push_sample(q_dot, (p - p_prev) / dt);
      est = jacobian_update(est, window);
    }

    const Eigen::MatrixXd oracle = select_feature_rows(
        oracle_image_jacobian(model, camera, {q_full}, 1e-5), config.feature_indices);
    result.rel_errors.push_back((est.j_hat - oracle).norm() / oracle.norm());

    const Eigen::VectorXd u = excitation[k % excitation.size()];
    all_commands.row(k) = u.transpose();
    q_prev = q_full;
    p_prev = p;
    Eigen::VectorXd u_full = Eigen::VectorXd::Zero(model.joint_count());
    for (int j = 0; j < j_active; ++j) u_full(model.active_joints[j]) = u(j);
    q_full = step({q_full}, u_full, dt, model).q.q;
  }
  result.rank_deficient = excitation_rank_deficient(all_commands, j_active);
  return result;
}

int cmd_jacobian_check(const ExperimentConfig& config, const CommandOptions& opts) {
  const ExperimentConfig cfg = with_overrides(config, opts);
  const JacobianCheckResult result = run_jacobian_check(cfg, cfg.run.seed);
  fs::create_directories(opts.out_dir);

  {
    std::ofstream f(opts.out_dir / "convergence.csv");
    f << "sample,rel_frobenius_error\n";
    for (std::size_t k = 0; k < result.rel_errors.size(); ++k) {
      f << k << ',' << fmt(result.rel_errors[k]) << '\n';
    }
  }
  {
    std::ofstream f(opts.out_dir / "report.txt");
    f << "Jacobian estimate vs finite-difference oracle\n";
    f << "Samples: " << result.rel_errors.size() << "\n";
    f << "Final relative Frobenius error: " << fmt(result.rel_errors.back()) << "\n";
    if (result.rank_deficient) {
      f << "WARNING: excitation commands are rank deficient; the estimate "
           "cannot converge in all joint directions\n";
    }
  }
  write_manifest(cfg, opts.out_dir, "jacobian-check", {"convergence.csv", "report.txt"});
  return kExitOk;
}

int cmd_dataset_export(const ExperimentConfig& config, const CommandOptions& opts) {
  const ExperimentConfig cfg = with_overrides(config, opts);
  const ManipulatorModel& model = cfg.manipulator;
  const PinholeCamera camera = cfg.camera.build();
  const DatasetExportConfig& ds = cfg.dataset_export;
  const double dt = cfg.tracker_noise.dt;
  const Eigen::VectorXd home = config_home(cfg);

  fs::create_directories(opts.out_dir);
  std::vector<std::string> outputs;

  for (std::size_t pass = 0; pass < model.active_joints.size(); ++pass) {
    const int joint = model.active_joints[pass];
    const auto& [lo, hi] = model.joint_limits[joint];
    const double v = traversal_velocity(hi - lo, ds.resolution, dt, ds.v_max);

    char dir_name[32];
    std::snprintf(dir_name, sizeof(dir_name), "pass_%02zu", pass);
    const fs::path pass_dir = opts.out_dir / dir_name;
    fs::create_directories(pass_dir);

    Eigen::VectorXd q = home;
    q(joint) = lo;
    std::vector<Eigen::Vector2d> last_known(
        model.keypoint_count(),
        Eigen::Vector2d(camera.image_width / 2.0, camera.image_height / 2.0));

    for (int k = 0; k < ds.resolution; ++k) {
      const auto pts = forward_keypoints(model, {q});
      const auto proj = project_keypoints(camera, pts);

      KeypointObservation obs;
      obs.frame_index = k;
      std::vector<std::array<Eigen::Vector2d, 4>> corners;
      for (int i = 0; i < model.keypoint_count(); ++i) {
        Keypoint kp;
        kp.visible = proj[i].in_frustum;
        if (kp.visible) {
          kp.u = proj[i].pixel.x();
          kp.v = proj[i].pixel.y();
          last_known[i] = proj[i].pixel;
        } else {
          kp.u = kp.v = std::numeric_limits<double>::quiet_NaN();
        }
        obs.keypoints.push_back(kp);

        // Apparent marker square for the spatial flavor: the physical side
        // length foreshortened by the camera-frame depth.
        const Eigen::Vector3d pc = camera.rotation * pts[i] + camera.translation;
        const double depth = std::max(pc.z(), 1e-6);
        const double half = 0.5 * camera.fx * ds.marker_size_m / depth;
        const Eigen::Vector2d c = kp.visible ? proj[i].pixel : last_known[i];
        corners.push_back({Eigen::Vector2d(c.x() - half, c.y() - half),
                           Eigen::Vector2d(c.x() + half, c.y() - half),
                           Eigen::Vector2d(c.x() + half, c.y() + half),
                           Eigen::Vector2d(c.x() - half, c.y() + half)});
      }

      const nlohmann::json doc = (ds.mode == "planar")
                                     ? export_annotations(obs, ds.bb_size, last_known)
                                     : export_annotations(obs, corners, last_known);
      char file_name[32];
      std::snprintf(file_name, sizeof(file_name), "frame_%04d.json", k);
      std::ofstream f(pass_dir / file_name);
      f << doc.dump(2) << '\n';

      Eigen::VectorXd q_dot = Eigen::VectorXd::Zero(model.joint_count());
      q_dot(joint) = v;
      q = step({q}, q_dot, dt, model).q.q;
    }
    outputs.push_back(std::string(dir_name) + "/ (" + std::to_string(ds.resolution) +
                      " documents)");
  }
  write_manifest(cfg, opts.out_dir, "dataset-export", outputs);
  return kExitOk;
}

}  // namespace kpservo
