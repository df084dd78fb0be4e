#include "kpservo/trajectory.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace kpservo {

std::string to_string(RunOutcome outcome) {
  switch (outcome) {
    case RunOutcome::success: return "success";
    case RunOutcome::budget_exhausted: return "budget_exhausted";
    case RunOutcome::adaptation_divergence: return "adaptation_divergence";
    case RunOutcome::filter_divergence: return "filter_divergence";
  }
  return "unknown";
}

std::string to_string(KeypointStatus status) {
  switch (status) {
    case KeypointStatus::measured: return "measured";
    case KeypointStatus::substituted: return "substituted";
    case KeypointStatus::gated: return "gated";
  }
  return "unknown";
}

namespace {

KeypointStatus status_from_string(const std::string& s) {
  if (s == "measured") return KeypointStatus::measured;
  if (s == "substituted") return KeypointStatus::substituted;
  if (s == "gated") return KeypointStatus::gated;
  throw std::runtime_error("unknown keypoint status: " + s);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::vector<double> TrajectoryRecord::times() const {
  std::vector<double> out(ticks.size());
  for (std::size_t i = 0; i < ticks.size(); ++i) out[i] = ticks[i].t;
  return out;
}

std::vector<double> TrajectoryRecord::error_norms() const {
  std::vector<double> out(ticks.size());
  for (std::size_t i = 0; i < ticks.size(); ++i) out[i] = ticks[i].err_norm;
  return out;
}

std::vector<Eigen::VectorXd> TrajectoryRecord::feature_errors() const {
  std::vector<Eigen::VectorXd> out(ticks.size());
  for (std::size_t i = 0; i < ticks.size(); ++i) out[i] = ticks[i].e;
  return out;
}

void write_trajectory_csv(const TrajectoryRecord& record, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  if (record.ticks.empty()) throw std::runtime_error("refusing to write empty trajectory");

  const int dim_e = static_cast<int>(record.ticks.front().e.size());
  const int dim_q = static_cast<int>(record.ticks.front().q.size());
  const int n_kp = static_cast<int>(record.ticks.front().status.size());

  f << "t,err_norm";
  for (int i = 1; i <= dim_e; ++i) f << ",e_" << i;
  for (int i = 1; i <= dim_q; ++i) f << ",q_" << i;
  for (int i = 1; i <= dim_q; ++i) f << ",qdot_" << i;
  for (int i = 1; i <= n_kp; ++i) f << ",status_" << i;
  f << ",jac_residual\n";

  for (const auto& tick : record.ticks) {
    f << fmt(tick.t) << ',' << fmt(tick.err_norm);
    for (int i = 0; i < dim_e; ++i) f << ',' << fmt(tick.e(i));
    for (int i = 0; i < dim_q; ++i) f << ',' << fmt(tick.q(i));
    for (int i = 0; i < dim_q; ++i) f << ',' << fmt(tick.q_dot_cmd(i));
    for (int i = 0; i < n_kp; ++i) f << ',' << to_string(tick.status[i]);
    f << ',' << fmt(tick.jac_residual) << '\n';
  }
}

TrajectoryRecord read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());

  std::string header;
  if (!std::getline(f, header)) throw std::runtime_error("empty trajectory file");

  int dim_e = 0, dim_q = 0, n_kp = 0;
  {
    std::stringstream ss(header);
    std::string col;
    while (std::getline(ss, col, ',')) {
      if (col.rfind("e_", 0) == 0) ++dim_e;
      else if (col.rfind("q_", 0) == 0) ++dim_q;
      else if (col.rfind("status_", 0) == 0) ++n_kp;
    }
  }

  TrajectoryRecord record;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    auto next = [&]() {
      if (!std::getline(ss, cell, ',')) throw std::runtime_error("short row in " + path.string());
      return cell;
    };
    TrajectoryTick tick;
    tick.t = std::stod(next());
    tick.err_norm = std::stod(next());
    tick.e.resize(dim_e);
    for (int i = 0; i < dim_e; ++i) tick.e(i) = std::stod(next());
    tick.q.resize(dim_q);
    for (int i = 0; i < dim_q; ++i) tick.q(i) = std::stod(next());
    tick.q_dot_cmd.resize(dim_q);
    for (int i = 0; i < dim_q; ++i) tick.q_dot_cmd(i) = std::stod(next());
    tick.status.reserve(n_kp);
    for (int i = 0; i < n_kp; ++i) tick.status.push_back(status_from_string(next()));
    tick.jac_residual = std::stod(next());
    record.ticks.push_back(std::move(tick));
  }
  if (record.ticks.size() >= 2) {
    record.dt = record.ticks[1].t - record.ticks[0].t;
  }
  return record;
}

}  // namespace kpservo
