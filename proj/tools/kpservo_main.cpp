#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "kpservo/commands.hpp"
#include "kpservo/errors.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> repeats;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config file (JSON)")
      ->required();
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "root seed override");
  cmd->add_option("--repeats", args.repeats, "repeat count override");
}

int dispatch(const std::string& name, const CommonArgs& args) {
  const kpservo::ExperimentConfig config = kpservo::load_config(args.config_path);
  kpservo::CommandOptions opts;
  opts.out_dir = args.out_dir;
  opts.seed = args.seed;
  opts.repeats = args.repeats;
  if (name == "servo") return kpservo::cmd_servo(config, opts);
  if (name == "track-eval") return kpservo::cmd_track_eval(config, opts);
  if (name == "jacobian-check") return kpservo::cmd_jacobian_check(config, opts);
  return kpservo::cmd_dataset_export(config, opts);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Keypoint-based adaptive visual servoing simulator"};
  app.require_subcommand(1);

  CommonArgs servo_args, track_args, jac_args, data_args;
  add_common(app.add_subcommand("servo", "seeded servo runs with trajectory CSVs"),
             servo_args);
  add_common(app.add_subcommand("track-eval", "filter comparison on scripted occlusions"),
             track_args);
  add_common(app.add_subcommand("jacobian-check", "online estimate vs oracle convergence"),
             jac_args);
  add_common(app.add_subcommand("dataset-export", "workspace sweep annotation export"),
             data_args);

  CLI11_PARSE(app, argc, argv);

  const std::string name = app.get_subcommands().front()->get_name();
  const CommonArgs& args = name == "servo"         ? servo_args
                           : name == "track-eval"  ? track_args
                           : name == "jacobian-check" ? jac_args
                                                      : data_args;
  try {
    return dispatch(name, args);
  } catch (const kpservo::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kpservo::kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kpservo::kExitRuntime;
  }
}
