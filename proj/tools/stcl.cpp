#include <cstdio>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "stcl/experiment.hpp"

namespace {

// exit codes: 0 success, 2 configuration/schema error, 3 numerical failure
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

int run_command(const std::string& name, const std::string& config_path,
                std::int64_t seed_override) {
  stcl::ExperimentConfig cfg = stcl::load_experiment_config(config_path, seed_override);
  if (name == "synth") {
    for (const auto& path : stcl::cmd_synth(cfg)) std::cout << path << "\n";
  } else if (name == "train") {
    stcl::TrainOutputs out = stcl::cmd_train(cfg);
    std::cout << out.checkpoint_path << "\n" << out.log_path << "\n";
    if (!out.log.empty()) {
      const auto& last = out.log.back().losses;
      std::fprintf(stderr, "final step: total=%.6f l_time=%.6f l_amp=%.6f l_phase=%.6f\n",
                   last.total, last.l_time, last.l_amp, last.l_phase);
    }
  } else if (name == "encode") {
    for (const auto& path : stcl::cmd_encode(cfg)) std::cout << path << "\n";
  } else if (name == "eval") {
    std::cout << stcl::cmd_eval(cfg).dump(2) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"seasonal-trend contrastive representation learning for forecasting"};
  app.require_subcommand(1);

  std::string config_path;
  std::int64_t seed_override = -1;
  for (const char* name : {"synth", "train", "encode", "eval"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--seed", seed_override, "override the config seed");
  }

  CLI11_PARSE(app, argc, argv);

  try {
    return run_command(app.get_subcommands().front()->get_name(), config_path,
                       seed_override);
  } catch (const stcl::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const stcl::data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const stcl::io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const stcl::dim_error& e) {
    std::cerr << "dimension error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
}
