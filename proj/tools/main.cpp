#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "commands.hpp"
#include "diffdvr/errors.hpp"
#include "diffdvr/parallel.hpp"
#include "run_config.hpp"

namespace {

const char* describe(const std::string& task) {
  if (task == "render") return "Render a phantom or volume file";
  if (task == "gradcheck") return "Compare adjoint, forward-mode and finite-difference gradients";
  if (task == "viewpoint") return "Best-viewpoint search by opacity-entropy ascent";
  if (task == "tf-recon") return "Reconstruct a transfer function from rendered images";
  if (task == "density-recon") return "Absorption-only density reconstruction";
  if (task == "color-recon") return "Emission-absorption density reconstruction via a color volume";
  if (task == "demo-1d") return "Loss and gradient table of the 1D Gaussian example";
  if (task == "phantom") return "Write a synthetic phantom volume";
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  using namespace diffdvr;
  CLI::App app{"Differentiable direct volume rendering"};
  app.require_subcommand(1);
  std::optional<int> threads;
  app.add_option("--threads", threads, "Worker threads (default: DIFFDVR_THREADS, else all cores)")
      ->check(CLI::PositiveNumber);

  std::string config_path, out_dir, run_name;
  std::optional<std::uint64_t> seed;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "JSON config file");
    sub->add_option("-o,--out", out_dir, "Output directory (overrides the config)");
    sub->add_option("--seed", seed, "RNG seed (overrides the config)");
    sub->fallthrough();
  };
  for (const auto& t : cli::task_names()) add_common(app.add_subcommand(t, describe(t)));
  auto* run = app.add_subcommand("run", "Run a task by name");
  run->add_option("task", run_name, "Task name")->required()->check(CLI::IsMember(cli::task_names()));
  add_common(run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string task = run->parsed() ? run_name : app.get_subcommands().front()->get_name();
  try {
    set_worker_count(threads.value_or(0));
    cli::RunConfig cfg(task);
    if (!config_path.empty()) cfg.merge_file(config_path);
    if (!out_dir.empty()) cfg.set("output", out_dir);
    if (seed) cfg.set("seed", *seed);
    return cli::run_task(cfg);
  } catch (const cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidParameter& e) {
    std::cerr << "invalid parameter: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
