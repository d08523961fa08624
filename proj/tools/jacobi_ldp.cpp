// jacobi_ldp: equilibrium / sample / ldp / sandwich runs from a config file.
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "jacobi_ldp/experiment.hpp"

using namespace jacobi_ldp;

namespace {

// --threads wins, then JACOBI_LDP_THREADS, then the core count.
int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("JACOBI_LDP_THREADS"); env && *env) {
    int k = 0;
    const std::string s(env);
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), k);
    if (ec != std::errc() || ptr != s.data() + s.size() || k < 1) {
      throw ConfigError("JACOBI_LDP_THREADS: expected a positive integer, got '" + s + "'");
    }
    return k;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Jacobi beta-ensemble equilibrium, sampling and large-deviation checks"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads_flag = 0;

  const std::pair<const char*, Command> commands[] = {
      {"equilibrium", Command::Equilibrium},
      {"sample", Command::Sample},
      {"ldp", Command::Ldp},
      {"sandwich", Command::Sandwich}};
  const char* help[] = {"solve for the equilibrium measure and effective potential",
                        "draw configurations and compare them with the equilibrium measure",
                        "estimate outlier probabilities and fit the decay rate",
                        "repeat the two-sided bound check on the outlier probability"};
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < 4; ++i) {
    CLI::App* sub = app.add_subcommand(commands[i].first, help[i]);
    sub->add_option("--config", config_path, "config file (key = value lines)")->required();
    sub->add_option("--out", out_dir, "output directory, overrides output.dir");
    sub->add_option("--seed", seed, "master seed, overrides seed");
    sub->add_option("--threads", threads_flag, "worker threads")->check(CLI::PositiveNumber);
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kConfigError;
  }

  Command cmd = Command::Equilibrium;
  CLI::App* chosen = nullptr;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (subs[i]->parsed()) {
      cmd = commands[i].second;
      chosen = subs[i];
    }
  }

  ExperimentConfig cfg;
  int threads = 1;
  try {
    cfg = load_config(config_path);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (chosen->count("--seed") > 0) cfg.seed = seed;
    check_for_command(cfg, cmd);
    threads = resolve_threads(threads_flag);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  }

  const std::string canonical = serialize_config(cfg, false);
  RunRecorder rec(cfg.output_dir, chosen->get_name(), canonical, cfg.seed);
  int rc = kOk;
  try {
    rec.write("config.canonical.txt", canonical);
    switch (cmd) {
      case Command::Equilibrium: rc = run_equilibrium_command(cfg, rec); break;
      case Command::Sample: rc = run_sample_command(cfg, rec); break;
      case Command::Ldp: rc = run_ldp_command(cfg, rec, threads); break;
      case Command::Sandwich: rc = run_sandwich_command(cfg, rec, threads); break;
    }
    rec.finish(threads);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  if (rc == kNonConvergence) std::cerr << "warning: equilibrium solver did not converge\n";
  if (rc == kInsufficientStatistics) std::cerr << "warning: too few N with enough hits to fit a rate\n";
  std::cout << rec.dir().string() << "\n";
  return rc;
}
