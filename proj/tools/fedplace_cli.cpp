// fedplace: run client-placement experiments and sweeps.
//
//   fedplace run      --config PATH [--seed N] [--out DIR] [--policy NAME] [--protocol push|pull]
//   fedplace sweep    --config SWEEP [--out DIR] [--jobs N] [--policy NAME] [--protocol push|pull]
//   fedplace validate --config PATH
//   fedplace presets
//
// Exit codes: 0 success, 1 run failure (or any failed sweep cell), 2 invalid
// configuration or usage.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "fedplace/fedplace.hpp"

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> policy;
  std::optional<std::string> protocol;
};

void apply(const Overrides& o, fedplace::ExperimentConfig& c) {
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.output_dir = *o.out;
  if (o.policy) {
    const auto p = fedplace::parse_policy(*o.policy);
    if (!p) throw fedplace::ConfigError("policy", "expected one of rr, srr, bu, lb; got '" + *o.policy + "'");
    c.policy = *p;
  }
  if (o.protocol) {
    if (*o.protocol == "push") c.protocol.mode = fedplace::ProtocolMode::kPush;
    else if (*o.protocol == "pull") c.protocol.mode = fedplace::ProtocolMode::kPull;
    else throw fedplace::ConfigError("protocol.mode", "expected push or pull; got '" + *o.protocol + "'");
  }
}

int cmd_run(const std::optional<std::string>& config_path, const Overrides& o) {
  auto config = config_path ? fedplace::load_config(*config_path) : fedplace::default_config();
  apply(o, config);
  fedplace::validate(config);
  const auto result = fedplace::run_experiment(config);
  fedplace::emit_run_report(config.output_dir, config, result);
  std::cout << "policy=" << fedplace::policy_name(result.policy)
            << " protocol=" << fedplace::protocol_name(result.protocol) << " rounds=" << result.rounds.size()
            << " clients=" << result.total_clients_trained() << '\n'
            << "throughput_cps " << fedplace::format_rate(result.throughput.mean) << " +- "
            << fedplace::format_rate(result.throughput.stddev) << '\n'
            << "timedelta_s " << fedplace::format_rate(result.timedelta.mean) << " +- "
            << fedplace::format_rate(result.timedelta.stddev) << '\n'
            << "wrote " << config.output_dir << '\n';
  return 0;
}

int cmd_sweep(const std::string& path, const Overrides& o, unsigned jobs) {
  auto spec = fedplace::load_sweep(path);
  apply(o, spec.base);
  fedplace::validate(spec);
  const auto report = fedplace::run_sweep(spec, jobs);
  fedplace::emit_sweep_report(spec.base.output_dir, spec, report);
  std::cout << fedplace::format_sweep_table(report);
  for (const auto& cell : report.cells) {
    if (!cell.result) std::cerr << "cell " << cell.label() << " failed: " << cell.error << '\n';
  }
  std::cout << "wrote " << spec.base.output_dir << '\n';
  return report.all_ok() ? 0 : 1;
}

int cmd_validate(const std::string& path) {
  const auto config = fedplace::load_config(path);
  std::cout << fedplace::config_to_json(config).dump(2) << '\n'
            << "fingerprint " << fedplace::config_fingerprint(config) << '\n';
  return 0;
}

int cmd_presets() {
  std::cout << "population presets:\n";
  for (const auto& name : fedplace::population_preset_names()) {
    const auto p = *fedplace::population_preset(name);
    const auto& d = std::get<fedplace::dist::LogNormal>(p.size_distribution);
    std::cout << "  " << name << ": clients=" << p.num_clients << " batch_size=" << p.batch_size
              << " lognormal(mu=" << d.mu << ", sigma=" << d.sigma << ")\n";
  }
  std::cout << "gpu presets:\n";
  for (const auto& name : fedplace::gpu_preset_names()) {
    const auto g = *fedplace::gpu_preset(name);
    std::cout << "  " << name << ": t(m) = " << g.latency_linear << "*m + " << g.latency_log_coeff << "*log("
              << g.latency_log_scale << "*m) + " << g.latency_offset << ", noise small/large=" << g.noise_sigma_small
              << "/" << g.noise_sigma_large << " (m < " << g.small_client_threshold
              << "), max_workers=" << g.max_workers << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Client placement simulator for federated-learning rounds"};
  app.require_subcommand(1);

  Overrides overrides;
  std::string config_path;
  unsigned jobs = 1;

  auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("--seed", overrides.seed, "Master seed");
    sub->add_option("--out", overrides.out, "Output directory (default: $POLLEN_SIM_OUT or ./fedplace-out)");
    sub->add_option("--policy", overrides.policy, "Placement policy: rr, srr, bu, lb");
    sub->add_option("--protocol", overrides.protocol, "Protocol: push or pull");
  };

  std::optional<std::string> run_config;
  auto* run = app.add_subcommand("run", "Run a single experiment");
  run->add_option("--config", run_config, "Experiment config (JSON); defaults apply when omitted");
  add_overrides(run);

  auto* sweep = app.add_subcommand("sweep", "Run a sweep spec");
  sweep->add_option("--config", config_path, "Sweep spec (JSON)")->required();
  sweep->add_option("--jobs", jobs, "Cells to run concurrently")->check(CLI::PositiveNumber);
  add_overrides(sweep);

  auto* validate = app.add_subcommand("validate", "Check a config and print it with defaults filled in");
  validate->add_option("--config", config_path, "Experiment config (JSON)")->required();

  app.add_subcommand("presets", "List built-in population and GPU presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Help and version requests exit 0; every other usage error exits 2.
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(run_config, overrides);
    if (*sweep) return cmd_sweep(config_path, overrides, jobs);
    if (*validate) return cmd_validate(config_path);
    return cmd_presets();
  } catch (const fedplace::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const fedplace::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
