// specuniv command-line entry point.

#include "specuniv/specuniv.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace specuniv;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  std::optional<int> threads;
  std::optional<std::size_t> trials;
  std::string experiment;
};

RunConfig load(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.trials) {
    const std::size_t n = *f.trials;
    if (n < 1) throw SchemaError("--trials", "must be >= 1");
    if (!c.simulate) c.simulate = SimulateBlock{};
    c.simulate->trials = n;
    if (!c.verify) c.verify = VerifyBlock{};
    c.verify->trials = std::max<std::size_t>(n, 2);
    if (!c.cumulant_check) c.cumulant_check = CumulantBlock{};
    c.cumulant_check->trials = std::max<std::size_t>(n, 2);
    if (!c.experiment) c.experiment = ExperimentBlock{f.experiment, json::object()};
    c.experiment->overrides["trials"] = n;
  }
  if (!f.experiment.empty()) {
    if (!c.experiment) c.experiment = ExperimentBlock{};
    c.experiment->name = f.experiment;
  }
  return c;
}

int report(const RunOutcome& out, const RunContext& ctx) {
  for (const auto& file : out.files) std::cout << ctx.path(file) << "\n";
  bool ok = true;
  for (const auto& c : out.checks) {
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.describe() << "\n";
    ok = ok && c.pass;
  }
  return ok ? kExitOk : kExitAcceptance;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Universality toolkit for sums of independent random matrices"};
  app.require_subcommand(1);
  Flags flags;
  app.add_option("--config", flags.config, "JSON run configuration");
  app.add_option("--seed", flags.seed, "Seed override");
  app.add_option("--out", flags.out, "Output directory");
  app.add_option("--threads", flags.threads, "Worker threads (default: SPECUNIV_THREADS or all cores)");
  app.add_option("--trials", flags.trials, "Trial-count override");

  auto* params = app.add_subcommand("params", "Model parameters with provenance");
  auto* free = app.add_subcommand("free", "Free counterpart: edge, density, support");
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo spectra and statistics");
  auto* verify = app.add_subcommand("verify", "Compare X with its Gaussian counterpart");
  auto* bounds = app.add_subcommand("bounds", "Bound sweep CSV");
  auto* experiment = app.add_subcommand("experiment", "Run a named experiment");
  experiment->add_option("name", flags.experiment, "Experiment name (else taken from the config)");
  auto* cumulant = app.add_subcommand("cumulant-check", "Interpolation derivative identity check");
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitSchema;
  }

  try {
    RunContext ctx;
    ctx.config = load(flags);
    ctx.out_dir = flags.out;
    ctx.threads = flags.threads.value_or(default_threads());
    if (ctx.threads < 1) throw SchemaError("--threads", "must be >= 1");
    RunOutcome out;
    if (params->parsed()) out = cmd_params(ctx);
    else if (free->parsed()) out = cmd_free(ctx);
    else if (simulate->parsed()) out = cmd_simulate(ctx);
    else if (verify->parsed()) out = cmd_verify(ctx);
    else if (bounds->parsed()) out = cmd_bounds(ctx);
    else if (cumulant->parsed()) out = cmd_cumulant_check(ctx);
    else if (experiment->parsed()) {
      const std::string name = ctx.config.experiment ? ctx.config.experiment->name : "";
      if (name.empty()) throw SchemaError("$.experiment.name", "no experiment named; choose one of the known names");
      out = cmd_experiment(name, ctx);
    }
    return report(out, ctx);
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kExitSchema;
  } catch (const ConvergenceError& e) {
    std::cerr << "not converged: " << e.what() << "\n";
    return kExitConvergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
