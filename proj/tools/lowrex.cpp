#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "lowrex/experiments.hpp"
#include "lowrex/parallel.hpp"

namespace {

struct SubSpec {
  const char* name;
  const char* what;
};

constexpr SubSpec kSubs[] = {
    {"identifiability-sweep", "certificate success fractions over a (k, P) grid"},
    {"noise-robustness", "recovery error against noise norm at lambda = c*||w||"},
    {"model-identification", "manifold identification rates at calibrated small noise"},
    {"consistency-sweep", "model selection rate as measurements grow, lambda = P^a"},
    {"sure-curve", "unbiased risk estimate against true prediction error over a lambda grid"},
    {"fb-trace", "per-iteration solver trace with identification and rate diagnostics"},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lowrex: low-complexity regularization experiment harness"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 0;
  int jobs = lowrex::hardware_jobs();
  for (const SubSpec& s : kSubs) {
    CLI::App* sub = app.add_subcommand(s.name, s.what);
    sub->add_option("--config", config_path, "JSON run configuration")->required();
    sub->add_option("--out", out_dir, "output directory (default: the config's output field)");
    sub->add_option("--seed", seed, "master seed override");
    sub->add_option("--jobs", jobs, "worker threads; output bytes do not depend on this")
        ->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    lowrex::RunConfig cfg = lowrex::load_run_config(config_path);
    if (cfg.experiment != sub->get_name()) {
      std::fprintf(stderr, "config names experiment '%s' but '%s' was requested\n",
                   cfg.experiment.c_str(), sub->get_name().c_str());
      return 2;
    }
    if (sub->count("--seed") > 0) cfg.master_seed = seed;
    const std::string dir = sub->count("--out") > 0 ? out_dir : cfg.output;

    const lowrex::ExperimentResult res = lowrex::run_experiment(cfg, jobs);
    lowrex::write_outputs(res, dir);
    std::printf("wrote %s/%s.csv (%zu data rows)\n", dir.c_str(), cfg.experiment.c_str(),
                res.data.rows.size());
    if (!res.failures.empty()) {
      std::fprintf(stderr, "%zu unit(s) failed; details in %s/%s.meta.json\n",
                   res.failures.size(), dir.c_str(), cfg.experiment.c_str());
      return 3;
    }
    return 0;
  } catch (const lowrex::InvalidArgument& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
