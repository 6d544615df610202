#include <cstdint>
#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "prn/cli/commands.hpp"
#include "prn/runtime.hpp"

namespace {

struct Descriptions {
  const char* name;
  const char* help;
};

constexpr Descriptions kCommands[] = {
    {"degrade", "code frames with the codec simulator at each QP; writes reconstructions, partitions, rates"},
    {"train", "train one PR-CNN or PR-RNN checkpoint per QP"},
    {"filter", "run the in-loop filter over sequence manifests"},
    {"eval", "BD-rate table and R-D plot data from anchor/test curves"},
    {"gradcheck", "finite-difference check of every operator and network"},
    {"mmcu", "partition and MM-CU maps for a single frame"},
};

}  // namespace

int main(int argc, char** argv) {
  prn::tune_allocator();

  CLI::App app{"Progressive-rethinking in-loop filter toolkit"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out = "runs";
  bool force = false;
  bool quiet = false;
  app.add_option("--config", config_path, "key=value configuration file");
  auto* seed_opt = app.add_option("--seed", seed, "seed (overrides the config's seed key)");
  app.add_option("--out", out, "root directory for run outputs")->capture_default_str();
  app.add_flag("--force", force, "replace an existing run directory");
  app.add_flag("-q,--quiet", quiet, "suppress progress lines");
  for (const auto& c : kCommands) app.add_subcommand(c.name, c.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const prn::RunConfig cfg = config_path.empty() ? prn::RunConfig{} : prn::RunConfig::load(config_path);
    prn::cli::Context ctx;
    ctx.out_root = out;
    ctx.force = force;
    if (seed_opt->count() > 0) ctx.seed = seed;
    if (!quiet) ctx.log = &std::cerr;
    const prn::cli::Result r = prn::cli::run_command(command, cfg, ctx);
    std::cout << r.summary << "run directory: " << r.run_dir.string() << "\n";
  } catch (const prn::Error& e) {
    std::cerr << "error: " << e.kind() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
