#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "podt/cli.hpp"

namespace {

bool overnight_enabled() {
  const char* v = std::getenv("PODT_OVERNIGHT");
  return v != nullptr && *v != '\0' && std::string(v) != "0";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-chain consensus simulator with distinctive trust and behaviour prediction"};
  std::string config_path, suite_name, scheme_name, out_dir;
  std::optional<std::uint64_t> seed;
  double scale = 1.0;
  std::size_t seeds = 1, jobs = 1;
  bool plot = false, dump_miners = false, save_sidechain = false, list = false;

  app.add_option("--config", config_path, "Scenario config (JSON)");
  app.add_option("--suite", suite_name, "Run a built-in figure suite instead of one scenario");
  app.add_option("--out", out_dir, "Output directory (default: $PODT_OUT or ./podt_out)");
  app.add_option("--seed", seed, "Override the RNG seed (suites: first seed)");
  app.add_option("--scheme", scheme_name,
                 "Override the scheme: PoDT, Baseline, DiscTrustOnly, AllMiners, RandomMiners");
  app.add_option("--scale", scale, "Shrink users, chains and cycles by this factor");
  app.add_option("--seeds", seeds, "Seeds per suite variant");
  app.add_option("--jobs", jobs, "Suite variants run in parallel");
  app.add_flag("--plot", plot, "Also write SVG plots");
  app.add_flag("--dump-miners", dump_miners, "Write the miner sets chosen at each selection");
  app.add_flag("--save-sidechain", save_sidechain, "Write the side chain as sidechain.bin");
  app.add_flag("--list-suites", list, "Print the built-in suite names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return podt::kExitConfig;
  }

  if (list) {
    for (const std::string& s : podt::suite_names()) std::cout << s << '\n';
    return podt::kExitOk;
  }

  const std::filesystem::path out = out_dir.empty() ? podt::default_out_root() : std::filesystem::path(out_dir);
  try {
    if (!suite_name.empty()) {
      if (!config_path.empty()) throw podt::ConfigError("--suite and --config are exclusive");
      podt::ScenarioSuite suite = podt::builtin_suite(suite_name, scale);
      if (suite.overnight && !overnight_enabled()) {
        throw podt::ConfigError("suite '" + suite_name +
                                "' is long-running; set PODT_OVERNIGHT=1 to run it");
      }
      if (!scheme_name.empty()) {
        const podt::Scheme s = podt::parse_scheme(scheme_name);
        for (auto& v : suite.variants) v.cfg.scheme = s;
      }
      podt::SuiteOptions so;
      so.out_dir = out / suite_name;
      so.seeds = seeds;
      so.base_seed = seed.value_or(1);
      so.jobs = jobs;
      so.plot = plot;
      const auto runs = podt::run_suite(suite, so);
      std::cout << "suite " << suite_name << ": " << runs.size() << " runs written to "
                << so.out_dir.string() << '\n';
      return podt::kExitOk;
    }

    podt::SimConfig cfg = config_path.empty() ? podt::SimConfig{} : podt::load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (!scheme_name.empty()) cfg.scheme = podt::parse_scheme(scheme_name);
    cfg = podt::apply_scale(cfg, scale);
    cfg.validate();
    podt::RunOptions ro;
    ro.out_dir = out;
    ro.plot = plot;
    ro.dump_miners = dump_miners;
    ro.save_sidechain = save_sidechain;
    const podt::RunResult r = podt::run_scenario(cfg, ro);
    std::cout << "scheme " << podt::to_string(cfg.scheme) << ", " << r.series.size()
              << " cycles, accuracy "
              << (r.summary.accuracy ? podt::format_double(*r.summary.accuracy) : "n/a")
              << ", output in " << out.string() << '\n';
    return podt::kExitOk;
  } catch (const podt::MissingFileError& e) {
    std::cerr << "config error (missing file): " << e.what() << '\n';
    return podt::kExitConfig;
  } catch (const podt::SchemaError& e) {
    std::cerr << "config error (schema violation): " << e.what() << '\n';
    return podt::kExitConfig;
  } catch (const podt::ConfigError& e) {
    std::cerr << "config error (invalid parameters): " << e.what() << '\n';
    return podt::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << '\n';
    return podt::kExitRuntime;
  }
}
