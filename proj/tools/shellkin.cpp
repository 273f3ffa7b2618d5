// shellkin: run, list and describe built-in shell kinematics scenarios.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "shellkin/scenario.hpp"

namespace sc = shellkin::scenario;

int main(int argc, char** argv) {
  CLI::App app{"Shell kinematics scenarios: fields and energies from analytic, tracked or stereo data"};
  app.require_subcommand(1);

  std::string file;
  std::optional<std::string> out;
  std::optional<int> grid;
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "run a scenario file and write fields.csv and summary.json");
  run->add_option("file", file, "scenario JSON file")->required();
  run->add_option("--out", out, "output directory (overrides the file's \"output\")");
  run->add_option("--grid", grid, "grid points per direction")->check(CLI::Range(3, 100000));
  run->add_option("--seed", seed, "RNG seed");

  bool schema = false;
  auto* list = app.add_subcommand("list", "list built-in scenarios");
  list->add_flag("--schema", schema, "print the JSON Schema of scenario files instead");

  std::string name;
  bool as_json = false;
  auto* describe = app.add_subcommand("describe", "show a scenario's parameters and defaults");
  describe->add_option("name", name, "scenario name")->required();
  describe->add_flag("--json", as_json, "print a complete scenario file with every default");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*list && schema) {
      std::cout << sc::json_schema().dump(2) << '\n';
    } else if (*list) {
      for (const sc::Builtin& b : sc::builtins()) std::cout << b.name << "  " << b.summary << '\n';
    } else if (*describe) {
      const sc::Builtin& b = sc::require_builtin(name);
      if (as_json) std::cout << sc::default_config(b).dump(2) << '\n';
      else std::cout << sc::describe(b);
    } else if (*run) {
      sc::Scenario s = sc::load_scenario(file);
      sc::RunOptions o;
      o.grid = grid;
      o.seed = seed;
      if (out) o.out = std::filesystem::path(*out);
      sc::RunResult r = sc::run(s, o);
      std::cout << "wrote " << (r.out_dir / "fields.csv").string() << " and "
                << (r.out_dir / "summary.json").string() << '\n';
      const auto& e = r.summary["energy"];
      std::cout << "stretch_density " << e["stretch_density"].get<double>() << " N/mm, bend_density "
                << e["bend_density"].get<double>() << " N/mm\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
