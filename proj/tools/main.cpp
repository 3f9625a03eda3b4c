#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "convexfem/demos.hpp"

int main(int argc, char** argv) {
  CLI::App app{"convexfem - convex variational problems as conic programs"};
  app.require_subcommand(1);

  convexfem::DemoConfig cfg;
  std::string diagonal = "right";
  std::vector<std::string> kv_params;
  bool verbose = false;

  for (const auto& name : convexfem::demo_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--n", cfg.n, "mesh subdivisions per side");
    sub->add_option("--diagonal", diagonal, "left|right|crossed");
    sub->add_option("--variant", cfg.variant, "demo variant");
    sub->add_option("--norm", cfg.norm, "l1|l2|linf");
    sub->add_option("--param", kv_params, "extra parameters key=value")
        ->take_all();
    sub->add_option("--out", cfg.out_dir, "output directory");
    sub->add_option("--tol", cfg.tol, "solver tolerance");
    sub->add_option("--seed", cfg.seed, "RNG seed");
    sub->add_flag("--export-program", cfg.export_program,
                  "write the assembled conic program");
    sub->add_flag("--verbose", verbose, "print solver iterations");
  }

  CLI11_PARSE(app, argc, argv);

  cfg.demo = app.get_subcommands().front()->get_name();
  try {
    cfg.diagonal = convexfem::parse_diagonal(diagonal);
    for (const auto& kv : kv_params) {
      auto at = kv.find('=');
      if (at == std::string::npos)
        throw std::invalid_argument("--param expects key=value, got '" + kv +
                                    "'");
      std::string key = kv.substr(0, at), value = kv.substr(at + 1);
      try {
        size_t used = 0;
        double number = std::stod(value, &used);
        if (used == value.size()) {
          cfg.params[key] = number;
          continue;
        }
      } catch (const std::exception&) {
      }
      cfg.str_params[key] = value;
    }
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid config: %s\n", e.what());
    return 3;
  }
  if (verbose)
    cfg.log = [](const std::string& line) {
      std::fprintf(stderr, "%s\n", line.c_str());
    };

  int code = convexfem::run_demo_cli(cfg);
  if (code == 0 || code == 2) {
    std::printf("%s: see %s/summary.csv\n", cfg.demo.c_str(),
                cfg.out_dir.c_str());
  }
  return code;
}
