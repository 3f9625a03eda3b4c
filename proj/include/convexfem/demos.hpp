#ifndef CONVEXFEM_DEMOS_HPP
#define CONVEXFEM_DEMOS_HPP

#include <map>
#include <string>

#include "convexfem/problem.hpp"

namespace convexfem {

struct DemoConfig {
  std::string demo;
  int n = 25;
  Diagonal diagonal = Diagonal::Right;
  std::string variant;    // cheeger: cg1|cg2|dg0|dg1|dual-rt
  std::string norm = "l2";
  std::map<std::string, double> params;
  std::map<std::string, std::string> str_params;  // image=..., mesh=...
  std::string out_dir = "out";
  double tol = 1e-8;
  bool export_program = false;
  unsigned seed = 0;
  std::function<void(const std::string&)> log;

  double param(const std::string& key, double fallback) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }
};

struct DemoResult {
  SolveStatus status = SolveStatus::MaxIter;
  double objective = 0.0;
  double gap = 0.0;
  int iterations = 0;
  std::map<std::string, double> extras;
};

/// Runs a demo, writes its artifacts (VTK fields, CSV summary, demo-specific
/// outputs) under config.out_dir and returns the scalar summary.
DemoResult run_demo(const DemoConfig& config);

/// Exit-code wrapper: 0 optimal, 2 solver non-optimal, 3 invalid config,
/// 4 IO error.
int run_demo_cli(const DemoConfig& config);

const std::vector<std::string>& demo_names();

}  // namespace convexfem

#endif
