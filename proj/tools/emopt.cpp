// Command line front end: solve a problem file, or check one against a
// reference method.

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "emopt/emopt.hpp"

namespace {

int log_level() {
  const char* v = std::getenv("EMOPT_LOG");
  if (!v || !*v) return 0;
  const std::string s(v);
  if (s == "0" || s == "off") return 0;
  if (s == "2" || s == "debug") return 2;
  return 1;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void print_summary(const emopt::SolveResult& r) {
  std::ostringstream point;
  point << "point=";
  for (emopt::Index i = 0; i < r.theta_star.size(); ++i) {
    if (i) point << ',';
    point << fmt(r.theta_star[i]);
  }
  std::cout << "status=" << emopt::to_string(r.status) << " objective=" << fmt(r.objective_star)
            << " iters=" << r.iterations << "\n"
            << point.str() << "\n";
}

int status_exit(emopt::Status s) {
  switch (s) {
    case emopt::Status::Converged: return 0;
    case emopt::Status::MaxIter: return 2;
    case emopt::Status::NumericalFailure: return 3;
  }
  return 3;
}

int run_solve(const std::string& path, const emopt::io::RunOverrides& ov,
              const std::string& trace_path) {
  const emopt::io::ProblemFile pf = emopt::io::parse_problem(path);
  const emopt::io::RunOutput out = emopt::io::run_problem(pf, ov);
  if (log_level() >= 1)
    std::cerr << path << ": kind=" << pf.kind << " iterations=" << out.result.iterations
              << " status=" << emopt::to_string(out.result.status) << "\n";
  if (log_level() >= 2)
    for (const auto& row : out.result.trace.rows)
      std::cerr << "  iter=" << row.iter << " objective=" << fmt(row.objective_original)
                << " step=" << fmt(row.step_norm) << " kkt=" << fmt(row.kkt_residual) << "\n";
  if (!trace_path.empty()) emopt::io::write_trace_csv(trace_path, out.result.trace);
  print_summary(out.result);
  return status_exit(out.result.status);
}

std::string check_line(const std::string& path, const emopt::io::CheckReport& rep) {
  std::ostringstream os;
  os << path << ": status=" << rep.status << " objective=" << fmt(rep.objective);
  os << " gap=" << (rep.gap ? fmt(*rep.gap) : "n/a");
  os << " kkt=" << (rep.kkt ? fmt(*rep.kkt) : "n/a");
  os << " monotone=" << (rep.monotone ? "yes" : "no");
  os << (rep.pass ? " PASS" : " FAIL");
  if (!rep.pass && !rep.reason.empty()) os << " (" << rep.reason << ")";
  return os.str();
}

int run_check(const std::vector<std::string>& paths, const emopt::io::RunOverrides& ov,
              const emopt::io::CheckOptions& co, int jobs) {
  std::vector<std::string> lines(paths.size());
  std::vector<int> codes(paths.size(), 0);
  const auto work = [&](size_t i) {
    try {
      const emopt::io::ProblemFile pf = emopt::io::parse_problem(paths[i]);
      const emopt::io::CheckReport rep = emopt::io::check_problem(pf, ov, co);
      lines[i] = check_line(paths[i], rep);
      codes[i] = rep.pass ? 0 : 3;
    } catch (const std::exception& e) {
      lines[i] = paths[i] + ": ERROR " + e.what();
      codes[i] = 1;
    }
  };
  if (jobs <= 1 || paths.size() <= 1) {
    for (size_t i = 0; i < paths.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    std::mutex next_mutex;
    size_t next = 0;
    const int count = std::min<int>(jobs, static_cast<int>(paths.size()));
    for (int t = 0; t < count; ++t)
      pool.emplace_back([&] {
        while (true) {
          size_t i;
          {
            std::lock_guard<std::mutex> lock(next_mutex);
            if (next >= paths.size()) return;
            i = next++;
          }
          work(i);
        }
      });
    for (auto& th : pool) th.join();
  }
  int exit_code = 0;
  for (size_t i = 0; i < paths.size(); ++i) {
    std::cout << lines[i] << "\n";
    if (codes[i] == 1) exit_code = 1;
    if (codes[i] == 3 && exit_code == 0) exit_code = 3;
  }
  return exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monotone interior solvers for polynomial and quadratic programs"};
  app.require_subcommand(1);

  std::string problem_path;
  std::string solver = "auto";
  std::string trace_path;
  int max_iter = -1;
  double tol = -1.0;
  int trace_every = 1;
  unsigned long seed = 0;

  auto* solve = app.add_subcommand("solve", "Solve a problem file");
  solve->add_option("problem", problem_path, "Problem JSON file")->required();
  solve->add_option("--solver", solver, "Solver name (auto picks by kind)");
  solve->add_option("--max-iter", max_iter, "Iteration cap");
  solve->add_option("--tol", tol, "Convergence tolerance");
  solve->add_option("--trace", trace_path, "Write the iterate trace CSV here");
  solve->add_option("--trace-every", trace_every, "Record every n-th iteration");
  solve->add_option("--seed", seed, "Seed for any randomized component (kept for reproducibility)");

  std::vector<std::string> check_paths;
  std::string oracle = "auto";
  int budget = 0;
  double gap_tol = 1e-3;
  double kkt_tol = 1e-4;
  int jobs = 1;

  auto* check = app.add_subcommand("check", "Solve and compare against a reference method");
  check->add_option("problems", check_paths, "Problem JSON files")->required();
  check->add_option("--solver", solver, "Solver name (auto picks by kind)");
  check->add_option("--oracle", oracle, "Reference method: grid, pgd, lp, or auto");
  check->add_option("--budget", budget, "Reference method size (grid nodes or iterations)");
  check->add_option("--gap-tol", gap_tol, "Relative objective gap tolerance");
  check->add_option("--kkt-tol", kkt_tol, "First-order residual tolerance");
  check->add_option("--max-iter", max_iter, "Iteration cap");
  check->add_option("--tol", tol, "Convergence tolerance");
  check->add_option("--jobs", jobs, "Run this many problems in parallel");
  check->add_option("--seed", seed, "Seed for any randomized component (kept for reproducibility)");

  CLI11_PARSE(app, argc, argv);

  emopt::io::RunOverrides ov;
  ov.solver = solver;
  if (max_iter >= 1) ov.max_iter = max_iter;
  if (tol > 0.0) ov.tol = tol;
  ov.trace_every = std::max(trace_every, 1);

  try {
    if (solve->parsed()) return run_solve(problem_path, ov, trace_path);
    emopt::io::CheckOptions co;
    co.oracle = oracle;
    co.budget = budget;
    co.gap_tol = gap_tol;
    co.kkt_tol = kkt_tol;
    return run_check(check_paths, ov, co, jobs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
