#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

namespace {

struct CommandResult {
  int exit_code = -1;
  std::string output;
};

std::string temp_path(const std::string& stem) {
  return "/tmp/emopt_cli_" + std::to_string(::getpid()) + "_" + stem;
}

CommandResult run_cli(const std::string& args) {
  const std::string out_file = temp_path("out.txt");
  const std::string cmd = std::string(EMOPT_CLI_PATH) + " " + args + " > " + out_file + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CommandResult res;
  if (WIFEXITED(raw)) res.exit_code = WEXITSTATUS(raw);
  std::ifstream in(out_file);
  std::stringstream ss;
  ss << in.rdbuf();
  res.output = ss.str();
  return res;
}

std::string problem(const std::string& name) {
  return std::string(EMOPT_PROBLEMS_DIR) + "/" + name;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("solve subcommand reports the result and writes a trace") {
  const std::string trace = temp_path("trace_a.csv");
  const CommandResult res =
      run_cli("solve " + problem("unconstrained_qp_2d.json") + " --trace " + trace);
  REQUIRE(res.exit_code == 0);
  REQUIRE(res.output.find("status=Converged") != std::string::npos);
  REQUIRE(res.output.find("objective=") != std::string::npos);
  const std::string csv = read_file(trace);
  REQUIRE(csv.rfind("iter,objective_original,objective_transformed,step_norm,grad_norm,"
                    "kkt_residual,interior_margin\n",
                    0) == 0);
  REQUIRE(csv.find("\r") == std::string::npos);
}

TEST_CASE("repeated runs with a fixed seed give identical traces") {
  const std::string t1 = temp_path("trace_s1.csv");
  const std::string t2 = temp_path("trace_s2.csv");
  const CommandResult r1 =
      run_cli("solve " + problem("rect_quadratic_1d.json") + " --seed 5 --trace " + t1);
  const CommandResult r2 =
      run_cli("solve " + problem("rect_quadratic_1d.json") + " --seed 5 --trace " + t2);
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r2.exit_code == 0);
  const std::string c1 = read_file(t1);
  REQUIRE_FALSE(c1.empty());
  REQUIRE(c1 == read_file(t2));
}

TEST_CASE("exit codes follow the status contract") {
  REQUIRE(run_cli("solve " + problem("ineq_qp_1d.json")).exit_code == 0);

  const CommandResult truncated =
      run_cli("solve " + problem("unconstrained_qp_2d.json") + " --max-iter 1");
  REQUIRE(truncated.exit_code == 2);
  REQUIRE(truncated.output.find("status=MaxIter") != std::string::npos);

  // A bound override below the objective value forces a numerical failure.
  const std::string broken = temp_path("broken.json");
  {
    std::ofstream out(broken);
    out << R"({"kind": "poly_rect",
               "terms": [{"coef": 1.0, "exps": [2]},
                         {"coef": -1.0, "exps": [1]},
                         {"coef": 0.25, "exps": [0]}],
               "l": [0.0], "u": [1.0], "theta0": [0.1], "k_override": 0.1})";
  }
  const CommandResult failed = run_cli("solve " + broken);
  REQUIRE(failed.exit_code == 3);
  REQUIRE(failed.output.find("NumericalFailure") != std::string::npos);

  REQUIRE(run_cli("solve /nonexistent_problem.json").exit_code == 1);

  const std::string invalid = temp_path("invalid.json");
  {
    std::ofstream out(invalid);
    out << "{\"kind\": \"poly_rect\",";
  }
  const CommandResult parse_fail = run_cli("solve " + invalid);
  REQUIRE(parse_fail.exit_code == 1);
  REQUIRE(parse_fail.output.find("error") != std::string::npos);
}

TEST_CASE("check subcommand verifies the sample corpus") {
  const std::string all = problem("unconstrained_qp_2d.json") + " " + problem("l1_qp_2d.json") +
                          " " + problem("rect_quadratic_1d.json") + " " +
                          problem("simplex_cubic_3d.json") + " " + problem("box_qp_2d.json") +
                          " " + problem("ineq_qp_1d.json") + " " +
                          problem("polytope_cubic_3d.json") + " " + problem("dual_lp.json");
  const CommandResult res = run_cli("check " + all);
  REQUIRE(res.exit_code == 0);
  REQUIRE(res.output.find("FAIL") == std::string::npos);
  size_t passes = 0;
  for (size_t pos = 0; (pos = res.output.find("PASS", pos)) != std::string::npos; ++pos)
    ++passes;
  REQUIRE(passes == 8);
}

TEST_CASE("check subcommand flags a truncated solve") {
  const CommandResult res =
      run_cli("check " + problem("unconstrained_qp_2d.json") + " --max-iter 1");
  REQUIRE(res.exit_code == 3);
  REQUIRE(res.output.find("FAIL") != std::string::npos);
}
