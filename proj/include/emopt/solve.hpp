#pragma once

// Shared solver plumbing: status codes, per-iteration trace records, and the
// configuration/result structs used by every solver entry point.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "emopt/types.hpp"

namespace emopt {

enum class Status { Converged, MaxIter, NumericalFailure };

inline const char* to_string(Status s) {
  switch (s) {
    case Status::Converged: return "Converged";
    case Status::MaxIter: return "MaxIter";
    case Status::NumericalFailure: return "NumericalFailure";
  }
  return "Unknown";
}

// One row per completed iteration; step_norm is the norm of the update that
// produced this iterate, the other columns describe the new iterate itself.
// interior_margin is +inf for unconstrained solvers.
struct TraceRow {
  int iter = 0;
  double objective_original = 0.0;
  double objective_transformed = 0.0;
  double step_norm = 0.0;
  double grad_norm = 0.0;
  double kkt_residual = 0.0;
  double interior_margin = std::numeric_limits<double>::infinity();
};

struct IterateTrace {
  std::vector<TraceRow> rows;
};

struct SolverConfig {
  int max_iter = 10000;
  double grad_tol = 1e-8;
  int trace_every = 1;
  double shrink = 0.9;                 // diagonal step-size rule factor
  std::optional<double> delta;         // K slack; resolved from the bound when unset
  std::optional<double> k_override;    // replaces the computed K (diagnostic use)
};

struct SolveResult {
  Vector theta_star;
  double objective_star = std::numeric_limits<double>::quiet_NaN();
  Status status = Status::NumericalFailure;
  IterateTrace trace;
  int iterations = 0;
  // Populated only when a solver is asked to cross-check its factored Newton
  // path against the dense one.
  double smw_check_max_diff = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

// Records rows honoring trace_every, always including the final iteration.
class TraceSink {
 public:
  explicit TraceSink(const SolverConfig& cfg, IterateTrace* out)
      : every_(cfg.trace_every > 0 ? cfg.trace_every : 1), out_(out) {}

  void record(const TraceRow& row, bool force = false) {
    if (!out_) return;
    pending_ = row;
    has_pending_ = true;
    if (force || row.iter % every_ == 0) emit(row);
  }

  // Ensures the last seen iteration is present even when the stride skipped it.
  void finalize() {
    if (out_ && has_pending_) emit(pending_);
  }

 private:
  void emit(const TraceRow& row) {
    if (!out_->rows.empty() && out_->rows.back().iter == row.iter) return;
    out_->rows.push_back(row);
  }

  int every_;
  IterateTrace* out_;
  TraceRow pending_;
  bool has_pending_ = false;
};

inline bool step_small(double step_norm, double theta_norm, double tol) {
  return step_norm <= tol * (1.0 + theta_norm);
}

}  // namespace detail

}  // namespace emopt
