#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fsb::lp {

enum class Sense { Minimize, Maximize };
enum class RowSense { LessEqual, Equal, GreaterEqual };
enum class Status { Optimal, Infeasible, Unbounded, NumericalFailure };

const char* to_string(Status s);

struct Triplet {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

/// Sparse LP: optimise c'x subject to row constraints and x >= 0 (or free).
class LinearProgram {
 public:
  Sense sense = Sense::Minimize;

  int add_variable(double cost, bool free = false);
  int add_row(RowSense sense, double rhs);
  void add_entry(int row, int col, double value);

  int num_rows() const { return static_cast<int>(rhs_.size()); }
  int num_cols() const { return static_cast<int>(cost_.size()); }

  const std::vector<double>& cost() const { return cost_; }
  const std::vector<bool>& is_free() const { return free_; }
  const std::vector<RowSense>& row_sense() const { return row_sense_; }
  const std::vector<double>& rhs() const { return rhs_; }

  /// Entries sorted by (col, row) with duplicates summed and zeros removed.
  std::vector<Triplet> assembled() const;

  /// Writes the instance in CPLEX LP text format.
  void write_lp_format(std::ostream& os) const;

 private:
  std::vector<double> cost_;
  std::vector<bool> free_;
  std::vector<RowSense> row_sense_;
  std::vector<double> rhs_;
  std::vector<Triplet> entries_;
};

struct SolveOptions {
  double feas_tol = 1e-9;
  double gap_tol = 1e-9;
  int max_iter = 300;
  enum class Form { Auto, Primal, Dual } form = Form::Auto;
  bool verbose = false;
};

struct LpSolution {
  Status status = Status::NumericalFailure;
  double objective_value = 0.0;
  double dual_objective = 0.0;
  std::vector<double> primal;  // one per variable
  std::vector<double> duals;   // one per row; primal objective = rhs'duals at optimum
  int iterations = 0;
  bool dualized = false;
  std::string diagnostics;
};

/// Solves with a homogeneous self-dual Mehrotra interior-point method.
/// Deterministic for identical inputs.
LpSolution solve_lp(const LinearProgram& lp, const SolveOptions& opts = {});

/// Max |row activity - rhs| violation over all rows (signed by row sense) and
/// min(x) over nonnegative variables, for verifying a primal point.
double primal_violation(const LinearProgram& lp, const std::vector<double>& x);

}  // namespace fsb::lp
