#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hcap::solver {

struct LinearTerm {
  int var;
  double coef;
};

/// Sparse affine form sum(coef * x[var]) + constant.
struct AffineExpr {
  std::vector<LinearTerm> terms;
  double constant = 0.0;

  AffineExpr& add(int var, double coef) {
    if (coef != 0.0) terms.push_back({var, coef});
    return *this;
  }
  AffineExpr& add(const AffineExpr& other, double scale = 1.0) {
    for (const LinearTerm& t : other.terms) add(t.var, scale * t.coef);
    constant += scale * other.constant;
    return *this;
  }
  AffineExpr& shift(double c) {
    constant += c;
    return *this;
  }
  double evaluate(const Eigen::VectorXd& x) const {
    double v = constant;
    for (const LinearTerm& t : terms) v += t.coef * x[t.var];
    return v;
  }
};

/// sum_j squares[j]^2 + linear <= 0. Convex by construction; with no squares
/// it is a linear inequality.
struct ConvexInequality {
  std::vector<AffineExpr> squares;
  AffineExpr linear;
  std::string label;

  double evaluate(const Eigen::VectorXd& x) const {
    double v = linear.evaluate(x);
    for (const AffineExpr& s : squares) {
      const double e = s.evaluate(x);
      v += e * e;
    }
    return v;
  }
};

/// minimize objective(x) subject to equalities(x) == 0 and inequalities(x) <= 0.
class ConvexProgram {
 public:
  int add_variable(std::string name, double initial = 0.0);
  void add_equality(AffineExpr e, std::string label = {});
  std::size_t add_inequality(ConvexInequality c);
  void set_objective(AffineExpr e) { objective_ = std::move(e); }

  std::size_t variable_count() const { return names_.size(); }
  const std::vector<std::string>& variable_names() const { return names_; }
  const Eigen::VectorXd& initial_point() const { return initial_; }
  void set_initial(int var, double value) { initial_[var] = value; }
  const std::vector<AffineExpr>& equalities() const { return equalities_; }
  const std::vector<std::string>& equality_labels() const { return equality_labels_; }
  const std::vector<ConvexInequality>& inequalities() const { return inequalities_; }
  const AffineExpr& objective() const { return objective_; }

 private:
  std::vector<std::string> names_;
  Eigen::VectorXd initial_;
  std::vector<AffineExpr> equalities_;
  std::vector<std::string> equality_labels_;
  std::vector<ConvexInequality> inequalities_;
  AffineExpr objective_;
};

enum class SolveStatus { optimal, infeasible, solver_error };

std::string to_string(SolveStatus s);

struct SolverOptions {
  double feasibility_tol = 1e-10;   // primal residual, relative to 1 + |x|
  double optimality_tol = 1e-8;     // dual residual and duality gap
  double infeasibility_tol = 1e-8;  // certificate acceptance
  int max_iter = 100;
  double regularization = 1e-7;  // static KKT regularization
  bool verbose = false;          // per-iteration trace on stderr
};

struct SolverResult {
  SolveStatus status = SolveStatus::solver_error;
  Eigen::VectorXd x;
  Eigen::VectorXd inequality_dual;
  Eigen::VectorXd equality_dual;
  double objective = 0.0;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double gap = 0.0;
  double seconds = 0.0;
  std::string message;
};

/// Homogeneous self-dual interior-point method. Linear inequalities become
/// nonnegative-orthant rows and every convex quadratic inequality a rotated
/// second-order cone; steps use Nesterov-Todd scaling with Mehrotra
/// predictor-corrector. Infeasibility is read off the embedding's
/// certificates.
SolverResult solve(const ConvexProgram& program, const SolverOptions& options = {});

}  // namespace hcap::solver
