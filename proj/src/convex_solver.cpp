#include "hcap/convex_solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>

#include <Eigen/OrderingMethods>
#include <Eigen/SparseCore>

namespace hcap::solver {

int ConvexProgram::add_variable(std::string name, double initial) {
  names_.push_back(std::move(name));
  initial_.conservativeResize(static_cast<Eigen::Index>(names_.size()));
  initial_[initial_.size() - 1] = initial;
  return static_cast<int>(names_.size()) - 1;
}

void ConvexProgram::add_equality(AffineExpr e, std::string label) {
  equalities_.push_back(std::move(e));
  equality_labels_.push_back(std::move(label));
}

std::size_t ConvexProgram::add_inequality(ConvexInequality c) {
  inequalities_.push_back(std::move(c));
  return inequalities_.size() - 1;
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::solver_error: return "solver_error";
  }
  return "?";
}

namespace {

using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Vec = Eigen::VectorXd;
using Triplet = Eigen::Triplet<double, int>;

class QuasiDefiniteLdlt {
 public:
  void analyze(const SpMat& upper, std::vector<double> signs) {
    n_ = static_cast<int>(upper.rows());
    Eigen::PermutationMatrix<Eigen::Dynamic, Eigen::Dynamic, int> perm;
    Eigen::AMDOrdering<int> amd;
    amd(upper, perm);
    perm_.assign(perm.indices().data(), perm.indices().data() + n_);  // new index -> old index
    pinv_.assign(static_cast<std::size_t>(n_), 0);
    for (int k = 0; k < n_; ++k) pinv_[static_cast<std::size_t>(perm_[static_cast<std::size_t>(k)])] = k;
    signs_.resize(static_cast<std::size_t>(n_));
    for (int k = 0; k < n_; ++k) signs_[static_cast<std::size_t>(k)] = signs[static_cast<std::size_t>(perm_[static_cast<std::size_t>(k)])];

    // Permuted upper pattern, remembering where each source value lands.
    struct Entry {
      int row, col, src;
    };
    std::vector<Entry> entries;
    entries.reserve(static_cast<std::size_t>(upper.nonZeros()));
    for (int c = 0; c < n_; ++c) {
      for (int q = upper.outerIndexPtr()[c]; q < upper.outerIndexPtr()[c + 1]; ++q) {
        const int r = upper.innerIndexPtr()[q];
        const int pr = pinv_[static_cast<std::size_t>(r)];
        const int pc = pinv_[static_cast<std::size_t>(c)];
        entries.push_back({std::min(pr, pc), std::max(pr, pc), q});
      }
    }
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return a.col != b.col ? a.col < b.col : a.row < b.row; });
    ap_.assign(static_cast<std::size_t>(n_) + 1, 0);
    ai_.resize(entries.size());
    ax_.resize(entries.size());
    src_.resize(entries.size());
    for (std::size_t q = 0; q < entries.size(); ++q) {
      ++ap_[static_cast<std::size_t>(entries[q].col) + 1];
      ai_[q] = entries[q].row;
      src_[q] = entries[q].src;
    }
    for (int k = 0; k < n_; ++k) ap_[static_cast<std::size_t>(k) + 1] += ap_[static_cast<std::size_t>(k)];

    // Elimination tree and column counts.
    parent_.assign(static_cast<std::size_t>(n_), -1);
    lnz_.assign(static_cast<std::size_t>(n_), 0);
    std::vector<int> flag(static_cast<std::size_t>(n_));
    for (int k = 0; k < n_; ++k) {
      flag[static_cast<std::size_t>(k)] = k;
      for (int q = ap_[static_cast<std::size_t>(k)]; q < ap_[static_cast<std::size_t>(k) + 1]; ++q) {
        int i = ai_[static_cast<std::size_t>(q)];
        for (; i < k && flag[static_cast<std::size_t>(i)] != k; i = parent_[static_cast<std::size_t>(i)]) {
          if (parent_[static_cast<std::size_t>(i)] == -1) parent_[static_cast<std::size_t>(i)] = k;
          ++lnz_[static_cast<std::size_t>(i)];
          flag[static_cast<std::size_t>(i)] = k;
        }
      }
    }
    lp_.assign(static_cast<std::size_t>(n_) + 1, 0);
    for (int k = 0; k < n_; ++k) lp_[static_cast<std::size_t>(k) + 1] = lp_[static_cast<std::size_t>(k)] + lnz_[static_cast<std::size_t>(k)];
    li_.resize(static_cast<std::size_t>(lp_.back()));
    lx_.resize(static_cast<std::size_t>(lp_.back()));
    d_.resize(static_cast<std::size_t>(n_));
  }

  /// Factorizes the matrix whose values are `values` (same pattern as analyzed).
  /// Returns the number of regularized pivots, or -1 on breakdown.
  int factorize(const double* values) {
    for (std::size_t q = 0; q < src_.size(); ++q) ax_[q] = values[src_[q]];
    const auto n = static_cast<std::size_t>(n_);
    std::vector<double> y(n, 0.0);
    std::vector<int> pattern(n), flag(n), nz(n, 0);
    constexpr double eps = 1e-13;
    constexpr double delta = 1e-8;
    int bumped = 0;
    for (int k = 0; k < n_; ++k) {
      const auto K = static_cast<std::size_t>(k);
      y[K] = 0.0;
      int top = n_;
      flag[K] = k;
      for (int q = ap_[K]; q < ap_[K + 1]; ++q) {
        int i = ai_[static_cast<std::size_t>(q)];
        y[static_cast<std::size_t>(i)] += ax_[static_cast<std::size_t>(q)];
        int len = 0;
        for (; flag[static_cast<std::size_t>(i)] != k; i = parent_[static_cast<std::size_t>(i)]) {
          pattern[static_cast<std::size_t>(len++)] = i;
          flag[static_cast<std::size_t>(i)] = k;
        }
        while (len > 0) pattern[static_cast<std::size_t>(--top)] = pattern[static_cast<std::size_t>(--len)];
      }
      double dk = y[K];
      y[K] = 0.0;
      for (; top < n_; ++top) {
        const auto i = static_cast<std::size_t>(pattern[static_cast<std::size_t>(top)]);
        const double yi = y[i];
        y[i] = 0.0;
        const int end = lp_[i] + nz[i];
        for (int q = lp_[i]; q < end; ++q) {
          y[static_cast<std::size_t>(li_[static_cast<std::size_t>(q)])] -= lx_[static_cast<std::size_t>(q)] * yi;
        }
        const double lki = yi / d_[i];
        dk -= lki * yi;
        li_[static_cast<std::size_t>(end)] = k;
        lx_[static_cast<std::size_t>(end)] = lki;
        ++nz[i];
      }
      if (signs_[K] * dk < eps) {
        dk = signs_[K] * delta;
        ++bumped;
      }
      if (!std::isfinite(dk)) return -1;
      d_[K] = dk;
    }
    return bumped;
  }

  Vec solve(const Vec& rhs) const {
    const auto n = static_cast<std::size_t>(n_);
    Vec x(n_);
    for (std::size_t k = 0; k < n; ++k) x[static_cast<Eigen::Index>(k)] = rhs[perm_[k]];
    for (std::size_t j = 0; j < n; ++j) {
      const double xj = x[static_cast<Eigen::Index>(j)];
      for (int q = lp_[j]; q < lp_[j + 1]; ++q) x[li_[static_cast<std::size_t>(q)]] -= lx_[static_cast<std::size_t>(q)] * xj;
    }
    for (std::size_t j = 0; j < n; ++j) x[static_cast<Eigen::Index>(j)] /= d_[j];
    for (std::size_t j = n; j-- > 0;) {
      double xj = x[static_cast<Eigen::Index>(j)];
      for (int q = lp_[j]; q < lp_[j + 1]; ++q) xj -= lx_[static_cast<std::size_t>(q)] * x[li_[static_cast<std::size_t>(q)]];
      x[static_cast<Eigen::Index>(j)] = xj;
    }
    Vec out(n_);
    for (std::size_t k = 0; k < n; ++k) out[perm_[k]] = x[static_cast<Eigen::Index>(k)];
    return out;
  }

 private:
  int n_ = 0;
  std::vector<int> perm_, pinv_;
  std::vector<double> signs_;
  std::vector<int> ap_, ai_, src_;
  std::vector<double> ax_;
  std::vector<int> parent_, lnz_, lp_, li_;
  std::vector<double> lx_, d_;
};


// ---------------------------------------------------------------------------
// Second-order cone algebra on a segment u = (u0, u1).

double soc_det(const Vec& u, int off, int dim) {
  const double u0 = u[off];
  return u0 * u0 - u.segment(off + 1, dim - 1).squaredNorm();
}

/// Largest alpha with u + alpha du in the cone, given u in its interior.
double soc_max_step(const Vec& u, const Vec& du, int off, int dim) {
  const double c = soc_det(u, off, dim);
  if (c <= 0.0) return 0.0;
  const double b = u[off] * du[off] - u.segment(off + 1, dim - 1).dot(du.segment(off + 1, dim - 1));
  const double a = du[off] * du[off] - du.segment(off + 1, dim - 1).squaredNorm();
  const double disc = b * b - a * c;
  if (a < 0.0 || (b < 0.0 && disc >= 0.0)) return c / (std::sqrt(std::max(disc, 0.0)) - b);
  return std::numeric_limits<double>::infinity();
}

struct SocBlock {
  int offset = 0;
  int dim = 0;
};

/// Nesterov-Todd scaling of one cone: W = eta [[w0, w1^T], [w1, I + w1 w1^T / (1 + w0)]].
struct SocScaling {
  double eta = 1.0;
  Vec w;  // normalized scaling point, w0^2 - |w1|^2 = 1
};

Vec soc_apply(const SocScaling& sc, const Vec& v, bool inverse) {
  const int d = static_cast<int>(v.size());
  const double w0 = sc.w[0];
  const auto w1 = sc.w.tail(d - 1);
  const double v0 = v[0];
  const auto v1 = v.tail(d - 1);
  const double w1v1 = w1.dot(v1);
  const double sign = inverse ? -1.0 : 1.0;
  Vec out(d);
  out[0] = w0 * v0 + sign * w1v1;
  out.tail(d - 1) = v1 + (sign * v0 + w1v1 / (1.0 + w0)) * w1;
  return inverse ? Vec(out / sc.eta) : Vec(out * sc.eta);
}

Eigen::MatrixXd soc_matrix(const SocScaling& sc, int d) {
  Eigen::MatrixXd w(d, d);
  const auto w1 = sc.w.tail(d - 1);
  w(0, 0) = sc.w[0];
  w.block(0, 1, 1, d - 1) = w1.transpose();
  w.block(1, 0, d - 1, 1) = w1;
  w.block(1, 1, d - 1, d - 1) = Eigen::MatrixXd::Identity(d - 1, d - 1) + w1 * w1.transpose() / (1.0 + sc.w[0]);
  return sc.eta * w;
}

SocScaling soc_nt_scaling(const Vec& s, const Vec& z) {
  const int d = static_cast<int>(s.size());
  const double s_norm = std::sqrt(std::max(s[0] * s[0] - s.tail(d - 1).squaredNorm(), 1e-300));
  const double z_norm = std::sqrt(std::max(z[0] * z[0] - z.tail(d - 1).squaredNorm(), 1e-300));
  const Vec sb = s / s_norm;
  const Vec zb = z / z_norm;
  const double gamma = std::sqrt(std::max((1.0 + sb.dot(zb)) / 2.0, 1e-300));
  SocScaling sc;
  sc.w.resize(d);
  sc.w[0] = (sb[0] + zb[0]) / (2.0 * gamma);
  sc.w.tail(d - 1) = (sb.tail(d - 1) - zb.tail(d - 1)) / (2.0 * gamma);
  sc.eta = std::sqrt(s_norm / z_norm);
  return sc;
}

// ---------------------------------------------------------------------------

/// min c^T x  s.t.  A x = b,  G x + s = h,  s in K, with K = R+^l x SOC x ...
class ConicSolver {
 public:
  ConicSolver(const ConvexProgram& prog, const SolverOptions& opt) : prog_(prog), opt_(opt) {
    n_ = static_cast<int>(prog.variable_count());
    p_ = static_cast<int>(prog.equalities().size());
    c_ = Vec::Zero(n_);
    for (const LinearTerm& t : prog.objective().terms) c_[t.var] += t.coef;

    std::vector<Triplet> at;
    b_ = Vec::Zero(p_);
    for (int j = 0; j < p_; ++j) {
      const AffineExpr& e = prog.equalities()[static_cast<std::size_t>(j)];
      for (const LinearTerm& t : e.terms) at.emplace_back(j, t.var, t.coef);
      b_[j] = -e.constant;
    }
    A_.resize(p_, n_);
    A_.setFromTriplets(at.begin(), at.end());

    // Orthant rows first, then one rotated cone per quadratic inequality.
    const auto& ineq = prog.inequalities();
    row_of_.assign(ineq.size(), -1);
    soc_of_.assign(ineq.size(), -1);
    l_ = 0;
    for (std::size_t k = 0; k < ineq.size(); ++k) {
      if (ineq[k].squares.empty()) row_of_[k] = l_++;
    }
    m_ = l_;
    for (std::size_t k = 0; k < ineq.size(); ++k) {
      if (ineq[k].squares.empty()) continue;
      const int dim = static_cast<int>(ineq[k].squares.size()) + 2;
      soc_of_[k] = static_cast<int>(soc_.size());
      row_of_[k] = m_;
      soc_.push_back({m_, dim});
      m_ += dim;
    }
    degree_ = l_ + static_cast<int>(soc_.size());

    std::vector<Triplet> gt;
    h_ = Vec::Zero(m_);
    for (std::size_t k = 0; k < ineq.size(); ++k) {
      const ConvexInequality& ci = ineq[k];
      const int r = row_of_[k];
      const double c0 = ci.linear.constant;
      if (ci.squares.empty()) {
        // g x + c0 <= 0  ->  s = -c0 - g x
        for (const LinearTerm& t : ci.linear.terms) gt.emplace_back(r, t.var, t.coef);
        h_[r] = -c0;
        continue;
      }
      // sum e_j^2 <= zeta := -(g x + c0) as ((zeta + 1)/2, e, (zeta - 1)/2) in the cone.
      const int last = r + static_cast<int>(ci.squares.size()) + 1;
      for (const LinearTerm& t : ci.linear.terms) {
        gt.emplace_back(r, t.var, 0.5 * t.coef);
        gt.emplace_back(last, t.var, 0.5 * t.coef);
      }
      h_[r] = 0.5 * (1.0 - c0);
      h_[last] = 0.5 * (-1.0 - c0);
      for (std::size_t j = 0; j < ci.squares.size(); ++j) {
        const int row = r + 1 + static_cast<int>(j);
        for (const LinearTerm& t : ci.squares[j].terms) gt.emplace_back(row, t.var, -t.coef);
        h_[row] = ci.squares[j].constant;
      }
    }
    G_.resize(m_, n_);
    G_.setFromTriplets(gt.begin(), gt.end());
    b_scale_ = 1.0 + std::max(p_ ? b_.lpNorm<Eigen::Infinity>() : 0.0, m_ ? h_.lpNorm<Eigen::Infinity>() : 0.0);
    c_scale_ = 1.0 + (n_ ? c_.lpNorm<Eigen::Infinity>() : 0.0);
    equilibrate();
    build_kkt();
  }

  SolverResult run();

 private:
  /// Ruiz scaling: A <- Ea A D, G <- Eg G D, one row factor per cone block.
  void equilibrate() {
    d_col_ = Vec::Ones(n_);
    e_eq_ = Vec::Ones(p_);
    e_cone_ = Vec::Ones(m_);
    for (int pass = 0; pass < 15; ++pass) {
      Vec col = Vec::Zero(n_), row_a = Vec::Zero(p_), row_g = Vec::Zero(m_);
      for (int j = 0; j < n_; ++j) {
        for (SpMat::InnerIterator it(A_, j); it; ++it) {
          col[j] = std::max(col[j], std::abs(it.value()));
          row_a[it.row()] = std::max(row_a[it.row()], std::abs(it.value()));
        }
        for (SpMat::InnerIterator it(G_, j); it; ++it) {
          col[j] = std::max(col[j], std::abs(it.value()));
          row_g[it.row()] = std::max(row_g[it.row()], std::abs(it.value()));
        }
      }
      for (const SocBlock& cb : soc_) {
        const double mx = row_g.segment(cb.offset, cb.dim).maxCoeff();
        row_g.segment(cb.offset, cb.dim).setConstant(mx);
      }
      auto factor = [](double v) { return v > 0.0 ? std::clamp(1.0 / std::sqrt(v), 1e-4, 1e4) : 1.0; };
      double spread = 0.0;
      for (int j = 0; j < n_; ++j) {
        spread = std::max(spread, std::abs(1.0 - col[j]));
        col[j] = factor(col[j]);
      }
      for (int r = 0; r < p_; ++r) {
        spread = std::max(spread, std::abs(1.0 - row_a[r]));
        row_a[r] = factor(row_a[r]);
      }
      for (int r = 0; r < m_; ++r) {
        spread = std::max(spread, std::abs(1.0 - row_g[r]));
        row_g[r] = factor(row_g[r]);
      }
      if (spread < 1e-2) break;
      A_ = row_a.asDiagonal() * A_ * col.asDiagonal();
      G_ = row_g.asDiagonal() * G_ * col.asDiagonal();
      d_col_ = d_col_.cwiseProduct(col);
      e_eq_ = e_eq_.cwiseProduct(row_a);
      e_cone_ = e_cone_.cwiseProduct(row_g);
    }
    c_ = c_.cwiseProduct(d_col_);
    b_ = b_.cwiseProduct(e_eq_);
    h_ = h_.cwiseProduct(e_cone_);
  }

  // The KKT system is kept in scaled form
  //   [ reg I   A^T  (W^-1 G)^T ] [x]
  //   [ A      -reg  0          ] [y]
  //   [ W^-1 G  0    -I - reg   ] [z^]   with z = W^-1 z^,
  // which stays well conditioned when the cone scaling W degenerates.
  void build_kkt() {
    const int dim = n_ + p_ + m_;
    std::vector<Triplet> trip;
    for (int i = 0; i < dim; ++i) trip.emplace_back(i, i, 0.0);
    for (int j = 0; j < A_.outerSize(); ++j) {
      for (SpMat::InnerIterator it(A_, j); it; ++it) trip.emplace_back(j, n_ + it.row(), 0.0);
    }
    // Columns touched by each cone block; W^-1 mixes the block rows.
    std::vector<int> block_of(static_cast<std::size_t>(m_), -1);
    for (std::size_t q = 0; q < soc_.size(); ++q) {
      for (int a = 0; a < soc_[q].dim; ++a) block_of[static_cast<std::size_t>(soc_[q].offset + a)] = static_cast<int>(q);
    }
    soc_cols_.assign(soc_.size(), {});
    for (int j = 0; j < G_.outerSize(); ++j) {
      for (SpMat::InnerIterator it(G_, j); it; ++it) {
        const int q = block_of[static_cast<std::size_t>(it.row())];
        if (q < 0) {
          trip.emplace_back(j, n_ + p_ + it.row(), 0.0);
        } else if (soc_cols_[static_cast<std::size_t>(q)].empty() || soc_cols_[static_cast<std::size_t>(q)].back() != j) {
          soc_cols_[static_cast<std::size_t>(q)].push_back(j);
        }
      }
    }
    soc_g_.assign(soc_.size(), {});
    for (std::size_t q = 0; q < soc_.size(); ++q) {
      const SocBlock& cb = soc_[q];
      const auto& cols = soc_cols_[q];
      soc_g_[q] = Eigen::MatrixXd::Zero(cb.dim, static_cast<Eigen::Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c) {
        for (SpMat::InnerIterator it(G_, cols[c]); it; ++it) {
          if (block_of[static_cast<std::size_t>(it.row())] == static_cast<int>(q)) {
            soc_g_[q](it.row() - cb.offset, static_cast<Eigen::Index>(c)) = it.value();
          }
        }
        for (int a = 0; a < cb.dim; ++a) trip.emplace_back(cols[c], n_ + p_ + cb.offset + a, 0.0);
      }
    }
    K_.resize(dim, dim);
    K_.setFromTriplets(trip.begin(), trip.end());
    K_.makeCompressed();

    diag_slot_.resize(dim);
    for (int i = 0; i < dim; ++i) diag_slot_[i] = find_slot(i, i);
    static_slots_.clear();
    static_values_.clear();
    for (int j = 0; j < A_.outerSize(); ++j) {
      for (SpMat::InnerIterator it(A_, j); it; ++it) {
        static_slots_.push_back(find_slot(j, n_ + it.row()));
        static_values_.push_back(it.value());
      }
    }
    orth_slots_.clear();
    orth_values_.clear();
    orth_rows_.clear();
    for (int j = 0; j < G_.outerSize(); ++j) {
      for (SpMat::InnerIterator it(G_, j); it; ++it) {
        if (block_of[static_cast<std::size_t>(it.row())] >= 0) continue;
        orth_slots_.push_back(find_slot(j, n_ + p_ + it.row()));
        orth_values_.push_back(it.value());
        orth_rows_.push_back(it.row());
      }
    }
    soc_slots_.assign(soc_.size(), {});
    for (std::size_t q = 0; q < soc_.size(); ++q) {
      for (int col : soc_cols_[q]) {
        for (int a = 0; a < soc_[q].dim; ++a) soc_slots_[q].push_back(find_slot(col, n_ + p_ + soc_[q].offset + a));
      }
    }
    std::vector<double> signs(dim, -1.0);
    std::fill(signs.begin(), signs.begin() + n_, 1.0);
    ldlt_.analyze(K_, std::move(signs));
  }

  int find_slot(int row, int col) const {
    const int* inner = K_.innerIndexPtr();
    const int* it = std::lower_bound(inner + K_.outerIndexPtr()[col], inner + K_.outerIndexPtr()[col + 1], row);
    return static_cast<int>(it - inner);
  }

  /// Fills the KKT matrix with the current scaling and factorizes it.
  bool factorize() {
    double* val = K_.valuePtr();
    std::fill(val, val + K_.nonZeros(), 0.0);
    for (std::size_t q = 0; q < static_slots_.size(); ++q) val[static_slots_[q]] += static_values_[q];
    for (std::size_t q = 0; q < orth_slots_.size(); ++q) val[orth_slots_[q]] += orth_values_[q] / w_orth_[orth_rows_[q]];
    const double reg = opt_.regularization;
    for (int i = 0; i < n_; ++i) val[diag_slot_[i]] += reg;
    for (int i = n_; i < n_ + p_; ++i) val[diag_slot_[i]] -= reg;
    for (int i = n_ + p_; i < n_ + p_ + m_; ++i) val[diag_slot_[i]] -= 1.0 + reg;
    for (std::size_t q = 0; q < soc_.size(); ++q) {
      const int d = soc_[q].dim;
      SocScaling inv = nt_[q];
      inv.eta = 1.0 / inv.eta;
      inv.w.tail(d - 1) = -inv.w.tail(d - 1);
      const Eigen::MatrixXd wg = soc_matrix(inv, d) * soc_g_[q];
      std::size_t slot = 0;
      for (Eigen::Index c = 0; c < wg.cols(); ++c) {
        for (int a = 0; a < d; ++a) val[soc_slots_[q][slot++]] += wg(a, c);
      }
    }
    return ldlt_.factorize(val) >= 0;
  }

  /// Solves the unscaled system [0 A^T G^T; A 0 0; G 0 -W^2] (x, y, z) = rhs.
  Vec kkt_solve(const Vec& rhs) const {
    Vec t = rhs;
    t.tail(m_) = apply_w(rhs.tail(m_), true);
    Vec sol = scaled_solve(t);
    sol.tail(m_) = apply_w(Vec(sol.tail(m_)), true);
    return sol;
  }

  Vec scaled_solve(const Vec& rhs) const {
    Vec sol = ldlt_.solve(rhs);
    const double reg = opt_.regularization;
    const double target = 1e-11 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
    Vec best = sol;
    double best_rn = std::numeric_limits<double>::infinity();
    for (int pass = 0; pass <= 10; ++pass) {
      Vec ks = K_.selfadjointView<Eigen::Upper>() * sol;
      ks.head(n_) -= reg * sol.head(n_);
      ks.tail(p_ + m_) += reg * sol.tail(p_ + m_);
      const Vec r = rhs - ks;
      const double rn = r.lpNorm<Eigen::Infinity>();
      // Refinement only helps while the residual shrinks.
      if (!(rn < best_rn)) {
        if (opt_.verbose) std::fprintf(stderr, "   refinement stopped at %.2e\n", best_rn);
        break;
      }
      const bool slow = rn > 0.1 * best_rn;
      best = sol;
      best_rn = rn;
      if (rn <= target || slow || pass == 10) break;
      sol += ldlt_.solve(r);
    }
    return best;
  }

  // Cone operations over the full m-vector.
  Vec apply_w(const Vec& v, bool inverse) const {
    Vec out(m_);
    for (int r = 0; r < l_; ++r) out[r] = inverse ? v[r] / w_orth_[r] : v[r] * w_orth_[r];
    for (std::size_t q = 0; q < soc_.size(); ++q) {
      out.segment(soc_[q].offset, soc_[q].dim) = soc_apply(nt_[q], v.segment(soc_[q].offset, soc_[q].dim), inverse);
    }
    return out;
  }

  Vec jordan_product(const Vec& u, const Vec& v) const {
    Vec out(m_);
    for (int r = 0; r < l_; ++r) out[r] = u[r] * v[r];
    for (const SocBlock& cb : soc_) {
      const int o = cb.offset;
      const int d = cb.dim;
      out[o] = u.segment(o, d).dot(v.segment(o, d));
      out.segment(o + 1, d - 1) = u[o] * v.segment(o + 1, d - 1) + v[o] * u.segment(o + 1, d - 1);
    }
    return out;
  }

  /// Solves lambda o x = v.
  Vec jordan_divide(const Vec& lam, const Vec& v) const {
    Vec out(m_);
    for (int r = 0; r < l_; ++r) out[r] = v[r] / lam[r];
    for (const SocBlock& cb : soc_) {
      const int o = cb.offset;
      const int d = cb.dim;
      const double l0 = lam[o];
      const auto l1 = lam.segment(o + 1, d - 1);
      const double rho = l0 * l0 - l1.squaredNorm();
      const double x0 = (l0 * v[o] - l1.dot(v.segment(o + 1, d - 1))) / rho;
      out[o] = x0;
      out.segment(o + 1, d - 1) = (v.segment(o + 1, d - 1) - x0 * l1) / l0;
    }
    return out;
  }

  Vec identity() const {
    Vec e = Vec::Zero(m_);
    e.head(l_).setOnes();
    for (const SocBlock& cb : soc_) e[cb.offset] = 1.0;
    return e;
  }

  double max_step(const Vec& u, const Vec& du) const {
    double alpha = std::numeric_limits<double>::infinity();
    for (int r = 0; r < l_; ++r) {
      if (du[r] < 0.0) alpha = std::min(alpha, -u[r] / du[r]);
    }
    for (const SocBlock& cb : soc_) alpha = std::min(alpha, soc_max_step(u, du, cb.offset, cb.dim));
    return alpha;
  }

  /// Moves u into the interior of the cone if needed.
  void shift_into_cone(Vec& u) const {
    double worst = -std::numeric_limits<double>::infinity();
    for (int r = 0; r < l_; ++r) worst = std::max(worst, -u[r]);
    for (const SocBlock& cb : soc_) {
      worst = std::max(worst, u.segment(cb.offset + 1, cb.dim - 1).norm() - u[cb.offset]);
    }
    if (m_ == 0 || worst < 0.0) return;
    u += (1.0 + worst) * identity();
  }

  void update_scaling(const Vec& s, const Vec& z) {
    w_orth_.resize(l_);
    for (int r = 0; r < l_; ++r) w_orth_[r] = std::sqrt(s[r] / z[r]);
    nt_.resize(soc_.size());
    for (std::size_t q = 0; q < soc_.size(); ++q) {
      nt_[q] = soc_nt_scaling(s.segment(soc_[q].offset, soc_[q].dim), z.segment(soc_[q].offset, soc_[q].dim));
    }
    lambda_ = apply_w(z, false);
    if (opt_.verbose) {
      double worst = 1.0, wmax = 0.0;
      for (const SocBlock& cb : soc_) {
        worst = std::min(worst, soc_det(s, cb.offset, cb.dim) / (s[cb.offset] * s[cb.offset]));
        worst = std::min(worst, soc_det(z, cb.offset, cb.dim) / (z[cb.offset] * z[cb.offset]));
      }
      for (const SocScaling& sc : nt_) wmax = std::max(wmax, sc.eta * sc.w[0]);
      std::fprintf(stderr, "   scaling: min rel det %.2e  max |W| %.2e  orth ratio %.2e..%.2e\n", worst, wmax,
                   l_ ? w_orth_.minCoeff() : 0.0, l_ ? w_orth_.maxCoeff() : 0.0);
    }
  }

  struct Step {
    Vec dx, dy, dz, ds;
    double dtau = 0.0, dkappa = 0.0;
  };

  /// One Newton direction of the embedding for residual targets d_* and
  /// complementarity targets d_s (cone) and d_kappa.
  Step direction(const Vec& d_x, const Vec& d_y, const Vec& d_z, double d_tau, const Vec& d_s, double d_kappa,
                 double tau, double kappa) const {
    const Vec lam_div = jordan_divide(lambda_, d_s);
    Vec rhs(n_ + p_ + m_);
    rhs.head(n_) = -d_x;
    rhs.segment(n_, p_) = -d_y;
    rhs.tail(m_) = -d_z + apply_w(lam_div, false);
    const Vec sol2 = kkt_solve(rhs);
    const auto x1 = sol1_.head(n_);
    const auto y1 = sol1_.segment(n_, p_);
    const auto z1 = sol1_.tail(m_);
    const auto x2 = sol2.head(n_);
    const auto y2 = sol2.segment(n_, p_);
    const auto z2 = sol2.tail(m_);
    Step st;
    const double denom = c_.dot(x1) + b_.dot(y1) + h_.dot(z1) - kappa / tau;
    st.dtau = (-d_tau + d_kappa / tau - (c_.dot(x2) + b_.dot(y2) + h_.dot(z2))) / denom;
    st.dx = x2 + st.dtau * x1;
    st.dy = y2 + st.dtau * y1;
    st.dz = z2 + st.dtau * z1;
    // From the linearized primal equation; equal to -W (lam \ d_s + W dz) in exact arithmetic.
    st.ds = -d_z - G_ * st.dx + h_ * st.dtau;
    st.dkappa = -(d_kappa + kappa * st.dtau) / tau;
    return st;
  }

  double step_length(const Vec& s, const Vec& z, double tau, double kappa, const Step& st) const {
    double alpha = std::min(max_step(s, st.ds), max_step(z, st.dz));
    if (st.dtau < 0.0) alpha = std::min(alpha, -tau / st.dtau);
    if (st.dkappa < 0.0) alpha = std::min(alpha, -kappa / st.dkappa);
    return alpha;
  }

  const ConvexProgram& prog_;
  const SolverOptions& opt_;
  int n_ = 0, p_ = 0, m_ = 0, l_ = 0, degree_ = 0;
  Vec c_, b_, h_;
  Vec d_col_, e_eq_, e_cone_;  // equilibration: x = D x~, y = Ea y~, z = Eg z~, s = s~ / Eg
  double b_scale_ = 1.0, c_scale_ = 1.0;
  SpMat A_, G_;
  std::vector<int> row_of_, soc_of_;
  std::vector<SocBlock> soc_;

  SpMat K_;
  std::vector<int> diag_slot_, static_slots_;
  std::vector<double> static_values_;
  std::vector<std::vector<int>> soc_slots_, soc_cols_;
  std::vector<Eigen::MatrixXd> soc_g_;
  std::vector<int> orth_slots_, orth_rows_;
  std::vector<double> orth_values_;
  QuasiDefiniteLdlt ldlt_;

  Vec w_orth_;
  std::vector<SocScaling> nt_;
  Vec lambda_;
  Vec sol1_;
};

SolverResult ConicSolver::run() {
  SolverResult res;
  const auto t0 = std::chrono::steady_clock::now();
  auto finish = [&](SolverResult& r) {
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
  };

  // Initial point from two least-squares problems with W = I.
  w_orth_ = Vec::Ones(l_);
  nt_.assign(soc_.size(), SocScaling{});
  for (std::size_t q = 0; q < soc_.size(); ++q) {
    nt_[q].w = Vec::Zero(soc_[q].dim);
    nt_[q].w[0] = 1.0;
  }
  if (!factorize()) {
    res.message = "KKT factorization failed";
    return finish(res);
  }
  Vec rhs = Vec::Zero(n_ + p_ + m_);
  rhs.segment(n_, p_) = b_;
  rhs.tail(m_) = h_;
  Vec sol = kkt_solve(rhs);
  Vec x = sol.head(n_);
  Vec s = -sol.tail(m_);
  shift_into_cone(s);
  rhs.setZero();
  rhs.head(n_) = -c_;
  sol = kkt_solve(rhs);
  Vec y = sol.segment(n_, p_);
  Vec z = sol.tail(m_);
  shift_into_cone(z);
  double tau = 1.0;
  double kappa = 1.0;

  const double b_scale = b_scale_;
  const double c_scale = c_scale_;
  const Vec e = identity();
  res.status = SolveStatus::solver_error;
  res.message = "iteration limit reached";
  int stalls = 0;
  // Best iterate seen, by its worst tolerance ratio.
  struct Snapshot {
    Vec x, y, z, s;
    double tau = 1.0, merit = std::numeric_limits<double>::infinity();
    double pres = 0.0, dres = 0.0, gap = 0.0;
  } best;

  for (int iter = 0;; ++iter) {
    const Vec Ax = A_ * x;
    const Vec Gx = G_ * x;
    const Vec ATy = A_.transpose() * y;
    const Vec GTz = G_.transpose() * z;
    const Vec r_x = ATy + GTz + c_ * tau;
    const Vec r_y = Ax - b_ * tau;
    const Vec r_z = s + Gx - h_ * tau;
    const double cx = c_.dot(x);
    const double by_hz = b_.dot(y) + h_.dot(z);
    const double r_tau = kappa + cx + by_hz;
    const double mu = (s.dot(z) + tau * kappa) / (degree_ + 1);

    // Residuals are measured in the original units.
    const double pres = std::max(p_ ? r_y.cwiseQuotient(e_eq_).lpNorm<Eigen::Infinity>() : 0.0,
                                 m_ ? r_z.cwiseQuotient(e_cone_).lpNorm<Eigen::Infinity>() : 0.0) /
                        tau;
    const double dres = (n_ ? r_x.cwiseQuotient(d_col_).lpNorm<Eigen::Infinity>() : 0.0) / tau;
    const double gap = s.dot(z) / (tau * tau);
    const double pobj = cx / tau + prog_.objective().constant;
    const double x_scale = b_scale + x.cwiseProduct(d_col_).lpNorm<Eigen::Infinity>() / tau;
    res.iterations = iter;
    res.primal_residual = pres;
    res.dual_residual = dres;
    res.gap = gap;
    const double merit = std::max({pres / (opt_.feasibility_tol * x_scale), dres / (opt_.optimality_tol * c_scale),
                                   std::abs(gap) / (opt_.optimality_tol * std::max(1.0, std::abs(pobj)))});
    if (std::isfinite(merit) && merit < best.merit && tau > 0.0) best = {x, y, z, s, tau, merit, pres, dres, gap};
    if (opt_.verbose) {
      std::fprintf(stderr, "conic %3d pobj % .10e pres %.2e dres %.2e gap %.2e tau %.2e kappa %.2e\n", iter, pobj, pres,
                   dres, gap, tau, kappa);
    }
    if (!std::isfinite(pres) || !std::isfinite(dres) || !std::isfinite(gap) || !(tau > 0.0)) {
      res.message = "numerical breakdown";
      break;
    }
    if (pres <= opt_.feasibility_tol * x_scale && dres <= opt_.optimality_tol * c_scale &&
        gap <= opt_.optimality_tol * std::max(1.0, std::abs(pobj))) {
      res.status = SolveStatus::optimal;
      res.message = "converged";
      break;
    }
    // Certificates of infeasibility.
    if (by_hz < 0.0 &&
        (n_ ? (ATy + GTz).cwiseQuotient(d_col_).lpNorm<Eigen::Infinity>() : 0.0) <= opt_.infeasibility_tol * -by_hz) {
      res.status = SolveStatus::infeasible;
      res.message = "primal infeasibility certificate";
      break;
    }
    if (cx < 0.0 &&
        std::max(p_ ? Ax.cwiseQuotient(e_eq_).lpNorm<Eigen::Infinity>() : 0.0,
                 m_ ? (Gx + s).cwiseQuotient(e_cone_).lpNorm<Eigen::Infinity>() : 0.0) <= opt_.infeasibility_tol * -cx) {
      res.message = "problem is unbounded";
      break;
    }
    if (iter >= opt_.max_iter) break;

    update_scaling(s, z);
    if (!factorize()) {
      res.message = "KKT factorization failed";
      break;
    }
    rhs.head(n_) = -c_;
    rhs.segment(n_, p_) = b_;
    rhs.tail(m_) = h_;
    sol1_ = kkt_solve(rhs);

    // Predictor.
    const Vec lam_sq = jordan_product(lambda_, lambda_);
    const Step aff = direction(r_x, r_y, r_z, r_tau, lam_sq, tau * kappa, tau, kappa);
    const double alpha_aff = std::min(1.0, step_length(s, z, tau, kappa, aff));
    const double sigma = std::pow(1.0 - alpha_aff, 3);

    // Corrector.
    const Vec corr = jordan_product(apply_w(aff.ds, true), apply_w(aff.dz, false));
    const Vec d_s = lam_sq + corr - sigma * mu * e;
    const double d_kappa = tau * kappa + aff.dtau * aff.dkappa - sigma * mu;
    const double keep = 1.0 - sigma;
    const Step st = direction(keep * r_x, keep * r_y, keep * r_z, keep * r_tau, d_s, d_kappa, tau, kappa);
    const double alpha = std::min(1.0, 0.99 * step_length(s, z, tau, kappa, st));
    if (!std::isfinite(alpha) || !st.dx.allFinite()) {
      res.message = "numerical breakdown";
      break;
    }
    x += alpha * st.dx;
    y += alpha * st.dy;
    z += alpha * st.dz;
    s += alpha * st.ds;
    tau += alpha * st.dtau;
    kappa += alpha * st.dkappa;

    stalls = alpha < 1e-8 ? stalls + 1 : 0;
    if (stalls >= 5) {
      res.message = "step length stalled";
      break;
    }
  }

  // Fall back to the best iterate when the iteration broke down or stalled
  // close to the optimum; callers verify constraint residuals on their own.
  if (res.status == SolveStatus::solver_error && res.message != "problem is unbounded" && best.merit <= 100.0) {
    x = best.x;
    y = best.y;
    z = best.z;
    s = best.s;
    tau = best.tau;
    res.primal_residual = best.pres;
    res.dual_residual = best.dres;
    res.gap = best.gap;
    res.status = SolveStatus::optimal;
    res.message = best.merit <= 1.0 ? "converged" : "converged to reduced accuracy (" + res.message + ")";
  }

  const double scale = res.status == SolveStatus::infeasible ? 1.0 : 1.0 / tau;
  res.x = x.cwiseProduct(d_col_) * scale;
  res.equality_dual = y.cwiseProduct(e_eq_) * scale;
  z = z.cwiseProduct(e_cone_);
  res.inequality_dual = Vec::Zero(static_cast<Eigen::Index>(row_of_.size()));
  for (std::size_t k = 0; k < row_of_.size(); ++k) {
    const int r = row_of_[k];
    if (soc_of_[k] < 0) {
      res.inequality_dual[static_cast<Eigen::Index>(k)] = z[r] * scale;
    } else {
      const SocBlock& cb = soc_[static_cast<std::size_t>(soc_of_[k])];
      res.inequality_dual[static_cast<Eigen::Index>(k)] = 0.5 * (z[r] + z[r + cb.dim - 1]) * scale;
    }
  }
  res.objective = c_.dot(x) * scale + prog_.objective().constant;
  return finish(res);
}

}  // namespace

SolverResult solve(const ConvexProgram& program, const SolverOptions& options) {
  return ConicSolver(program, options).run();
}

}  // namespace hcap::solver
