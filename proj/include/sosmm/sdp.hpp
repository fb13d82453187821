#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sosmm/errors.hpp"
#include "sosmm/linalg.hpp"
#include "sosmm/rng.hpp"

namespace sosmm {

enum class Sense { Min, Max };

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIter, NumericalFailure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Unbounded: return "Unbounded";
    case SolveStatus::MaxIter: return "MaxIter";
    case SolveStatus::NumericalFailure: return "NumericalFailure";
  }
  return "?";
}

struct SdpOptions {
  double gap_tol = 1e-8;
  double feas_tol = 1e-8;
  int max_iter = 200;
};

struct IterateInfo {
  double mu = 0.0;
  double pobj = 0.0;
  double dobj = 0.0;
  double prim_res = 0.0;
  double dual_res = 0.0;
  double step_p = 0.0;
  double step_d = 0.0;
};

struct SdpSolution {
  Vector x;                          // scalar variable values
  std::vector<Matrix> block_primal;  // block values C_b + sum_k x_k A_{b,k}
  std::vector<Matrix> dual_S;        // PSD multipliers per block
  Vector dual_y;                     // equality multipliers, original row order
  double objective = 0.0;
  double gap = 0.0;                  // relative duality gap
  SolveStatus status = SolveStatus::NumericalFailure;
  int iterations = 0;
  std::vector<IterateInfo> trace;
};

// Semidefinite program in canonical affine form:
//
//   min/max  c^T x   over x in R^n
//   s.t.     C_b + sum_k x_k A_{b,k}  PSD   for every block b
//            E x = d.
//
// Coefficient matrices are stored as weighted symmetrized outer products
// w * (u v^T + v u^T)/2; rank-one structure (the common case in SOS
// programs) then makes the interior-point Schur complement cheap.
class SdpProblem {
public:
  struct Term {
    int var;
    double w;
    Vector u, v;
  };

  struct Block {
    int order = 0;
    Matrix offset;  // C_b
    std::vector<Term> terms;
  };

  int add_var(double cost = 0.0) {
    cost_.push_back(cost);
    return static_cast<int>(cost_.size()) - 1;
  }

  int add_vars(int k) {
    const int first = num_vars();
    for (int i = 0; i < k; ++i) cost_.push_back(0.0);
    return first;
  }

  void set_cost(int var, double c) { cost_.at(static_cast<std::size_t>(var)) = c; }
  double cost(int var) const { return cost_.at(static_cast<std::size_t>(var)); }

  int add_block(int order, Matrix offset = Matrix()) {
    if (order < 1) throw InvalidProblem("add_block: order must be >= 1");
    Block b;
    b.order = order;
    if (offset.size() == 0) offset = Matrix::Zero(order, order);
    if (offset.rows() != order || offset.cols() != order) throw InvalidProblem("add_block: offset size mismatch");
    if ((offset - offset.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, offset.norm()))
      throw InvalidProblem("add_block: offset not symmetric");
    b.offset = 0.5 * (offset + offset.transpose());
    blocks_.push_back(std::move(b));
    return static_cast<int>(blocks_.size()) - 1;
  }

  // Adds w * (u v^T + v u^T)/2 as the coefficient of `var` in block `blk`.
  void add_coeff(int blk, int var, double w, Vector u, Vector v) {
    Block& b = blocks_.at(static_cast<std::size_t>(blk));
    if (u.size() != b.order || v.size() != b.order) throw InvalidProblem("add_coeff: vector size mismatch");
    check_var(var);
    if (w == 0.0) return;
    b.terms.push_back({var, w, std::move(u), std::move(v)});
  }

  void add_coeff_rank1(int blk, int var, double w, const Vector& u) { add_coeff(blk, var, w, u, u); }

  // Splits a dense symmetric coefficient into weighted eigen outer products.
  void add_coeff_dense(int blk, int var, const Matrix& a) {
    const EigSym e = eig_sym(a);
    const double scale = e.values.cwiseAbs().maxCoeff();
    for (int i = 0; i < e.values.size(); ++i) {
      if (std::abs(e.values[i]) > 1e-14 * std::max(1.0, scale))
        add_coeff_rank1(blk, var, e.values[i], e.vectors.col(i));
    }
  }

  // Rows may be shorter than the final variable count (variables added later
  // get coefficient zero).
  void add_equality(Vector a, double rhs) {
    if (a.size() > num_vars()) throw InvalidProblem("add_equality: row length exceeds variable count");
    eq_rows_.push_back(std::move(a));
    eq_rhs_.push_back(rhs);
  }

  void set_sense(Sense s) { sense_ = s; }
  Sense sense() const { return sense_; }

  int num_vars() const { return static_cast<int>(cost_.size()); }
  int num_blocks() const { return static_cast<int>(blocks_.size()); }
  int num_equalities() const { return static_cast<int>(eq_rows_.size()); }
  const Block& block(int b) const { return blocks_.at(static_cast<std::size_t>(b)); }
  const std::vector<double>& costs() const { return cost_; }
  const std::vector<Vector>& eq_rows() const { return eq_rows_; }
  const std::vector<double>& eq_rhs() const { return eq_rhs_; }

  Matrix block_value(int b, const Vector& x) const {
    const Block& bl = blocks_.at(static_cast<std::size_t>(b));
    Matrix s = bl.offset;
    for (const Term& t : bl.terms) {
      const double a = 0.5 * t.w * x[t.var];
      s.noalias() += a * (t.u * t.v.transpose());
      s.noalias() += a * (t.v * t.u.transpose());
    }
    return s;
  }

  SdpSolution solve(const SdpOptions& opts = SdpOptions()) const;

  // Worst primal constraint violation of a candidate point: negative block
  // eigenvalues and equality residuals, both relatively scaled.
  double primal_violation(const Vector& x) const {
    double v = 0.0;
    for (int b = 0; b < num_blocks(); ++b) {
      const Matrix s = block_value(b, x);
      const double scale = 1.0 + s.cwiseAbs().maxCoeff();
      v = std::max(v, -min_eig(s) / scale);
    }
    for (int i = 0; i < num_equalities(); ++i) {
      const Vector& row = eq_rows_[static_cast<std::size_t>(i)];
      const double lhs = row.dot(x.head(row.size()));
      v = std::max(v, std::abs(lhs - eq_rhs_[static_cast<std::size_t>(i)]) /
                          (1.0 + std::abs(eq_rhs_[static_cast<std::size_t>(i)])));
    }
    return v;
  }

private:
  void check_var(int var) const {
    if (var < 0 || var >= num_vars()) throw InvalidProblem("variable index out of range");
  }

  std::vector<double> cost_;
  std::vector<Block> blocks_;
  std::vector<Vector> eq_rows_;
  std::vector<double> eq_rhs_;
  Sense sense_ = Sense::Min;
};

namespace sdp_detail {

struct BlockWork {
  // term data in matrix layout
  Matrix u_cols, v_cols;   // order x T
  Vector weights;          // T
  std::vector<int> vars;   // T
  Matrix offset;
  int order = 0;

  // iterate
  Matrix x;  // PSD multiplier
  Matrix z;  // PSD slack

  // NT scaling state, refreshed each iteration
  Matrix w_nt, w_half, w_neg_half, z_inv;
  Matrix v_q;     // eigenvectors of V
  Vector v_lam;   // eigenvalues of V

  Matrix map_coeffs(const Vector& dw) const {
    Vector scale(weights.size());
    for (int t = 0; t < weights.size(); ++t) scale[t] = weights[t] * dw[vars[static_cast<std::size_t>(t)]];
    const Matrix us = u_cols * scale.asDiagonal();
    Matrix r = 0.5 * (us * v_cols.transpose());
    r += r.transpose().eval();
    return r;
  }

  // A*(M)_k accumulated into `out`: sum over terms w_t u_t^T M v_t.
  void accumulate_adjoint(const Matrix& m, Vector& out) const {
    if (weights.size() == 0) return;
    const Matrix mv = m * v_cols;
    for (int t = 0; t < weights.size(); ++t)
      out[vars[static_cast<std::size_t>(t)]] += weights[t] * u_cols.col(t).dot(mv.col(t));
  }
};

inline Matrix sqrt_psd(const Matrix& a) {
  const EigSym e = eig_sym(a);
  Vector d = e.values.cwiseMax(0.0).cwiseSqrt();
  return e.vectors * d.asDiagonal() * e.vectors.transpose();
}

// Largest step alpha with m + alpha dm staying PSD (capped by `cap`).
inline double max_step(const Matrix& m, const Matrix& dm, double cap) {
  Eigen::LLT<Matrix> llt(m);
  Matrix g;
  if (llt.info() == Eigen::Success) {
    const Matrix l = llt.matrixL();
    g = l.triangularView<Eigen::Lower>().solve(dm);
    g = l.triangularView<Eigen::Lower>().solve(g.transpose().eval());
  } else {
    const EigSym e = eig_sym(m);
    const Vector d = e.values.cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    const Matrix li = d.asDiagonal() * e.vectors.transpose();
    g = li * dm * li.transpose();
  }
  const double lmin = min_eig(0.5 * (g + g.transpose()));
  if (lmin >= -1e-14) return cap;
  return std::min(cap, -1.0 / lmin);
}

}  // namespace sdp_detail

inline SdpSolution SdpProblem::solve(const SdpOptions& opts) const {
  using sdp_detail::BlockWork;
  const int n = num_vars();
  if (n == 0) throw InvalidProblem("solve: no variables");
  if (blocks_.empty() && eq_rows_.empty()) throw InvalidProblem("solve: needs a PSD block or an equality");

  // internal objective is always a minimization
  Vector c(n);
  for (int k = 0; k < n; ++k) c[k] = (sense_ == Sense::Min) ? cost_[static_cast<std::size_t>(k)] : -cost_[static_cast<std::size_t>(k)];

  SdpSolution sol;
  sol.x = Vector::Zero(n);

  // --- presolve equalities: scale rows, drop dependent rows ---------------
  const int ne_in = num_equalities();
  Matrix e_full(ne_in, n);
  Vector d_full(ne_in), row_scale(ne_in);
  for (int i = 0; i < ne_in; ++i) {
    const Vector& raw = eq_rows_[static_cast<std::size_t>(i)];
    Vector row = Vector::Zero(n);
    row.head(raw.size()) = raw;
    double sc = row.cwiseAbs().maxCoeff();
    if (sc <= 0.0) sc = 1.0;
    row_scale[i] = sc;
    e_full.row(i) = row.transpose() / sc;
    d_full[i] = eq_rhs_[static_cast<std::size_t>(i)] / sc;
  }
  std::vector<int> kept;
  if (ne_in > 0) {
    Eigen::ColPivHouseholderQR<Matrix> qr(e_full.transpose());
    qr.setThreshold(1e-12);
    const int rank = static_cast<int>(qr.rank());
    kept.assign(qr.colsPermutation().indices().data(), qr.colsPermutation().indices().data() + rank);
    std::sort(kept.begin(), kept.end());
    if (rank < ne_in) {
      // dependent rows must be consistent
      const Vector w0 = e_full.colPivHouseholderQr().solve(d_full);
      if ((e_full * w0 - d_full).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + d_full.cwiseAbs().maxCoeff())) {
        sol.status = SolveStatus::Infeasible;
        sol.dual_y = Vector::Zero(ne_in);
        return sol;
      }
    }
  }
  const int ne = static_cast<int>(kept.size());
  Matrix e_mat(ne, n);
  Vector d_vec(ne);
  for (int i = 0; i < ne; ++i) {
    e_mat.row(i) = e_full.row(kept[static_cast<std::size_t>(i)]);
    d_vec[i] = d_full[kept[static_cast<std::size_t>(i)]];
  }

  // --- block workspaces ----------------------------------------------------
  std::vector<BlockWork> work(blocks_.size());
  double data_norm_sq = c.squaredNorm() + d_vec.squaredNorm();
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const Block& bl = blocks_[b];
    BlockWork& wk = work[b];
    wk.order = bl.order;
    wk.offset = bl.offset;
    const int t_count = static_cast<int>(bl.terms.size());
    wk.u_cols.resize(bl.order, t_count);
    wk.v_cols.resize(bl.order, t_count);
    wk.weights.resize(t_count);
    wk.vars.resize(static_cast<std::size_t>(t_count));
    for (int t = 0; t < t_count; ++t) {
      const Term& tm = bl.terms[static_cast<std::size_t>(t)];
      wk.u_cols.col(t) = tm.u;
      wk.v_cols.col(t) = tm.v;
      wk.weights[t] = tm.w;
      wk.vars[static_cast<std::size_t>(t)] = tm.var;
      data_norm_sq += tm.w * tm.w * tm.u.squaredNorm() * tm.v.squaredNorm();
    }
    data_norm_sq += bl.offset.squaredNorm();
  }

  const double eta = 1.0 + std::sqrt(data_norm_sq);
  Vector w = Vector::Zero(n);
  Vector y = Vector::Zero(ne);
  int total_psd = 0;
  for (auto& wk : work) {
    wk.x = eta * Matrix::Identity(wk.order, wk.order);
    wk.z = eta * Matrix::Identity(wk.order, wk.order);
    total_psd += wk.order;
  }

  const int dim_kkt = n + ne;
  Matrix kkt(dim_kkt, dim_kkt);
  Vector rhs(dim_kkt);
  int stall = 0;

  const auto residuals = [&](Vector& rd, Vector& rp, std::vector<Matrix>& rblk) {
    rd = c;
    for (auto& wk : work) {
      Vector acc = Vector::Zero(n);
      wk.accumulate_adjoint(wk.x, acc);
      rd -= acc;
    }
    if (ne > 0) rd -= e_mat.transpose() * y;
    rp = d_vec - e_mat * w;
    rblk.resize(work.size());
    for (std::size_t b = 0; b < work.size(); ++b) {
      rblk[b] = work[b].offset + work[b].map_coeffs(w) - work[b].z;
    }
  };

  SolveStatus status = SolveStatus::MaxIter;
  int iter = 0;

  // Degenerate problems can oscillate near the end; the best iterate seen
  // (by feasibility and complementarity) is what gets reported.
  double best_score = std::numeric_limits<double>::infinity();
  Vector best_w = w, best_y = y;
  std::vector<Matrix> best_x(work.size());
  for (std::size_t b = 0; b < work.size(); ++b) best_x[b] = work[b].x;

  // Once the stopping criteria fire, a few more iterations usually deepen
  // complementarity well below tolerance (the primal objective converges
  // with mu even when degenerate duals stall); the deepest valid iterate is
  // reported.
  bool valid_found = false;
  double valid_mu = std::numeric_limits<double>::infinity();
  double valid_gap = std::numeric_limits<double>::infinity();
  Vector valid_w, valid_y;
  std::vector<Matrix> valid_x(work.size());
  int polish_left = -1;

  for (; iter < opts.max_iter; ++iter) {
    Vector rd, rp;
    std::vector<Matrix> rblk;
    residuals(rd, rp, rblk);

    double xz = 0.0;
    for (auto& wk : work) xz += (wk.x.cwiseProduct(wk.z)).sum();
    const double mu = total_psd > 0 ? xz / total_psd : 0.0;

    const double pobj = c.dot(w);
    double dobj = (ne > 0) ? d_vec.dot(y) : 0.0;
    for (auto& wk : work) dobj -= (wk.x.cwiseProduct(wk.offset)).sum();

    double prim_res = (ne > 0) ? rp.cwiseAbs().maxCoeff() / (1.0 + d_vec.cwiseAbs().maxCoeff()) : 0.0;
    for (std::size_t b = 0; b < work.size(); ++b) {
      const double scale = 1.0 + work[b].offset.cwiseAbs().maxCoeff();
      prim_res = std::max(prim_res, rblk[b].cwiseAbs().maxCoeff() / scale);
    }
    const double dual_res = rd.cwiseAbs().maxCoeff() / (1.0 + c.cwiseAbs().maxCoeff());
    const double rel_gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
    const double mu_rel = mu * total_psd / (1.0 + std::abs(pobj) + std::abs(dobj));

    IterateInfo info;
    info.mu = mu;
    info.pobj = pobj;
    info.dobj = dobj;
    info.prim_res = prim_res;
    info.dual_res = dual_res;
    sol.trace.push_back(info);

    const double score = std::max(prim_res, mu_rel) + 1e-3 * (dual_res + rel_gap);
    if (score < best_score) {
      best_score = score;
      best_w = w;
      best_y = y;
      for (std::size_t b = 0; b < work.size(); ++b) best_x[b] = work[b].x;
    }

    bool deepened = false;
    if (rel_gap <= opts.gap_tol && mu_rel <= 10 * opts.gap_tol && prim_res <= opts.feas_tol && dual_res <= opts.feas_tol) {
      if (mu_rel < 0.5 * valid_mu) deepened = true;
      if (mu_rel < valid_mu) {
        valid_found = true;
        valid_mu = mu_rel;
        valid_gap = rel_gap;
        valid_w = w;
        valid_y = y;
        for (std::size_t b = 0; b < work.size(); ++b) valid_x[b] = work[b].x;
        if (polish_left < 0) polish_left = 8;
      }
    }
    if (valid_found && (polish_left == 0 || !deepened || valid_mu < 1e-14)) {
      status = SolveStatus::Optimal;
      break;
    }
    if (polish_left > 0) --polish_left;
    // crude divergence classification; borderline instances are out of scope
    if (pobj < -1e10 * eta && prim_res <= 1e-6 && dual_res > 1e-4) {
      status = SolveStatus::Unbounded;
      break;
    }
    if (dobj > 1e10 * eta && dual_res <= 1e-6 && prim_res > 1e-4) {
      status = SolveStatus::Infeasible;
      break;
    }
    if (w.cwiseAbs().maxCoeff() > 1e12 * eta) {
      status = (prim_res <= 1e-6) ? SolveStatus::Unbounded : SolveStatus::NumericalFailure;
      break;
    }

    // --- NT scaling and Schur complement -----------------------------------
    bool scaling_ok = true;
    try {
    for (auto& wk : work) {
      const EigSym ez = eig_sym(wk.z);
      if (ez.values.minCoeff() <= 0.0) {
        scaling_ok = false;
        break;
      }
      const Matrix z_half = ez.vectors * ez.values.cwiseSqrt().asDiagonal() * ez.vectors.transpose();
      const Matrix z_nhalf = ez.vectors * ez.values.cwiseSqrt().cwiseInverse().asDiagonal() * ez.vectors.transpose();
      wk.z_inv = ez.vectors * ez.values.cwiseInverse().asDiagonal() * ez.vectors.transpose();
      const Matrix mid = sdp_detail::sqrt_psd(z_half * wk.x * z_half);
      wk.w_nt = z_nhalf * mid * z_nhalf;
      const EigSym ew = eig_sym(wk.w_nt);
      if (ew.values.minCoeff() <= 0.0) {
        scaling_ok = false;
        break;
      }
      wk.w_half = ew.vectors * ew.values.cwiseSqrt().asDiagonal() * ew.vectors.transpose();
      wk.w_neg_half = ew.vectors * ew.values.cwiseSqrt().cwiseInverse().asDiagonal() * ew.vectors.transpose();
      const Matrix v = wk.w_half * wk.z * wk.w_half;
      const EigSym ev = eig_sym(v);
      wk.v_q = ev.vectors;
      wk.v_lam = ev.values;
    }
    if (!scaling_ok) {
      status = SolveStatus::NumericalFailure;
      break;
    }

    Matrix m_schur = Matrix::Zero(n, n);
    for (auto& wk : work) {
      if (wk.weights.size() == 0) continue;
      const Matrix wu = wk.w_nt * wk.u_cols;
      const Matrix wv = wk.w_nt * wk.v_cols;
      const Matrix guu = wk.u_cols.transpose() * wu;
      const Matrix gvv = wk.v_cols.transpose() * wv;
      const Matrix guv = wk.u_cols.transpose() * wv;
      const Matrix h = 0.5 * (guu.cwiseProduct(gvv) + guv.cwiseProduct(guv.transpose()));
      const int t_count = static_cast<int>(wk.weights.size());
      for (int t = 0; t < t_count; ++t)
        for (int s = 0; s < t_count; ++s)
          m_schur(wk.vars[static_cast<std::size_t>(t)], wk.vars[static_cast<std::size_t>(s)]) +=
              wk.weights[t] * wk.weights[s] * h(t, s);
    }

    kkt.setZero();
    kkt.topLeftCorner(n, n) = m_schur;
    if (ne > 0) {
      kkt.topRightCorner(n, ne) = e_mat.transpose();
      kkt.bottomLeftCorner(ne, n) = e_mat;
    }
    // tiny regularization keeps the factorization benign when some variables
    // touch no block
    for (int k = 0; k < n; ++k) kkt(k, k) += 1e-13 * (1.0 + m_schur(k, k));
    for (int k = 0; k < ne; ++k) kkt(n + k, n + k) -= 1e-13;
    Eigen::PartialPivLU<Matrix> lu(kkt);

    const auto solve_direction = [&](const std::vector<Matrix>& r_c, Vector& dw, Vector& dy,
                                     std::vector<Matrix>& dx, std::vector<Matrix>& dz) {
      Vector h = -rd;
      for (std::size_t b = 0; b < work.size(); ++b) {
        BlockWork& wk = work[b];
        Vector acc = Vector::Zero(n);
        wk.accumulate_adjoint(r_c[b], acc);
        h += acc;
        acc.setZero();
        const Matrix wrw = wk.w_nt * rblk[b] * wk.w_nt;
        wk.accumulate_adjoint(wrw, acc);
        h -= acc;
      }
      rhs.head(n) = h;
      if (ne > 0) rhs.tail(ne) = rp;
      Vector s = lu.solve(rhs);
      s += lu.solve(rhs - kkt * s);  // one refinement step; the endgame KKT is ill-conditioned
      dw = s.head(n);
      dy = (ne > 0) ? Vector(-s.tail(ne)) : Vector();
      dx.resize(work.size());
      dz.resize(work.size());
      for (std::size_t b = 0; b < work.size(); ++b) {
        BlockWork& wk = work[b];
        dz[b] = wk.map_coeffs(dw) + rblk[b];
        dx[b] = r_c[b] - wk.w_nt * dz[b] * wk.w_nt;
        dx[b] = 0.5 * (dx[b] + dx[b].transpose().eval());
        dz[b] = 0.5 * (dz[b] + dz[b].transpose().eval());
      }
    };

    // predictor
    std::vector<Matrix> r_c(work.size());
    for (std::size_t b = 0; b < work.size(); ++b) r_c[b] = -work[b].x;
    Vector dw_a, dy_a;
    std::vector<Matrix> dx_a, dz_a;
    solve_direction(r_c, dw_a, dy_a, dx_a, dz_a);

    double ap = 1.0, ad = 1.0;
    for (std::size_t b = 0; b < work.size(); ++b) {
      ap = std::min(ap, sdp_detail::max_step(work[b].z, dz_a[b], 1.0));
      ad = std::min(ad, sdp_detail::max_step(work[b].x, dx_a[b], 1.0));
    }
    double xz_aff = 0.0;
    for (std::size_t b = 0; b < work.size(); ++b) {
      xz_aff += ((work[b].x + ad * dx_a[b]).cwiseProduct(work[b].z + ap * dz_a[b])).sum();
    }
    const double mu_aff = std::max(0.0, xz_aff / std::max(1, total_psd));
    double sigma = (mu > 0) ? std::pow(mu_aff / mu, 3.0) : 0.0;
    sigma = std::clamp(sigma, 1e-10, 1.0);

    // corrector: Lyapunov solve in the eigenbasis of V per block
    for (std::size_t b = 0; b < work.size(); ++b) {
      BlockWork& wk = work[b];
      const Matrix dxs = wk.w_neg_half * dx_a[b] * wk.w_neg_half;
      const Matrix dzs = wk.w_half * dz_a[b] * wk.w_half;
      Matrix r = -(dxs * dzs + dzs * dxs);
      r = wk.v_q.transpose() * r * wk.v_q;
      // 2*sigma*mu*I - 2V^2 is diagonal in this basis
      for (int i = 0; i < wk.order; ++i)
        for (int j = 0; j < wk.order; ++j) {
          const double den = std::max(wk.v_lam[i] + wk.v_lam[j], 1e-300);
          const double diag = (i == j) ? 2.0 * (sigma * mu - wk.v_lam[i] * wk.v_lam[i]) : 0.0;
          r(i, j) = (diag + r(i, j)) / den;
        }
      r = wk.v_q * r * wk.v_q.transpose();
      r_c[b] = wk.w_half * r * wk.w_half;
      r_c[b] = 0.5 * (r_c[b] + r_c[b].transpose().eval());
    }
    Vector dw, dy;
    std::vector<Matrix> dx, dz;
    solve_direction(r_c, dw, dy, dx, dz);

    const double tau = (mu_rel < 1e-4) ? 0.99 : 0.95;
    ap = tau;
    ad = tau;
    for (std::size_t b = 0; b < work.size(); ++b) {
      ap = std::min(ap, tau * sdp_detail::max_step(work[b].z, dz[b], 1.0 / tau));
      ad = std::min(ad, tau * sdp_detail::max_step(work[b].x, dx[b], 1.0 / tau));
    }
    ap = std::min(ap, 1.0);
    ad = std::min(ad, 1.0);

    sol.trace.back().step_p = ap;
    sol.trace.back().step_d = ad;

    if (std::max(ap, ad) < 1e-7) {
      if (++stall >= 3) {
        status = SolveStatus::NumericalFailure;
        break;
      }
    } else {
      stall = 0;
    }

    w += ap * dw;
    if (ne > 0) y += ad * dy;
    for (std::size_t b = 0; b < work.size(); ++b) {
      work[b].z += ap * dz[b];
      work[b].x += ad * dx[b];
    }
    } catch (const Error&) {
      status = SolveStatus::NumericalFailure;
      break;
    }
  }

  // --- report (best valid iterate, else best iterate seen) -----------------
  if (valid_found) {
    status = SolveStatus::Optimal;
    w = valid_w;
    y = valid_y;
    for (std::size_t b = 0; b < work.size(); ++b) work[b].x = valid_x[b];
  } else if (std::isfinite(best_score)) {
    w = best_w;
    y = best_y;
    for (std::size_t b = 0; b < work.size(); ++b) work[b].x = best_x[b];
  }
  sol.status = status;
  sol.iterations = iter;
  sol.x = w;
  const double pobj = c.dot(w);
  double dobj = (ne > 0) ? d_vec.dot(y) : 0.0;
  for (auto& wk : work) dobj -= (wk.x.cwiseProduct(wk.offset)).sum();
  sol.gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
  sol.objective = (sense_ == Sense::Min) ? pobj : -pobj;

  sol.block_primal.resize(blocks_.size());
  sol.dual_S.resize(blocks_.size());
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    sol.block_primal[b] = block_value(static_cast<int>(b), w);
    sol.dual_S[b] = work[b].x;
  }
  sol.dual_y = Vector::Zero(ne_in);
  for (int i = 0; i < ne; ++i) sol.dual_y[kept[static_cast<std::size_t>(i)]] = y[i] / row_scale[kept[static_cast<std::size_t>(i)]];
  return sol;
}

// Symmetric matrix variable packed into svec-ordered scalar variables
// (off-diagonals carry the sqrt(2) scaling, so inner products against the
// pack are plain dot products with svec of the other factor).
struct SymVarPack {
  int first = 0;
  int order = 0;

  int count() const { return svec_dim(order); }

  int var(int a, int b) const {
    if (a > b) std::swap(a, b);
    return first + b * (b + 1) / 2 + a;
  }

  Matrix value(const Vector& x) const { return smat(x.segment(first, count()), order); }

  // Row coefficients of <D, q q^T> over the pack variables.
  Vector quad_form_row(const Vector& q) const { return svec(q * q.transpose()); }
};

inline SymVarPack add_sym_matrix_vars(SdpProblem& p, int order) {
  SymVarPack pack;
  pack.order = order;
  pack.first = p.add_vars(svec_dim(order));
  return pack;
}

// Adds the LMI "the packed matrix itself is PSD".
inline int add_psd_constraint(SdpProblem& p, const SymVarPack& d) {
  const int blk = p.add_block(d.order);
  const double s2 = std::sqrt(2.0);
  for (int b = 0; b < d.order; ++b)
    for (int a = 0; a <= b; ++a) {
      if (a == b)
        p.add_coeff_rank1(blk, d.var(a, b), 1.0, Vector::Unit(d.order, a));
      else
        p.add_coeff(blk, d.var(a, b), s2, Vector::Unit(d.order, a), Vector::Unit(d.order, b));
    }
  return blk;
}

// Adds the contribution D (x) q q^T of a packed matrix variable to a block of
// order d.order * q.size(), with the pack indexing the outer Kronecker factor.
inline void add_kron_coeffs(SdpProblem& p, int blk, const SymVarPack& d, const Vector& q, double scale = 1.0) {
  const int n = static_cast<int>(q.size());
  const double s2 = std::sqrt(2.0);
  const auto lift = [&](int a) {
    Vector u = Vector::Zero(d.order * n);
    u.segment(a * n, n) = q;
    return u;
  };
  for (int b = 0; b < d.order; ++b)
    for (int a = 0; a <= b; ++a) {
      const double w = (a == b) ? scale : s2 * scale;
      p.add_coeff(blk, d.var(a, b), w, lift(a), lift(b));
    }
}

// Re-solves `p` restricted to its optimal objective value (within a +-1e-7
// band, two slack inequalities realized as 1x1 blocks), under a seeded random
// linear objective. The optimal face is generically cut down to an extreme
// point, which lowers the rank of moment blocks. `subset` restricts the
// random objective to selected variables (empty = all). The auxiliary problem
// is degenerate by construction, so it is solved loosely and accepted on
// primal quality; dual information of the returned solution stays the one of
// the original solve.
inline SdpSolution refine_rank_one(const SdpProblem& p, const SdpSolution& sol, std::uint64_t seed,
                                   std::span<const int> subset = {}) {
  if (sol.status != SolveStatus::Optimal) throw InvalidProblem("refine_rank_one: needs an Optimal solution");
  const int n = p.num_vars();
  SdpProblem q = p;

  const double band = 1e-7;
  const double sign = (p.sense() == Sense::Min) ? 1.0 : -1.0;
  const double opt = sign * sol.objective;

  Matrix up(1, 1), dn(1, 1);
  up << opt + band;
  dn << -(opt - band);
  const int b_up = q.add_block(1, up);
  const int b_dn = q.add_block(1, dn);
  for (int k = 0; k < n; ++k) {
    const double ck = sign * p.cost(k);
    if (ck != 0.0) {
      q.add_coeff_rank1(b_up, k, -ck, Vector::Ones(1));
      q.add_coeff_rank1(b_dn, k, ck, Vector::Ones(1));
    }
  }

  Rng rng(seed);
  for (int k = 0; k < n; ++k) q.set_cost(k, 0.0);
  if (subset.empty()) {
    for (int k = 0; k < n; ++k) q.set_cost(k, rng.uniform(-1.0, 1.0));
  } else {
    for (int k : subset) q.set_cost(k, rng.uniform(-1.0, 1.0));
  }
  q.set_sense(Sense::Min);

  // run tight even though the degenerate endgame rarely reports Optimal;
  // the best iterate is what matters and acceptance is on primal quality
  SdpOptions aux;
  aux.gap_tol = 1e-9;
  aux.feas_tol = 1e-8;
  aux.max_iter = 150;
  const SdpSolution refined = q.solve(aux);

  double val = 0.0;
  for (int k = 0; k < n; ++k) val += p.cost(k) * refined.x[k];
  const bool acceptable = q.primal_violation(refined.x) <= 1e-7 && std::abs(val - sol.objective) <= 1e-6;
  if (!acceptable) {
    SdpSolution out = sol;
    out.status = SolveStatus::MaxIter;
    return out;
  }

  SdpSolution out = sol;
  out.x = refined.x.head(n);
  out.objective = val;
  out.iterations = sol.iterations + refined.iterations;
  out.block_primal.resize(static_cast<std::size_t>(p.num_blocks()));
  for (int b = 0; b < p.num_blocks(); ++b) out.block_primal[static_cast<std::size_t>(b)] = p.block_value(b, out.x);
  return out;
}

}  // namespace sosmm
