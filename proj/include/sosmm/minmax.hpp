#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sosmm/features.hpp"
#include "sosmm/polynomial.hpp"
#include "sosmm/sdp.hpp"
#include "sosmm/sosmin.hpp"

namespace sosmm {

enum class BoundStatus { LowerBound, Tight, UpperBound, Unknown };

inline const char* to_string(BoundStatus s) {
  switch (s) {
    case BoundStatus::LowerBound: return "LowerBound";
    case BoundStatus::Tight: return "Tight";
    case BoundStatus::UpperBound: return "UpperBound";
    case BoundStatus::Unknown: return "Unknown";
  }
  return "?";
}

// min_x max_y g(x,y) instance: either finitely many inner polynomials
// g_1..g_p over X, or a simple inner set Y with a joint polynomial g over
// the concatenated coordinates of X and Y.
class BilinearObjective {
public:
  static BilinearObjective finite(SimpleSet set_x, std::vector<Polynomial> g_list) {
    if (g_list.empty()) throw InvalidProblem("BilinearObjective: empty g_list");
    BilinearObjective o;
    o.set_x_ = std::move(set_x);
    o.g_list_ = std::move(g_list);
    o.finite_ = true;
    return o;
  }

  static BilinearObjective general(SimpleSet set_x, SimpleSet set_y, Polynomial g) {
    BilinearObjective o;
    o.set_x_ = std::move(set_x);
    o.set_y_ = std::move(set_y);
    o.g_ = std::move(g);
    o.finite_ = false;
    return o;
  }

  bool finite_y() const { return finite_; }
  const SimpleSet& set_x() const { return set_x_; }
  const SimpleSet& set_y() const {
    if (finite_) throw InvalidProblem("set_y: finite-Y objective");
    return *set_y_;
  }
  int num_inner() const { return finite_ ? static_cast<int>(g_list_.size()) : 0; }
  const std::vector<Polynomial>& g_list() const { return g_list_; }
  const Polynomial& g_joint() const { return *g_; }

  BilinearObjective with_hierarchy(int sx, int sy = -1) const {
    BilinearObjective o = *this;
    o.set_x_ = set_x_.with_hierarchy(sx);
    if (!finite_ && sy >= 0) o.set_y_ = set_y_->with_hierarchy(sy);
    return o;
  }

  double eval(int j, const Vector& x) const { return g_list_.at(static_cast<std::size_t>(j)).evaluate_unchecked(x); }

  double eval(const Vector& x, const Vector& y) const {
    Vector xy(x.size() + y.size());
    xy << x, y;
    return g_->evaluate_unchecked(xy);
  }

  // g(x_star, .) as a polynomial in y (trig coefficient form), or a
  // tabulated forwarder otherwise.
  Polynomial inner_polynomial(const Vector& x) const {
    if (finite_) throw InvalidProblem("inner_polynomial: finite-Y objective");
    const int dx = set_x_.ambient_dim();
    const int dy = set_y_->ambient_dim();
    if (g_->basis() == Polynomial::Basis::TrigFreq) {
      std::vector<TrigTerm> out;
      for (const auto& t : g_->trig_terms()) {
        double phase = 0.0;
        for (int c = 0; c < dx && c < static_cast<int>(t.freq.size()); ++c)
          phase += t.freq[static_cast<std::size_t>(c)] * x[c];
        phase *= 2.0 * std::numbers::pi;
        std::vector<int> wy(static_cast<std::size_t>(dy), 0);
        for (int c = 0; c < dy; ++c)
          if (dx + c < static_cast<int>(t.freq.size())) wy[static_cast<std::size_t>(c)] = t.freq[static_cast<std::size_t>(dx + c)];
        const double ca = std::cos(phase), sa = std::sin(phase);
        out.push_back({std::move(wy), t.cos_c * ca + t.sin_c * sa, -t.cos_c * sa + t.sin_c * ca});
      }
      return Polynomial::trig(std::move(out));
    }
    const Vector x_copy = x;
    const Polynomial g = *g_;
    return Polynomial::tabulated([g, x_copy](const Vector& y) {
      Vector xy(x_copy.size() + y.size());
      xy << x_copy, y;
      return g.evaluate_unchecked(xy);
    });
  }

  // Every inner function must be a quadratic form at the current levels.
  bool representable() const {
    if (finite_) {
      for (const auto& g : g_list_)
        if (!g.representable_at(set_x_.level())) return false;
      return true;
    }
    if (g_->basis() != Polynomial::Basis::TrigFreq) return true;
    const int dx = set_x_.ambient_dim();
    for (const auto& t : g_->trig_terms())
      for (std::size_t c = 0; c < t.freq.size(); ++c) {
        const int bound = (static_cast<int>(c) < dx) ? 2 * set_x_.level() : 2 * set_y_->level();
        if (std::abs(t.freq[c]) > bound) return false;
      }
    return true;
  }

private:
  BilinearObjective() = default;

  SimpleSet set_x_ = SimpleSet::make(SetKind::Discrete, 1, 0);
  std::optional<SimpleSet> set_y_;
  std::vector<Polynomial> g_list_;
  std::optional<Polynomial> g_;
  bool finite_ = true;
};

struct MinMaxResult {
  double value = 0.0;
  Vector alpha;    // pseudo-moment weights over the m'' X-points
  Vector lambda;   // certificate weights over the m' X-points
  Vector x_star;
  int moment_rank = 0;
  BoundStatus bound_status = BoundStatus::Unknown;
  SolveStatus status = SolveStatus::NumericalFailure;
  double gap = 0.0;

  std::vector<Matrix> t_blocks;  // finite Y: multipliers T_j in the empirical basis
  std::vector<Matrix> d_blocks;  // general Y: D_i values
  Matrix big_t;                  // general Y: multiplier of the coupled block

  EmpiricalBasis basis_x;
  EmpiricalBasis basis_y;        // general Y only
  PointSet pts_x;
  PointSet pts_y;                // general Y only
  bool finite_y = true;
};

namespace minmax_detail {

inline Vector kron_vec(const Vector& a, const Vector& b) {
  Vector v(a.size() * b.size());
  for (int i = 0; i < a.size(); ++i) v.segment(i * b.size(), b.size()) = a[i] * b;
  return v;
}

}  // namespace minmax_detail

// Layout of the finite-Y primal-dual SDP:
//   min sum_i lambda_i
//   s.t. sum_{i<m''} alpha_i g_j(x_i) phi_i phi_i^T <= sum_{i<m'} lambda_i phi_i phi_i^T   (all j)
//        sum alpha = 1,  Phi2^T diag(alpha) Phi2 PSD
struct FiniteMinMaxSdp {
  SdpProblem problem;
  int m = 0, mp = 0, mpp = 0, p = 0;
  int alpha_first = 0;
  int lambda_first = 0;
  std::vector<int> g_blocks;
  int moment_block = 0;
  EmpiricalBasis basis1;
  Matrix phi;   // m'' x m
  Matrix phi2;  // m'' x m'
  PointSet pts;
};

inline FiniteMinMaxSdp build_primal_dual_finite(const SimpleSet& set_x, const std::vector<Polynomial>& g_list,
                                                const PointSet& pts) {
  if (g_list.empty()) throw InvalidProblem("build_primal_dual_finite: empty g_list");
  const Dims dims = set_x.dims();
  if (pts.size() < dims.m_second) throw ConditioningError("build_primal_dual_finite: needs at least m'' points");
  for (const auto& g : g_list)
    if (!g.representable_at(set_x.level()))
      throw InvalidProblem("build_primal_dual_finite: polynomial degree exceeds the hierarchy level");

  FiniteMinMaxSdp out;
  out.m = dims.m;
  out.mp = dims.m_prime;
  out.mpp = dims.m_second;
  out.p = static_cast<int>(g_list.size());
  out.pts = pts;
  out.basis1 = feature_basis(set_x, pts);
  out.phi = out.basis1.features(pts.pts.topRows(out.mpp));
  const EmpiricalBasis basis2 = squared_feature_basis(set_x, pts);
  out.phi2 = basis2.features(pts.pts.topRows(out.mpp));

  SdpProblem& pr = out.problem;
  out.alpha_first = pr.add_vars(out.mpp);
  out.lambda_first = pr.add_vars(out.mp);
  for (int i = 0; i < out.mp; ++i) pr.set_cost(out.lambda_first + i, 1.0);

  for (int j = 0; j < out.p; ++j) {
    const int blk = pr.add_block(out.m);
    out.g_blocks.push_back(blk);
    for (int i = 0; i < out.mpp; ++i) {
      const double gv = g_list[static_cast<std::size_t>(j)].evaluate_unchecked(pts.point(i));
      if (gv != 0.0) pr.add_coeff_rank1(blk, out.alpha_first + i, -gv, out.phi.row(i).transpose());
    }
    for (int i = 0; i < out.mp; ++i) pr.add_coeff_rank1(blk, out.lambda_first + i, 1.0, out.phi.row(i).transpose());
  }

  out.moment_block = pr.add_block(out.mp);
  for (int i = 0; i < out.mpp; ++i)
    pr.add_coeff_rank1(out.moment_block, out.alpha_first + i, 1.0, out.phi2.row(i).transpose());

  Vector ones = Vector::Zero(pr.num_vars());
  ones.head(out.mpp).setOnes();
  pr.add_equality(std::move(ones), 1.0);
  return out;
}

// Layout of the general-Y kernelized primal-dual SDP:
//   min sum_i lambda_i  over alpha (m''), lambda (m'), D_1..D_{m'} (p x p)
//   s.t. psi_j^T D_i psi_j - lambda_i + [N diag(alpha) G]_{ij} = 0   (i<m', j<p')
//        sum_i D_i (x) phi_i phi_i^T PSD,  sum alpha = 1,
//        Phi2^T diag(alpha) Phi2 PSD,  with N = (K' o K')^{-1} K''.
struct GeneralMinMaxSdp {
  SdpProblem problem;
  int m = 0, mp = 0, mpp = 0, p = 0, pp = 0;
  int alpha_first = 0;
  int lambda_first = 0;
  std::vector<SymVarPack> d_packs;
  int coupled_block = 0;
  int moment_block = 0;
  EmpiricalBasis basis_x;
  EmpiricalBasis basis_y;
  Matrix phi;    // m'' x m
  Matrix phi2;   // m'' x m'
  Matrix psi;    // p' x p
  Matrix g_tab;  // m'' x p'
  Matrix n_mat;  // m' x m''
  PointSet pts_x, pts_y;
};

inline GeneralMinMaxSdp build_primal_dual(const SimpleSet& set_x, const SimpleSet& set_y,
                                          const BilinearObjective& obj, const PointSet& pts_x,
                                          const PointSet& pts_y) {
  const Dims dx = set_x.dims();
  const Dims dy = set_y.dims();
  if (pts_x.size() < dx.m_second) throw ConditioningError("build_primal_dual: needs at least m'' X-points");
  if (pts_y.size() < dy.m_prime) throw InvalidProblem("build_primal_dual: needs at least p' Y-points");

  GeneralMinMaxSdp out;
  out.m = dx.m;
  out.mp = dx.m_prime;
  out.mpp = dx.m_second;
  out.p = dy.m;
  out.pp = dy.m_prime;
  out.pts_x = pts_x;
  out.pts_y = pts_y;
  out.basis_x = feature_basis(set_x, pts_x);
  out.phi = out.basis_x.features(pts_x.pts.topRows(out.mpp));
  const EmpiricalBasis basis2 = squared_feature_basis(set_x, pts_x);
  out.phi2 = basis2.features(pts_x.pts.topRows(out.mpp));
  out.basis_y = feature_basis(set_y, pts_y);
  out.psi = out.basis_y.features(pts_y.pts.topRows(out.pp));

  // N re-expresses the phi phi^T of all m'' points over the first m'
  const Matrix kp = kernel_matrix(set_x, pts_x.pts.topRows(out.mp));
  const Matrix kpkp = kp.cwiseProduct(kp);
  {
    const EigSym e = eig_sym(kpkp);
    if (e.values.minCoeff() <= 1e-10 * std::max(1.0, e.values.maxCoeff()))
      throw ConditioningError("build_primal_dual: K' o K' is numerically singular");
  }
  const Matrix kpp = kernel_matrix(set_x, pts_x.pts.topRows(out.mp), pts_x.pts.topRows(out.mpp));
  out.n_mat = kpkp.ldlt().solve(kpp.cwiseProduct(kpp));

  out.g_tab.resize(out.mpp, out.pp);
  for (int i = 0; i < out.mpp; ++i)
    for (int j = 0; j < out.pp; ++j) out.g_tab(i, j) = obj.eval(pts_x.point(i), pts_y.point(j));

  SdpProblem& pr = out.problem;
  out.alpha_first = pr.add_vars(out.mpp);
  out.lambda_first = pr.add_vars(out.mp);
  for (int i = 0; i < out.mp; ++i) pr.set_cost(out.lambda_first + i, 1.0);
  for (int i = 0; i < out.mp; ++i) out.d_packs.push_back(add_sym_matrix_vars(pr, out.p));

  // equality grid: psi_j^T D_i psi_j - lambda_i + sum_k N_{ik} alpha_k g(x_k, y_j) = 0
  for (int i = 0; i < out.mp; ++i) {
    for (int j = 0; j < out.pp; ++j) {
      Vector row = Vector::Zero(pr.num_vars());
      const Vector psi_j = out.psi.row(j).transpose();
      row.segment(out.d_packs[static_cast<std::size_t>(i)].first,
                  out.d_packs[static_cast<std::size_t>(i)].count()) =
          out.d_packs[static_cast<std::size_t>(i)].quad_form_row(psi_j);
      row[out.lambda_first + i] = -1.0;
      for (int k = 0; k < out.mpp; ++k) row[out.alpha_first + k] += out.n_mat(i, k) * out.g_tab(k, j);
      pr.add_equality(std::move(row), 0.0);
    }
  }

  out.coupled_block = pr.add_block(out.p * out.m);
  for (int i = 0; i < out.mp; ++i)
    add_kron_coeffs(pr, out.coupled_block, out.d_packs[static_cast<std::size_t>(i)], out.phi.row(i).transpose());

  out.moment_block = pr.add_block(out.mp);
  for (int i = 0; i < out.mpp; ++i)
    pr.add_coeff_rank1(out.moment_block, out.alpha_first + i, 1.0, out.phi2.row(i).transpose());

  Vector ones = Vector::Zero(pr.num_vars());
  ones.head(out.mpp).setOnes();
  pr.add_equality(std::move(ones), 1.0);
  return out;
}

// Evaluates v_j(x) = phi(x)^T T_j phi(x) for a finite-Y result.
inline Vector dual_weights(const MinMaxResult& res, const Vector& x) {
  if (!res.finite_y) throw InvalidProblem("dual_weights: general-Y result, use the D blocks");
  const Vector f = res.basis_x(x);
  Vector v(static_cast<int>(res.t_blocks.size()));
  for (std::size_t j = 0; j < res.t_blocks.size(); ++j) v[static_cast<int>(j)] = f.dot(res.t_blocks[j] * f);
  return v;
}

inline BoundStatus posteriori_check(const MinMaxResult& res, const BilinearObjective& obj) {
  if (res.status != SolveStatus::Optimal) return BoundStatus::Unknown;

  // inner relaxation exact: finite Y, the one-dimensional torus, or linear
  // features on the sphere/ball
  bool lower_known = obj.finite_y();
  if (!obj.finite_y()) {
    const SimpleSet& sy = obj.set_y();
    if (sy.kind() == SetKind::Trig && sy.ambient_dim() == 1) lower_known = true;
    if (sy.kind() == SetKind::Discrete) lower_known = true;
    if ((sy.kind() == SetKind::Sphere || sy.kind() == SetKind::Ball) && sy.level() == 1) lower_known = true;
  }

  double inner = 0.0;
  bool inner_ok = true;
  if (obj.finite_y()) {
    inner = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < obj.num_inner(); ++j) inner = std::max(inner, obj.eval(j, res.x_star));
  } else {
    const Polynomial gy = obj.inner_polynomial(res.x_star);
    const MinResult inner_min = solve_min(obj.set_y(), -gy, 0x717);
    inner_ok = inner_min.status == SolveStatus::Optimal;
    inner = -inner_min.value;
  }

  const bool pointlike = res.moment_rank == 1;
  const bool matches = inner_ok && std::abs(inner - res.value) <= 1e-6 * (1.0 + std::abs(res.value));
  if (lower_known) {
    if (pointlike && matches) return BoundStatus::Tight;
    return BoundStatus::LowerBound;
  }
  if (pointlike && matches) return BoundStatus::UpperBound;
  return BoundStatus::Unknown;
}

inline MinMaxResult solve_minmax(const BilinearObjective& obj, std::uint64_t seed,
                                 const SdpOptions& opts = SdpOptions()) {
  const SimpleSet& sx = obj.set_x();
  const Dims dx = sx.dims();
  MinMaxResult out;
  out.finite_y = obj.finite_y();

  const PointSet pts_x = sx.sample(dx.m_second, seed);
  SdpProblem* problem = nullptr;
  FiniteMinMaxSdp fin;
  GeneralMinMaxSdp gen;
  if (obj.finite_y()) {
    fin = build_primal_dual_finite(sx, obj.g_list(), pts_x);
    problem = &fin.problem;
    out.basis_x = fin.basis1;
  } else {
    const Dims dy = obj.set_y().dims();
    const PointSet pts_y = obj.set_y().sample(dy.m_prime, Rng::mix(seed, 7));
    gen = build_primal_dual(sx, obj.set_y(), obj, pts_x, pts_y);
    problem = &gen.problem;
    out.basis_x = gen.basis_x;
    out.basis_y = gen.basis_y;
    out.pts_y = gen.pts_y;
  }
  out.pts_x = pts_x;

  SdpSolution sol = problem->solve(opts);
  out.status = sol.status;
  out.gap = sol.gap;
  if (sol.status != SolveStatus::Optimal) return out;
  out.value = sol.objective;

  // dual multipliers from the unrefined solve
  if (obj.finite_y()) {
    for (int j = 0; j < fin.p; ++j) out.t_blocks.push_back(sol.dual_S[static_cast<std::size_t>(fin.g_blocks[static_cast<std::size_t>(j)])]);
  } else {
    out.big_t = sol.dual_S[static_cast<std::size_t>(gen.coupled_block)];
  }

  std::vector<int> alpha_idx(static_cast<std::size_t>(dx.m_second));
  for (int i = 0; i < dx.m_second; ++i) alpha_idx[static_cast<std::size_t>(i)] = i;
  const SdpSolution refined = refine_rank_one(*problem, sol, Rng::mix(seed, 0xa1fa), alpha_idx);
  const SdpSolution& use = (refined.status == SolveStatus::Optimal) ? refined : sol;

  out.alpha = use.x.head(dx.m_second);
  out.lambda = use.x.segment(dx.m_second, dx.m_prime);
  if (!obj.finite_y()) {
    for (const auto& pack : gen.d_packs) out.d_blocks.push_back(pack.value(use.x));
  }
  const Matrix& phi = obj.finite_y() ? fin.phi : gen.phi;
  const Matrix moment = phi.transpose() * out.alpha.asDiagonal() * phi;
  out.moment_rank = psd_rank(moment, kMomentRankTol);
  out.x_star = extract_point(sx, pts_x.pts.topRows(dx.m_second), out.alpha);
  out.bound_status = posteriori_check(out, obj);
  return out;
}

// ---------------------------------------------------------------------------
// Two-stage baseline: fit the upper polynomial a(x) >= g(x,y) with smallest
// expectation under mu, then minimize a.

struct TwoStageResult {
  double stage1_value = 0.0;   // E_mu[a]
  Vector a_values;             // a(x_i) at the m' X-points
  double value = 0.0;          // min of a (stage 2)
  Vector x_star;
  MinResult stage2;
  SolveStatus status = SolveStatus::NumericalFailure;
  std::function<double(const Vector&)> a_eval;  // evaluates a anywhere
};

// Weights over the first m' points representing Sigma = I/m in the empirical
// basis (least squares; exact for tensor-product trigonometric sets).
inline Vector uniform_moment_weights(const SimpleSet& set, const PointSet& pts) {
  const Dims dims = set.dims();
  const Matrix phi = empirical_features(set, pts);
  const int mp = dims.m_prime;
  Matrix s(svec_dim(dims.m), mp);
  for (int i = 0; i < mp; ++i) s.col(i) = svec(phi.row(i).transpose() * phi.row(i));
  const Vector target = svec(Matrix::Identity(dims.m, dims.m) / dims.m);
  return s.colPivHouseholderQr().solve(target);
}

namespace minmax_detail {

struct Stage1 {
  SdpProblem problem;
  int mp = 0, pp = 0;
  Matrix phi;  // m' x m
  Matrix psi;  // p' x p (identity for finite Y)
  Matrix g_tab;
  std::vector<int> blocks;  // p blocks (finite) or 1 coupled block
  bool finite = true;
};

inline Stage1 build_stage1(const BilinearObjective& obj, const PointSet& pts_x, const PointSet* pts_y,
                           const Vector& mu) {
  const SimpleSet& sx = obj.set_x();
  const Dims dx = sx.dims();
  Stage1 st;
  st.mp = dx.m_prime;
  st.finite = obj.finite_y();
  if (pts_x.size() < st.mp) throw ConditioningError("two_stage: needs at least m' X-points");
  if (mu.size() != st.mp) throw InvalidProblem("two_stage: mu must have m' entries");
  st.phi = empirical_features(sx, pts_x).topRows(st.mp);

  int p = 0;
  if (st.finite) {
    p = obj.num_inner();
    st.pp = p;
    st.psi = Matrix::Identity(p, p);
    st.g_tab.resize(st.mp, p);
    for (int i = 0; i < st.mp; ++i)
      for (int j = 0; j < p; ++j) st.g_tab(i, j) = obj.eval(j, pts_x.point(i));
  } else {
    const Dims dy = obj.set_y().dims();
    p = dy.m;
    st.pp = dy.m_prime;
    st.psi = feature_basis(obj.set_y(), *pts_y).features(pts_y->pts.topRows(st.pp));
    st.g_tab.resize(st.mp, st.pp);
    for (int i = 0; i < st.mp; ++i)
      for (int j = 0; j < st.pp; ++j) st.g_tab(i, j) = obj.eval(pts_x.point(i), pts_y->point(j));
  }

  SdpProblem& pr = st.problem;
  pr.add_vars(st.mp * st.pp);  // alpha_{ij}, row-major
  for (int i = 0; i < st.mp; ++i)
    for (int j = 0; j < st.pp; ++j) pr.set_cost(i * st.pp + j, st.g_tab(i, j));
  pr.set_sense(Sense::Max);

  if (st.finite) {
    // block-diagonal: one PSD moment block per atom of Y
    for (int j = 0; j < st.pp; ++j) {
      const int blk = pr.add_block(dx.m);
      st.blocks.push_back(blk);
      for (int i = 0; i < st.mp; ++i) pr.add_coeff_rank1(blk, i * st.pp + j, 1.0, st.phi.row(i).transpose());
    }
  } else {
    const int blk = pr.add_block(dx.m * p);
    st.blocks.push_back(blk);
    for (int i = 0; i < st.mp; ++i)
      for (int j = 0; j < st.pp; ++j)
        pr.add_coeff_rank1(blk, i * st.pp + j, 1.0,
                           kron_vec(st.phi.row(i).transpose(), st.psi.row(j).transpose()));
  }

  for (int i = 0; i < st.mp; ++i) {
    Vector row = Vector::Zero(pr.num_vars());
    row.segment(i * st.pp, st.pp).setOnes();
    pr.add_equality(std::move(row), mu[i]);
  }
  return st;
}

}  // namespace minmax_detail

inline TwoStageResult two_stage(const BilinearObjective& obj, const PointSet& pts_x, const Vector& mu,
                                std::uint64_t seed = 0) {
  using minmax_detail::Stage1;
  TwoStageResult out;
  const SimpleSet& sx = obj.set_x();

  PointSet pts_y;
  const PointSet* pts_y_ptr = nullptr;
  if (!obj.finite_y()) {
    pts_y = obj.set_y().sample(obj.set_y().dims().m_prime, Rng::mix(pts_x.seed, 77));
    pts_y_ptr = &pts_y;
  }
  Stage1 st = minmax_detail::build_stage1(obj, pts_x, pts_y_ptr, mu);
  const SdpSolution sol = st.problem.solve();
  out.status = sol.status;
  if (sol.status != SolveStatus::Optimal) return out;
  out.stage1_value = sol.objective;

  // a(x_i) from the row-sum multipliers (internal minimization sign)
  out.a_values = -sol.dual_y;

  // a(x) anywhere from the PSD multiplier: a(x) = g(x,y_j) + feat^T C feat,
  // averaged over the y grid
  const EmpiricalBasis basis_x = feature_basis(sx, pts_x);
  std::vector<Matrix> c_blocks;
  for (int b : st.blocks) c_blocks.push_back(sol.dual_S[static_cast<std::size_t>(b)]);
  const bool finite = obj.finite_y();
  const Matrix psi = st.psi;
  const BilinearObjective obj_copy = obj;
  const PointSet pts_y_copy = pts_y;
  out.a_eval = [finite, basis_x, c_blocks, psi, obj_copy, pts_y_copy](const Vector& x) {
    const Vector f = basis_x(x);
    double acc = 0.0;
    int count = 0;
    if (finite) {
      for (std::size_t j = 0; j < c_blocks.size(); ++j) {
        acc += obj_copy.eval(static_cast<int>(j), x) + f.dot(c_blocks[j] * f);
        ++count;
      }
    } else {
      for (int j = 0; j < psi.rows(); ++j) {
        const Vector e = minmax_detail::kron_vec(f, psi.row(j).transpose());
        acc += obj_copy.eval(x, pts_y_copy.point(j)) + e.dot(c_blocks[0] * e);
        ++count;
      }
    }
    return acc / count;
  };

  // stage 2: minimize the upper polynomial through its values at the points
  Vector a_vals = out.a_values;
  const Matrix base_pts = pts_x.pts;
  const Polynomial a_tab = Polynomial::tabulated([a_vals, base_pts](const Vector& x) {
    for (int i = 0; i < base_pts.rows(); ++i)
      if ((base_pts.row(i).transpose() - x).cwiseAbs().maxCoeff() < 1e-12) return a_vals[i];
    throw DomainError("two_stage upper polynomial is tabulated at the generated points only");
    return 0.0;
  });
  out.stage2 = solve_min_on(sx, a_tab, pts_x, Rng::mix(seed, 5));
  out.value = out.stage2.value;
  out.x_star = out.stage2.x_star;
  out.status = out.stage2.status;
  return out;
}

// Alternating variant: replace mu by the previous pseudo-moment weights and
// iterate; returns the stage-1 objective per iteration (non-increasing, and
// in general stalls above the global min-max).
inline std::vector<double> alternate_two_stage(const BilinearObjective& obj, const PointSet& pts_x,
                                               const Vector& mu0, int iters, std::uint64_t seed = 0) {
  if (iters < 1) throw InvalidProblem("alternate_two_stage: iters must be >= 1");
  std::vector<double> values;
  Vector mu = mu0;
  for (int t = 0; t < iters; ++t) {
    const TwoStageResult r = two_stage(obj, pts_x, mu, Rng::mix(seed, static_cast<std::uint64_t>(t)));
    if (r.status != SolveStatus::Optimal) break;
    values.push_back(r.stage1_value);
    mu = r.stage2.alpha;
  }
  return values;
}

}  // namespace sosmm
