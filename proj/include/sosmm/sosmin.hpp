#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "sosmm/features.hpp"
#include "sosmm/polynomial.hpp"
#include "sosmm/sdp.hpp"

namespace sosmm {

// Candidate point from pseudo-moment weights: plain weighted coordinate
// average, except torus coordinates (circular mean, respecting periodicity)
// and discrete atoms (nearest atom).
inline Vector extract_point(const SimpleSet& set, const Matrix& pts, const Vector& alpha) {
  const int n = static_cast<int>(alpha.size());
  Vector x = Vector::Zero(set.ambient_dim());
  const auto fill = [&](const SimpleSet& s, int off) {
    switch (s.kind()) {
      case SetKind::Trig: {
        for (int c = 0; c < s.ambient_dim(); ++c) {
          double re = 0.0, im = 0.0;
          for (int i = 0; i < n; ++i) {
            const double th = 2.0 * std::numbers::pi * pts(i, off + c);
            re += alpha[i] * std::cos(th);
            im += alpha[i] * std::sin(th);
          }
          double t = std::atan2(im, re) / (2.0 * std::numbers::pi);
          if (t < 0.0) t += 1.0;
          if (t >= 1.0) t -= 1.0;
          x[off + c] = t;
        }
        break;
      }
      case SetKind::Discrete: {
        double v = 0.0;
        for (int i = 0; i < n; ++i) v += alpha[i] * pts(i, off);
        x[off] = std::clamp(std::round(v), 0.0, static_cast<double>(s.dim_param() - 1));
        break;
      }
      default:
        for (int c = 0; c < s.ambient_dim(); ++c) {
          double v = 0.0;
          for (int i = 0; i < n; ++i) v += alpha[i] * pts(i, off + c);
          x[off + c] = v;
        }
    }
  };
  if (set.kind() == SetKind::Product) {
    int off = 0;
    for (const auto& f : set.factors()) {
      fill(f, off);
      off += f.ambient_dim();
    }
  } else {
    fill(set, 0);
  }
  return x;
}

struct MinResult {
  double value = 0.0;
  Vector alpha;       // weights over the evaluation points
  Vector x_star;
  int moment_rank = 0;
  SolveStatus status = SolveStatus::NumericalFailure;
  double gap = 0.0;
  Matrix moment;      // Phi^T diag(alpha) Phi
  PointSet pts;       // the points alpha refers to
};

// inf_alpha sum_i alpha_i f(x_i)  s.t.  sum alpha = 1,
// Phi^T diag(alpha) Phi PSD, over the first m' points of `pts`.
// Variables 0..m'-1 of the returned problem are the weights alpha.
inline SdpProblem build_min_sdp(const SimpleSet& set, const Polynomial& f, const PointSet& pts) {
  const Dims dims = set.dims();
  if (pts.size() < dims.m_prime) throw ConditioningError("build_min_sdp: needs at least m' points");
  const Matrix phi = empirical_features(set, pts);

  SdpProblem p;
  const int mp = dims.m_prime;
  p.add_vars(mp);
  for (int i = 0; i < mp; ++i) p.set_cost(i, f.evaluate_unchecked(pts.point(i)));
  const int blk = p.add_block(dims.m);
  for (int i = 0; i < mp; ++i) p.add_coeff_rank1(blk, i, 1.0, phi.row(i).transpose());
  p.add_equality(Vector::Ones(mp), 1.0);
  return p;
}

constexpr double kMomentRankTol = 1e-6;

inline MinResult solve_min_on(const SimpleSet& set, const Polynomial& f, const PointSet& pts, std::uint64_t seed,
                              const SdpOptions& opts = SdpOptions()) {
  const Dims dims = set.dims();
  const SdpProblem p = build_min_sdp(set, f, pts);

  MinResult out;
  out.pts = pts;
  SdpSolution sol = p.solve(opts);
  out.status = sol.status;
  out.gap = sol.gap;
  if (sol.status != SolveStatus::Optimal) {
    out.alpha = sol.x;
    out.value = sol.objective;
    return out;
  }

  // the relaxation value is the plain optimum; refinement (within its value
  // band) only serves extraction
  out.value = sol.objective;
  std::vector<int> alpha_idx(static_cast<std::size_t>(dims.m_prime));
  for (int i = 0; i < dims.m_prime; ++i) alpha_idx[static_cast<std::size_t>(i)] = i;
  sol = refine_rank_one(p, sol, Rng::mix(seed, 0xa1fa), alpha_idx);

  out.alpha = sol.x.head(dims.m_prime);
  const Matrix phi = empirical_features(set, pts).topRows(dims.m_prime);
  out.moment = phi.transpose() * out.alpha.asDiagonal() * phi;
  out.moment_rank = psd_rank(out.moment, kMomentRankTol);
  out.x_star = extract_point(set, pts.pts.topRows(dims.m_prime), out.alpha);
  return out;
}

inline MinResult solve_min(const SimpleSet& set, const Polynomial& f, std::uint64_t seed,
                           const SdpOptions& opts = SdpOptions()) {
  return solve_min_on(set, f, set.sample(set.dims().m_prime, seed), seed, opts);
}

// f(x_star) - relaxation value; >= -1e-7 always, ~0 certifies tightness.
inline double certificate_gap(const Polynomial& f, const MinResult& result) {
  if (result.status != SolveStatus::Optimal) throw InvalidProblem("certificate_gap: needs an Optimal result");
  return f.evaluate_unchecked(result.x_star) - result.value;
}

}  // namespace sosmm
