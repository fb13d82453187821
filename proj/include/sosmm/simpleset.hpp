#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <numbers>
#include <string>
#include <tuple>
#include <vector>

#include "sosmm/errors.hpp"
#include "sosmm/linalg.hpp"
#include "sosmm/rng.hpp"

namespace sosmm {

enum class SetKind { Discrete, Trig, Sphere, Ball, BooleanCube, Product };

struct Dims {
  int m;        // dim of the feature span
  int m_prime;  // dim of the span of phi phi^T
  int m_second; // dim of the span of phi^{(x)4}
};

class SimpleSet;
struct PointSet;

namespace detail {

inline long long binom(int n, int k) {
  if (k < 0 || k > n) return 0;
  long long r = 1;
  k = std::min(k, n - k);
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

inline double frac(double x) { return x - std::floor(x); }

// sin((2s+1) pi t) / ((2s+1) sin(pi t)); the removable singularity at
// integer t is branched to its limit value 1.
inline double dirichlet_ratio(double t, int s) {
  const double denom = std::sin(std::numbers::pi * t);
  if (std::abs(denom) < 1e-9) return 1.0;
  const int n = 2 * s + 1;
  return std::sin(n * std::numbers::pi * t) / (n * denom);
}

// Krawtchouk value K_i(u; d) = sum_k (-1)^k C(u,k) C(d-u, i-k).
inline double krawtchouk(int i, int u, int d) {
  double acc = 0.0;
  for (int k = 0; k <= i; ++k) {
    acc += ((k % 2) ? -1.0 : 1.0) * static_cast<double>(binom(u, k)) *
           static_cast<double>(binom(d - u, i - k));
  }
  return acc;
}

}  // namespace detail

// A compact domain carrying a unit-norm polynomial feature map, accessed only
// through its kernel k(x,y). `degree` is the degree the problem data lives
// at; `level` (>= degree) is the degree the kernel currently works at and is
// what hierarchies raise.
class SimpleSet {
public:
  static SimpleSet make(SetKind kind, int d, int r) {
    if (d < 1) throw DomainError("make_set: d must be >= 1");
    if (r < 0) throw DomainError("make_set: r must be >= 0");
    if (kind == SetKind::Product) throw DomainError("make_set: use SimpleSet::product");
    if (kind != SetKind::Discrete && r == 0) {
      throw DomainError(
          "make_set: r = 0 is rejected for this kind (the identity map is not "
          "linear in the features)");
    }
    SimpleSet s;
    s.kind_ = kind;
    s.d_ = d;
    s.degree_ = r;
    s.level_ = r;
    return s;
  }

  static SimpleSet product(std::vector<SimpleSet> factors) {
    if (factors.empty()) throw DomainError("product: needs at least one factor");
    SimpleSet s;
    s.kind_ = SetKind::Product;
    s.factors_ = std::move(factors);
    s.d_ = 0;
    s.degree_ = 0;
    s.level_ = 0;
    for (const auto& f : s.factors_) {
      s.d_ += f.ambient_dim();
      s.degree_ = std::max(s.degree_, f.degree_);
      s.level_ = std::max(s.level_, f.level_);
    }
    return s;
  }

  SimpleSet with_hierarchy(int s) const {
    if (s < degree_) throw DomainError("with_hierarchy: s must be >= degree");
    SimpleSet out = *this;
    if (kind_ == SetKind::Product) {
      for (auto& f : out.factors_) f = f.with_hierarchy(std::max(s, f.degree_));
    }
    out.level_ = s;
    return out;
  }

  SetKind kind() const { return kind_; }
  int dim_param() const { return d_; }
  int degree() const { return degree_; }
  int level() const { return level_; }
  const std::vector<SimpleSet>& factors() const { return factors_; }

  // Length of a coordinate vector for a point of this set.
  int ambient_dim() const {
    switch (kind_) {
      case SetKind::Discrete: return 1;
      case SetKind::Trig: return d_;
      case SetKind::Sphere: return d_ + 1;
      case SetKind::Ball: return d_;
      case SetKind::BooleanCube: return d_;
      case SetKind::Product: return d_;
    }
    return 0;
  }

  bool contains(const Vector& x, double tol = 1e-12) const {
    if (x.size() != ambient_dim()) return false;
    switch (kind_) {
      case SetKind::Discrete: {
        const double r = std::round(x[0]);
        return std::abs(x[0] - r) <= tol && r >= 0 && r < d_;
      }
      case SetKind::Trig:
        for (int i = 0; i < d_; ++i)
          if (x[i] < -tol || x[i] >= 1.0 + tol) return false;
        return true;
      case SetKind::Sphere: return std::abs(x.norm() - 1.0) <= tol;
      case SetKind::Ball: return x.squaredNorm() <= 1.0 + tol;
      case SetKind::BooleanCube:
        for (int i = 0; i < d_; ++i)
          if (std::abs(std::abs(x[i]) - 1.0) > tol) return false;
        return true;
      case SetKind::Product: {
        int off = 0;
        for (const auto& f : factors_) {
          if (!f.contains(x.segment(off, f.ambient_dim()), tol)) return false;
          off += f.ambient_dim();
        }
        return true;
      }
    }
    return false;
  }

  double kernel(const Vector& x, const Vector& y) const {
    if (!contains(x) || !contains(y)) throw DomainError("kernel: point not in set");
    return kernel_unchecked(x, y);
  }

  double kernel_unchecked(const Vector& x, const Vector& y) const {
    switch (kind_) {
      case SetKind::Discrete:
        return (std::llround(x[0]) == std::llround(y[0])) ? 1.0 : 0.0;
      case SetKind::Trig: {
        double k = 1.0;
        for (int i = 0; i < d_; ++i) k *= detail::dirichlet_ratio(x[i] - y[i], level_);
        return k;
      }
      case SetKind::Sphere: return sphere_kernel(x.dot(y));
      case SetKind::Ball: {
        const double zx = lift_height(x), zy = lift_height(y);
        return sphere_kernel(x.dot(y) + zx * zy);
      }
      case SetKind::BooleanCube: {
        const int u = static_cast<int>(std::llround((d_ - x.dot(y)) / 2.0));
        return boolean_kernel_by_distance()[static_cast<std::size_t>(u)];
      }
      case SetKind::Product: {
        double k = 1.0;
        int off = 0;
        for (const auto& f : factors_) {
          const int a = f.ambient_dim();
          k *= f.kernel_unchecked(x.segment(off, a), y.segment(off, a));
          off += a;
        }
        return k;
      }
    }
    return 0.0;
  }

  // Ball points lift to the upper hemisphere of the sphere one dimension up.
  double lift_height(const Vector& x) const {
    return std::sqrt(std::max(0.0, 1.0 - x.squaredNorm()));
  }

  // Kernel evaluated with the hemisphere reflection applied to the first
  // argument's lift (only meaningful for Ball sets; used to split SOS
  // certificates into even/odd parts).
  double kernel_flip(const Vector& x, const Vector& y) const {
    if (kind_ != SetKind::Ball) throw DomainError("kernel_flip: Ball sets only");
    const double zx = lift_height(x), zy = lift_height(y);
    return sphere_kernel(x.dot(y) - zx * zy);
  }

  Dims dims() const {
    switch (kind_) {
      case SetKind::Discrete: return {d_, d_, d_};
      case SetKind::Trig: {
        const auto p = [&](int mult) {
          long long v = 1;
          for (int i = 0; i < d_; ++i) v *= (mult * level_ + 1);
          return static_cast<int>(v);
        };
        return {p(2), p(4), p(8)};
      }
      case SetKind::Sphere:
      case SetKind::Ball: {
        // dimension of polynomials of degree <= t on S^d, evaluated at
        // t = s, 2s, 4s; the ball inherits the counts through its lift
        const auto sph = [&](int t) {
          return static_cast<int>(detail::binom(d_ + t, t) + detail::binom(d_ + t - 1, t - 1));
        };
        return {sph(level_), sph(2 * level_), sph(4 * level_)};
      }
      case SetKind::BooleanCube: {
        const auto sum = [&](int cap) {
          long long v = 0;
          for (int i = 0; i <= std::min(cap, d_); ++i) v += detail::binom(d_, i);
          return static_cast<int>(v);
        };
        return {sum(level_), sum(2 * level_), sum(4 * level_)};
      }
      case SetKind::Product: {
        Dims out{1, 1, 1};
        for (const auto& f : factors_) {
          const Dims fd = f.dims();
          out.m *= fd.m;
          out.m_prime *= fd.m_prime;
          out.m_second *= fd.m_second;
        }
        return out;
      }
    }
    return {0, 0, 0};
  }

  PointSet sample(int n, std::uint64_t seed) const;

  std::string describe() const {
    switch (kind_) {
      case SetKind::Discrete: return "discrete(" + std::to_string(d_) + ")";
      case SetKind::Trig: return "trig(d=" + std::to_string(d_) + ",s=" + std::to_string(level_) + ")";
      case SetKind::Sphere: return "sphere(d=" + std::to_string(d_) + ",s=" + std::to_string(level_) + ")";
      case SetKind::Ball: return "ball(d=" + std::to_string(d_) + ",s=" + std::to_string(level_) + ")";
      case SetKind::BooleanCube: return "boolcube(d=" + std::to_string(d_) + ",s=" + std::to_string(level_) + ")";
      case SetKind::Product: {
        std::string s = "product(";
        for (std::size_t i = 0; i < factors_.size(); ++i) s += (i ? "," : "") + factors_[i].describe();
        return s + ")";
      }
    }
    return "?";
  }

private:
  SimpleSet() = default;

  double sphere_kernel(double dot) const {
    return std::pow(0.5 * (1.0 + dot), level_);
  }

  // Normalized sum of Krawtchouk values per Hamming distance; k(x,y) depends
  // on x,y only through their number of disagreements.
  const std::vector<double>& boolean_kernel_by_distance() const {
    static std::mutex mu;
    static std::map<std::pair<int, int>, std::vector<double>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& v = cache[{d_, level_}];
    if (v.empty()) {
      double m = 0.0;
      for (int i = 0; i <= std::min(level_, d_); ++i) m += static_cast<double>(detail::binom(d_, i));
      v.resize(static_cast<std::size_t>(d_) + 1);
      for (int u = 0; u <= d_; ++u) {
        double acc = 0.0;
        for (int i = 0; i <= std::min(level_, d_); ++i) acc += detail::krawtchouk(i, u, d_);
        v[static_cast<std::size_t>(u)] = acc / m;
      }
    }
    return v;
  }

  Matrix generate_raw(int n, std::uint64_t seed, int attempt, bool allow_repeat) const;

  SetKind kind_ = SetKind::Discrete;
  int d_ = 1;       // Discrete: atom count; Sphere: S^d in R^{d+1}; else coordinate count
  int degree_ = 0;  // r
  int level_ = 0;   // s >= r
  std::vector<SimpleSet> factors_;
};

// Points generated on a SimpleSet; rows of `pts` are coordinate vectors.
struct PointSet {
  Matrix pts;
  std::uint64_t seed = 0;
  SimpleSet set = SimpleSet::make(SetKind::Discrete, 1, 0);

  int size() const { return static_cast<int>(pts.rows()); }
  Vector point(int i) const { return pts.row(i).transpose(); }
};

// Kernel matrix between two point lists (rows).
inline Matrix kernel_matrix(const SimpleSet& set, const Matrix& a, const Matrix& b) {
  Matrix k(a.rows(), b.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.rows(); ++j)
      k(i, j) = set.kernel_unchecked(a.row(i).transpose(), b.row(j).transpose());
  return k;
}

inline Matrix kernel_matrix(const SimpleSet& set, const Matrix& a) { return kernel_matrix(set, a, a); }

inline Matrix SimpleSet::generate_raw(int n, std::uint64_t seed, int attempt, bool allow_repeat) const {
  const std::uint64_t s0 = Rng::mix(seed, static_cast<std::uint64_t>(attempt));
  switch (kind_) {
    case SetKind::Discrete: {
      Matrix p(n, 1);
      for (int i = 0; i < n; ++i) p(i, 0) = static_cast<double>(i % d_);
      return p;
    }
    case SetKind::Trig: {
      // Additive Kronecker sequence with a seeded offset; deterministic and
      // low-discrepancy.
      Rng rng(s0);
      Vector alpha(d_), off(d_);
      for (int j = 0; j < d_; ++j) {
        alpha[j] = detail::frac(std::pow(2.0, static_cast<double>(j + 1) / (d_ + 1)));
        off[j] = rng.uniform01();
      }
      Matrix p(n, d_);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d_; ++j) p(i, j) = detail::frac(off[j] + i * alpha[j]);
      return p;
    }
    case SetKind::Sphere:
    case SetKind::Ball: {
      Rng rng(s0);
      const int amb = d_ + 1;  // sample on the sphere, project for the ball
      Matrix p(n, ambient_dim());
      for (int i = 0; i < n; ++i) {
        Vector g(amb);
        do {
          for (int j = 0; j < amb; ++j) g[j] = rng.normal();
        } while (g.norm() < 1e-8);
        g.normalize();
        if (kind_ == SetKind::Sphere)
          p.row(i) = g.transpose();
        else
          p.row(i) = g.head(d_).transpose();
      }
      return p;
    }
    case SetKind::BooleanCube: {
      if (d_ > 20) throw DomainError("sample_points: Boolean cube dimension too large");
      const long long total = 1LL << d_;
      if (n > total && !allow_repeat) throw DomainError("sample_points: more points than cube vertices requested");
      std::vector<long long> idx(static_cast<std::size_t>(total));
      for (long long i = 0; i < total; ++i) idx[static_cast<std::size_t>(i)] = i;
      Rng rng(s0);
      Matrix p(n, d_);
      // sampling without replacement; as a product factor, exhausted blocks
      // are reshuffled and cycled
      rng.shuffle(idx);
      for (int i = 0; i < n; ++i) {
        const int r = i % static_cast<int>(total);
        if (i > 0 && r == 0) rng.shuffle(idx);
        for (int j = 0; j < d_; ++j) p(i, j) = ((idx[static_cast<std::size_t>(r)] >> j) & 1) ? 1.0 : -1.0;
      }
      return p;
    }
    case SetKind::Product: {
      Matrix p(n, d_);
      int off = 0;
      for (std::size_t f = 0; f < factors_.size(); ++f) {
        const Matrix fp = factors_[f].generate_raw(n, Rng::mix(seed, 1000 + f), attempt, true);
        p.middleCols(off, factors_[f].ambient_dim()) = fp;
        off += factors_[f].ambient_dim();
      }
      return p;
    }
  }
  return Matrix();
}

inline PointSet SimpleSet::sample(int n, std::uint64_t seed) const {
  if (n < 1) throw DomainError("sample_points: n must be >= 1");
  const int m = dims().m;
  const int lead = std::min(n, m);
  for (int attempt = 0; attempt < 20; ++attempt) {
    Matrix p = generate_raw(n, seed, attempt, false);
    const Matrix k = kernel_matrix(*this, p.topRows(lead));
    if (min_eig(k) > 1e-10) {
      PointSet ps;
      ps.pts = std::move(p);
      ps.seed = seed;
      ps.set = *this;
      return ps;
    }
    // Deterministic sets cannot be re-randomized into shape.
    if (kind_ == SetKind::Discrete) break;
  }
  throw ConditioningError("sample_points: could not generate well-positioned points for " + describe());
}

// Measured rank of the Gram matrix of the degree-4 features, i.e. of the
// entrywise 4th power of the kernel matrix, on an oversampled point set.
// Cross-checks the closed-form m'' at low degree; restriction sets (the ball)
// lose accuracy beyond small s because the Gram conditioning collapses.
inline int measured_m_second(const SimpleSet& set, int n, std::uint64_t seed, double rank_tol = 1e-9) {
  const PointSet p = set.sample(n, seed);
  const Matrix k = kernel_matrix(set, p.pts);
  const Matrix k4 = k.cwiseProduct(k).cwiseProduct(k).cwiseProduct(k);
  return psd_rank(k4, rank_tol);
}

}  // namespace sosmm
