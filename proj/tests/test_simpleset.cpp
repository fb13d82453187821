#include <catch2/catch_amalgamated.hpp>
#include <set>

#include "sosmm/features.hpp"
#include "sosmm/simpleset.hpp"

using namespace sosmm;

namespace {

Vector vec1(double x) {
  Vector v(1);
  v << x;
  return v;
}

std::vector<SimpleSet> sample_kinds() {
  return {
      SimpleSet::make(SetKind::Discrete, 4, 0),
      SimpleSet::make(SetKind::Trig, 1, 2),
      SimpleSet::make(SetKind::Trig, 2, 1),
      SimpleSet::make(SetKind::Sphere, 2, 2),
      SimpleSet::make(SetKind::Ball, 2, 2),
      SimpleSet::make(SetKind::BooleanCube, 3, 1),
      SimpleSet::product({SimpleSet::make(SetKind::Trig, 1, 1), SimpleSet::make(SetKind::BooleanCube, 2, 1)}),
  };
}

}  // namespace

TEST_CASE("make_set dimension formulas") {
  const auto trig = SimpleSet::make(SetKind::Trig, 1, 1);
  CHECK(trig.dims().m == 3);
  CHECK(trig.dims().m_prime == 5);

  const auto sphere = SimpleSet::make(SetKind::Sphere, 2, 2);
  CHECK(sphere.dims().m == 9);

  const auto cube = SimpleSet::make(SetKind::BooleanCube, 3, 1);
  CHECK(cube.dims().m == 4);
}

TEST_CASE("make_set rejects degenerate combinations") {
  REQUIRE_THROWS_AS(SimpleSet::make(SetKind::Trig, 1, 0), DomainError);
  REQUIRE_THROWS_AS(SimpleSet::make(SetKind::BooleanCube, 3, 0), DomainError);
  REQUIRE_THROWS_AS(SimpleSet::make(SetKind::Sphere, 0, 1), DomainError);
  REQUIRE_NOTHROW(SimpleSet::make(SetKind::Discrete, 3, 0));
}

TEST_CASE("kernel closed-form values") {
  const auto trig = SimpleSet::make(SetKind::Trig, 1, 1);
  CHECK(trig.kernel(vec1(0.0), vec1(0.0)) == Catch::Approx(1.0).margin(1e-14));
  CHECK(trig.kernel(vec1(0.0), vec1(1.0 / 3.0)) == Catch::Approx(0.0).margin(1e-14));

  const auto sphere = SimpleSet::make(SetKind::Sphere, 1, 2);
  Vector e1(2);
  e1 << 1.0, 0.0;
  CHECK(sphere.kernel(e1, e1) == Catch::Approx(1.0).margin(1e-14));

  Vector out(2);
  out << 2.0, 0.0;
  REQUIRE_THROWS_AS(sphere.kernel(e1, out), DomainError);
}

TEST_CASE("kernel is unit-norm and PSD on sampled points") {
  for (const auto& set : sample_kinds()) {
    const int n = std::max(set.dims().m, 6);
    const PointSet pts = set.sample(n, 3);
    for (int i = 0; i < pts.size(); ++i) {
      CHECK(set.contains(pts.point(i), 1e-12));
      CHECK(std::abs(set.kernel(pts.point(i), pts.point(i)) - 1.0) <= 1e-12);
    }
    const Matrix k = kernel_matrix(set, pts.pts);
    CHECK((k - k.transpose()).cwiseAbs().maxCoeff() < 1e-13);
    CHECK(min_eig(k) >= -1e-10 * k.trace());
  }
}

TEST_CASE("product kernel factorizes exactly") {
  const auto f1 = SimpleSet::make(SetKind::Trig, 1, 1);
  const auto f2 = SimpleSet::make(SetKind::Sphere, 1, 2);
  const auto prod = SimpleSet::product({f1, f2});
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const PointSet a = prod.sample(2, 100 + static_cast<std::uint64_t>(t));
    const Vector x = a.point(0), y = a.point(1);
    const double lhs = prod.kernel(x, y);
    const double rhs = f1.kernel(x.head(1), y.head(1)) * f2.kernel(x.tail(2), y.tail(2));
    CHECK(std::abs(lhs - rhs) <= 1e-14);
  }
}

TEST_CASE("sampling: discrete atoms in index order") {
  const auto set = SimpleSet::make(SetKind::Discrete, 3, 0);
  const PointSet pts = set.sample(3, 42);
  for (int i = 0; i < 3; ++i) CHECK(pts.pts(i, 0) == Catch::Approx(i));
}

TEST_CASE("sampling: trig points distinct with invertible leading kernel") {
  const auto set = SimpleSet::make(SetKind::Trig, 1, 1);
  const PointSet pts = set.sample(5, 0);
  std::set<double> seen;
  for (int i = 0; i < 5; ++i) {
    CHECK(pts.pts(i, 0) >= 0.0);
    CHECK(pts.pts(i, 0) < 1.0);
    seen.insert(pts.pts(i, 0));
  }
  CHECK(seen.size() == 5);
  const Matrix k = kernel_matrix(set, pts.pts.topRows(3));
  CHECK(min_eig(k) > 1e-10);
}

TEST_CASE("sampling: boolean cube exhaustive") {
  const auto set = SimpleSet::make(SetKind::BooleanCube, 2, 1);
  const PointSet pts = set.sample(4, 7);
  std::set<std::pair<int, int>> seen;
  for (int i = 0; i < 4; ++i) seen.insert({static_cast<int>(pts.pts(i, 0)), static_cast<int>(pts.pts(i, 1))});
  CHECK(seen.size() == 4);
  REQUIRE_THROWS_AS(set.sample(5, 7), DomainError);
}

TEST_CASE("sampling is deterministic in the seed") {
  const auto set = SimpleSet::make(SetKind::Sphere, 2, 1);
  const PointSet a = set.sample(8, 5);
  const PointSet b = set.sample(8, 5);
  CHECK((a.pts - b.pts).cwiseAbs().maxCoeff() == 0.0);
  const PointSet c = set.sample(8, 6);
  CHECK((a.pts - c.pts).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("dims closed forms and derived counts") {
  CHECK(SimpleSet::make(SetKind::Discrete, 5, 0).dims().m_second == 5);

  const auto t1 = SimpleSet::make(SetKind::Trig, 1, 1);
  CHECK(t1.dims().m == 3);
  CHECK(t1.dims().m_prime == 5);
  CHECK(t1.dims().m_second == 9);

  const auto t2 = SimpleSet::make(SetKind::Trig, 2, 1);
  CHECK(t2.dims().m == 9);
  CHECK(t2.dims().m_prime == 25);
  CHECK(t2.dims().m_second == 81);
}

TEST_CASE("m'' on the circle agrees with the frequency count and the Gram rank") {
  // the circle is both a sphere and a torus, so its m'' must be 8s+1
  for (int s = 1; s <= 2; ++s) {
    CHECK(SimpleSet::make(SetKind::Sphere, 1, s).dims().m_second == 8 * s + 1);
    CHECK(SimpleSet::make(SetKind::Ball, 1, s).dims().m_second == 8 * s + 1);
  }
  // the measured Gram rank confirms the closed form at low degree
  CHECK(measured_m_second(SimpleSet::make(SetKind::Sphere, 1, 1), 30, 7) == 9);
  CHECK(measured_m_second(SimpleSet::make(SetKind::Ball, 1, 1), 30, 7) == 9);
  CHECK(measured_m_second(SimpleSet::make(SetKind::BooleanCube, 3, 1), 8, 3) ==
        SimpleSet::make(SetKind::BooleanCube, 3, 1).dims().m_second);
}

TEST_CASE("with_hierarchy recomputes dimensions") {
  const auto t = SimpleSet::make(SetKind::Trig, 1, 1);
  const auto t2 = t.with_hierarchy(2);
  CHECK(t2.dims().m == 5);
  CHECK(t2.dims().m_prime == 9);
  CHECK(t2.degree() == 1);

  const auto same = t.with_hierarchy(t.degree());
  CHECK(same.dims().m == t.dims().m);
  CHECK(same.dims().m_prime == t.dims().m_prime);
  CHECK(same.dims().m_second == t.dims().m_second);

  const auto cube = SimpleSet::make(SetKind::BooleanCube, 3, 1).with_hierarchy(3);
  CHECK(cube.dims().m == 8);

  REQUIRE_THROWS_AS(t.with_hierarchy(0), DomainError);
}

TEST_CASE("dims are monotone in the hierarchy level") {
  for (const auto base : {SimpleSet::make(SetKind::Trig, 1, 1), SimpleSet::make(SetKind::Sphere, 2, 1),
                          SimpleSet::make(SetKind::BooleanCube, 4, 1)}) {
    Dims prev = base.dims();
    for (int s = base.degree() + 1; s <= base.degree() + 2; ++s) {
      const Dims cur = base.with_hierarchy(s).dims();
      CHECK(cur.m >= prev.m);
      CHECK(cur.m_prime >= prev.m_prime);
      CHECK(cur.m_second >= prev.m_second);
      prev = cur;
    }
  }
}

TEST_CASE("Hadamard-square kernel rank equals m' on the torus") {
  for (int r = 1; r <= 3; ++r) {
    const auto set = SimpleSet::make(SetKind::Trig, 1, r);
    const int mp = set.dims().m_prime;
    const PointSet pts = set.sample(mp + 10, 1);
    const Matrix k = kernel_matrix(set, pts.pts);
    CHECK(psd_rank(k.cwiseProduct(k), 1e-9) == 4 * r + 1);
  }
}

TEST_CASE("empirical features reproduce the kernel matrix") {
  const auto disc = SimpleSet::make(SetKind::Discrete, 3, 0);
  const Matrix phi_d = empirical_features(disc, disc.sample(3, 0));
  CHECK((phi_d * phi_d.transpose() - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);

  const auto trig = SimpleSet::make(SetKind::Trig, 1, 1);
  const PointSet pts = trig.sample(5, 0);
  const Matrix phi = empirical_features(trig, pts);
  const Matrix l = kernel_matrix(trig, pts.pts);
  CHECK((phi * phi.transpose() - l).cwiseAbs().maxCoeff() < 1e-8);

  const auto single = SimpleSet::make(SetKind::Discrete, 1, 0);
  const Matrix phi_1 = empirical_features(single, single.sample(1, 0));
  CHECK(phi_1.rows() == 1);
  CHECK(std::abs(phi_1.row(0).norm() - 1.0) < 1e-12);
}

TEST_CASE("squared feature basis spans the m'-dimensional space") {
  const auto trig = SimpleSet::make(SetKind::Trig, 1, 1);
  const PointSet pts = trig.sample(9, 0);
  const EmpiricalBasis b2 = squared_feature_basis(trig, pts);
  CHECK(b2.dim() == 5);
  // features of the squared kernel reproduce k^2
  const Matrix f = b2.features(pts.pts);
  const Matrix l = kernel_matrix(trig, pts.pts);
  CHECK((f * f.transpose() - l.cwiseProduct(l)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("well-positioned invariant holds for generated points") {
  for (const auto& set : sample_kinds()) {
    const int m = set.dims().m;
    const PointSet pts = set.sample(m, 11);
    const Matrix k = kernel_matrix(set, pts.pts.topRows(m));
    CHECK(min_eig(k) > 1e-10);
  }
}
