#include <catch2/catch_amalgamated.hpp>

#include "sosmm/linalg.hpp"
#include "sosmm/rng.hpp"

using namespace sosmm;

namespace {

Matrix random_sym(int n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = rng.uniform(-1.0, 1.0);
  return a;
}

Matrix random_psd(int n, std::uint64_t seed, int rank = -1) {
  if (rank < 0) rank = n;
  Rng rng(seed);
  Matrix g(n, rank);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < rank; ++j) g(i, j) = rng.normal();
  return g * g.transpose();
}

}  // namespace

TEST_CASE("SymMatrix symmetrizes and rejects asymmetric input") {
  Matrix a = random_sym(4, 1);
  a(0, 1) += 1e-14;  // below tolerance
  REQUIRE_NOTHROW(SymMatrix(a));
  a(0, 1) += 0.5;
  REQUIRE_THROWS_AS(SymMatrix(a), InvalidProblem);
}

TEST_CASE("inv_sqrt on identity and diagonal matrices") {
  const Matrix i3 = Matrix::Identity(3, 3);
  CHECK((inv_sqrt(SymMatrix(i3)).mat() - i3).norm() < 1e-12);

  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 4.0;
  d(1, 1) = 9.0;
  const Matrix r = inv_sqrt(SymMatrix(d)).mat();
  CHECK(r(0, 0) == Catch::Approx(0.5).margin(1e-12));
  CHECK(r(1, 1) == Catch::Approx(1.0 / 3.0).margin(1e-12));
  CHECK(std::abs(r(0, 1)) < 1e-12);
}

TEST_CASE("inv_sqrt whitens a random SPD matrix") {
  const Matrix a = random_psd(6, 7) + 0.1 * Matrix::Identity(6, 6);
  const Matrix x = inv_sqrt(SymMatrix(a)).mat();
  CHECK((x * a * x - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("inv_sqrt handles rank deficiency via the pseudo-inverse") {
  const Matrix a = random_psd(6, 3, /*rank=*/3);
  const Matrix x = inv_sqrt(SymMatrix(a)).mat();
  // x a x is the projector onto range(a); applying it to a recovers a
  const Matrix p = x * a * x;
  CHECK((p * a - a).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((a * x * x * a - a).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("inv_sqrt rejects indefinite input") {
  Matrix a = Matrix::Identity(3, 3);
  a(2, 2) = -1.0;
  REQUIRE_THROWS_AS(inv_sqrt(SymMatrix(a)), NotPsdError);
}

TEST_CASE("kron basics and trace identity") {
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 1.0;
  d(1, 1) = 2.0;
  const Matrix k = kron(Matrix::Identity(2, 2), d);
  Vector expect(4);
  expect << 1, 2, 1, 2;
  CHECK((k.diagonal() - expect).norm() < 1e-14);
  CHECK(k.cwiseAbs().sum() == Catch::Approx(6.0));

  for (std::uint64_t s = 0; s < 5; ++s) {
    const Matrix a = random_sym(3, 100 + s);
    const Matrix b = random_sym(4, 200 + s);
    CHECK(kron(a, b).trace() == Catch::Approx(a.trace() * b.trace()).margin(1e-10));
  }
}

TEST_CASE("hadamard identity and Schur product theorem") {
  const Matrix a = random_sym(4, 3);
  const Matrix ones = Matrix::Ones(4, 4);
  CHECK((hadamard(ones, a) - a).norm() == 0.0);

  for (std::uint64_t s = 0; s < 8; ++s) {
    const Matrix p = random_psd(5, 300 + s);
    const Matrix q = random_psd(5, 400 + s);
    CHECK(is_psd(hadamard(p, q), 1e-9));
  }
  Matrix bad(2, 3);
  REQUIRE_THROWS_AS(hadamard(bad, Matrix::Zero(2, 2)), InvalidProblem);
}

TEST_CASE("is_psd thresholding") {
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 1.0;
  d(1, 1) = -1e-3;
  CHECK_FALSE(is_psd(d, 1e-9));
  d(1, 1) = -1e-12;
  CHECK(is_psd(d, 1e-9));
}

TEST_CASE("svec preserves inner products and round-trips") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const Matrix a = random_sym(5, 500 + s);
    const Matrix b = random_sym(5, 600 + s);
    CHECK(svec(a).dot(svec(b)) == Catch::Approx((a.cwiseProduct(b)).sum()).margin(1e-12));
    CHECK((smat(svec(a), 5) - a).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("psd_rank counts significant eigenvalues") {
  CHECK(psd_rank(random_psd(6, 11, 2), 1e-9) == 2);
  CHECK(psd_rank(Matrix::Identity(4, 4), 1e-9) == 4);
}
