#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <utility>
#include <vector>

#include "sosmm/errors.hpp"
#include "sosmm/linalg.hpp"
#include "sosmm/simpleset.hpp"

namespace sosmm {

// One trigonometric term: cos_c * cos(2 pi w.x) + sin_c * sin(2 pi w.x).
struct TrigTerm {
  std::vector<int> freq;
  double cos_c = 0.0;
  double sin_c = 0.0;
};

struct MonoTerm {
  std::vector<int> exp;
  double coef = 0.0;
};

// Real-valued polynomial in trig-frequency or monomial coefficient form, or a
// tabulated evaluation oracle. An optional domain makes evaluate() reject
// points outside the set.
class Polynomial {
public:
  enum class Basis { TrigFreq, Monomial, Tabulated };

  static Polynomial trig(std::vector<TrigTerm> terms) {
    Polynomial p;
    p.basis_ = Basis::TrigFreq;
    p.trig_terms_ = std::move(terms);
    return p;
  }

  static Polynomial monomial(std::vector<MonoTerm> terms) {
    Polynomial p;
    p.basis_ = Basis::Monomial;
    p.mono_terms_ = std::move(terms);
    return p;
  }

  static Polynomial constant(double c) { return trig({TrigTerm{{}, c, 0.0}}); }

  static Polynomial tabulated(std::function<double(const Vector&)> f) {
    Polynomial p;
    p.basis_ = Basis::Tabulated;
    p.callback_ = std::move(f);
    return p;
  }

  Basis basis() const { return basis_; }
  const std::vector<TrigTerm>& trig_terms() const { return trig_terms_; }
  const std::vector<MonoTerm>& mono_terms() const { return mono_terms_; }

  Polynomial& set_domain(SimpleSet s) {
    domain_ = std::move(s);
    return *this;
  }
  const std::optional<SimpleSet>& domain() const { return domain_; }

  double evaluate(const Vector& x) const {
    if (domain_ && !domain_->contains(x)) throw DomainError("evaluate: point outside domain");
    return evaluate_unchecked(x);
  }

  double evaluate_unchecked(const Vector& x) const {
    switch (basis_) {
      case Basis::TrigFreq: {
        double acc = 0.0;
        for (const auto& t : trig_terms_) {
          double phase = 0.0;
          for (std::size_t i = 0; i < t.freq.size(); ++i) phase += t.freq[i] * x[static_cast<int>(i)];
          phase *= 2.0 * std::numbers::pi;
          acc += t.cos_c * std::cos(phase) + t.sin_c * std::sin(phase);
        }
        return acc;
      }
      case Basis::Monomial: {
        double acc = 0.0;
        for (const auto& t : mono_terms_) {
          double v = t.coef;
          for (std::size_t i = 0; i < t.exp.size(); ++i) {
            for (int e = 0; e < t.exp[i]; ++e) v *= x[static_cast<int>(i)];
          }
          acc += v;
        }
        return acc;
      }
      case Basis::Tabulated: return callback_(x);
    }
    return 0.0;
  }

  // Largest per-coordinate frequency (trig) resp. total degree (monomial).
  int degree() const {
    int deg = 0;
    if (basis_ == Basis::TrigFreq) {
      for (const auto& t : trig_terms_)
        for (int f : t.freq) deg = std::max(deg, std::abs(f));
    } else if (basis_ == Basis::Monomial) {
      for (const auto& t : mono_terms_) {
        int d = 0;
        for (int e : t.exp) d += e;
        deg = std::max(deg, d);
      }
    }
    return deg;
  }

  // True when the polynomial is a quadratic form in degree-s features.
  bool representable_at(int s) const {
    if (basis_ == Basis::Tabulated) return true;
    return degree() <= 2 * s;
  }

  Polynomial operator+(double c) const {
    Polynomial p = *this;
    switch (basis_) {
      case Basis::TrigFreq: p.trig_terms_.push_back({{}, c, 0.0}); break;
      case Basis::Monomial: p.mono_terms_.push_back({{}, c}); break;
      case Basis::Tabulated: {
        auto f = callback_;
        p.callback_ = [f, c](const Vector& x) { return f(x) + c; };
        break;
      }
    }
    return p;
  }

  Polynomial operator*(double c) const {
    Polynomial p = *this;
    switch (basis_) {
      case Basis::TrigFreq:
        for (auto& t : p.trig_terms_) {
          t.cos_c *= c;
          t.sin_c *= c;
        }
        break;
      case Basis::Monomial:
        for (auto& t : p.mono_terms_) t.coef *= c;
        break;
      case Basis::Tabulated: {
        auto f = callback_;
        p.callback_ = [f, c](const Vector& x) { return f(x) * c; };
        break;
      }
    }
    return p;
  }

  Polynomial operator-() const { return (*this) * -1.0; }

private:
  Polynomial() = default;

  Basis basis_ = Basis::TrigFreq;
  std::vector<TrigTerm> trig_terms_;
  std::vector<MonoTerm> mono_terms_;
  std::function<double(const Vector&)> callback_;
  std::optional<SimpleSet> domain_;
};

// Random trig polynomial of per-coordinate degree <= deg on the d-torus, with
// coefficients uniform in [-1, 1]. Frequencies enumerate the half-space
// (first nonzero component positive) so every instance is real by
// construction and seed-reproducible.
inline Polynomial random_trig_polynomial(int d, int deg, std::uint64_t seed, bool with_constant = true) {
  Rng rng(seed);
  std::vector<TrigTerm> terms;
  if (with_constant) terms.push_back({std::vector<int>(static_cast<std::size_t>(d), 0), rng.uniform(-1.0, 1.0), 0.0});
  std::vector<int> w(static_cast<std::size_t>(d), -deg);
  const auto advance = [&]() {
    for (int i = d - 1; i >= 0; --i) {
      if (w[static_cast<std::size_t>(i)] < deg) {
        ++w[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < d; ++j) w[static_cast<std::size_t>(j)] = -deg;
        return true;
      }
    }
    return false;
  };
  do {
    int first = 0;
    for (int i = 0; i < d; ++i) {
      if (w[static_cast<std::size_t>(i)] != 0) {
        first = w[static_cast<std::size_t>(i)];
        break;
      }
    }
    if (first > 0) terms.push_back({w, rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)});
  } while (advance());
  return Polynomial::trig(std::move(terms));
}

}  // namespace sosmm
