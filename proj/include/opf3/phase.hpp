#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "opf3/errors.hpp"

namespace opf3 {

using Complex = std::complex<double>;

enum class Phase : int { A = 0, B = 1, C = 2 };

inline int phase_number(Phase p) { return static_cast<int>(p); }
char phase_letter(Phase p);
Phase phase_from_letter(char c);

// alpha = e^{-i 2pi/3}. Integer powers are evaluated from exact component
// values; negative exponents conjugate (alpha^-1 = conj(alpha)).
Complex alpha_pow(int exponent);

// Ordered subset of {a,b,c}. Order is always (a,b,c) restricted to members,
// so a bitmask is a complete representation.
class PhaseSet {
 public:
  PhaseSet() = default;
  explicit PhaseSet(std::uint8_t mask);
  static PhaseSet full() { return PhaseSet(0b111); }
  static PhaseSet single(Phase p) { return PhaseSet(std::uint8_t(1u << phase_number(p))); }
  // Accepts strings like "a", "bc", "abc" (any order, no duplicates).
  static PhaseSet parse(const std::string& text);

  int size() const;
  bool empty() const { return mask_ == 0; }
  bool contains(Phase p) const { return (mask_ >> phase_number(p)) & 1u; }
  bool subset_of(PhaseSet other) const { return (mask_ & ~other.mask_) == 0; }
  PhaseSet intersect(PhaseSet other) const { return PhaseSet(std::uint8_t(mask_ & other.mask_)); }

  // Position of p within the ordered members; throws PhaseMismatch if absent.
  int index_of(Phase p) const;
  Phase phase_at(int index) const;
  std::vector<Phase> phases() const;

  std::string to_string() const;
  std::uint8_t mask() const { return mask_; }
  bool operator==(const PhaseSet& o) const { return mask_ == o.mask_; }
  bool operator!=(const PhaseSet& o) const { return mask_ != o.mask_; }

 private:
  std::uint8_t mask_ = 0;
};

// Complex square matrix indexed by a phase subset. Holds v_i, S_ij, l_ij and
// z_ij blocks; dimension always equals the phase set size.
class PhaseIndexedMatrix {
 public:
  PhaseIndexedMatrix() = default;
  explicit PhaseIndexedMatrix(PhaseSet ps)
      : phases_(ps), m_(Eigen::MatrixXcd::Zero(ps.size(), ps.size())) {}
  PhaseIndexedMatrix(PhaseSet ps, Eigen::MatrixXcd m);

  const PhaseSet& phases() const { return phases_; }
  int dim() const { return static_cast<int>(m_.rows()); }

  Complex& operator()(Phase r, Phase c) { return m_(phases_.index_of(r), phases_.index_of(c)); }
  Complex operator()(Phase r, Phase c) const {
    return m_(phases_.index_of(r), phases_.index_of(c));
  }
  // Entry lookup where an absent phase pair contributes zero.
  Complex at_or_zero(Phase r, Phase c) const;

  Eigen::MatrixXcd& mat() { return m_; }
  const Eigen::MatrixXcd& mat() const { return m_; }

  // Select the rows/columns of `sub` (must be a subset of phases()).
  PhaseIndexedMatrix restricted(PhaseSet sub) const;
  // Zero-pad onto `super` (phases() must be a subset of it).
  PhaseIndexedMatrix embedded(PhaseSet super) const;

  PhaseIndexedMatrix hermitian_transpose() const;
  bool is_hermitian(double tol) const;
  bool is_symmetric(double tol) const;

 private:
  PhaseSet phases_;
  Eigen::MatrixXcd m_;
};

// gamma = beta beta^H with beta = [1, alpha, alpha^2]^T, restricted to the
// given phases. Rank 1, Hermitian, unit-modulus entries, unit diagonal.
PhaseIndexedMatrix gamma_submatrix(PhaseSet phases);

}  // namespace opf3
