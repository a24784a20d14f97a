#include "opf3/phase.hpp"

#include <cmath>

namespace opf3 {

namespace {
const double kHalfSqrt3 = std::sqrt(3.0) / 2.0;
}

char phase_letter(Phase p) {
  switch (p) {
    case Phase::A: return 'a';
    case Phase::B: return 'b';
    default: return 'c';
  }
}

Phase phase_from_letter(char c) {
  switch (c) {
    case 'a': case 'A': return Phase::A;
    case 'b': case 'B': return Phase::B;
    case 'c': case 'C': return Phase::C;
    default: throw PhaseMismatch(std::string("unknown phase letter '") + c + "'");
  }
}

Complex alpha_pow(int exponent) {
  // alpha^e = cos(2pi e/3) - i sin(2pi e/3); components are 1, -1/2, +-sqrt(3)/2.
  int r = exponent % 3;
  Complex base;
  switch (r < 0 ? r + 3 : r) {
    case 0: return Complex(1.0, 0.0);
    case 1: base = Complex(-0.5, -kHalfSqrt3); break;
    default: base = Complex(-0.5, kHalfSqrt3); break;
  }
  // Negative exponents conjugate: e and (e mod 3) differ by multiples of 3,
  // and alpha^3 = 1, so the residue fully determines the value.
  return base;
}

PhaseSet::PhaseSet(std::uint8_t mask) : mask_(mask) {
  if (mask > 0b111) throw PhaseMismatch("phase mask out of range");
}

PhaseSet PhaseSet::parse(const std::string& text) {
  std::uint8_t mask = 0;
  for (char c : text) {
    if (c == ' ' || c == ',') continue;
    int bit = 1 << phase_number(phase_from_letter(c));
    if (mask & bit) throw PhaseMismatch("duplicate phase in '" + text + "'");
    mask |= std::uint8_t(bit);
  }
  if (mask == 0) throw PhaseMismatch("empty phase set");
  return PhaseSet(mask);
}

int PhaseSet::size() const {
  return ((mask_ >> 0) & 1) + ((mask_ >> 1) & 1) + ((mask_ >> 2) & 1);
}

int PhaseSet::index_of(Phase p) const {
  if (!contains(p))
    throw PhaseMismatch(std::string("phase '") + phase_letter(p) + "' not in set " + to_string());
  int idx = 0;
  for (int i = 0; i < phase_number(p); ++i) idx += (mask_ >> i) & 1;
  return idx;
}

Phase PhaseSet::phase_at(int index) const {
  int seen = 0;
  for (int i = 0; i < 3; ++i) {
    if ((mask_ >> i) & 1) {
      if (seen == index) return static_cast<Phase>(i);
      ++seen;
    }
  }
  throw PhaseMismatch("phase index out of range");
}

std::vector<Phase> PhaseSet::phases() const {
  std::vector<Phase> out;
  for (int i = 0; i < 3; ++i)
    if ((mask_ >> i) & 1) out.push_back(static_cast<Phase>(i));
  return out;
}

std::string PhaseSet::to_string() const {
  std::string s;
  for (Phase p : phases()) s += phase_letter(p);
  return s;
}

PhaseIndexedMatrix::PhaseIndexedMatrix(PhaseSet ps, Eigen::MatrixXcd m)
    : phases_(ps), m_(std::move(m)) {
  if (m_.rows() != ps.size() || m_.cols() != ps.size())
    throw PhaseMismatch("matrix dimension does not match phase set " + ps.to_string());
}

Complex PhaseIndexedMatrix::at_or_zero(Phase r, Phase c) const {
  if (!phases_.contains(r) || !phases_.contains(c)) return Complex(0.0, 0.0);
  return m_(phases_.index_of(r), phases_.index_of(c));
}

PhaseIndexedMatrix PhaseIndexedMatrix::restricted(PhaseSet sub) const {
  if (!sub.subset_of(phases_))
    throw PhaseMismatch("restriction target " + sub.to_string() + " not a subset of " +
                        phases_.to_string());
  PhaseIndexedMatrix out(sub);
  auto ps = sub.phases();
  for (int r = 0; r < int(ps.size()); ++r)
    for (int c = 0; c < int(ps.size()); ++c)
      out.m_(r, c) = m_(phases_.index_of(ps[r]), phases_.index_of(ps[c]));
  return out;
}

PhaseIndexedMatrix PhaseIndexedMatrix::embedded(PhaseSet super) const {
  if (!phases_.subset_of(super))
    throw PhaseMismatch("embedding target " + super.to_string() + " does not contain " +
                        phases_.to_string());
  PhaseIndexedMatrix out(super);
  auto ps = phases_.phases();
  for (int r = 0; r < int(ps.size()); ++r)
    for (int c = 0; c < int(ps.size()); ++c)
      out.m_(super.index_of(ps[r]), super.index_of(ps[c])) = m_(r, c);
  return out;
}

PhaseIndexedMatrix PhaseIndexedMatrix::hermitian_transpose() const {
  return PhaseIndexedMatrix(phases_, m_.adjoint());
}

bool PhaseIndexedMatrix::is_hermitian(double tol) const {
  return (m_ - m_.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

bool PhaseIndexedMatrix::is_symmetric(double tol) const {
  return (m_ - m_.transpose()).cwiseAbs().maxCoeff() <= tol;
}

PhaseIndexedMatrix gamma_submatrix(PhaseSet phases) {
  PhaseIndexedMatrix g(phases);
  for (Phase r : phases.phases())
    for (Phase c : phases.phases())
      g(r, c) = alpha_pow(phase_number(r) - phase_number(c));
  return g;
}

}  // namespace opf3
