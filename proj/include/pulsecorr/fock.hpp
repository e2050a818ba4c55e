#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

// Truncated number-basis representation of a few bosonic modes.
//
// Conventions used throughout:
//  * every mode is truncated at `cutoff` excitations, so a mode holds
//    cutoff+1 levels |0..cutoff>;
//  * multi-mode basis indices are mode-major: for two modes the flat index is
//    n1*(cutoff+1) + n2, i.e. mode 0 is the slow index;
//  * states are either pure (amplitude vector) or mixed (density matrix) and
//    are normalized on construction;
//  * "tail occupancy" is the largest probability any single mode assigns to
//    its top level; constructors reject states whose tail exceeds the given
//    tolerance so that truncation artifacts cannot silently leak into
//    higher-order moments.

namespace pulsecorr {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

inline constexpr int kDefaultCutoff = 16;
inline constexpr double kDefaultTailTol = 1e-6;

namespace detail {

inline void check_cutoff(int cutoff) {
  if (cutoff < 1) throw std::invalid_argument("cutoff must be >= 1");
}

inline std::int64_t ipow(std::int64_t base, int exp) {
  std::int64_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

}  // namespace detail

class FockState {
 public:
  // Normalizes and validates.  `tail_tol` gates the per-mode top-level
  // occupancy; pass std::numeric_limits<double>::infinity() to merely record
  // the tail instead of rejecting.
  static FockState pure(Vector amplitudes, int n_modes, int cutoff,
                        double tail_tol = kDefaultTailTol) {
    detail::check_cutoff(cutoff);
    const auto dim = detail::ipow(cutoff + 1, n_modes);
    if (amplitudes.size() != dim)
      throw std::invalid_argument("amplitude vector has wrong dimension");
    const double norm = amplitudes.norm();
    if (!(norm > 1e-14))
      throw std::invalid_argument("state vector has (near-)zero norm");
    amplitudes /= norm;
    FockState s;
    s.n_modes_ = n_modes;
    s.cutoff_ = cutoff;
    s.psi_ = std::move(amplitudes);
    s.finish_construction(tail_tol);
    return s;
  }

  static FockState mixed(Matrix density, int n_modes, int cutoff,
                         double tail_tol = kDefaultTailTol) {
    detail::check_cutoff(cutoff);
    const auto dim = detail::ipow(cutoff + 1, n_modes);
    if (density.rows() != dim || density.cols() != dim)
      throw std::invalid_argument("density matrix has wrong dimension");
    if ((density - density.adjoint()).cwiseAbs().maxCoeff() > 1e-10)
      throw std::invalid_argument("density matrix is not Hermitian");
    density = 0.5 * (density + density.adjoint().eval());
    const double tr = density.trace().real();
    if (!(tr > 1e-14))
      throw std::invalid_argument("density matrix has (near-)zero trace");
    density /= tr;
    for (Eigen::Index i = 0; i < density.rows(); ++i) {
      if (density(i, i).real() < -1e-12)
        throw std::invalid_argument("density matrix has a negative diagonal entry");
    }
    FockState s;
    s.n_modes_ = n_modes;
    s.cutoff_ = cutoff;
    s.rho_ = std::move(density);
    s.is_pure_ = false;
    s.finish_construction(tail_tol);
    return s;
  }

  bool is_pure() const { return is_pure_; }
  int n_modes() const { return n_modes_; }
  int cutoff() const { return cutoff_; }
  Eigen::Index dim() const { return detail::ipow(cutoff_ + 1, n_modes_); }
  double tail_occupancy() const { return tail_; }
  bool tail_flagged() const { return tail_flagged_; }

  const Vector& amplitudes() const {
    if (!is_pure_) throw std::logic_error("state is not pure");
    return psi_;
  }
  const Matrix& density() const {
    if (is_pure_) throw std::logic_error("state is pure; call density_matrix()");
    return rho_;
  }
  // Outer-product view that works for both representations.
  Matrix density_matrix() const {
    return is_pure_ ? Matrix(psi_ * psi_.adjoint()) : rho_;
  }

  // Probability that mode `mode` sits exactly at level `level`.
  double level_occupancy(int mode, int level) const {
    if (mode < 0 || mode >= n_modes_) throw std::invalid_argument("mode out of range");
    if (level < 0 || level > cutoff_) throw std::invalid_argument("level out of range");
    const std::int64_t d = cutoff_ + 1;
    const std::int64_t stride = detail::ipow(d, n_modes_ - 1 - mode);
    double p = 0.0;
    for (Eigen::Index i = 0; i < dim(); ++i) {
      if ((i / stride) % d == level)
        p += is_pure_ ? std::norm(psi_(i)) : rho_(i, i).real();
    }
    return p;
  }

 private:
  FockState() = default;

  void finish_construction(double tail_tol) {
    tail_ = 0.0;
    for (int m = 0; m < n_modes_; ++m)
      tail_ = std::max(tail_, level_occupancy(m, cutoff_));
    tail_flagged_ = tail_ > kDefaultTailTol;
    if (tail_ > tail_tol)
      throw std::domain_error(
          "top Fock level holds probability " + std::to_string(tail_) +
          " > tolerance " + std::to_string(tail_tol) +
          "; raise the cutoff or override the tail check");
  }

  int n_modes_ = 1;
  int cutoff_ = kDefaultCutoff;
  bool is_pure_ = true;
  Vector psi_;
  Matrix rho_;
  double tail_ = 0.0;
  bool tail_flagged_ = false;
};

// ---------------------------------------------------------------------------
// Single-mode operator matrices ((cutoff+1) x (cutoff+1)).

inline Matrix annihilation_matrix(int cutoff) {
  detail::check_cutoff(cutoff);
  Matrix a = Matrix::Zero(cutoff + 1, cutoff + 1);
  for (int n = 1; n <= cutoff; ++n) a(n - 1, n) = std::sqrt(double(n));
  return a;
}

inline Matrix creation_matrix(int cutoff) {
  return annihilation_matrix(cutoff).adjoint();
}

inline Matrix number_matrix(int cutoff) {
  detail::check_cutoff(cutoff);
  Matrix n = Matrix::Zero(cutoff + 1, cutoff + 1);
  for (int k = 0; k <= cutoff; ++k) n(k, k) = double(k);
  return n;
}

// Quadrature of one mode at local-oscillator phase phi:
//   (a e^{-i phi} + a^dag e^{i phi}) / sqrt(2).
inline Matrix single_mode_quadrature(int cutoff, double phi) {
  const Matrix a = annihilation_matrix(cutoff);
  const Complex e = std::exp(Complex(0.0, -phi));
  return (a * e + a.adjoint() * std::conj(e)) / std::sqrt(2.0);
}

// Kronecker product with mode-major layout (A acts on the slower index).
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

// Embed a single-mode operator into an n_modes register at position `mode`.
inline Matrix embed(const Matrix& op, int mode, int n_modes, int cutoff) {
  detail::check_cutoff(cutoff);
  const int d = cutoff + 1;
  if (op.rows() != d || op.cols() != d)
    throw std::invalid_argument("operator dimension does not match cutoff");
  if (mode < 0 || mode >= n_modes) throw std::invalid_argument("mode out of range");
  Matrix out = (mode == 0) ? op : Matrix(Matrix::Identity(d, d));
  for (int m = 1; m < n_modes; ++m) {
    const Matrix& next = (m == mode) ? op : Matrix::Identity(d, d);
    out = kron(out, next);
  }
  return out;
}

inline Matrix quadrature(int mode, double phi, int n_modes, int cutoff) {
  return embed(single_mode_quadrature(cutoff, phi), mode, n_modes, cutoff);
}

// ---------------------------------------------------------------------------
// Expectation values.

inline Complex expect(const FockState& state, const Matrix& op) {
  if (op.rows() != state.dim() || op.cols() != state.dim())
    throw std::invalid_argument("operator dimension does not match state");
  if (state.is_pure()) {
    const Vector& psi = state.amplitudes();
    return psi.dot(op * psi);
  }
  return (state.density() * op).trace();
}

// Expectation of a Hermitian operator; verifies the imaginary part is
// numerical noise (<= 1e-10 relative above magnitude 1) before dropping it.
inline double expect_real(const FockState& state, const Matrix& op) {
  const Complex v = expect(state, op);
  if (std::abs(v.imag()) > 1e-10 * std::max(1.0, std::abs(v)))
    throw std::runtime_error("expectation has a non-negligible imaginary part: " +
                             std::to_string(v.imag()));
  return v.real();
}

// Efficient <A (x) B> for a two-mode state, using the mode-major reshape
// (avoids materializing the (d^2)^2 operator).
inline Complex expect_kron(const FockState& state, const Matrix& a, const Matrix& b) {
  if (state.n_modes() != 2) throw std::invalid_argument("expect_kron needs a two-mode state");
  const int d = state.cutoff() + 1;
  if (a.rows() != d || a.cols() != d || b.rows() != d || b.cols() != d)
    throw std::invalid_argument("operator dimension does not match cutoff");
  if (state.is_pure()) {
    // psi reshaped row-major into Psi(n1, n2); <psi|(A(x)B)|psi> = sum conj(Psi) .* (A Psi B^T)
    Eigen::Map<const Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
        psi_mat(state.amplitudes().data(), d, d);
    const Eigen::MatrixXcd t = a * psi_mat * b.transpose();
    Complex s = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) s += std::conj(psi_mat(i, j)) * t(i, j);
    return s;
  }
  // tr((A(x)B) rho) = sum_{n1,n1'} A(n1,n1') tr(B * rho_block(n1', n1))
  const Matrix& rho = state.density();
  Complex s = 0.0;
  for (int n1 = 0; n1 < d; ++n1)
    for (int n1p = 0; n1p < d; ++n1p) {
      if (a(n1, n1p) == Complex(0.0, 0.0)) continue;
      const auto block = rho.block(n1p * d, n1 * d, d, d);
      Complex tr = 0.0;
      for (int i = 0; i < d; ++i) tr += (b.row(i) * block.col(i))(0, 0);
      s += a(n1, n1p) * tr;
    }
  return s;
}

// ---------------------------------------------------------------------------
// State factories ("the zoo").

inline FockState vacuum_state(int cutoff = kDefaultCutoff) {
  Vector v = Vector::Zero(cutoff + 1);
  v(0) = 1.0;
  return FockState::pure(std::move(v), 1, cutoff);
}

inline FockState fock_state(int n, int cutoff = kDefaultCutoff) {
  detail::check_cutoff(cutoff);
  if (n < 0) throw std::invalid_argument("Fock level must be non-negative");
  if (n > cutoff)
    throw std::invalid_argument("Fock level " + std::to_string(n) +
                                " exceeds cutoff " + std::to_string(cutoff));
  Vector v = Vector::Zero(cutoff + 1);
  v(n) = 1.0;
  return FockState::pure(std::move(v), 1, cutoff);
}

inline FockState coherent_state(Complex alpha, int cutoff = kDefaultCutoff,
                                double tail_tol = kDefaultTailTol) {
  detail::check_cutoff(cutoff);
  Vector v(cutoff + 1);
  v(0) = 1.0;
  for (int n = 1; n <= cutoff; ++n) v(n) = v(n - 1) * alpha / std::sqrt(double(n));
  v *= std::exp(-0.5 * std::norm(alpha));
  return FockState::pure(std::move(v), 1, cutoff, tail_tol);
}

// Squeezed vacuum with squeezing parameter r and phase theta:
// amplitudes on even levels c_{2m} ~ (-e^{i theta} tanh r)^m sqrt((2m)!)/(2^m m!).
inline FockState squeezed_state(double r, double theta, int cutoff = kDefaultCutoff,
                                double tail_tol = kDefaultTailTol) {
  detail::check_cutoff(cutoff);
  if (!(std::isfinite(r) && std::isfinite(theta)))
    throw std::invalid_argument("squeezing parameters must be finite");
  Vector v = Vector::Zero(cutoff + 1);
  const Complex w = -std::exp(Complex(0.0, theta)) * std::tanh(r);
  Complex c = 1.0;  // c_{2m} / c_0, built by recurrence
  v(0) = 1.0;
  for (int m = 1; 2 * m <= cutoff; ++m) {
    // c_{2m} = c_{2m-2} * w * sqrt((2m-1)/(2m))
    c *= w * std::sqrt((2.0 * m - 1.0) / (2.0 * m));
    v(2 * m) = c;
  }
  v /= std::sqrt(std::cosh(r));
  return FockState::pure(std::move(v), 1, cutoff, tail_tol);
}

// Thermal state with mean occupation nbar (diagonal density matrix).
inline FockState thermal_state(double nbar, int cutoff = kDefaultCutoff,
                               double tail_tol = kDefaultTailTol) {
  detail::check_cutoff(cutoff);
  if (!(nbar >= 0.0)) throw std::invalid_argument("nbar must be >= 0");
  Matrix rho = Matrix::Zero(cutoff + 1, cutoff + 1);
  double p = 1.0 / (1.0 + nbar);
  const double ratio = nbar / (1.0 + nbar);
  for (int n = 0; n <= cutoff; ++n) {
    rho(n, n) = p;
    p *= ratio;
  }
  return FockState::mixed(std::move(rho), 1, cutoff, tail_tol);
}

// Two-mode squeezed vacuum: sum_n tanh(r)^n |n,n> / cosh(r).
inline FockState two_mode_squeezed_state(double r, double theta = 0.0,
                                         int cutoff = kDefaultCutoff,
                                         double tail_tol = kDefaultTailTol) {
  detail::check_cutoff(cutoff);
  if (!std::isfinite(r) || !std::isfinite(theta))
    throw std::invalid_argument("r and theta must be finite");
  const int d = cutoff + 1;
  Vector v = Vector::Zero(Eigen::Index(d) * d);
  Complex c = 1.0;
  const Complex w = std::polar(std::tanh(r), theta);
  for (int n = 0; n <= cutoff; ++n) {
    v(Eigen::Index(n) * d + n) = c;
    c *= w;
  }
  return FockState::pure(std::move(v), 2, cutoff, tail_tol);
}

// Tensor product; stays pure only if both factors are pure.
inline FockState tensor(const FockState& a, const FockState& b,
                        double tail_tol = kDefaultTailTol) {
  if (a.cutoff() != b.cutoff())
    throw std::invalid_argument("tensor factors must share a cutoff");
  const int modes = a.n_modes() + b.n_modes();
  if (a.is_pure() && b.is_pure()) {
    const Vector& x = a.amplitudes();
    const Vector& y = b.amplitudes();
    Vector v(x.size() * y.size());
    for (Eigen::Index i = 0; i < x.size(); ++i)
      v.segment(i * y.size(), y.size()) = x(i) * y;
    return FockState::pure(std::move(v), modes, a.cutoff(), tail_tol);
  }
  return FockState::mixed(kron(a.density_matrix(), b.density_matrix()), modes,
                          a.cutoff(), tail_tol);
}

// Erase coherences between different total photon numbers.  The result is the
// effective state seen by a detector whose reference phase is uniformly
// random shot to shot.
inline FockState dephase_total_number(const FockState& state) {
  const int d = state.cutoff() + 1;
  const Eigen::Index dim = state.dim();
  std::vector<int> total(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    int t = 0;
    Eigen::Index rest = i;
    for (int m = 0; m < state.n_modes(); ++m) {
      t += int(rest % d);
      rest /= d;
    }
    total[i] = t;
  }
  Matrix rho = state.density_matrix();
  for (Eigen::Index i = 0; i < dim; ++i)
    for (Eigen::Index j = 0; j < dim; ++j)
      if (total[i] != total[j]) rho(i, j) = 0.0;
  return FockState::mixed(std::move(rho), state.n_modes(), state.cutoff(),
                          std::numeric_limits<double>::infinity());
}

}  // namespace pulsecorr
