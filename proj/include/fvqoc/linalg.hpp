#pragma once

// Dense complex linear algebra for small Hilbert spaces (dim <= 64), plus
// Pauli and Haar utilities. Everything is implemented in-house: system sizes
// are tiny, so Gaussian elimination and Jacobi sweeps beat pulling in an
// external numerical dependency.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <string>
#include <vector>

#include "fvqoc/errors.hpp"
#include "fvqoc/rng.hpp"

namespace fvqoc {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;

constexpr double kHermTol = 1e-12;

//============================================================================
// ComplexMatrix
//============================================================================

class Matrix {
  public:
    Matrix() : rows_(0), cols_(0) {}
    Matrix(int rows, int cols)
        : rows_(rows), cols_(cols), a_(static_cast<size_t>(rows) * cols) {}

    static Matrix identity(int n) {
        Matrix m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
    static Matrix zero(int rows, int cols) { return Matrix(rows, cols); }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    cplx& operator()(int r, int c) { return a_[static_cast<size_t>(r) * cols_ + c]; }
    const cplx& operator()(int r, int c) const {
        return a_[static_cast<size_t>(r) * cols_ + c];
    }

    const CVec& data() const { return a_; }
    CVec& data() { return a_; }

    Matrix& operator+=(const Matrix& o) {
        for (size_t i = 0; i < a_.size(); ++i) a_[i] += o.a_[i];
        return *this;
    }
    Matrix& operator-=(const Matrix& o) {
        for (size_t i = 0; i < a_.size(); ++i) a_[i] -= o.a_[i];
        return *this;
    }
    Matrix& operator*=(cplx s) {
        for (auto& v : a_) v *= s;
        return *this;
    }

    friend Matrix operator+(Matrix l, const Matrix& r) { return l += r; }
    friend Matrix operator-(Matrix l, const Matrix& r) { return l -= r; }
    friend Matrix operator*(Matrix l, cplx s) { return l *= s; }
    friend Matrix operator*(cplx s, Matrix r) { return r *= s; }

    friend Matrix operator*(const Matrix& l, const Matrix& r) {
        Matrix out(l.rows_, r.cols_);
        for (int i = 0; i < l.rows_; ++i) {
            for (int k = 0; k < l.cols_; ++k) {
                const cplx lik = l(i, k);
                if (lik == cplx(0.0, 0.0)) continue;
                for (int j = 0; j < r.cols_; ++j) out(i, j) += lik * r(k, j);
            }
        }
        return out;
    }

    CVec apply(const CVec& v) const {
        CVec out(rows_, cplx(0.0, 0.0));
        for (int i = 0; i < rows_; ++i) {
            cplx acc(0.0, 0.0);
            const cplx* row = &a_[static_cast<size_t>(i) * cols_];
            for (int j = 0; j < cols_; ++j) acc += row[j] * v[j];
            out[i] = acc;
        }
        return out;
    }

    // out += scale * (A v); out must have rows() entries.
    void apply_add(const CVec& v, CVec& out, cplx scale = 1.0) const {
        for (int i = 0; i < rows_; ++i) {
            cplx acc(0.0, 0.0);
            const cplx* row = &a_[static_cast<size_t>(i) * cols_];
            for (int j = 0; j < cols_; ++j) acc += row[j] * v[j];
            out[i] += scale * acc;
        }
    }

    // Same, but reading/writing only the leading `block` entries of vectors
    // that carry extra augmented components.
    void apply_add_block(const CVec& v, CVec& out, double scale, int block) const {
        for (int i = 0; i < block; ++i) {
            cplx acc(0.0, 0.0);
            const cplx* row = &a_[static_cast<size_t>(i) * cols_];
            for (int j = 0; j < block; ++j) acc += row[j] * v[j];
            out[i] += scale * acc;
        }
    }

    Matrix adjoint() const {
        Matrix out(cols_, rows_);
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < cols_; ++j) out(j, i) = std::conj((*this)(i, j));
        return out;
    }

    Matrix transpose() const {
        Matrix out(cols_, rows_);
        for (int i = 0; i < rows_; ++i)
            for (int j = 0; j < cols_; ++j) out(j, i) = (*this)(i, j);
        return out;
    }

    cplx trace() const {
        cplx t(0.0, 0.0);
        for (int i = 0; i < std::min(rows_, cols_); ++i) t += (*this)(i, i);
        return t;
    }

    double max_abs() const {
        double m = 0.0;
        for (const auto& v : a_) m = std::max(m, std::abs(v));
        return m;
    }

    double frobenius_norm() const {
        double s = 0.0;
        for (const auto& v : a_) s += std::norm(v);
        return std::sqrt(s);
    }

    // Maximum absolute row sum.
    double inf_norm() const {
        double m = 0.0;
        for (int i = 0; i < rows_; ++i) {
            double r = 0.0;
            for (int j = 0; j < cols_; ++j) r += std::abs((*this)(i, j));
            m = std::max(m, r);
        }
        return m;
    }

    bool is_hermitian(double tol = kHermTol) const {
        if (rows_ != cols_) return false;
        for (int i = 0; i < rows_; ++i)
            for (int j = i; j < cols_; ++j)
                if (std::abs((*this)(i, j) - std::conj((*this)(j, i))) > tol)
                    return false;
        return true;
    }

    bool is_anti_hermitian(double tol = kHermTol) const {
        if (rows_ != cols_) return false;
        for (int i = 0; i < rows_; ++i)
            for (int j = i; j < cols_; ++j)
                if (std::abs((*this)(i, j) + std::conj((*this)(j, i))) > tol)
                    return false;
        return true;
    }

    bool is_unitary(double tol = kHermTol) const {
        if (rows_ != cols_) return false;
        Matrix p = adjoint() * (*this);
        for (int i = 0; i < rows_; ++i) p(i, i) -= 1.0;
        return p.max_abs() <= tol;
    }

    bool all_finite() const {
        for (const auto& v : a_)
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
        return true;
    }

  private:
    int rows_, cols_;
    CVec a_;
};

inline Matrix commutator(const Matrix& a, const Matrix& b) { return a * b - b * a; }
inline Matrix anticommutator(const Matrix& a, const Matrix& b) { return a * b + b * a; }

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j) {
            const cplx aij = a(i, j);
            if (aij == cplx(0.0, 0.0)) continue;
            for (int k = 0; k < b.rows(); ++k)
                for (int l = 0; l < b.cols(); ++l)
                    out(i * b.rows() + k, j * b.cols() + l) = aij * b(k, l);
        }
    return out;
}

//============================================================================
// Vector helpers and QuantumState
//============================================================================

inline cplx inner(const CVec& a, const CVec& b) {
    cplx s(0.0, 0.0);
    for (size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
    return s;
}

inline double norm2(const CVec& a) { return std::sqrt(std::real(inner(a, a))); }

inline bool all_finite(const CVec& a) {
    for (const auto& v : a)
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    return true;
}

// Normalized pure state on 2^N levels. Construction checks the norm; use
// raw() for intermediate vectors that a propagation step will renormalize.
class QuantumState {
  public:
    QuantumState() = default;
    explicit QuantumState(CVec amplitudes) : amps_(std::move(amplitudes)) {
        const double n = norm2(amps_);
        if (std::abs(n - 1.0) > 1e-9)
            throw ConfigError("QuantumState: vector norm " + std::to_string(n) +
                              " deviates from 1 by more than 1e-9");
    }
    static QuantumState raw(CVec amplitudes) {
        QuantumState s;
        s.amps_ = std::move(amplitudes);
        return s;
    }
    static QuantumState basis(int dim, int index) {
        CVec v(dim, cplx(0.0, 0.0));
        v[index] = 1.0;
        return QuantumState(std::move(v));
    }
    // Label per qubit: characters from {0,1,+,-}, e.g. "0", "+", "01".
    static QuantumState ket(const std::string& label) {
        CVec v{cplx(1.0, 0.0)};
        const double r = 1.0 / std::sqrt(2.0);
        for (char c : label) {
            CVec q;
            switch (c) {
                case '0': q = {1.0, 0.0}; break;
                case '1': q = {0.0, 1.0}; break;
                case '+': q = {r, r}; break;
                case '-': q = {r, -r}; break;
                default: throw ConfigError(std::string("QuantumState::ket: bad label char '") + c + "'");
            }
            CVec next(v.size() * 2);
            for (size_t i = 0; i < v.size(); ++i) {
                next[2 * i] = v[i] * q[0];
                next[2 * i + 1] = v[i] * q[1];
            }
            v = std::move(next);
        }
        return QuantumState(std::move(v));
    }

    int dim() const { return static_cast<int>(amps_.size()); }
    const CVec& amplitudes() const { return amps_; }
    CVec& amplitudes() { return amps_; }
    double norm() const { return norm2(amps_); }
    void renormalize() {
        const double n = norm2(amps_);
        for (auto& v : amps_) v /= n;
    }

  private:
    CVec amps_;
};

inline double fidelity(const CVec& phi, const CVec& psi) {
    return std::norm(inner(phi, psi));
}

//============================================================================
// Linear solves (Gaussian elimination with partial pivoting)
//============================================================================

// Solves A X = B in place of a copy; A square.
inline Matrix solve(Matrix a, Matrix b) {
    const int n = a.rows();
    if (a.cols() != n || b.rows() != n)
        throw ConfigError("solve: dimension mismatch");
    for (int col = 0; col < n; ++col) {
        int piv = col;
        double best = std::abs(a(col, col));
        for (int r = col + 1; r < n; ++r) {
            const double v = std::abs(a(r, col));
            if (v > best) {
                best = v;
                piv = r;
            }
        }
        if (best == 0.0) throw NumericalError("solve: singular matrix", col);
        if (piv != col) {
            for (int j = 0; j < n; ++j) std::swap(a(col, j), a(piv, j));
            for (int j = 0; j < b.cols(); ++j) std::swap(b(col, j), b(piv, j));
        }
        const cplx d = a(col, col);
        for (int r = col + 1; r < n; ++r) {
            const cplx f = a(r, col) / d;
            if (f == cplx(0.0, 0.0)) continue;
            a(r, col) = 0.0;
            for (int j = col + 1; j < n; ++j) a(r, j) -= f * a(col, j);
            for (int j = 0; j < b.cols(); ++j) b(r, j) -= f * b(col, j);
        }
    }
    for (int col = n - 1; col >= 0; --col) {
        const cplx d = a(col, col);
        for (int j = 0; j < b.cols(); ++j) {
            cplx s = b(col, j);
            for (int k = col + 1; k < n; ++k) s -= a(col, k) * b(k, j);
            b(col, j) = s / d;
        }
    }
    return b;
}

inline Matrix inverse(const Matrix& a) { return solve(a, Matrix::identity(a.rows())); }

//============================================================================
// Hermitian eigendecomposition (cyclic Jacobi with complex rotations)
//============================================================================

struct EigDecomposition {
    std::vector<double> values;  // ascending
    Matrix vectors;              // columns are eigenvectors
};

// Two-sided Jacobi for Hermitian matrices. Quadratically convergent and
// accurate to a few ulps at these dimensions, which keeps the exponentials
// built from it unitary to ~1e-14.
inline EigDecomposition hermitian_eig(const Matrix& h_in) {
    const int n = h_in.rows();
    if (!h_in.is_hermitian(1e-10 * std::max(1.0, h_in.max_abs())))
        throw ConfigError("hermitian_eig: matrix is not Hermitian");
    Matrix a = h_in;
    Matrix v = Matrix::identity(n);
    const double scale = std::max(a.max_abs(), 1e-300);
    const double stop = 1e-16 * scale;

    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off = std::max(off, std::abs(a(p, q)));
        if (off <= stop) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const cplx apq = a(p, q);
                const double mag = std::abs(apq);
                if (mag <= stop * 1e-2) continue;
                const double app = std::real(a(p, p));
                const double aqq = std::real(a(q, q));
                const cplx phase = apq / mag;  // e^{i arg(apq)}
                const double tau = (aqq - app) / (2.0 * mag);
                // Smaller-magnitude root of t^2 - 2*tau*t - 1 = 0.
                const double t = (tau >= 0.0 ? -1.0 : 1.0) /
                                 (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                // Columns: col_p' = c*col_p + s*conj(phase)... apply the
                // unitary U = [[c, -s*phase],[s*conj(phase), c]] on (p,q).
                for (int i = 0; i < n; ++i) {
                    const cplx aip = a(i, p);
                    const cplx aiq = a(i, q);
                    a(i, p) = c * aip + s * std::conj(phase) * aiq;
                    a(i, q) = -s * phase * aip + c * aiq;
                }
                for (int j = 0; j < n; ++j) {
                    const cplx apj = a(p, j);
                    const cplx aqj = a(q, j);
                    a(p, j) = c * apj + s * phase * aqj;
                    a(q, j) = -s * std::conj(phase) * apj + c * aqj;
                }
                for (int i = 0; i < n; ++i) {
                    const cplx vip = v(i, p);
                    const cplx viq = v(i, q);
                    v(i, p) = c * vip + s * std::conj(phase) * viq;
                    v(i, q) = -s * phase * vip + c * viq;
                }
            }
        }
    }

    EigDecomposition out;
    out.values.resize(n);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> diag(n);
    for (int i = 0; i < n; ++i) diag[i] = std::real(a(i, i));
    std::sort(order.begin(), order.end(),
              [&](int x, int y) { return diag[x] < diag[y]; });
    out.vectors = Matrix(n, n);
    for (int j = 0; j < n; ++j) {
        out.values[j] = diag[order[j]];
        for (int i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
    }
    return out;
}

// exp(i s H) for Hermitian H via eigendecomposition; result is unitary to
// machine precision.
inline Matrix expm_i_hermitian(const EigDecomposition& eig, double s) {
    const int n = eig.vectors.rows();
    Matrix out(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            cplx acc(0.0, 0.0);
            for (int k = 0; k < n; ++k) {
                const cplx ph = std::polar(1.0, eig.values[k] * s);
                acc += eig.vectors(i, k) * ph * std::conj(eig.vectors(j, k));
            }
            out(i, j) = acc;
        }
    }
    return out;
}

inline Matrix expm_i_hermitian(const Matrix& h, double s) {
    return expm_i_hermitian(hermitian_eig(h), s);
}

// General matrix exponential by scaling and squaring with a Taylor series.
// Adequate for the small generator matrices used here.
inline Matrix expm(const Matrix& a_in) {
    const int n = a_in.rows();
    Matrix a = a_in;
    const double nrm = a.inf_norm();
    int squarings = 0;
    if (nrm > 0.5) {
        squarings = static_cast<int>(std::ceil(std::log2(nrm / 0.5)));
        a *= cplx(std::ldexp(1.0, -squarings), 0.0);
    }
    Matrix result = Matrix::identity(n);
    Matrix term = Matrix::identity(n);
    for (int k = 1; k <= 40; ++k) {
        term = term * a;
        term *= cplx(1.0 / k, 0.0);
        result += term;
        if (term.max_abs() < 1e-18 * std::max(1.0, result.max_abs())) break;
    }
    for (int i = 0; i < squarings; ++i) result = result * result;
    return result;
}

//============================================================================
// Pauli basis
//============================================================================

inline Matrix pauli_i() { return Matrix::identity(2); }
inline Matrix pauli_x() {
    Matrix m(2, 2);
    m(0, 1) = 1.0;
    m(1, 0) = 1.0;
    return m;
}
inline Matrix pauli_y() {
    Matrix m(2, 2);
    m(0, 1) = cplx(0.0, -1.0);
    m(1, 0) = cplx(0.0, 1.0);
    return m;
}
inline Matrix pauli_z() {
    Matrix m(2, 2);
    m(0, 0) = 1.0;
    m(1, 1) = -1.0;
    return m;
}

inline Matrix pauli_by_char(char c) {
    switch (c) {
        case 'I': return pauli_i();
        case 'X': return pauli_x();
        case 'Y': return pauli_y();
        case 'Z': return pauli_z();
        default: throw ConfigError(std::string("pauli_by_char: bad label '") + c + "'");
    }
}

// Tensor product of single-qubit Paulis, e.g. "XZ" = X (x) Z.
inline Matrix pauli_string(const std::string& labels) {
    if (labels.empty()) throw ConfigError("pauli_string: empty label");
    Matrix m = pauli_by_char(labels[0]);
    for (size_t i = 1; i < labels.size(); ++i) m = kron(m, pauli_by_char(labels[i]));
    return m;
}

// Ordered set of the 4^N unnormalized Pauli words. Element 0 is the identity
// and the ordering is lexicographic over {I,X,Y,Z} per qubit, first qubit
// most significant: index = sum_q digit_q * 4^(N-1-q). This ordering is part
// of the serialization contract for transfer matrices.
struct PauliBasis {
    int n_qubits = 0;
    std::vector<Matrix> elements;
    std::vector<std::string> labels;

    int size() const { return static_cast<int>(elements.size()); }
    int dim() const { return 1 << n_qubits; }
    const Matrix& operator[](int i) const { return elements[i]; }
};

inline PauliBasis pauli_basis(int n_qubits) {
    if (n_qubits < 1) throw ConfigError("pauli_basis: n_qubits must be >= 1");
    if (n_qubits > 6)
        throw ConfigError("pauli_basis: n_qubits > 6 exceeds the supported size");
    static const char* kChars = "IXYZ";
    PauliBasis basis;
    basis.n_qubits = n_qubits;
    const int count = 1 << (2 * n_qubits);
    basis.elements.reserve(count);
    basis.labels.reserve(count);
    for (int idx = 0; idx < count; ++idx) {
        std::string label(n_qubits, 'I');
        int rem = idx;
        for (int q = n_qubits - 1; q >= 0; --q) {
            label[q] = kChars[rem & 3];
            rem >>= 2;
        }
        basis.labels.push_back(label);
        basis.elements.push_back(pauli_string(label));
    }
    return basis;
}

//============================================================================
// Random matrices
//============================================================================

// Haar-distributed unitary: QR of a complex Ginibre matrix where R keeps a
// positive real diagonal (modified Gram-Schmidt with reorthogonalization).
inline Matrix haar_random_unitary(int dim, std::uint64_t seed) {
    if (dim < 2) throw ConfigError("haar_random_unitary: dim must be >= 2");
    Rng rng(derive_seed(seed, 0x9aa2ULL));
    std::vector<CVec> cols(dim, CVec(dim));
    for (int j = 0; j < dim; ++j)
        for (int i = 0; i < dim; ++i)
            cols[j][i] = cplx(rng.normal(), rng.normal());
    for (int j = 0; j < dim; ++j) {
        for (int pass = 0; pass < 2; ++pass) {
            for (int k = 0; k < j; ++k) {
                const cplx proj = inner(cols[k], cols[j]);
                for (int i = 0; i < dim; ++i) cols[j][i] -= proj * cols[k][i];
            }
        }
        const double nrm = norm2(cols[j]);
        for (int i = 0; i < dim; ++i) cols[j][i] /= nrm;
    }
    Matrix u(dim, dim);
    for (int j = 0; j < dim; ++j)
        for (int i = 0; i < dim; ++i) u(i, j) = cols[j][i];
    return u;
}

// Hermitian matrix with independent complex Gaussian entries, symmetrized.
inline Matrix random_hermitian(int dim, std::uint64_t seed) {
    if (dim < 2) throw ConfigError("random_hermitian: dim must be >= 2");
    Rng rng(derive_seed(seed, 0x71e5ULL));
    Matrix g(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) g(i, j) = cplx(rng.normal(), rng.normal());
    Matrix h = g + g.adjoint();
    h *= cplx(0.5, 0.0);
    return h;
}

}  // namespace fvqoc
