#pragma once

// Closed-form and small-ODE reference solutions used to validate the SSE
// engine: the 6-dimensional second-order moment system for a single
// commuting noise operator, and the 10-dimensional real system for the
// non-commuting pair H = alpha*s1, S = s2 together with its stochastic
// Magnus approximations. The 10x10 generator matrices are fixed reference
// data; their consistency with the transfer-matrix machinery is covered by
// tests pushing the 4-dimensional generators through the quadratic map.

#include <cmath>
#include <vector>

#include "fvqoc/errors.hpp"
#include "fvqoc/linalg.hpp"
#include "fvqoc/noise.hpp"

namespace fvqoc {

//============================================================================
// Second-order moment system (single commuting noise operator)
//============================================================================

// Closed linear system for [F, |phi^dag S psi|^2, X*(cross), X^2*F,
// X^2*|phi^dag S psi|^2, X^3*(cross)] under OU dephasing, with E[X_t^2]
// entering the last row. s0 = phi_0^dag S phi_0.
struct SecondOrderSystem {
    double gamma = 0.0;
    double k = 0.0;
    double s0 = 0.0;
};

namespace detail {

inline Matrix second_order_matrix(const SecondOrderSystem& sys, double t) {
    const double g2 = sys.gamma * sys.gamma;
    const double k = sys.k;
    const double ex2 = ou_even_moment(1, t, k, sys.gamma);
    const cplx i(0.0, 1.0);
    Matrix m(6, 6);
    m(0, 0) = -g2;           m(0, 1) = g2;            m(0, 2) = i * k;
    m(1, 0) = g2;            m(1, 1) = -g2;           m(1, 2) = -i * k;
    m(2, 0) = -2.0 * i * g2; m(2, 1) = 2.0 * i * g2;  m(2, 2) = -(k + 2.0 * g2);
    m(2, 3) = 2.0 * i * k;   m(2, 4) = -2.0 * i * k;
    m(3, 0) = g2;            m(3, 2) = -2.0 * i * g2; m(3, 3) = -(2.0 * k + g2);
    m(3, 4) = g2;            m(3, 5) = i * k;
    m(4, 1) = g2;            m(4, 2) = 2.0 * i * g2;  m(4, 3) = g2;
    m(4, 4) = -(2.0 * k + g2); m(4, 5) = -i * k;
    m(5, 2) = 2.0 * g2;
    m(5, 3) = 2.0 * i * (k * ex2 - 2.0 * g2);
    m(5, 4) = -2.0 * i * (k * ex2 - 2.0 * g2);
    m(5, 5) = -(3.0 * k + 2.0 * g2);
    return m;
}

}  // namespace detail

// RK4 integration of the moment system on the given time grid; returns the
// fidelity component. t_grid must start at 0 and be increasing.
inline std::vector<double> second_order_mean_fidelity(const SecondOrderSystem& sys,
                                                      const std::vector<double>& t_grid,
                                                      int substeps_per_interval = 8) {
    if (t_grid.empty() || t_grid.front() != 0.0)
        throw ConfigError("second_order_mean_fidelity: grid must start at t = 0");
    CVec v(6, cplx(0.0, 0.0));
    v[0] = 1.0;
    v[1] = sys.s0 * sys.s0;

    std::vector<double> out;
    out.reserve(t_grid.size());
    out.push_back(std::real(v[0]));

    auto rhs = [&](double t, const CVec& y) {
        return detail::second_order_matrix(sys, t).apply(y);
    };
    for (size_t seg = 1; seg < t_grid.size(); ++seg) {
        const double t0 = t_grid[seg - 1];
        const double h = (t_grid[seg] - t0) / substeps_per_interval;
        double t = t0;
        for (int s = 0; s < substeps_per_interval; ++s) {
            const CVec k1 = rhs(t, v);
            CVec y2 = v;
            for (int i = 0; i < 6; ++i) y2[i] += 0.5 * h * k1[i];
            const CVec k2 = rhs(t + 0.5 * h, y2);
            CVec y3 = v;
            for (int i = 0; i < 6; ++i) y3[i] += 0.5 * h * k2[i];
            const CVec k3 = rhs(t + 0.5 * h, y3);
            CVec y4 = v;
            for (int i = 0; i < 6; ++i) y4[i] += h * k3[i];
            const CVec k4 = rhs(t + h, y4);
            for (int i = 0; i < 6; ++i)
                v[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            t += h;
        }
        out.push_back(std::real(v[0]));
    }
    return out;
}

//============================================================================
// Non-commuting 10-dimensional system
//============================================================================

// H = alpha*s1, S = s2 for a cyclic labeling (s1,s2,s3) of the Pauli
// matrices. V collects the ten real bilinears [F, |phi^dag s_a psi|^2,
// cross terms] closing under d V = alpha A_c V dt + 1/2 g^2 B^2 V dt + B V dX.
struct NonCommutingSystem {
    double alpha = 1.0;
    double gamma = 0.0;
    Matrix a_c;  // 10x10 commutator part
    Matrix b;    // 10x10 noise part

    static NonCommutingSystem make(double alpha, double gamma) {
        NonCommutingSystem sys;
        sys.alpha = alpha;
        sys.gamma = gamma;
        sys.a_c = Matrix(10, 10);
        sys.a_c(2, 9) = -2.0;
        sys.a_c(3, 9) = 2.0;
        sys.a_c(5, 6) = -2.0;
        sys.a_c(6, 5) = 2.0;
        sys.a_c(7, 8) = -2.0;
        sys.a_c(8, 7) = 2.0;
        sys.a_c(9, 2) = 4.0;
        sys.a_c(9, 3) = -4.0;
        const double rows[10][10] = {
            {0, 0, 0, 0, 0, -1, 0, 0, 0, 0},
            {0, 0, 0, 0, 0, 0, 0, 0, 1, 0},
            {0, 0, 0, 0, 0, 1, 0, 0, 0, 0},
            {0, 0, 0, 0, 0, 0, 0, 0, -1, 0},
            {0, 0, 0, 0, 0, 0, 1, -1, 0, 0},
            {2, 0, -2, 0, 0, 0, 0, 0, 0, 0},
            {0, 0, 0, 0, -1, 0, 0, 0, 0, -1},
            {0, 0, 0, 0, 1, 0, 0, 0, 0, 1},
            {0, -2, 0, 2, 0, 0, 0, 0, 0, 0},
            {0, 0, 0, 0, 0, 0, 1, -1, 0, 0}};
        sys.b = Matrix(10, 10);
        for (int r = 0; r < 10; ++r)
            for (int c = 0; c < 10; ++c) sys.b(r, c) = rows[r][c];
        return sys;
    }

    // Initial vector for phi_0 = psi_0 with Bloch components r_a along the
    // chosen labels: [1, r1^2, r2^2, r3^2, 0, 0, 0, 2 r1 r2, 2 r1 r3, 2 r2 r3].
    static CVec v0_from_bloch(double r1, double r2, double r3) {
        CVec v(10, cplx(0.0, 0.0));
        v[0] = 1.0;
        v[1] = r1 * r1;
        v[2] = r2 * r2;
        v[3] = r3 * r3;
        v[7] = 2.0 * r1 * r2;
        v[8] = 2.0 * r1 * r3;
        v[9] = 2.0 * r2 * r3;
        return v;
    }
};

// White-noise mean: exp((alpha A_c + 1/2 g^2 B^2) t) V0; the dX martingale
// term drops out of the expectation of the linear system.
inline CVec noncommuting_wn_mean(const NonCommutingSystem& sys, double t, const CVec& v0) {
    Matrix gen = sys.a_c;
    gen *= cplx(sys.alpha, 0.0);
    Matrix diff = sys.b * sys.b;
    diff *= cplx(0.5 * sys.gamma * sys.gamma, 0.0);
    gen += diff;
    gen *= cplx(t, 0.0);
    return expm(gen).apply(v0);
}

namespace detail {

// Interaction-frame noise generator D(t) = cos(2t) B - 1/2 sin(2t) [A_c, B]
// (alpha scaled to 1; the Pauli group closes ad_{A_c}^2 B = -4 B).
inline Matrix magnus_d(const NonCommutingSystem& sys, double t) {
    Matrix d = sys.b;
    d *= cplx(std::cos(2.0 * t), 0.0);
    Matrix c = commutator(sys.a_c, sys.b);
    c *= cplx(-0.5 * std::sin(2.0 * t), 0.0);
    d += c;
    return d;
}

// Composite-Simpson weights over n (even) intervals.
inline double simpson_weight(int i, int n) {
    if (i == 0 || i == n) return 1.0;
    return (i % 2 == 1) ? 4.0 : 2.0;
}

}  // namespace detail

// White-noise stochastic Magnus mean in the interaction frame:
// E[U_t] ~ exp(g^2/2 int_0^t D(s)^2 ds), Simpson quadrature.
inline Matrix noncommuting_magnus_wn(const NonCommutingSystem& sys, double t,
                                     double resolution = 1e-3) {
    int n = static_cast<int>(std::ceil(t / resolution));
    if (n % 2 == 1) ++n;
    if (n < 2) n = 2;
    const double h = t / n;
    Matrix acc = Matrix::zero(10, 10);
    for (int i = 0; i <= n; ++i) {
        const Matrix d = detail::magnus_d(sys, i * h);
        Matrix d2 = d * d;
        d2 *= cplx(detail::simpson_weight(i, n), 0.0);
        acc += d2;
    }
    acc *= cplx(h / 3.0 * 0.5 * sys.gamma * sys.gamma, 0.0);
    return expm(acc);
}

// OU second-order expansion of the Magnus mean:
//   I + g^2/2 int D^2
//     - g^2 k/2 int {e^{-ks} D(s), int_0^s e^{ks'} D ds'} ds
//     + g^2 k/4 int {e^{-2ks} D(s), int_0^s e^{2ks'} D ds'} ds.
// Running inner integrals are accumulated by trapezoid on the same grid.
inline Matrix ou_magnus_second_order(const NonCommutingSystem& sys, double k, double t,
                                     double resolution = 1e-3) {
    int n = static_cast<int>(std::ceil(t / resolution));
    if (n % 2 == 1) ++n;
    if (n < 2) n = 2;
    const double h = t / n;
    const double g2 = sys.gamma * sys.gamma;

    std::vector<Matrix> d_at(n + 1, Matrix(10, 10));
    for (int i = 0; i <= n; ++i) d_at[i] = detail::magnus_d(sys, i * h);

    Matrix int_d2 = Matrix::zero(10, 10);
    Matrix term1 = Matrix::zero(10, 10);
    Matrix term2 = Matrix::zero(10, 10);
    Matrix run1 = Matrix::zero(10, 10);  // int_0^s e^{ks'} D ds'
    Matrix run2 = Matrix::zero(10, 10);  // int_0^s e^{2ks'} D ds'

    for (int i = 0; i <= n; ++i) {
        const double s = i * h;
        const double w = detail::simpson_weight(i, n);
        Matrix d2 = d_at[i] * d_at[i];
        d2 *= cplx(w, 0.0);
        int_d2 += d2;

        if (i > 0) {
            // advance the running integrals over [s-h, s]
            Matrix inc1 = d_at[i - 1] * cplx(std::exp(k * (s - h)), 0.0) +
                          d_at[i] * cplx(std::exp(k * s), 0.0);
            inc1 *= cplx(0.5 * h, 0.0);
            run1 += inc1;
            Matrix inc2 = d_at[i - 1] * cplx(std::exp(2.0 * k * (s - h)), 0.0) +
                          d_at[i] * cplx(std::exp(2.0 * k * s), 0.0);
            inc2 *= cplx(0.5 * h, 0.0);
            run2 += inc2;
        }
        Matrix lead1 = d_at[i];
        lead1 *= cplx(std::exp(-k * s), 0.0);
        Matrix ac1 = anticommutator(lead1, run1);
        ac1 *= cplx(w, 0.0);
        term1 += ac1;

        Matrix lead2 = d_at[i];
        lead2 *= cplx(std::exp(-2.0 * k * s), 0.0);
        Matrix ac2 = anticommutator(lead2, run2);
        ac2 *= cplx(w, 0.0);
        term2 += ac2;
    }
    int_d2 *= cplx(h / 3.0, 0.0);
    term1 *= cplx(h / 3.0, 0.0);
    term2 *= cplx(h / 3.0, 0.0);

    Matrix out = Matrix::identity(10);
    int_d2 *= cplx(0.5 * g2, 0.0);
    out += int_d2;
    term1 *= cplx(-0.5 * g2 * k, 0.0);
    out += term1;
    term2 *= cplx(0.25 * g2 * k, 0.0);
    out += term2;
    return out;
}

}  // namespace fvqoc
