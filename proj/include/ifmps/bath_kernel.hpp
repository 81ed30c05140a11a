// bath_kernel.hpp — Ohmic memory kernel of the influence functional, exact
// closed forms plus the defining integrals as a quadrature cross-check

#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "ifmps/detail/quadrature.hpp"
#include "ifmps/errors.hpp"

namespace ifmps {

using cplx = std::complex<double>;

struct BathSpec {
    double alpha{0.0};   // dimensionless coupling strength, >= 0
    double omega_c{1.0}; // cutoff frequency, > 0

    void validate() const {
        if (alpha < 0.0) throw ConfigError("bath alpha must be >= 0");
        if (!(omega_c > 0.0)) throw ConfigError("bath omega_c must be > 0");
    }
};

struct Discretization {
    double delta_t{0.0}; // time step, > 0
    int n_steps{0};      // number of steps N, > 0

    double total_time() const { return delta_t * n_steps; }

    void validate() const {
        if (!(delta_t > 0.0)) throw ConfigError("delta_t must be > 0");
        if (n_steps <= 0) throw ConfigError("n_steps must be > 0");
    }
};

// J(w) = alpha * w * exp(-w / omega_c)
inline double spectral_density(const BathSpec& bath, double omega) {
    if (omega < 0.0) throw std::domain_error("spectral_density: omega < 0");
    return bath.alpha * omega * std::exp(-omega / bath.omega_c);
}

// Continuum kernel eta0(t) = alpha * Int_0^inf w e^{-w/wc} e^{iwt} dw,
// which evaluates to alpha * wc^2 / (1 - i*wc*t)^2.
inline cplx eta_continuum(const BathSpec& bath, double t) {
    if (t < 0.0) throw std::domain_error("eta_continuum: t < 0");
    const cplx z(1.0, -bath.omega_c * t);
    return bath.alpha * bath.omega_c * bath.omega_c / (z * z);
}

// Discrete kernel entries eta_m. Writing z(t) = 1 - i*wc*t, the defining
// integrals reduce by the Frullani identity to
//   eta_m   = alpha * [ Log z(t_{m+1}) + Log z(t_{m-1}) - 2 Log z(t_m) ],
//   eta_0   = the same expression at m = 0 with an extra factor 1/2,
// where Log is the principal branch. Every z lies in the open right
// half-plane, so each term stays off the branch cut for any parameters.
inline cplx eta_discrete(const BathSpec& bath, double delta_t, int m) {
    if (!(delta_t > 0.0)) throw std::domain_error("eta_discrete: delta_t <= 0");
    if (m < 0) throw std::domain_error("eta_discrete: m < 0");
    auto log_z = [&](double t) {
        return std::log(cplx(1.0, -bath.omega_c * t));
    };
    const double tm = m * delta_t;
    const cplx sum = log_z(tm + delta_t) + log_z(tm - delta_t) - 2.0 * log_z(tm);
    return (m == 0 ? 0.5 : 1.0) * bath.alpha * sum;
}

struct KernelTable {
    std::vector<cplx> eta; // eta[m] for m = 0 .. n_steps-1
    double delta_t{0.0};

    int size() const { return static_cast<int>(eta.size()); }
    double kappa(int m) const { return eta.at(m).real(); }
    double phi(int m) const { return eta.at(m).imag(); }
};

inline KernelTable build_kernel_table(const BathSpec& bath,
                                      const Discretization& disc) {
    bath.validate();
    disc.validate();
    KernelTable table;
    table.delta_t = disc.delta_t;
    table.eta.reserve(disc.n_steps);
    for (int m = 0; m < disc.n_steps; ++m) {
        table.eta.push_back(eta_discrete(bath, disc.delta_t, m));
    }
    return table;
}

// ---- quadrature oracles ----------------------------------------------------
// Direct adaptive integration of the defining integrals. These are the
// validation path only; the closed forms above are production. The spectral
// density is a callback so tests can probe non-Ohmic inputs too.

template <class J>
cplx eta_continuum_quadrature(J j, double omega_scale, double t,
                              double rel_tol = 1e-12) {
    auto integrand = detail::halfline(
        [&](double w) {
            if (w == 0.0) return cplx(0.0, 0.0);
            return cplx(j(w)) * std::exp(cplx(0.0, w * t));
        },
        omega_scale);
    return detail::adaptive_integral_c(integrand, 0.0, 1.0,
                                       {rel_tol, 0.0},
                                       "eta_continuum_quadrature");
}

inline cplx eta_continuum_quadrature(const BathSpec& bath, double t,
                                     double rel_tol = 1e-12) {
    return eta_continuum_quadrature(
        [&](double w) { return spectral_density(bath, w); }, bath.omega_c, t,
        rel_tol);
}

// m >= 1: 4 * Int J(w) sin^2(w dt/2) / w^2 * e^{i w t_m} dw
// m == 0: 2 * Int J(w) sin^2(w dt/2) / w^2 dw
template <class J>
cplx eta_discrete_quadrature(J j, double omega_scale, double delta_t, int m,
                             double rel_tol = 1e-12) {
    const double tm = m * delta_t;
    const double prefactor = (m == 0) ? 2.0 : 4.0;
    auto integrand = detail::halfline(
        [&](double w) {
            if (w == 0.0) return cplx(0.0, 0.0);
            const double s = std::sin(0.5 * w * delta_t);
            const double envelope = j(w) * s * s / (w * w);
            if (m == 0) return cplx(envelope, 0.0);
            return envelope * std::exp(cplx(0.0, w * tm));
        },
        omega_scale);
    return prefactor * detail::adaptive_integral_c(
                           integrand, 0.0, 1.0, {rel_tol, 0.0},
                           "eta_discrete_quadrature");
}

inline cplx eta_discrete_quadrature(const BathSpec& bath, double delta_t,
                                    int m, double rel_tol = 1e-12) {
    return eta_discrete_quadrature(
        [&](double w) { return spectral_density(bath, w); }, bath.omega_c,
        delta_t, m, rel_tol);
}

} // namespace ifmps
