// quadrature.hpp — Adaptive Gauss-Kronrod integration with checked error estimates

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <utility>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ifmps/errors.hpp"

namespace ifmps::detail {

// Acceptance target for an integral. The estimate passes if it is below
// abs_tol, or below rel_tol times the L1 norm of the integrand. Zero
// disables the corresponding check; at least one must be positive.
struct QuadTarget {
    double rel_tol{1e-12};
    double abs_tol{0.0};
};

// Integrate a real-valued function on [a, b]. Throws NumericalError with the
// caller-supplied context string when the error estimate misses the target.
template <class F>
double adaptive_integral(F&& f, double a, double b, QuadTarget target,
                         const char* context) {
    using boost::math::quadrature::gauss_kronrod;
    double err = 0.0;
    double l1 = 0.0;
    // Termination matches the acceptance tolerance exactly. Tightening it
    // further backfires: extra subdivisions each contribute a roundoff-floor
    // term to the accumulated estimate, inflating the certificate while the
    // true error sits at machine precision.
    const double term_tol = target.rel_tol > 0.0 ? target.rel_tol : 1e-10;
    const double value = gauss_kronrod<double, 31>::integrate(
        std::forward<F>(f), a, b, 15, term_tol, &err, &l1);
    const bool rel_ok = target.rel_tol > 0.0 && err <= target.rel_tol * l1;
    const bool abs_ok = target.abs_tol > 0.0 && err <= target.abs_tol;
    const bool exact = err == 0.0;
    if (!rel_ok && !abs_ok && !exact) {
        std::ostringstream msg;
        msg << context << ": quadrature error estimate " << err
            << " exceeds target (rel " << target.rel_tol << " of L1 " << l1
            << ", abs " << target.abs_tol << ")";
        throw NumericalError(msg.str());
    }
    return value;
}

// Complex-valued integrand, integrated as two real passes.
template <class F>
std::complex<double> adaptive_integral_c(F&& f, double a, double b,
                                         QuadTarget target,
                                         const char* context) {
    const double re = adaptive_integral(
        [&](double x) { return f(x).real(); }, a, b, target, context);
    const double im = adaptive_integral(
        [&](double x) { return f(x).imag(); }, a, b, target, context);
    return {re, im};
}

// Wrap an integrand on [0, inf) into one on [0, 1) via w = scale*u/(1-u).
// The scale should match the integrand's natural decay length.
template <class F>
auto halfline(F f, double scale) {
    return [f = std::move(f), scale](double u) {
        const double one_minus = 1.0 - u;
        if (one_minus <= std::numeric_limits<double>::epsilon()) {
            return decltype(f(0.0)){};
        }
        const double w = scale * u / one_minus;
        const double jacobian = scale / (one_minus * one_minus);
        return f(w) * jacobian;
    };
}

} // namespace ifmps::detail
