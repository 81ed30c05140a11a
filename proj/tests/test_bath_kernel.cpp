// test_bath_kernel.cpp — closed forms vs defining integrals, table invariants

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>

#include "ifmps/bath_kernel.hpp"

using namespace ifmps;
using Catch::Approx;

TEST_CASE("spectral density basics", "[bath]") {
    BathSpec bath{0.1, 1.0};
    REQUIRE(spectral_density(bath, 0.0) == 0.0);
    REQUIRE(spectral_density({0.0, 1.0}, 3.0) == 0.0);
    REQUIRE(spectral_density(bath, 1.0) == Approx(0.1 * std::exp(-1.0)).epsilon(1e-14));
    REQUIRE_THROWS_AS(spectral_density(bath, -1.0), std::domain_error);
}

TEST_CASE("continuum kernel closed form", "[bath]") {
    REQUIRE(eta_continuum({0.0, 1.0}, 3.0) == cplx(0.0, 0.0));

    // t = 0 reduces to the Gamma-function integral alpha * wc^2 * Gamma(2).
    const cplx at_zero = eta_continuum({0.1, 1.0}, 0.0);
    REQUIRE(at_zero.real() == Approx(0.1).epsilon(1e-14));
    REQUIRE(at_zero.imag() == 0.0);

    BathSpec bath{0.1, 1.0};
    for (double t : {0.3, 1.0, 4.0, 10.0}) {
        const cplx closed = eta_continuum(bath, t);
        const cplx quad = eta_continuum_quadrature(bath, t);
        REQUIRE(std::abs(closed - quad) <= 1e-10 * std::abs(closed));
    }
}

TEST_CASE("discrete kernel same-site value", "[bath]") {
    BathSpec bath{0.1, 1.0};
    const double dt = 0.1;
    const cplx eta0 = eta_discrete(bath, dt, 0);

    // Frullani closed form at m = 0: (alpha/2) ln(1 + wc^2 dt^2).
    REQUIRE(eta0.real() == Approx(0.05 * std::log(1.01)).epsilon(1e-14));
    REQUIRE(eta0.real() == Approx(4.975e-4).margin(5e-7));
    REQUIRE(std::abs(eta0.imag()) < 1e-18);

    REQUIRE(eta_discrete({0.0, 1.0}, dt, 0) == cplx(0.0, 0.0));
    REQUIRE(eta_discrete({0.0, 1.0}, dt, 7) == cplx(0.0, 0.0));
}

TEST_CASE("discrete kernel matches quadrature on a 100-point grid", "[bath]") {
    BathSpec bath{0.1, 1.0};
    for (double dt : {0.02, 0.05, 0.1, 0.2, 0.5}) {
        for (int m = 0; m < 20; ++m) {
            const cplx closed = eta_discrete(bath, dt, m);
            const cplx quad = eta_discrete_quadrature(bath, dt, m);
            INFO("dt=" << dt << " m=" << m);
            REQUIRE(std::abs(closed - quad) <= 1e-10 * std::abs(closed));
        }
    }
}

TEST_CASE("same-site value is real and nonnegative", "[bath]") {
    for (double alpha : {0.0, 0.05, 0.3, 2.0}) {
        for (double wc : {0.5, 1.0, 4.0}) {
            for (double dt : {0.01, 0.1, 1.0}) {
                const cplx eta0 = eta_discrete({alpha, wc}, dt, 0);
                REQUIRE(eta0.real() >= 0.0);
                REQUIRE(std::abs(eta0.imag()) < 1e-18);
            }
        }
    }
}

TEST_CASE("discrete kernel is the double time average of the continuum one",
          "[bath]") {
    // eta_m = Int_0^dt Int_0^dt eta0(t_m + s - s') ds ds', so the rescaled
    // discrepancy |eta_m - dt^2 eta0(t_m)| / dt^2 must shrink ~ dt^2.
    BathSpec bath{0.1, 1.0};
    const double t = 1.0;
    double previous = 0.0;
    int step = 0;
    for (int m : {10, 20, 40}) {
        const double dt = t / m;
        const double err =
            std::abs(eta_discrete(bath, dt, m) - dt * dt * eta_continuum(bath, t)) /
            (dt * dt);
        if (step > 0) REQUIRE(err <= previous / 3.0);
        previous = err;
        ++step;
    }
}

TEST_CASE("kernel table construction", "[bath]") {
    BathSpec bath{0.1, 1.0};
    Discretization disc{0.1, 3};
    const KernelTable table = build_kernel_table(bath, disc);
    REQUIRE(table.size() == 3);
    for (int m = 0; m < 3; ++m) {
        REQUIRE(table.eta[m] == eta_discrete(bath, disc.delta_t, m));
    }
    REQUIRE(table.kappa(0) == table.eta[0].real());
    REQUIRE(table.phi(1) == table.eta[1].imag());

    const KernelTable zero = build_kernel_table({0.0, 1.0}, {0.1, 5});
    for (const cplx& e : zero.eta) REQUIRE(e == cplx(0.0, 0.0));

    REQUIRE_THROWS_AS(build_kernel_table(bath, Discretization{0.1, 0}),
                      ConfigError);
}

TEST_CASE("kernel magnitude decays monotonically past the first entry",
          "[bath]") {
    const KernelTable table = build_kernel_table({0.1, 1.0}, {0.1, 200});
    for (int m = 2; m < table.size(); ++m) {
        REQUIRE(std::abs(table.eta[m]) < std::abs(table.eta[m - 1]));
    }
}
