// dynamics.hpp — Reduced spin dynamics through the influence-functional
// tensor, interleaved with arbitrary single-spin unitaries

#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "ifmps/errors.hpp"
#include "ifmps/fock_mps.hpp"

namespace ifmps {

using DensityMatrix = Eigen::Matrix2cd;

struct SpinModel {
    // Hermitian generator h(t); ignored when explicit unitaries are given.
    std::function<Eigen::Matrix2cd(double)> hamiltonian;
    // Optional explicit per-step unitaries U^{(1)}, U^{(2)}, ...
    std::vector<Eigen::Matrix2cd> unitaries;

    bool uses_unitaries() const { return !unitaries.empty(); }
};

inline SpinModel free_spin() {
    return {[](double) { return Eigen::Matrix2cd::Zero().eval(); }, {}};
}

// h = (delta/2) sigma_x
inline SpinModel rabi_spin(double delta) {
    return {[delta](double) {
                Eigen::Matrix2cd h;
                h << 0.0, 0.5 * delta, 0.5 * delta, 0.0;
                return h;
            },
            {}};
}

// h = (delta/2) sigma_x + (eps_z/2) sigma_z
inline SpinModel biased_rabi_spin(double delta, double eps_z) {
    return {[delta, eps_z](double) {
                Eigen::Matrix2cd h;
                h << 0.5 * eps_z, 0.5 * delta, 0.5 * delta, -0.5 * eps_z;
                return h;
            },
            {}};
}

// U = e^{+i h(t) dt} in closed form: h = a I + b n.sigma gives
// e^{i a dt} (cos(b dt) I + i sin(b dt) n.sigma).
inline Eigen::Matrix2cd spin_step_unitary(const SpinModel& model, double t,
                                          double delta_t) {
    if (!(delta_t > 0.0)) throw ConfigError("spin_step_unitary: delta_t <= 0");
    const Eigen::Matrix2cd h = model.hamiltonian(t);
    const double scale = std::max(1.0, h.norm());
    if ((h - h.adjoint()).norm() > 1e-12 * scale) {
        throw std::invalid_argument("spin_step_unitary: h(t) not Hermitian");
    }
    const cplx a = 0.5 * h.trace();
    const Eigen::Matrix2cd h0 = h - a * Eigen::Matrix2cd::Identity();
    // For Hermitian traceless h0, b^2 = -det(h0) >= 0.
    const double b = std::sqrt(std::max(0.0, -h0.determinant().real()));
    const double theta = b * delta_t;
    const double sinc =
        theta < 1e-8 ? 1.0 - theta * theta / 6.0 : std::sin(theta) / theta;
    const cplx phase = std::exp(cplx(0.0, 1.0) * a * delta_t);
    return phase * (std::cos(theta) * Eigen::Matrix2cd::Identity() +
                    cplx(0.0, 1.0) * sinc * delta_t * h0);
}

struct EvolutionState {
    Eigen::MatrixXcd psi;             // D x 4, column = spin-pair block
    int step{0};
    std::vector<double> norm_history; // Frobenius norm after each step
};

struct EvolutionTrace {
    std::vector<DensityMatrix> rho;   // rho(t_i) for i = 0..n_steps
    EvolutionState state;
    double max_step_growth{0.0};      // max norm ratio across tensor steps
};

namespace detail {

// Largest singular value by power iteration on M†M, deterministic start.
inline double largest_singular_value(const Eigen::MatrixXcd& m,
                                     int iterations = 60) {
    Eigen::VectorXcd v(m.cols());
    for (int i = 0; i < m.cols(); ++i) v(i) = cplx(1.0 / (1.0 + i), 0.0);
    v /= v.norm();
    double value = 0.0;
    for (int i = 0; i < iterations; ++i) {
        v = m.adjoint() * (m * v);
        const double n = v.norm();
        if (n == 0.0) return 0.0;
        v /= n;
        value = n;
    }
    return std::sqrt(value);
}

} // namespace detail

// Propagate rho0 (x) vacuum for n_steps. Per step the four boson blocks are
// hit by their transposed site matrices (the contraction closes on <0| from
// the left, so chronological application uses M^T), then the spin pair gets
// U (x) conj(U) sampled at the step's left endpoint. The vacuum row is read
// out after every step. Norm growth beyond the measured largest singular
// value (plus truncation slack) indicates a corrupted tensor and fails hard.
inline EvolutionTrace evolve_traced(const IfTensor& tensor,
                                    const SpinModel& model,
                                    const DensityMatrix& rho0, int n_steps) {
    if (n_steps < 0) throw ConfigError("evolve: n_steps must be >= 0");
    const double rho_scale = std::max(1.0, rho0.norm());
    if ((rho0 - rho0.adjoint()).norm() > 1e-12 * rho_scale) {
        throw std::invalid_argument("evolve: rho0 not Hermitian");
    }
    if (model.uses_unitaries() &&
        static_cast<int>(model.unitaries.size()) < n_steps) {
        throw ConfigError("evolve: fewer explicit unitaries than steps");
    }

    const int dim = tensor.basis.dimension();
    EvolutionTrace trace;
    trace.state.psi = Eigen::MatrixXcd::Zero(dim, 4);
    for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
            trace.state.psi(0, 2 * i + j) = rho0(i, j);
        }
    }
    trace.rho.reserve(n_steps + 1);
    trace.rho.push_back(rho0);

    std::array<Eigen::MatrixXcd, 4> stepper;
    double sigma_cap = 0.0;
    for (int p = 0; p < 4; ++p) {
        stepper[p] = tensor.m[p].transpose();
        sigma_cap = std::max(sigma_cap,
                             detail::largest_singular_value(tensor.m[p]));
    }
    const double growth_cap = std::max(1.0, sigma_cap) + 1e-9;

    for (int step = 1; step <= n_steps; ++step) {
        const double before = trace.state.psi.norm();

        for (int p = 0; p < 4; ++p) {
            trace.state.psi.col(p) = stepper[p] * trace.state.psi.col(p);
        }
        const double after = trace.state.psi.norm();
        if (before > 0.0) {
            const double growth = after / before;
            trace.max_step_growth = std::max(trace.max_step_growth, growth);
            if (growth > growth_cap) {
                throw NumericalError(
                    "evolve: step norm growth " + std::to_string(growth) +
                    " exceeds the operator-norm cap " +
                    std::to_string(growth_cap));
            }
        }

        Eigen::Matrix2cd u;
        if (model.uses_unitaries()) {
            u = model.unitaries[step - 1];
            if ((u * u.adjoint() - Eigen::Matrix2cd::Identity()).norm() >
                1e-12) {
                throw std::invalid_argument("evolve: supplied U not unitary");
            }
        } else {
            u = spin_step_unitary(model, (step - 1) * tensor.delta_t,
                                  tensor.delta_t);
        }
        // Row-major pair layout: rho -> U rho U† is kron(U, conj(U)).
        Eigen::Matrix4cd k4;
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) {
                k4.block<2, 2>(2 * i, 2 * j) = u(i, j) * u.conjugate();
            }
        }
        trace.state.psi = trace.state.psi * k4.transpose();

        trace.state.step = step;
        trace.state.norm_history.push_back(trace.state.psi.norm());

        DensityMatrix rho;
        for (int i = 0; i < 2; ++i) {
            for (int j = 0; j < 2; ++j) {
                rho(i, j) = trace.state.psi(0, 2 * i + j);
            }
        }
        trace.rho.push_back(rho);
    }
    return trace;
}

inline std::vector<DensityMatrix> evolve(const IfTensor& tensor,
                                         const SpinModel& model,
                                         const DensityMatrix& rho0,
                                         int n_steps) {
    return evolve_traced(tensor, model, rho0, n_steps).rho;
}

struct Observables {
    double sz{0.0};
    double sx{0.0};
    double sy{0.0};
    cplx trace{0.0, 0.0};
    double purity{0.0};
};

inline Observables observables(const DensityMatrix& rho) {
    Observables out;
    out.sz = (rho(0, 0) - rho(1, 1)).real();
    out.sx = (rho(0, 1) + rho(1, 0)).real();
    out.sy = (cplx(0.0, 1.0) * (rho(0, 1) - rho(1, 0))).real();
    out.trace = rho.trace();
    out.purity = (rho * rho).trace().real();
    return out;
}

} // namespace ifmps
