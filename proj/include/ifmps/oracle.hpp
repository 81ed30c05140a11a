// oracle.hpp — Independent reference computations used to check the tensor
// network: the exact influence functional as an explicit sum, brute-force
// path summation of the reduced dynamics, a pure-dephasing closed form, a
// direct ODE integration of the auxiliary-mode hierarchy, occupation-sector
// amplitude bounds, and a Kraus-channel cross-check of the single-mode
// building block.
//
// Everything here trades speed for transparency. The brute-force path sum
// is exponential in step count and guarded accordingly.

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <future>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ifmps/bath_kernel.hpp"
#include "ifmps/dynamics.hpp"
#include "ifmps/errors.hpp"
#include "ifmps/expsum.hpp"
#include "ifmps/fock_mps.hpp"
#include "ifmps/detail/parallel.hpp"

namespace ifmps {

// Influence functional of one two-sided spin path, directly from the
// discrete double sum: the exponent couples the difference coordinate at
// the earlier time to both branches at the later time through the kernel.
inline cplx exact_if(const KernelTable& kernel, const Trajectory& traj) {
    const int n = static_cast<int>(traj.size());
    if (n > kernel.size())
        throw std::invalid_argument("exact_if: trajectory longer than kernel table");
    cplx exponent = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = traj[i].first - traj[i].second;
        if (d == 0.0) continue;
        for (int j = i; j < n; ++j) {
            const cplx eta = kernel.eta[std::size_t(j - i)];
            exponent += d * (double(traj[j].first) * eta -
                             std::conj(eta) * double(traj[j].second));
        }
    }
    return std::exp(-exponent);
}

// Callable wrapper when a bare weight function is wanted.
struct TrajectoryIF {
    const KernelTable* kernel;
    cplx operator()(const Trajectory& traj) const { return exact_if(*kernel, traj); }
};

namespace detail {

// Spin pair index -> (s, sbar), matching pair_index ordering.
inline std::pair<int, int> pair_labels(int p) {
    return {(p & 2) ? -1 : +1, (p & 1) ? -1 : +1};
}

// Propagator of vec(rho) -> vec(U rho U†) in row-major layout.
inline Eigen::Matrix4cd spin_pair_kernel(const Eigen::Matrix2cd& u) {
    Eigen::Matrix4cd k4;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            k4.block<2, 2>(2 * i, 2 * j) = u(i, j) * u.conjugate();
    return k4;
}

} // namespace detail

// Reduced density matrix after n_steps by summing all 4^n spin paths with
// their exact influence-functional weights. Exponential cost; refuse
// anything past max_steps so a typo cannot burn hours.
inline DensityMatrix brute_force_rho(const KernelTable& kernel,
                                     const std::vector<Eigen::Matrix2cd>& unitaries,
                                     const DensityMatrix& rho0,
                                     int n_steps,
                                     int max_steps = 10) {
    if (n_steps < 0) throw ConfigError("brute_force_rho: negative step count");
    if (n_steps > max_steps)
        throw ResourceError("brute_force_rho: " + std::to_string(n_steps) +
                            " steps would sum 4^" + std::to_string(n_steps) +
                            " paths; raise max_steps explicitly if you mean it");
    if (n_steps > kernel.size())
        throw ConfigError("brute_force_rho: kernel table shorter than step count");
    if (unitaries.size() < static_cast<std::size_t>(n_steps))
        throw ConfigError("brute_force_rho: not enough spin unitaries");
    if (n_steps == 0) return rho0;

    std::vector<Eigen::Matrix4cd> k4(static_cast<std::size_t>(n_steps));
    for (int i = 0; i < n_steps; ++i)
        k4[std::size_t(i)] = detail::spin_pair_kernel(unitaries[std::size_t(i)]);

    const Eigen::Vector4cd rho0_vec{rho0(0, 0), rho0(0, 1), rho0(1, 0), rho0(1, 1)};
    const std::uint64_t total = std::uint64_t(1) << (2 * n_steps);

    auto sum_range = [&](std::uint64_t begin, std::uint64_t end) {
        Eigen::Vector4cd acc = Eigen::Vector4cd::Zero();
        Trajectory traj(static_cast<std::size_t>(n_steps));
        for (std::uint64_t code = begin; code < end; ++code) {
            const int first = int(code & 3);
            cplx weight = rho0_vec(first);
            if (weight == 0.0) continue;
            int prev = first;
            for (int i = 0; i < n_steps; ++i) {
                const int p = int((code >> (2 * i)) & 3);
                traj[std::size_t(i)] = detail::pair_labels(p);
                if (i > 0) {
                    weight *= k4[std::size_t(i - 1)](p, prev);
                    prev = p;
                }
            }
            if (weight == 0.0) continue;
            weight *= exact_if(kernel, traj);
            acc += weight * k4[std::size_t(n_steps - 1)].col(prev);
        }
        return acc;
    };

    Eigen::Vector4cd out;
    if (detail::thread_budget() > 1 && total >= 1024) {
        // Fixed four-way split keeps the reduction order, and therefore the
        // rounding, independent of the thread budget.
        const std::uint64_t chunk = total / 4;
        std::vector<std::future<Eigen::Vector4cd>> parts;
        for (int c = 0; c < 4; ++c) {
            const std::uint64_t b = std::uint64_t(c) * chunk;
            const std::uint64_t e = (c == 3) ? total : b + chunk;
            parts.push_back(std::async(std::launch::async, sum_range, b, e));
        }
        out = Eigen::Vector4cd::Zero();
        for (auto& part : parts) out += part.get();
    } else {
        out = sum_range(0, total);
    }

    DensityMatrix rho;
    rho << out(0), out(1), out(2), out(3);
    return rho;
}

// With no spin Hamiltonian the populations freeze and each coherence just
// picks up the influence functional of the corresponding constant path.
inline DensityMatrix pure_dephasing_rho(const KernelTable& kernel,
                                        const DensityMatrix& rho0,
                                        int n_steps) {
    if (n_steps < 0) throw ConfigError("pure_dephasing_rho: negative step count");
    const Trajectory up_down(std::size_t(n_steps), {+1, -1});
    const cplx factor = exact_if(kernel, up_down);
    DensityMatrix rho = rho0;
    rho(0, 1) *= factor;
    rho(1, 0) *= std::conj(factor);
    return rho;
}

// State of the direct hierarchy integration: one amplitude per Fock basis
// state and spin pair, plus the current time.
struct HeomState {
    Eigen::MatrixXcd psi;
    double time{0.0};
};

// Step size that resolves both the spin stepping grid and the fastest
// auxiliary-mode decay.
inline double suggested_ode_step(const ExpSum& es, double delta_t) {
    double gamma_max = 0.0;
    for (const auto& mode : es.modes)
        gamma_max = std::max(gamma_max, mode.omega_cplx.real());
    double dt = delta_t / 10.0;
    if (gamma_max > 0.0) dt = std::min(dt, 0.1 / gamma_max);
    return dt;
}

namespace detail {

// Embed an operator acting on one forward/backward register pair into the
// full truncated basis. Matrix elements leading outside the basis are
// dropped, which is exactly the truncation the tensor network applies.
inline Eigen::MatrixXcd lift_pair_operator(const Eigen::MatrixXcd& op,
                                           int pair,
                                           const FockBasis& basis) {
    const int width = basis.per_mode_cap + 1;
    const int dim = basis.dimension();
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(dim, dim);
    std::vector<int> target;
    for (int col = 0; col < dim; ++col) {
        const auto& occ = basis.states[std::size_t(col)];
        const int local_col = occ[std::size_t(2 * pair)] * width +
                              occ[std::size_t(2 * pair + 1)];
        for (int nf = 0; nf < width; ++nf) {
            for (int nb = 0; nb < width; ++nb) {
                const cplx element = op(nf * width + nb, local_col);
                if (element == 0.0) continue;
                target = occ;
                target[std::size_t(2 * pair)] = nf;
                target[std::size_t(2 * pair + 1)] = nb;
                const int row = basis.index_of(target);
                if (row >= 0) out(row, col) += element;
            }
        }
    }
    return out;
}

// Coherent mixing of the four spin-pair columns: +i h on the forward
// branch, -i h* on the backward one, in pair index p = 2*fwd + bwd.
inline Eigen::Matrix4cd spin_pair_mixer(const Eigen::Matrix2cd& h) {
    Eigen::Matrix4cd s4 = Eigen::Matrix4cd::Zero();
    const cplx iu(0.0, 1.0);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c)
                for (int e = 0; e < 2; ++e) {
                    cplx value = 0.0;
                    if (b == e) value += iu * h(a, c);
                    if (a == c) value -= iu * std::conj(h(b, e));
                    if (value != 0.0) s4(2 * a + b, 2 * c + e) = value;
                }
    return s4;
}

} // namespace detail

// Integrate the auxiliary-mode hierarchy directly with fixed-step RK4 and
// return the reduced density matrix at total_time. The generator is the
// continuous-time limit of the stepped tensor network: the per-pair mode
// generators (transposed, because the network applies transposed blocks),
// the decay-rate counterterm on the difference coordinate, and the coherent
// spin term. An optional observer sees the state after every accepted step.
inline DensityMatrix heom_integrate(const ExpSum& es,
                                    const SpinModel& model,
                                    const DensityMatrix& rho0,
                                    double total_time,
                                    const FockBasis& basis,
                                    double dt_ode,
                                    const std::function<void(const HeomState&)>& observer = {}) {
    if (total_time < 0.0) throw ConfigError("heom_integrate: negative time span");
    if (dt_ode <= 0.0) throw ConfigError("heom_integrate: step size must be positive");
    if (2 * es.size() != basis.n_modes)
        throw ConfigError("heom_integrate: basis register count does not match decomposition");
    if ((rho0 - rho0.adjoint()).norm() > 1e-12 * std::max(1.0, rho0.norm()))
        throw std::invalid_argument("heom_integrate: initial state is not Hermitian");
    if (!model.hamiltonian)
        throw ConfigError("heom_integrate: spin model must provide a Hamiltonian");

    const int dim = basis.dimension();

    double rate = 0.0;
    for (const auto& mode : es.modes)
        rate += (mode.lambda_sq / mode.omega_cplx).real();

    // One boson generator per spin pair, fixed for the whole integration.
    std::vector<Eigen::MatrixXcd> boson(4);
    for (int p = 0; p < 4; ++p) {
        const auto [s, sbar] = detail::pair_labels(p);
        const double d = double(s - sbar);
        Eigen::MatrixXcd gen = Eigen::MatrixXcd::Zero(dim, dim);
        for (int k = 0; k < es.size(); ++k) {
            const auto& mode = es.modes[std::size_t(k)];
            const auto local = mode_generator(mode.lambda, mode.omega_cplx,
                                              s, sbar, basis.per_mode_cap);
            gen += detail::lift_pair_operator(local, k, basis).transpose();
        }
        gen -= (rate * d * d) * Eigen::MatrixXcd::Identity(dim, dim);
        boson[std::size_t(p)] = std::move(gen);
    }

    Eigen::MatrixXcd psi = Eigen::MatrixXcd::Zero(dim, 4);
    psi(0, 0) = rho0(0, 0);
    psi(0, 1) = rho0(0, 1);
    psi(0, 2) = rho0(1, 0);
    psi(0, 3) = rho0(1, 1);
    const double initial_norm = std::max(psi.norm(), 1e-300);

    auto derivative = [&](const Eigen::MatrixXcd& state, double t) {
        Eigen::MatrixXcd d(dim, 4);
        for (int p = 0; p < 4; ++p)
            d.col(p) = boson[std::size_t(p)] * state.col(p);
        d += state * detail::spin_pair_mixer(model.hamiltonian(t)).transpose();
        return d;
    };

    const long n_ode = std::max<long>(1, std::lround(std::ceil(total_time / dt_ode - 1e-12)));
    const double dt = total_time / double(n_ode);

    for (long step = 0; step < n_ode; ++step) {
        const double t = double(step) * dt;
        const Eigen::MatrixXcd k1 = derivative(psi, t);
        const Eigen::MatrixXcd k2 = derivative(psi + 0.5 * dt * k1, t + 0.5 * dt);
        const Eigen::MatrixXcd k3 = derivative(psi + 0.5 * dt * k2, t + 0.5 * dt);
        const Eigen::MatrixXcd k4 = derivative(psi + dt * k3, t + dt);
        psi += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!psi.allFinite() || psi.norm() > 1e6 * initial_norm)
            throw NumericalError("heom_integrate: integration blew up, reduce dt_ode");
        if (observer) observer(HeomState{psi, double(step + 1) * dt});
    }

    DensityMatrix rho;
    rho << psi(0, 0), psi(0, 1), psi(0, 2), psi(0, 3);
    return rho;
}

// Worst amplitude per occupation sector measured against the decay bound
// 4 nu^(n/2). Ratios above one mean amplitudes are escaping the envelope
// that justifies the truncation.
struct AmplitudeBoundReport {
    std::vector<double> worst_ratio_by_sector;
    double worst_ratio{0.0};
    int worst_sector{0};
    bool ok{true};
};

inline AmplitudeBoundReport amplitude_bound_check(const Eigen::MatrixXcd& psi,
                                                  const FockBasis& basis,
                                                  double nu_star) {
    if (!(nu_star > 0.0 && nu_star < 1.0))
        throw ConfigError("amplitude_bound_check: decay ratio must lie in (0, 1)");
    if (psi.rows() != basis.dimension())
        throw std::invalid_argument("amplitude_bound_check: state does not match basis");
    AmplitudeBoundReport report;
    report.worst_ratio_by_sector.assign(std::size_t(basis.global_cap) + 1, 0.0);
    const double root = std::sqrt(nu_star);
    for (Eigen::Index row = 0; row < psi.rows(); ++row) {
        const int n_tot = basis.total_occupation(static_cast<int>(row));
        const double bound = 4.0 * std::pow(root, double(n_tot));
        for (Eigen::Index col = 0; col < psi.cols(); ++col) {
            const double ratio = std::abs(psi(row, col)) / bound;
            auto& sector = report.worst_ratio_by_sector[std::size_t(n_tot)];
            sector = std::max(sector, ratio);
            if (ratio > report.worst_ratio) {
                report.worst_ratio = ratio;
                report.worst_sector = n_tot;
            }
        }
    }
    report.ok = report.worst_ratio <= 1.0;
    return report;
}

namespace detail {

// <m| exp(beta a†) |n> on a truncated register: beta^(m-n)/(m-n)! sqrt(m!/n!).
inline Eigen::MatrixXcd raising_exponential(cplx beta, int cap) {
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(cap + 1, cap + 1);
    for (int n = 0; n <= cap; ++n) {
        out(n, n) = 1.0;
        cplx term = 1.0;
        for (int m = n + 1; m <= cap; ++m) {
            term *= beta / double(m - n) * std::sqrt(double(m));
            out(m, n) = term;
        }
    }
    return out;
}

// <m| exp(beta a) |n>, the transpose pattern of the raising exponential.
inline Eigen::MatrixXcd lowering_exponential(cplx beta, int cap) {
    return raising_exponential(beta, cap).transpose();
}

// Pair-space matrix of exp(kappa a abar), both registers lowered together.
inline Eigen::MatrixXcd pair_lowering_exponential(cplx kappa, int cap) {
    const int width = cap + 1;
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(width * width, width * width);
    for (int n = 0; n <= cap; ++n) {
        for (int nb = 0; nb <= cap; ++nb) {
            out(n * width + nb, n * width + nb) = 1.0;
            cplx term = 1.0;
            for (int j = 1; j <= std::min(n, nb); ++j) {
                term *= kappa / double(j) * std::sqrt(double(n - j + 1)) *
                        std::sqrt(double(nb - j + 1));
                out((n - j) * width + (nb - j), n * width + nb) = term;
            }
        }
    }
    return out;
}

inline Eigen::MatrixXcd kron2(const Eigen::MatrixXcd& a, const Eigen::MatrixXcd& b) {
    Eigen::MatrixXcd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// Closure amplitude of the explicit Kraus-channel chain for one spin path.
// Each step applies, right to left: coherent lowering, coherent raising,
// the damping diagonal, and the thermal-like refill exp(kappa a abar).
inline cplx channel_chain_amplitude(double lambda, double gamma, double omega,
                                    double delta_t, const Trajectory& traj, int cap) {
    const int width = cap + 1;
    const int dim = width * width;
    const cplx omega_cplx(gamma, omega);
    const cplx decay = std::exp(-omega_cplx * delta_t);
    const double kappa = std::exp(2.0 * gamma * delta_t) - 1.0;

    const Eigen::MatrixXcd refill = pair_lowering_exponential(kappa, cap);
    Eigen::VectorXcd damping(dim);
    for (int n = 0; n <= cap; ++n)
        for (int nb = 0; nb <= cap; ++nb)
            damping(n * width + nb) =
                std::pow(decay, double(n)) * std::pow(std::conj(decay), double(nb));

    Eigen::VectorXcd state = Eigen::VectorXcd::Zero(dim);
    state(0) = 1.0;
    for (const auto& [s, sbar] : traj) {
        const Eigen::MatrixXcd lower =
            kron2(lowering_exponential(lambda * delta_t * s, cap),
                  lowering_exponential(lambda * delta_t * sbar, cap));
        const Eigen::MatrixXcd raise =
            kron2(raising_exponential(-lambda * delta_t * s, cap),
                  raising_exponential(-lambda * delta_t * sbar, cap));
        state = lower * state;
        state = raise * state;
        state = damping.asDiagonal() * state;
        state = refill * state;
    }

    // Closing with sum_n <n,n| equals <0,0| exp(a abar).
    cplx amplitude = 0.0;
    for (int n = 0; n <= cap; ++n) amplitude += state(n * width + n);
    return amplitude;
}

// Same chain through the generic normal-ordered operator builder, after the
// similarity transform by exp(a abar) that turns the trace closure into a
// vacuum projection.
inline cplx channel_mps_amplitude(double lambda, double gamma, double omega,
                                  double delta_t, const Trajectory& traj, int cap) {
    const cplx omega_cplx(gamma, omega);
    const cplx decay = std::exp(-omega_cplx * delta_t);
    const std::uint64_t budget = std::uint64_t(cap + 1) * std::uint64_t(cap + 1) + 1;
    const FockBasis basis = build_basis(2, cap, 2 * cap, budget);

    Eigen::VectorXcd state = Eigen::VectorXcd::Zero(basis.dimension());
    state(0) = 1.0;
    Eigen::VectorXcd a_diag(2), b_coef(2), c_coef(2);
    for (const auto& [s, sbar] : traj) {
        const double d = double(s - sbar);
        a_diag << decay, std::conj(decay);
        b_coef << -decay * lambda * delta_t * double(s),
                  -std::conj(decay) * lambda * delta_t * double(sbar);
        c_coef << lambda * delta_t * d, -lambda * delta_t * d;
        const cplx d_scalar = lambda * lambda * delta_t * delta_t * double(s) * double(sbar);
        state = generic_mps_operator(a_diag, b_coef, c_coef, d_scalar, basis) * state;
    }
    return state(0);
}

} // namespace detail

// Amplitude of one spin path computed two ways: as an explicit chain of
// Kraus-channel factor matrices closed by the trace, and through the
// normal-ordered operator form the tensor network uses after the closure
// is absorbed into a similarity transform. The two must agree up to Fock
// truncation; convergence of the truncated Kraus sums is monitored by
// recomputing four levels deeper.
inline std::pair<cplx, cplx> channel_equivalence(double lambda, double gamma, double omega,
                                                 double delta_t, int n_steps,
                                                 int cap, const Trajectory& traj) {
    if (!(lambda > 0.0)) throw ConfigError("channel_equivalence: coupling must be positive");
    if (!(gamma > 0.0)) throw ConfigError("channel_equivalence: decay rate must be positive");
    if (!(delta_t > 0.0)) throw ConfigError("channel_equivalence: step must be positive");
    if (cap < 1) throw ConfigError("channel_equivalence: cap must be at least 1");
    if (traj.size() != static_cast<std::size_t>(n_steps))
        throw std::invalid_argument("channel_equivalence: trajectory length mismatch");

    const cplx channel =
        detail::channel_chain_amplitude(lambda, gamma, omega, delta_t, traj, cap);
    const cplx deeper =
        detail::channel_chain_amplitude(lambda, gamma, omega, delta_t, traj, cap + 4);
    if (std::abs(channel - deeper) > 1e-9 * std::max(1.0, std::abs(channel)))
        std::cerr << "channel_equivalence: Kraus sum not converged at cap " << cap
                  << " (drift " << std::abs(channel - deeper) << ")\n";

    const cplx mps =
        detail::channel_mps_amplitude(lambda, gamma, omega, delta_t, traj, cap);
    return {channel, mps};
}

} // namespace ifmps
