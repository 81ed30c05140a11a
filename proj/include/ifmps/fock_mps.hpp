// fock_mps.hpp — Truncated multi-mode Fock machinery: occupation basis,
// per-mode damped propagators, assembly of the four site matrices of the
// influence-functional MPS, and a generic normal-ordered operator builder
// used for cross-checks

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <future>
#include <iostream>
#include <limits>
#include <map>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "ifmps/bath_kernel.hpp"
#include "ifmps/detail/parallel.hpp"
#include "ifmps/errors.hpp"
#include "ifmps/expsum.hpp"

namespace ifmps {

// ---- occupation counting ----------------------------------------------------

inline constexpr std::uint64_t kCountSaturated =
    std::numeric_limits<std::uint64_t>::max();

// Number of occupation multi-indices over n_modes modes with per-mode and
// total caps, by dynamic programming; saturates instead of overflowing.
inline std::uint64_t count_states(int n_modes, int per_mode_cap,
                                  int global_cap) {
    if (n_modes < 0 || per_mode_cap < 0 || global_cap < 0) {
        throw ConfigError("count_states: caps and mode count must be >= 0");
    }
    std::vector<std::uint64_t> ways(global_cap + 1, 0);
    ways[0] = 1;
    for (int mode = 0; mode < n_modes; ++mode) {
        std::vector<std::uint64_t> next(global_cap + 1, 0);
        for (int total = 0; total <= global_cap; ++total) {
            unsigned __int128 acc = 0;
            for (int occ = 0; occ <= std::min(per_mode_cap, total); ++occ) {
                acc += ways[total - occ];
            }
            next[total] = acc > kCountSaturated
                              ? kCountSaturated
                              : static_cast<std::uint64_t>(acc);
        }
        ways = std::move(next);
    }
    unsigned __int128 sum = 0;
    for (std::uint64_t w : ways) sum += w;
    return sum > kCountSaturated ? kCountSaturated
                                 : static_cast<std::uint64_t>(sum);
}

// Exact binomial with saturation; arguments are small in practice.
inline std::uint64_t binomial_sat(int n, int k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 result = 1;
    for (int i = 1; i <= k; ++i) {
        result = result * static_cast<unsigned>(n - k + i) /
                 static_cast<unsigned>(i);
        if (result > kCountSaturated) return kCountSaturated;
    }
    return static_cast<std::uint64_t>(result);
}

// Sum_{n=1}^{n_star} C(n + K, K): the worst-case dimension estimate.
inline std::uint64_t dimension_estimate(int mode_pairs, int n_star) {
    unsigned __int128 sum = 0;
    for (int n = 1; n <= n_star; ++n) {
        const std::uint64_t term = binomial_sat(n + mode_pairs, mode_pairs);
        if (term == kCountSaturated) return kCountSaturated;
        sum += term;
        if (sum > kCountSaturated) return kCountSaturated;
    }
    return static_cast<std::uint64_t>(sum);
}

// ---- truncation planning ----------------------------------------------------

struct TruncationPlan {
    int n_star{1};                 // worst-case sufficient total-occupation cap
    int per_mode_cap{1};           // min(n_star, configured ceiling)
    double nu_star{0.0};           // max stiffness-to-coupling ratio
    std::uint64_t d_estimate{0};   // binomial-sum bound (vacuum excluded)
    std::uint64_t d_actual{0};     // enumerated cardinality (vacuum included)
};

// Worst-case cap from the amplitude-decay rate nu_star. The bound is often
// impractically large at desk scale; callers treat it as a report and pick
// their own caps, with accuracy measured against oracles rather than assumed.
inline TruncationPlan plan_truncation(
    const ExpSum& es, double omega_c, double total_time, double epsilon,
    int cap_ceiling = std::numeric_limits<int>::max()) {
    if (!(epsilon > 0.0) || !(total_time > 0.0) || !(omega_c > 0.0)) {
        throw ConfigError("plan_truncation: parameters must be > 0");
    }
    TruncationPlan plan;
    plan.nu_star = nu_values(es).nu_star;
    if (plan.nu_star >= 1.0) {
        throw ConfigError(
            "plan_truncation: nu_star >= 1, the decay bound needs smaller "
            "alpha*chi");
    }
    const double horizon = omega_c * total_time;
    const double excess = std::log(horizon * horizon / epsilon);
    if (plan.nu_star > 0.0 && excess > 0.0) {
        plan.n_star = static_cast<int>(
            std::ceil(excess / std::log(1.0 / plan.nu_star)));
    }
    plan.n_star = std::max(plan.n_star, 1);
    plan.per_mode_cap = std::min(plan.n_star, cap_ceiling);
    plan.d_estimate = dimension_estimate(es.size(), plan.n_star);
    plan.d_actual =
        count_states(2 * es.size(), plan.per_mode_cap, plan.n_star);
    return plan;
}

// ---- occupation basis --------------------------------------------------------

// Enumerated occupation multi-indices over 2K modes (the damped register a_k
// and its conjugate partner, interleaved as a_0, abar_0, a_1, abar_1, ...).
// Ordering is graded by total occupation, descending lexicographic within a
// grade, so linear indices are reproducible byte for byte; vacuum is index 0.
struct FockBasis {
    int n_modes{0};
    int per_mode_cap{0};
    int global_cap{0};
    std::vector<std::vector<int>> states;
    std::map<std::vector<int>, int> index;

    int dimension() const { return static_cast<int>(states.size()); }

    int index_of(const std::vector<int>& occ) const {
        const auto it = index.find(occ);
        return it == index.end() ? -1 : it->second;
    }

    int total_occupation(int i) const {
        int sum = 0;
        for (int n : states[i]) sum += n;
        return sum;
    }
};

namespace detail {

inline void enumerate_grade(int n_modes, int per_mode_cap, int remaining,
                            std::vector<int>& current,
                            std::vector<std::vector<int>>& out) {
    const int slot = static_cast<int>(current.size());
    if (slot == n_modes) {
        if (remaining == 0) out.push_back(current);
        return;
    }
    const int max_here = std::min(per_mode_cap, remaining);
    for (int occ = max_here; occ >= 0; --occ) {
        current.push_back(occ);
        enumerate_grade(n_modes, per_mode_cap, remaining - occ, current, out);
        current.pop_back();
    }
}

} // namespace detail

inline FockBasis build_basis(int n_modes, int per_mode_cap, int global_cap,
                             std::uint64_t max_dimension = 8192) {
    if (n_modes < 0 || per_mode_cap < 0 || global_cap < 0) {
        throw ConfigError("build_basis: caps and mode count must be >= 0");
    }
    const std::uint64_t would_be =
        count_states(n_modes, per_mode_cap, global_cap);
    if (would_be > max_dimension) {
        throw ResourceError("build_basis: dimension " +
                            std::to_string(would_be) +
                            " exceeds the budget of " +
                            std::to_string(max_dimension));
    }
    FockBasis basis;
    basis.n_modes = n_modes;
    basis.per_mode_cap = per_mode_cap;
    basis.global_cap = global_cap;
    basis.states.reserve(would_be);
    std::vector<int> scratch;
    for (int grade = 0; grade <= global_cap; ++grade) {
        detail::enumerate_grade(n_modes, per_mode_cap, grade, scratch,
                                basis.states);
    }
    for (int i = 0; i < basis.dimension(); ++i) {
        basis.index.emplace(basis.states[i], i);
    }
    return basis;
}

// ---- per-mode generators and propagators --------------------------------------

inline Eigen::MatrixXcd ladder_lower(int cap) {
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Zero(cap + 1, cap + 1);
    for (int n = 1; n <= cap; ++n) a(n - 1, n) = std::sqrt(double(n));
    return a;
}

// Generator of one damped mode pair, acting on the (a, abar) product space
// with per-register occupation <= cap:
//   -Omega (a† + d lambda/(sqrt2 Omega)) (a - sqrt2 s lambda/Omega)
//   -Omega*(abar† - d lambda*/(sqrt2 Omega*)) (abar - sqrt2 sbar lambda*/Omega*)
// with d = s - sbar. Index layout: row = n*(cap+1) + nbar.
inline Eigen::MatrixXcd mode_generator(cplx lambda, cplx omega_cplx, int s,
                                       int s_bar, int cap) {
    if (cap < 0) throw ConfigError("mode_generator: cap must be >= 0");
    if ((s != 1 && s != -1) || (s_bar != 1 && s_bar != -1)) {
        throw std::invalid_argument("mode_generator: spin labels must be +-1");
    }
    const double d = s - s_bar;
    const double sqrt2 = std::sqrt(2.0);
    const cplx lam_sq = lambda * lambda;
    const cplx lam_sq_c = std::conj(lam_sq);
    const cplx omega_c_ = std::conj(omega_cplx);
    const cplx lambda_c = std::conj(lambda);

    const Eigen::MatrixXcd a = ladder_lower(cap);
    const Eigen::MatrixXcd at = a.adjoint();
    const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(cap + 1, cap + 1);

    // Expanded affine form: -Omega n + beta a† + gamma a + delta.
    const Eigen::MatrixXcd fwd = -omega_cplx * (at * a) +
                                 (sqrt2 * double(s) * lambda) * at +
                                 (-d / sqrt2 * lambda) * a +
                                 (d * double(s) * lam_sq / omega_cplx) * id;
    const Eigen::MatrixXcd bwd = -omega_c_ * (at * a) +
                                 (sqrt2 * double(s_bar) * lambda_c) * at +
                                 (d / sqrt2 * lambda_c) * a +
                                 (-d * double(s_bar) * lam_sq_c / omega_c_) * id;
    return Eigen::kroneckerProduct(fwd, id).eval() +
           Eigen::kroneckerProduct(id, bwd).eval();
}

inline Eigen::MatrixXcd mode_propagator(const Eigen::MatrixXcd& generator,
                                        double delta_t) {
    if (!(delta_t > 0.0)) throw ConfigError("mode_propagator: delta_t <= 0");
    Eigen::MatrixXcd propagator = (generator * delta_t).exp();
    if (!propagator.allFinite()) {
        throw NumericalError("mode_propagator: non-finite entries in expm");
    }
    return propagator;
}

// ---- scalar shift and tensor assembly ------------------------------------------

// Lambda = eta_00 + sum_k Re(lambda_k^2 / Omega_k) * delta_t. Positivity is a
// claim to verify, not to enforce: warn, never throw.
inline double lambda_shift(const ExpSum& es, double eta_00, double delta_t) {
    double sum = 0.0;
    for (const ExpSumMode& mode : es.modes) {
        sum += (mode.lambda_sq / mode.omega_cplx).real();
    }
    const double result = eta_00 + sum * delta_t;
    if (result <= 0.0 && !es.modes.empty()) {
        std::cerr << "warning: lambda_shift = " << result
                  << " is not positive\n";
    }
    return result;
}

inline int spin_label_index(int s) { return s == 1 ? 0 : 1; }

// Block order: (+,+), (+,-), (-,+), (-,-).
inline int pair_index(int s, int s_bar) {
    if ((s != 1 && s != -1) || (s_bar != 1 && s_bar != -1)) {
        throw std::invalid_argument("pair_index: spin labels must be +-1");
    }
    return 2 * spin_label_index(s) + spin_label_index(s_bar);
}

struct IfTensor {
    std::array<Eigen::MatrixXcd, 4> m; // indexed by pair_index(s, sbar)
    double lambda_shift{0.0};
    FockBasis basis;
    double delta_t{0.0};

    const Eigen::MatrixXcd& block(int s, int s_bar) const {
        return m[pair_index(s, s_bar)];
    }
};

namespace detail {

inline Eigen::MatrixXcd assemble_block(
    const std::vector<Eigen::MatrixXcd>& pair_propagators,
    const FockBasis& basis, double prefactor) {
    const int dim = basis.dimension();
    const int pairs = basis.n_modes / 2;
    const int width = basis.per_mode_cap + 1;
    Eigen::MatrixXcd block(dim, dim);
    for (int row = 0; row < dim; ++row) {
        const std::vector<int>& occ_row = basis.states[row];
        for (int col = 0; col < dim; ++col) {
            const std::vector<int>& occ_col = basis.states[col];
            cplx product = prefactor;
            for (int k = 0; k < pairs && product != cplx(0.0, 0.0); ++k) {
                product *= pair_propagators[k](
                    occ_row[2 * k] * width + occ_row[2 * k + 1],
                    occ_col[2 * k] * width + occ_col[2 * k + 1]);
            }
            block(row, col) = product;
        }
    }
    return block;
}

} // namespace detail

// The four site matrices e^{-Lambda (s-sbar)^2} prod_k e^{M_k delta_t},
// projected onto the global-cap basis. Blocks assemble in parallel.
inline IfTensor assemble_if_tensor(const ExpSum& es, const Discretization& disc,
                                   const FockBasis& basis, double eta_00) {
    disc.validate();
    if (basis.n_modes != 2 * es.size()) {
        throw std::invalid_argument(
            "assemble_if_tensor: basis has " + std::to_string(basis.n_modes) +
            " modes, decomposition needs " + std::to_string(2 * es.size()));
    }
    IfTensor tensor;
    tensor.basis = basis;
    tensor.delta_t = disc.delta_t;
    tensor.lambda_shift = lambda_shift(es, eta_00, disc.delta_t);

    const std::array<std::pair<int, int>, 4> labels{
        {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}};
    auto build_block = [&](int which) {
        const auto [s, s_bar] = labels[which];
        std::vector<Eigen::MatrixXcd> pair_propagators;
        pair_propagators.reserve(es.size());
        for (const ExpSumMode& mode : es.modes) {
            pair_propagators.push_back(mode_propagator(
                mode_generator(mode.lambda, mode.omega_cplx, s, s_bar,
                               basis.per_mode_cap),
                disc.delta_t));
        }
        const double d = s - s_bar;
        const double prefactor = std::exp(-tensor.lambda_shift * d * d);
        return detail::assemble_block(pair_propagators, basis, prefactor);
    };

    if (detail::thread_budget() > 1) {
        std::array<std::future<Eigen::MatrixXcd>, 3> futures;
        for (int which = 1; which < 4; ++which) {
            futures[which - 1] =
                std::async(std::launch::async, build_block, which);
        }
        tensor.m[0] = build_block(0);
        for (int which = 1; which < 4; ++which) {
            tensor.m[which] = futures[which - 1].get();
        }
    } else {
        for (int which = 0; which < 4; ++which) {
            tensor.m[which] = build_block(which);
        }
    }
    return tensor;
}

// ---- generic normal-ordered operator --------------------------------------------

namespace detail {

inline cplx ipow(cplx base, int exponent) {
    cplx result(1.0, 0.0);
    for (int i = 0; i < exponent; ++i) result *= base;
    return result;
}

// W = (1 - e^{-Omega dt})/Omega, with a series fallback where the direct
// form would cancel catastrophically (slow modes have |Omega dt| ~ 1e-6).
inline cplx w_factor(cplx omega, double delta_t) {
    const cplx x = omega * delta_t;
    if (std::abs(x) < 1e-3) {
        return delta_t *
               (1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0);
    }
    return (1.0 - std::exp(-x)) / omega;
}

// <m| e^{B a†} A^{n̂} e^{C a} |n> on a single mode. Intermediate occupations
// never exceed max(m, n), so the truncated matrix equals the projection of
// the exact infinite-space operator.
inline cplx normal_ordered_element(int m, int n, cplx a_diag, cplx b, cplx c,
                                   const std::vector<double>& factorial) {
    cplx sum(0.0, 0.0);
    const double root = std::sqrt(factorial[m] * factorial[n]);
    for (int j = std::max(0, n - m); j <= n; ++j) {
        const cplx term = ipow(c, j) / factorial[j] * ipow(a_diag, n - j) *
                          ipow(b, m - n + j) / factorial[m - n + j] * root /
                          factorial[n - j];
        sum += term;
    }
    return sum;
}

} // namespace detail

// Dense matrix of e^{D} e^{a†·B} e^{a†·log(A)·a} e^{C·a} on the truncated
// basis; element-exact (no series truncation beyond the basis projection).
inline Eigen::MatrixXcd generic_mps_operator(const Eigen::VectorXcd& a_diag,
                                             const Eigen::VectorXcd& b,
                                             const Eigen::VectorXcd& c,
                                             cplx d_scalar,
                                             const FockBasis& basis) {
    const int modes = basis.n_modes;
    if (a_diag.size() != modes || b.size() != modes || c.size() != modes) {
        throw std::invalid_argument(
            "generic_mps_operator: parameter length != mode count");
    }
    for (int k = 0; k < modes; ++k) {
        if (std::abs(a_diag[k]) > 1.0 + 1e-12) {
            throw std::invalid_argument(
                "generic_mps_operator: |A| > 1 breaks the damped-mode "
                "assumption");
        }
    }
    std::vector<double> factorial(basis.per_mode_cap + 2, 1.0);
    for (size_t i = 1; i < factorial.size(); ++i) {
        factorial[i] = factorial[i - 1] * double(i);
    }
    const int dim = basis.dimension();
    const cplx prefactor = std::exp(d_scalar);
    Eigen::MatrixXcd out(dim, dim);
    for (int row = 0; row < dim; ++row) {
        for (int col = 0; col < dim; ++col) {
            cplx value = prefactor;
            for (int k = 0; k < modes && value != cplx(0.0, 0.0); ++k) {
                value *= detail::normal_ordered_element(
                    basis.states[row][k], basis.states[col][k], a_diag[k],
                    b[k], c[k], factorial);
            }
            out(row, col) = value;
        }
    }
    return out;
}

// ---- contraction and the kernel the tensor realizes ------------------------------

using Trajectory = std::vector<std::pair<int, int>>; // (s_i, sbar_i), i = 1..N

// Vacuum-to-vacuum element of the ordered product, site 1 leftmost.
inline cplx contract_amplitude(const IfTensor& tensor,
                               const Trajectory& trajectory) {
    if (trajectory.empty()) {
        throw std::invalid_argument("contract_amplitude: empty trajectory");
    }
    const int dim = tensor.basis.dimension();
    Eigen::RowVectorXcd state = Eigen::RowVectorXcd::Zero(dim);
    state(0) = cplx(1.0, 0.0);
    for (const auto& [s, s_bar] : trajectory) {
        state = state * tensor.block(s, s_bar);
    }
    return state(0);
}

// The discrete kernel the assembled tensor realizes exactly, before any Fock
// truncation. With W = (1 - e^{-Omega dt})/Omega:
//   induced eta_m     = sum_k lambda_k^2 W_k^2 e^{-Omega_k (m-1) dt},  m >= 1
//   induced eta_0     = Lambda - sum_k lambda_k^2 W_k / Omega_k
// The m >= 1 line equals the double time-step average of the exponential-sum
// kernel, mirroring the relation between the exact discrete and continuum
// kernels. Contractions at large caps match exact-kernel evaluations of this
// table to machine precision, which is what isolates pure truncation error.
inline KernelTable induced_kernel_table(const ExpSum& es, double lambda_shift_value,
                                        double delta_t, int n_steps) {
    if (!(delta_t > 0.0) || n_steps <= 0) {
        throw ConfigError("induced_kernel_table: need delta_t > 0, n_steps > 0");
    }
    KernelTable table;
    table.delta_t = delta_t;
    table.eta.resize(n_steps, cplx(0.0, 0.0));
    cplx same_site(lambda_shift_value, 0.0);
    for (const ExpSumMode& mode : es.modes) {
        const cplx decay = std::exp(-mode.omega_cplx * delta_t);
        const cplx w = detail::w_factor(mode.omega_cplx, delta_t);
        same_site -= mode.lambda_sq * w / mode.omega_cplx;
        cplx envelope = mode.lambda_sq * w * w; // value at m = 1
        for (int m = 1; m < n_steps; ++m) {
            table.eta[m] += envelope;
            envelope *= decay;
        }
    }
    table.eta[0] = same_site;
    return table;
}

} // namespace ifmps
