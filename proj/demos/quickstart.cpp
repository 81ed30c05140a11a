// quickstart.cpp — minimal library walk-through: decompose the bath kernel,
// assemble the transfer tensor, evolve a driven spin, print the decay.

#include <cstdio>

#include "ifmps/bath_kernel.hpp"
#include "ifmps/dynamics.hpp"
#include "ifmps/expsum.hpp"
#include "ifmps/fock_mps.hpp"

int main() {
    using namespace ifmps;

    const BathSpec bath{0.1, 1.0};     // coupling alpha, cutoff omega_c
    const Discretization disc{0.1, 100}; // 100 steps of 0.1 -> T = 10

    ExpSum modes = build(bath, disc.total_time(), 1e-2);
    certify_l1(modes, bath, disc.total_time());
    std::printf("decomposition: K = %d modes, certified L1 = %.3e\n",
                modes.size(), modes.certified_l1);

    const FockBasis basis = build_basis(2 * modes.size(), 1, 1);
    const double eta_00 = eta_discrete(bath, disc.delta_t, 0).real();
    const IfTensor tensor = assemble_if_tensor(modes, disc, basis, eta_00);
    std::printf("transfer tensor: D = %d register states\n",
                basis.dimension());

    DensityMatrix up = DensityMatrix::Zero();
    up(0, 0) = 1.0;
    const auto rho = evolve(tensor, rabi_spin(1.0), up, disc.n_steps);

    std::printf("damped Rabi oscillation:\n");
    for (int i = 0; i <= disc.n_steps; i += 10) {
        const Observables obs = observables(rho[std::size_t(i)]);
        std::printf("  t = %4.1f  <sz> = %+.6f  purity = %.6f\n",
                    disc.delta_t * double(i), obs.sz, obs.purity);
    }
    return 0;
}
