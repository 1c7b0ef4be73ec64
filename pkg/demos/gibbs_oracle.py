"""Sample the Gibbs measure and compare with the transfer-kernel oracle.

Run with ``python3 demos/gibbs_oracle.py``.
"""

from kgadiabatic import SamplerConfig, TransferKernel, ModelParams, mcmc_samples
from kgadiabatic.estimators import batch_mean
from kgadiabatic.gibbs import quadrature_expectation

params = ModelParams(N=6, eps=0.1, beta=5.0)
kernel = TransferKernel(params)
samples = mcmc_samples(params, SamplerConfig(sweeps=20_000, burn_in=2_000, n_chains=4, seed=1))
print(f"acceptance rate {samples.acceptance:.3f}, proposal sigma {samples.proposal_sigma:.3f}")

q = samples.flat_q
print("\nmoment           MCMC                 transfer     z")
for label, factors in [("<q3^2>", {3: 2}), ("<q3^4>", {3: 4}), ("<q1^6>", {1: 6}),
                       ("<q2 q3>", {2: 1, 3: 1}), ("<q2^2 q4^2>", {2: 2, 4: 2})]:
    x = 1.0
    for site, k in factors.items():
        x = x * q[:, site - 1] ** k
    m = batch_mean(x)
    exact = kernel.expectation(factors)
    print(f"{label:12s} {m.value: .6f} +- {m.std_error:.6f}   {exact: .6f}   {m.z_score(exact): .2f}")

# the transfer kernel itself is checked against direct quadrature on 3 sites
small = params.with_(N=3)
k3 = TransferKernel(small)
print(f"\nN=3 <q1 q2>: transfer {k3.expectation({1: 1, 2: 1}):.12f}, "
      f"quadrature {quadrature_expectation(small, {1: 1, 2: 1}):.12f}")
