"""Coupled Monte Carlo paths and the tracking diagnostic.

Paths of the diffusion are integrated by Euler-Maruyama; the chain rides
along via per-pair unit-rate exponential clocks depleted by the integrated
jump rates. Every path owns its own counter-based stream, so the ensemble is
reproducible bit for bit regardless of chunking.

The tracking probability P(X(t) in D_j | Y(t) = j) measures how well the
chain state observes the diffusion's current well; its exact value is an
integral of the conditional law, and it grows as the noise shrinks.
"""

import numpy as np

from eigencoupler import (
    EnsembleConfig,
    auto_grid,
    build_coupling,
    build_generator,
    decompose,
    domains_of_attraction,
    make_potential,
    scaled_eigenvectors,
    simulate_ensemble,
    synth_generator,
    tracking_probability,
    tv_distance,
)
from eigencoupler.chain import ChainSpec

pot = make_potential("double_well")
part = domains_of_attraction(pot)

for eps in (0.15, 0.10, 0.07):
    grid = auto_grid(pot, eps, n=1000)
    gen = build_generator(pot, eps, grid)
    dec = decompose(gen, 1)
    lam = dec.eigenvalues[1:]
    Q = synth_generator(lam, "two_state", theta=0.5)
    vectors, scales, min_alpha = scaled_eigenvectors(Q, lam, dec.modes[1:], kappa=0.9)
    spec = ChainSpec(Q=Q, rates=lam.copy(), vectors=vectors, scales=scales,
                     p=np.array([0.5, 0.5]), min_alpha_bound=min_alpha, theta=0.5)
    model = build_coupling(dec, spec)

    cfg = EnsembleConfig(n_paths=3000, dt=2e-4, horizon=1.0, eps=eps, seed=71,
                         store_stride=500)
    records = simulate_ensemble(cfg, model, pot, spec)
    out = tracking_probability(records, part, 1.0, model)
    jumps = sum(len(r.jumps) for r in records)
    print(f"eps = {eps:g}: {len(records)} paths, {jumps} chain jumps, "
          f"gap = {lam[0]:.4f}")
    for j, (est, oracle_val) in out.items():
        print(f"  state {j}: oracle {oracle_val:.4f}, "
              f"MC {est.point:.4f} +- {est.se:.4f}")

    xT = np.array([r.x[-1] for r in records])
    yT = np.array([r.y[-1] for r in records])
    tv = max(tv_distance(xT[yT == j], model.cond[j], model.grid_nodes, bins=50)
             for j in (0, 1))
    print(f"  end-time conditional histogram TV = {tv:.3f} "
          f"(pure sampling noise at this ensemble size)")
    print()

print("the oracle tracking value rises toward (1 + kappa)/2 as eps shrinks;")
print("pushing it to one is a property of how the coupling family is chosen")
print("across noise levels, which this package reports but does not assert.")
