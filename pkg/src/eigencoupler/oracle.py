"""Exact finite-state verification by uniformization.

The joint generator is a sparse matrix on a few thousand product states, so
distributions can be evolved to near machine precision without ever forming a
dense exponential: with P = I + B/Lambda the series sum_k Poisson(Lambda*t; k)
* nu P^k is truncated at a prescribed tail. Long horizons are split into
sub-intervals with Lambda*tau <= 64 so the Poisson weights never underflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded

from .coupling import CouplingModel
from .errors import UnreachableTargetError
from .spectral import DiscreteGenerator

__all__ = [
    "DistributionVector",
    "evolve_distribution",
    "check_conditional_law",
    "check_y_marginal",
    "mean_exit_times",
    "ConditionalLawReport",
    "MarginalReport",
]

DEFAULT_TOL = 1e-12
_MAX_RATE_STEP = 64.0
_MASS_FLOOR = 1e-14
# each evolution step may shed up to the truncation tolerance; allow a short
# chain of evolutions before the mass check trips
_MASS_TOL = 1e-10


@dataclass(frozen=True)
class DistributionVector:
    """Nonnegative weights over product states with a time stamp."""

    weights: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0.0):
            raise ValueError("distribution has negative mass")
        if abs(w.sum() - 1.0) > _MASS_TOL:
            raise ValueError(f"distribution mass {w.sum()} is not 1")
        object.__setattr__(self, "weights", w)


def _uniformize(B: sp.spmatrix, nu: np.ndarray, t: float, tol: float) -> np.ndarray:
    rate = float(np.max(-B.diagonal()))
    if rate <= 0.0 or t == 0.0:
        return nu.copy()
    n_sub = max(1, int(np.ceil(rate * t / _MAX_RATE_STEP)))
    tau = t / n_sub
    a = rate * tau
    tol_sub = tol / n_sub
    # row-stochastic kernel of the uniformized chain
    P = (sp.eye(B.shape[0], format="csr") + B.multiply(1.0 / rate)).tocsr()
    out = nu
    for _ in range(n_sub):
        term = out
        weight = np.exp(-a)
        acc = weight * term
        total = weight
        k = 0
        while 1.0 - total > tol_sub:
            k += 1
            term = term @ P
            weight *= a / k
            acc = acc + weight * term
            total += weight
        out = acc
    return out


def evolve_distribution(B: sp.spmatrix, nu0, t: float,
                        tol: float = DEFAULT_TOL) -> DistributionVector:
    """Law at time t of the Markov process with generator B started from nu0.

    Mass is conserved up to the truncation tolerance (default 1e-12) per
    call; the truncated series is never renormalized. A zero generator
    returns the input unchanged.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    start = nu0.weights if isinstance(nu0, DistributionVector) else np.asarray(nu0, dtype=float)
    t0 = nu0.time if isinstance(nu0, DistributionVector) else 0.0
    out = _uniformize(sp.csr_matrix(B), start, t, tol)
    return DistributionVector(weights=out, time=t0 + t)


@dataclass(frozen=True)
class ConditionalLawReport:
    max_tv: float
    entries: tuple          # ((t, state, tv), ...)
    skipped: tuple          # ((t, state, mass), ...) states below the mass floor


def check_conditional_law(B: sp.spmatrix, model: CouplingModel, p, times,
                          tol: float = DEFAULT_TOL) -> ConditionalLawReport:
    """Total-variation error of the evolved conditional laws against the
    model's reference conditionals, maximized over times and chain states.

    Starts from the coupled initial law built from p. States whose marginal
    mass falls below 1e-14 at some time are skipped and noted.
    """
    n = model.n_nodes
    m1 = model.n_states
    nu = DistributionVector(model.initial_law_for(p).reshape(-1), 0.0)
    entries = []
    skipped = []
    for t in sorted(float(t) for t in times):
        nu = evolve_distribution(B, nu, t - nu.time, tol=tol)
        joint = nu.weights.reshape(m1, n)
        for j in range(m1):
            mass = joint[j].sum()
            if mass < _MASS_FLOOR:
                skipped.append((t, j, float(mass)))
                continue
            tv = 0.5 * float(np.abs(joint[j] / mass - model.cond[j]).sum())
            entries.append((t, j, tv))
    max_tv = max((e[2] for e in entries), default=0.0)
    return ConditionalLawReport(max_tv=max_tv, entries=tuple(entries),
                                skipped=tuple(skipped))


@dataclass(frozen=True)
class MarginalReport:
    max_l1: float
    entries: tuple          # ((t, l1), ...)


def check_y_marginal(B: sp.spmatrix, nu0, Q: np.ndarray, p, times,
                     tol: float = DEFAULT_TOL) -> MarginalReport:
    """l1 distance between the chain marginal of the evolved joint law and
    the bare chain law p exp(Qt), each side computed by its own
    uniformization."""
    Q = np.asarray(Q, dtype=float)
    m1 = Q.shape[0]
    nu = nu0 if isinstance(nu0, DistributionVector) else DistributionVector(
        np.asarray(nu0, dtype=float).reshape(-1), 0.0)
    n = nu.weights.size // m1
    p = np.asarray(p, dtype=float)
    entries = []
    pv = DistributionVector(p.copy(), 0.0)
    for t in sorted(float(t) for t in times):
        nu = evolve_distribution(B, nu, t - nu.time, tol=tol)
        pv = evolve_distribution(sp.csr_matrix(Q), pv, t - pv.time, tol=tol)
        marginal = nu.weights.reshape(m1, n).sum(axis=1)
        entries.append((t, float(np.abs(marginal - pv.weights).sum())))
    return MarginalReport(max_l1=max(e[1] for e in entries), entries=tuple(entries))


def _generator_matrix(generator):
    if isinstance(generator, DiscreteGenerator):
        diag, lower, upper = generator.tridiagonal()
        return sp.diags([lower, diag, upper], offsets=[-1, 0, 1], format="csc")
    if sp.issparse(generator):
        return generator.tocsc()
    return sp.csc_matrix(np.asarray(generator, dtype=float))


def mean_exit_times(generator, sources, targets) -> np.ndarray:
    """Expected hitting times of the target set from each source state,
    solved exactly from the generator restricted to the complement.

    generator may be a chain matrix, a DiscreteGenerator, or a sparse
    generator; sources and targets are state indices.

    Raises:
        UnreachableTargetError: the restricted system is singular or yields
            non-physical (negative or non-finite) times.
    """
    G = _generator_matrix(generator)
    n = G.shape[0]
    targets = np.asarray(targets, dtype=np.int64)
    sources = np.asarray(sources, dtype=np.int64)
    mask = np.ones(n, dtype=bool)
    mask[targets] = False
    if not mask.any():
        return np.zeros(len(sources))
    keep = np.nonzero(mask)[0]
    sub = G[np.ix_(keep, keep)]
    rhs = -np.ones(len(keep))
    try:
        # singular restrictions surface as non-finite solutions, checked below
        with np.errstate(divide="ignore", invalid="ignore"):
            if _is_tridiagonal(sub):
                u_keep = _solve_tridiagonal(sub, rhs)
            else:
                u_keep = sp.linalg.spsolve(sub.tocsc(), rhs)
    except (RuntimeError, np.linalg.LinAlgError) as exc:
        raise UnreachableTargetError(f"singular restricted generator: {exc}") from exc
    if not np.all(np.isfinite(u_keep)) or np.any(u_keep < 0):
        raise UnreachableTargetError(
            "restricted generator produced a non-physical hitting time; "
            "the target set is unreachable from part of the state space")
    u = np.zeros(n)
    u[keep] = u_keep
    return u[sources]


def _is_tridiagonal(m: sp.spmatrix) -> bool:
    coo = m.tocoo()
    return bool(np.all(np.abs(coo.row - coo.col) <= 1))


def _solve_tridiagonal(m: sp.spmatrix, rhs: np.ndarray) -> np.ndarray:
    n = m.shape[0]
    dense_bands = np.zeros((3, n))
    coo = m.tocoo()
    for r, c, v in zip(coo.row, coo.col, coo.data):
        dense_bands[1 + r - c, c] += v
    return solve_banded((1, 1), dense_bands, rhs)
