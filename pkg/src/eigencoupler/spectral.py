"""Discretization of the diffusion generator eps*f'' - F'*f' on a truncated
grid and computation of its low-lying spectrum by two independent routes.

Route 1 (authoritative for the coupling): a birth-death generator with
exponential-of-midpoint-difference rates, reversible with respect to the
discrete Gibbs weights at any spacing. Route 2 (cross-check): the standard
three-point discretization of the similarity-transformed operator
-d^2/dx^2 + V with V = |F'|^2/(4 eps^2) - F''/(2 eps) and Dirichlet ends.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import GridError, TruncationError
from .potential import Potential
from .tridiag import eigensolve_tridiagonal

__all__ = [
    "Grid",
    "DiscreteGenerator",
    "SpectralDecomposition",
    "auto_grid",
    "build_generator",
    "build_schrodinger",
    "decompose",
    "two_route_decomposition",
    "verify_eigen_identity",
    "decomposition_to_csv",
    "eigenvalues_to_json",
]

TAIL_BOUND = 1e-12
ZERO_EIG_REL_TOL = 1e-8


@dataclass(frozen=True)
class Grid:
    """Uniform grid of n nodes on [-L, L]."""

    L: float
    n: int

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.n)

    def validate(self, potential: Potential, eps: float):
        """Truncation-safety invariants required by the pipeline."""
        if self.n < 3:
            raise GridError("grid needs at least 3 nodes")
        f = potential.value(self.nodes)
        fmin = float(np.min(f))
        tail = np.exp(-(potential.value(np.array([-self.L, self.L])) - fmin) / eps)
        if np.max(tail) > TAIL_BOUND:
            raise GridError(
                f"stationary tail {np.max(tail):.2e} at the boundary exceeds "
                f"{TAIL_BOUND:.0e}; enlarge L")
        crits = np.concatenate((potential.minima, potential.maxima))
        if crits.size and (np.min(crits) <= -self.L or np.max(crits) >= self.L):
            raise GridError("all critical points must lie strictly inside (-L, L)")
        return self


def auto_grid(potential: Potential, eps: float, n: int = 2000, L=None) -> Grid:
    """Grid with the smallest half-width satisfying the tail invariant (or a
    validated explicit L)."""
    if L is not None:
        return Grid(float(L), int(n)).validate(potential, eps)
    crits = np.concatenate((potential.minima, potential.maxima))
    lo = float(np.max(np.abs(crits))) if crits.size else 0.0
    fmin = float(np.min(potential.value(np.linspace(-lo - 1, lo + 1, 1001))))
    target = -eps * np.log(TAIL_BOUND)  # required barrier F(+-L) - Fmin

    def tail_ok(L):
        return (potential.value(-L) - fmin >= target and
                potential.value(L) - fmin >= target)

    hi = lo + 1.0
    while not tail_ok(hi):
        hi *= 1.5
    lo_search = lo
    for _ in range(60):
        mid = 0.5 * (lo_search + hi)
        if tail_ok(mid):
            hi = mid
        else:
            lo_search = mid
    # small inflation so the validated invariant holds strictly
    return Grid(hi * (1.0 + 1e-3) + 1e-9, int(n)).validate(potential, eps)


@dataclass(frozen=True)
class DiscreteGenerator:
    """Reversible birth-death generator on the grid.

    birth[i] is the i -> i+1 rate, death[i] the i -> i-1 rate (both 1/time,
    reflecting ends: birth[n-1] = death[0] = 0). weights is the stationary
    probability vector, in detailed balance with the rates by construction.
    """

    grid: Grid
    eps: float
    birth: np.ndarray
    death: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.grid.n

    def tridiagonal(self):
        """(diag, lower, upper) of the generator acting on functions."""
        return -(self.birth + self.death), self.death[1:], self.birth[:-1]

    def apply(self, f):
        """Generator applied to a function vector (batched columns allowed)."""
        f = np.asarray(f)
        diag, lower, upper = self.tridiagonal()
        out = (diag * f.T).T.astype(float)
        out[:-1] += (upper * f[1:].T).T
        out[1:] += (lower * f[:-1].T).T
        return out

    def symmetrized(self):
        """(diag, offdiag) of D^{1/2} (-A) D^{-1/2}, D = diag(weights).

        With the exponential-of-midpoint-difference rates the off-diagonal is
        exactly -eps/h^2 at every edge, which keeps sqrt(weights) an exact
        null vector of the symmetrized matrix.
        """
        diag = self.birth + self.death
        offdiag = np.full(self.n - 1, -self.eps / self.grid.h ** 2)
        return diag, offdiag

    def max_exit_rate(self) -> float:
        return float(np.max(self.birth + self.death))


def build_generator(potential: Potential, eps: float, grid: Grid) -> DiscreteGenerator:
    """Discrete generator with rates (eps/h^2) * exp(-+dF/(2 eps)).

    Reversible w.r.t. weights proportional to exp(-F/eps) at any h, and
    consistent with eps*f'' - F'*f' to O(h^2). Exponents are taken relative
    to min F to avoid overflow.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if grid.n < 2:
        raise GridError("need at least 2 nodes")
    x = grid.nodes
    f = potential.value(x)
    scale = eps / grid.h ** 2
    birth = np.zeros(grid.n)
    death = np.zeros(grid.n)
    birth[:-1] = scale * np.exp(-(f[1:] - f[:-1]) / (2 * eps))
    death[1:] = scale * np.exp(-(f[:-1] - f[1:]) / (2 * eps))
    # accumulate the Gibbs weights from the deepest node via the rate ratios:
    # detailed balance then holds to a couple of ulp at any tail depth,
    # whereas exp(-(F - Fmin)/eps) alone loses (F - Fmin)/eps ulps
    i0 = int(np.argmin(f))
    w = np.empty(grid.n)
    w[i0] = 1.0
    if i0 + 1 < grid.n:
        w[i0 + 1:] = np.cumprod(birth[i0:-1] / death[i0 + 1:])
    if i0 > 0:
        w[:i0] = np.cumprod(death[i0:0:-1] / birth[i0 - 1::-1])[::-1]
    w /= w.sum()
    return DiscreteGenerator(grid=grid, eps=eps, birth=birth, death=death, weights=w)


def build_schrodinger(potential: Potential, eps: float, grid: Grid):
    """Dirichlet three-point discretization of -d^2/dx^2 + V on the interior
    nodes, V = |F'|^2/(4 eps^2) - F''/(2 eps).

    Returns (diag, offdiag); eigenvalues scale as lambda / eps relative to the
    generator route.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = grid.nodes[1:-1]
    h = grid.h
    v = potential.grad(x) ** 2 / (4 * eps ** 2) - potential.hess(x) / (2 * eps)
    diag = 2.0 / h ** 2 + v
    offdiag = np.full(len(x) - 1, -1.0 / h ** 2)
    return diag, offdiag


def schrodinger_eigenvalues(potential: Potential, eps: float, grid: Grid, k: int):
    diag, offdiag = build_schrodinger(potential, eps, grid)
    values, _ = eigensolve_tridiagonal(diag, offdiag, k)
    return values


@dataclass(frozen=True)
class SpectralDecomposition:
    """Low-lying spectrum of the discrete generator.

    eigenvalues are 0 = lambda_0 < lambda_1 <= ... (1/time). modes has one
    eigenfunction per row, unit norm in L^2(weights), with modes[0] identically
    one. signed_weights[k] = modes[k] * weights sums to zero for k >= 1.
    schrodinger_eigenvalues holds the route-2 cross-check values (lambda/eps
    units) when the two-route constructor was used.
    """

    eigenvalues: np.ndarray
    modes: np.ndarray
    weights: np.ndarray
    grid: Grid
    eps: float
    schrodinger_eigenvalues: np.ndarray | None = None

    @property
    def m(self) -> int:
        return len(self.eigenvalues) - 1

    @property
    def signed_weights(self) -> np.ndarray:
        return self.modes * self.weights

    def mode_sup_norms(self) -> np.ndarray:
        return np.max(np.abs(self.modes), axis=1)


def _leftmost_weight_peak(w: np.ndarray) -> int:
    """Node of the leftmost local maximum of the stationary weights, i.e. the
    leftmost potential minimum. Tie-breaking by argmax alone would let
    floating-point rounding pick a side between symmetric wells."""
    grad_up = np.concatenate(([True], w[1:] > w[:-1]))
    grad_dn = np.concatenate((w[:-1] >= w[1:], [True]))
    peaks = np.nonzero(grad_up & grad_dn)[0]
    return int(peaks[0]) if peaks.size else int(np.argmax(w))


def decompose(gen: DiscreteGenerator, m: int, sign_node: int | None = None) -> SpectralDecomposition:
    """The m+1 smallest eigenpairs of the generator.

    Symmetrizes by similarity with sqrt(weights), eigensolves, and maps back.
    The zero mode is pinned exactly: sqrt(weights) is an exact null vector of
    the symmetrized matrix, so every excited eigenvector is explicitly
    projected against it, mode 0 is stored as the constant one, and
    eigenvalue 0 is stored exactly after the consistency check.

    Sign convention: modes[k] is positive at sign_node (default: the node of
    the leftmost potential minimum, located as the leftmost peak of the
    weights); if within 1e-12 of zero there, the first nonzero entry from the
    left is positive.

    Raises:
        TruncationError: the computed smallest eigenvalue deviates from zero
            by more than 1e-8 * lambda_1.
    """
    n = gen.n
    if m + 1 > n:
        raise ValueError("m+1 eigenpairs requested from an n-state generator")
    diag, offdiag = gen.symmetrized()
    values, vectors = eigensolve_tridiagonal(diag, offdiag, m + 1)

    if m >= 1 and abs(values[0]) > ZERO_EIG_REL_TOL * values[1]:
        raise TruncationError(
            f"smallest eigenvalue {values[0]:.3e} is not numerically zero "
            f"relative to lambda_1 = {values[1]:.3e}; grid too coarse or "
            "truncation too tight")

    u = np.sqrt(gen.weights)
    u /= np.linalg.norm(u)
    modes = np.empty((m + 1, n))
    modes[0] = 1.0
    sqrt_w = np.sqrt(gen.weights)
    for k in range(1, m + 1):
        v = vectors[:, k]
        v = v - (u @ v) * u          # exact deflation of the known null vector
        v /= np.linalg.norm(v)
        modes[k] = v / sqrt_w
    eigenvalues = values.copy()
    eigenvalues[0] = 0.0

    node = _leftmost_weight_peak(gen.weights) if sign_node is None else int(sign_node)
    for k in range(1, m + 1):
        ref = modes[k, node]
        if abs(ref) <= 1e-12:
            nz = np.nonzero(np.abs(modes[k]) > 1e-12)[0]
            ref = modes[k, nz[0]] if nz.size else 1.0
        if ref < 0:
            modes[k] = -modes[k]
    return SpectralDecomposition(eigenvalues=eigenvalues, modes=modes,
                                 weights=gen.weights, grid=gen.grid, eps=gen.eps)


def two_route_decomposition(potential: Potential, eps: float, grid: Grid, m: int,
                            sign_node: int | None = None) -> SpectralDecomposition:
    """Generator-route decomposition with the independent Schrodinger route
    attached as cross-check values (no gating; tolerances are resolution
    dependent and belong to the caller)."""
    gen = build_generator(potential, eps, grid)
    if sign_node is None and potential.n_wells >= 1:
        sign_node = int(np.argmin(np.abs(grid.nodes - potential.minima[0])))
    dec = decompose(gen, m, sign_node=sign_node)
    hat = schrodinger_eigenvalues(potential, eps, grid, m + 1)
    return SpectralDecomposition(eigenvalues=dec.eigenvalues, modes=dec.modes,
                                 weights=dec.weights, grid=dec.grid, eps=dec.eps,
                                 schrodinger_eigenvalues=hat)


def verify_eigen_identity(dec: SpectralDecomposition, gen: DiscreteGenerator,
                          trials: int = 100, seed: int = 0) -> float:
    """Max residual of sum((A f) * signed_weights[k]) = -lambda_k * sum(f *
    signed_weights[k]) over random test vectors f, normalized by ||f||_inf."""
    rng = np.random.default_rng(seed)
    sw = dec.signed_weights
    worst = 0.0
    for _ in range(trials):
        f = rng.standard_normal(gen.n)
        af = gen.apply(f)
        lhs = sw @ af
        rhs = -dec.eigenvalues * (sw @ f)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))) / np.max(np.abs(f)))
    return worst


def decomposition_to_csv(dec: SpectralDecomposition, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "weight"] + [f"mode_{k}" for k in range(dec.m + 1)])
        for i, x in enumerate(dec.grid.nodes):
            writer.writerow([f"{x:.12g}", f"{dec.weights[i]:.12g}"]
                            + [f"{dec.modes[k, i]:.12g}" for k in range(dec.m + 1)])


def eigenvalues_to_json(dec: SpectralDecomposition, path=None):
    payload = {
        "eps": dec.eps,
        "grid": {"L": dec.grid.L, "n": dec.grid.n},
        "eigenvalues": dec.eigenvalues.tolist(),
    }
    if dec.schrodinger_eigenvalues is not None:
        payload["schrodinger_eigenvalues"] = dec.schrodinger_eigenvalues.tolist()
        payload["scaled_schrodinger_eigenvalues"] = (
            (dec.eps * dec.schrodinger_eigenvalues).tolist())
    if path is None:
        return payload
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
    return payload
