"""Polynomial confining potentials: critical structure, domains of attraction,
and growth-condition audits.

Potentials are restricted to polynomials so that the growth exponents used by
the coupling pipeline are exact symbolic facts instead of numerical estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegenerateCriticalPointError, GrowthAssumptionError

__all__ = [
    "Potential",
    "DomainPartition",
    "AuditCheck",
    "AssumptionReport",
    "make_potential",
    "preset_names",
    "find_critical_points",
    "domains_of_attraction",
    "validate_assumptions",
]

CURVATURE_TOL = 1e-9
ROOT_TOL = 1e-12

# Preset coefficient lists, lowest degree first.
_PRESETS = {
    # (x^2 - 1)^2 / 4: wells at +-1, barrier 1/4 at 0
    "double_well": (0.25, 0.0, -0.5, 0.0, 0.25),
    # same wells, tilted so the left well is deeper
    "tilted_double_well": (0.25, 0.1, -0.5, 0.0, 0.25),
    # s*(x^6/6 - 5x^4/4 + 2x^2), s = 1/5: wells at 0, +-2, maxima at +-1.
    # The outer wells are deeper, so the two slow relaxation rates stay
    # well separated over the epsilon range used in the experiments.
    "triple_well": (0.0, 0.0, 2.0 / 5.0, 0.0, -1.0 / 4.0, 0.0, 1.0 / 30.0),
    # x^2/2: single well, spectral-validation runs only
    "quadratic": (0.0, 0.0, 0.5),
}


@dataclass(frozen=True)
class Potential:
    """A polynomial potential, coefficients in increasing degree order."""

    coeffs: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must be a nonempty 1-D sequence")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        nz = np.nonzero(self.coeffs)[0]
        return int(nz[-1]) if nz.size else 0

    def value(self, x):
        return np.polynomial.polynomial.polyval(x, self.coeffs)

    def grad(self, x):
        return np.polynomial.polynomial.polyval(x, self._dcoeffs)

    def hess(self, x):
        return np.polynomial.polynomial.polyval(x, self._ddcoeffs)

    @cached_property
    def _dcoeffs(self) -> np.ndarray:
        return np.polynomial.polynomial.polyder(self.coeffs)

    @cached_property
    def _ddcoeffs(self) -> np.ndarray:
        return np.polynomial.polynomial.polyder(self.coeffs, 2)

    @cached_property
    def _critical_points(self):
        return find_critical_points(self)

    @property
    def minima(self) -> np.ndarray:
        return self._critical_points[0]

    @property
    def maxima(self) -> np.ndarray:
        return self._critical_points[1]

    @property
    def n_wells(self) -> int:
        return len(self.minima)

    @cached_property
    def growth(self) -> "AssumptionReport":
        return validate_assumptions(self)

    def is_confining(self) -> bool:
        d = self.degree
        return d >= 2 and d % 2 == 0 and self.coeffs[d] > 0


@dataclass(frozen=True)
class DomainPartition:
    """Open intervals of attraction, one per local minimum, separated by the
    local maxima."""

    boundaries: np.ndarray  # the local maxima, sorted
    intervals: tuple        # (lo, hi) per minimum, +-inf at the extremes

    def locate(self, x) -> np.ndarray:
        """Index of the interval containing each point (boundaries fall in the
        interval to their right)."""
        return np.searchsorted(self.boundaries, np.asarray(x, dtype=float), side="right")


@dataclass(frozen=True)
class AuditCheck:
    name: str
    passed: bool
    constants: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AssumptionReport:
    degree: int
    a1: float
    a2: float
    exponent_gap_ok: bool   # a2 < 2*a1 - 2, i.e. degree > 2
    checks: tuple = ()
    note: str = "certificate constants fitted on |x| in [10, 1e4]"

    @property
    def passed(self) -> bool:
        return self.exponent_gap_ok and all(c.passed for c in self.checks)


def preset_names():
    return tuple(_PRESETS)


def make_potential(source) -> Potential:
    """Build a potential from a preset name or a coefficient list."""
    if isinstance(source, str):
        if source not in _PRESETS:
            raise ValueError(f"unknown potential preset {source!r}; "
                             f"known: {', '.join(_PRESETS)}")
        return Potential(np.array(_PRESETS[source]), name=source)
    return Potential(np.asarray(source, dtype=float))


def _cauchy_root_bound(coeffs: np.ndarray) -> float:
    """Upper bound on |roots| of the polynomial with the given coefficients."""
    nz = np.nonzero(coeffs)[0]
    lead = nz[-1]
    if lead == 0:
        return 1.0
    return 1.0 + float(np.max(np.abs(coeffs[:lead] / coeffs[lead])))


def _bisect_root(f, lo: float, hi: float, tol: float = ROOT_TOL) -> float:
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol:
            return mid
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (flo < 0) == (fm < 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_critical_points(potential: Potential, bracket=None, scan_points: int = 8192):
    """Locate and classify the simple roots of F'.

    Returns (minima, maxima) as sorted arrays. The bracket is widened until it
    provably contains every real root of F' (sign conditions at the ends plus
    the Cauchy bound). Roots are found by bisection on sign-change
    subintervals to absolute tolerance 1e-12 and classified by the sign of F''.

    Raises:
        DegenerateCriticalPointError: some root has |F''| < 1e-9.
        ValueError: no minima exist (non-confining input).
    """
    dcoeffs = potential._dcoeffs
    nz = np.nonzero(dcoeffs)[0]
    if nz.size == 0:
        raise ValueError("constant potential has no critical structure")
    if not potential.is_confining():
        raise ValueError("potential must have even degree >= 2 with positive "
                         "leading coefficient")

    bound = _cauchy_root_bound(dcoeffs)
    if bracket is None:
        lo, hi = -bound, bound
    else:
        lo, hi = float(bracket[0]), float(bracket[1])
    # widen until F' < 0 on the left and > 0 on the right (odd degree,
    # positive leading coefficient), and the Cauchy bound is covered
    lo, hi = min(lo, -bound), max(hi, bound)
    while potential.grad(lo) >= 0 or potential.grad(hi) <= 0:
        lo, hi = 2 * lo, 2 * hi

    xs = np.linspace(lo, hi, scan_points)
    gs = potential.grad(xs)
    roots = []
    for i in np.nonzero(np.sign(gs[:-1]) * np.sign(gs[1:]) < 0)[0]:
        roots.append(_bisect_root(potential.grad, xs[i], xs[i + 1]))
    for i in np.nonzero(gs == 0.0)[0]:
        roots.append(float(xs[i]))
    roots = sorted(set(roots))

    minima, maxima = [], []
    for r in roots:
        curv = potential.hess(r)
        if abs(curv) < CURVATURE_TOL:
            raise DegenerateCriticalPointError(
                f"critical point x={r:.12g} has |F''|={abs(curv):.3g} < {CURVATURE_TOL}")
        (minima if curv > 0 else maxima).append(r)
    if not minima:
        raise ValueError("no local minima found")
    return np.array(minima), np.array(maxima)


def domains_of_attraction(potential: Potential) -> DomainPartition:
    """Intervals of attraction of the gradient flow, one open interval per
    minimum; in 1-D these are exactly the intervals between adjacent maxima."""
    minima, maxima = potential.minima, potential.maxima
    edges = np.concatenate(([-np.inf], maxima, [np.inf]))
    intervals = tuple((float(edges[j]), float(edges[j + 1])) for j in range(len(minima)))
    for j, (lo, hi) in enumerate(intervals):
        if not (lo < minima[j] < hi):
            raise ValueError("minima and maxima do not interleave")
    return DomainPartition(boundaries=np.asarray(maxima, dtype=float), intervals=intervals)


def _fit_sandwich(values: np.ndarray, radii: np.ndarray, a_lo: float, a_hi: float):
    """Fit certificate constants for c1*r^a_lo - c2 <= values <= c3*r^a_hi + c4
    on the sampled radii (c2 = c4 = 0 suffices when the leading term dominates)."""
    lower = values / radii ** a_lo
    upper = values / radii ** a_hi
    c1 = float(np.min(lower))
    c3 = float(np.max(upper))
    return {"c1": c1, "c2": 0.0, "c3": c3, "c4": 0.0}, c1 > 0 and np.isfinite(c3)


def validate_assumptions(potential: Potential, eps_probe: float = 0.1,
                         n_radii: int = 400) -> AssumptionReport:
    """Audit the growth conditions needed by the coupling pipeline.

    The exponents a1 = a2 = 2*(degree-1) are exact for polynomials; the gap
    condition a2 < 2*a1 - 2 is therefore equivalent to degree > 2. The
    sandwich bounds for |F'|^2, (|F'| - 2F'')^2, |F| (exponent a/2 + 1), and
    the ground-state-form potential at eps_probe are audited numerically on a
    log-spaced radius grid |x| in [10, 1e4] by fitting certificate constants.
    """
    d = potential.degree
    if not potential.is_confining():
        return AssumptionReport(degree=d, a1=0.0, a2=0.0, exponent_gap_ok=False,
                                note="not confining: even degree >= 2 with positive "
                                     "leading coefficient required")
    a = 2.0 * (d - 1)
    gap_ok = d > 2

    r = np.logspace(1, 4, n_radii)
    x = np.concatenate((-r[::-1], r))
    rad = np.abs(x)
    g = potential.grad(x)
    h = potential.hess(x)
    f = potential.value(x)

    checks = []
    for name, vals, lo_e, hi_e in [
        ("grad_squared_sandwich", g ** 2, a, a),
        ("grad_minus_2hess_squared_sandwich", (np.abs(g) - 2 * h) ** 2, a, a),
        ("potential_sandwich", np.abs(f), a / 2 + 1, a / 2 + 1),
    ]:
        consts, ok = _fit_sandwich(vals, rad, lo_e, hi_e)
        checks.append(AuditCheck(name, ok, consts))

    v_eps = g ** 2 / (4 * eps_probe ** 2) - h / (2 * eps_probe)
    consts, ok = _fit_sandwich(v_eps, rad, a, a)
    consts["eps"] = eps_probe
    checks.append(AuditCheck("ground_state_potential_sandwich", ok, consts))

    return AssumptionReport(degree=d, a1=a, a2=a, exponent_gap_ok=gap_ok,
                            checks=tuple(checks))


def require_coupling_ready(potential: Potential, spectral_only: bool = False,
                           override: bool = False):
    """Gate used by the pipeline before building anything on a potential.

    Coupling runs require the growth conditions and at least two wells, with
    no override. Spectral-validation runs (spectral_only=True) may bypass a
    failing growth audit with an explicit override.
    """
    report = potential.growth
    if not report.passed:
        if spectral_only and override:
            return report
        hint = ("; pass the assumption override to run spectral validation anyway"
                if spectral_only else "")
        raise GrowthAssumptionError(
            f"potential degree {report.degree} violates the growth conditions "
            f"(even degree > 2 with positive leading coefficient required){hint}")
    if not spectral_only and potential.n_wells < 2:
        raise GrowthAssumptionError(
            "at least two local minima are required for coupling runs "
            "(single-well potentials are allowed for spectral validation only)")
    return report
