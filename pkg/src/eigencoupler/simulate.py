"""Monte Carlo engine: Euler-Maruyama paths of the diffusion and the
time-change construction of the coupled chain, with reproducible per-path
counter-based random streams.

Every path owns a Philox stream keyed by (master seed, path index) and
consumes draws in a fixed order: initial-condition uniforms, then the full
diffusion noise vector, then chain clock exponentials in event order. The
single-path entry points run the vectorized kernels at width one, so an
ensemble is bit-identical to composing them path by path with the derived
streams, independent of chunking or worker scheduling.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .coupling import CouplingModel, sample_initial
from .errors import BlowUpError
from .potential import Potential

__all__ = [
    "EnsembleConfig",
    "TrajectoryRecord",
    "simulate_x",
    "simulate_y_given_x",
    "simulate_ensemble",
    "first_exit_time",
    "path_stream",
]

DT_CURVATURE_FACTOR = 1e-2
ESCAPE_FACTOR = 10.0
# noise + full-resolution x buffers per chunk (two float64 per path-step);
# wide chunks amortize the per-step numpy dispatch overhead
_CHUNK_BYTES = 3.2e9


@dataclass(frozen=True)
class TrajectoryRecord:
    """One coupled sample path.

    times contains the stored uniform grid times (every store_stride-th step)
    with the exact chain jump times inserted, plus the interpolated absorption
    time when an absorbing region was active. x is continuous (linearly
    interpolated at inserted times); y is piecewise constant and changes only
    at jump times. clocks holds the residual unit-exponential budgets per
    ordered state pair at the end of the path.
    """

    times: np.ndarray
    x: np.ndarray
    y: np.ndarray
    jumps: tuple                      # ((t, from_state, to_state), ...)
    clocks: np.ndarray                # (m+1, m+1), diagonal unused
    seed_key: int
    path_index: int
    dt: float
    store_stride: int
    eps: float
    exit_time: float | None = None    # absorption time, if absorbed

    def y_at(self, t: float) -> int:
        """Exact chain state at time t, reconstructed from the jump log."""
        y = int(self.y[0])
        for tj, _, to in self.jumps:
            if tj <= t:
                y = int(to)
            else:
                break
        return y

    def x_at_stored(self, t: float, tol: float = 1e-9) -> float:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > tol:
            raise ValueError(f"time {t} is not stored in this record "
                             f"(nearest {self.times[i]})")
        return float(self.x[i])


@dataclass(frozen=True)
class EnsembleConfig:
    """Ensemble parameters. initial_kind is "law" (draw from the coupled
    initial distribution) or "fixed" (start every path at (x0, y0))."""

    n_paths: int
    dt: float
    horizon: float
    eps: float
    seed: int
    initial_kind: str = "law"
    x0: float | None = None
    y0: int | None = None
    store_stride: int = 1
    absorb: tuple | None = None       # (lo, hi): stop paths on hitting [lo, hi]
    workers: int = 1

    def __post_init__(self):
        if self.dt <= 0 or self.horizon < self.dt or self.n_paths < 1:
            raise ValueError("need dt > 0, horizon >= dt, n_paths >= 1")
        if self.initial_kind not in ("law", "fixed"):
            raise ValueError("initial_kind must be 'law' or 'fixed'")
        if self.initial_kind == "fixed" and (self.x0 is None or self.y0 is None):
            raise ValueError("fixed initial condition needs x0 and y0")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


def path_stream(seed: int, path_index: int) -> np.random.Generator:
    """The counter-based stream owned by one path: Philox keyed by the pair
    (master seed, path index), one 64-bit key word each.

    Folding the index into the seed word (e.g. by XOR) would make the key
    sets of nearby seeds permutations of each other, so whole ensembles would
    coincide across seed sweeps; separate key words keep every (seed, path)
    stream distinct.
    """
    key = np.array([np.uint64(seed), np.uint64(path_index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _tail_halfwidth(potential: Potential, eps: float) -> float:
    crits = np.concatenate((potential.minima, potential.maxima))
    lo = float(np.max(np.abs(crits))) if crits.size else 1.0
    fmin = float(np.min(potential.value(crits))) if crits.size else 0.0
    target = -eps * np.log(1e-12)
    hi = lo + 1.0
    while (potential.value(-hi) - fmin < target or potential.value(hi) - fmin < target):
        hi *= 1.5
    return hi


def _escape_bound(potential: Potential, eps: float, x_extra: float = 0.0) -> float:
    if eps > 0:
        base = _tail_halfwidth(potential, eps)
    else:
        crits = np.concatenate((potential.minima, potential.maxima))
        base = float(np.max(np.abs(crits)) + 1.0) if crits.size else 1.0
    return ESCAPE_FACTOR * max(base, abs(x_extra))


def max_stable_dt(potential: Potential) -> float:
    """Time-step bound 1e-2 / max |F''| over the minima."""
    curv = np.max(np.abs(potential.hess(potential.minima)))
    return DT_CURVATURE_FACTOR / curv if curv > 0 else np.inf


def _check_dt(potential: Potential, dt: float, allow_large_dt: bool):
    bound = max_stable_dt(potential)
    if dt > bound:
        msg = (f"dt = {dt:g} exceeds the curvature bound {bound:g} "
               "(1e-2 over the stiffest well)")
        if not allow_large_dt:
            raise ValueError(msg + "; pass allow_large_dt=True to override")
        warnings.warn(msg)


def _x_kernel(potential, eps, x0s, noise, dt, bound, absorb=None):
    """Euler-Maruyama on a block of paths: x0s (C,), noise (n_steps, C).

    Returns (xfull, exit_steps, exit_fracs, exit_xs): xfull has shape
    (n_steps+1, C); paths that hit the absorbing interval are frozen at the
    interpolated crossing point.
    """
    n_steps = noise.shape[0]
    c = len(x0s)
    sig = np.sqrt(2.0 * eps * dt)
    xfull = np.empty((n_steps + 1, c))
    xfull[0] = x0s
    x = x0s.astype(float).copy()
    active = np.ones(c, dtype=bool)
    exit_steps = np.full(c, n_steps + 1, dtype=np.int64)
    exit_fracs = np.zeros(c)
    exit_xs = np.zeros(c)
    if absorb is not None:
        lo, hi = absorb
        inside0 = (x >= lo) & (x <= hi)
        if inside0.any():
            hit = np.nonzero(inside0)[0]
            exit_steps[hit] = 0
            exit_xs[hit] = x[hit]
            active[hit] = False
    for k in range(n_steps):
        if absorb is None:
            x = x - potential.grad(x) * dt + sig * noise[k]
            xfull[k + 1] = x
        else:
            xo = x[active]
            xn = xo - potential.grad(xo) * dt + sig * noise[k][active]
            x[active] = xn
            xfull[k + 1] = x
            lo, hi = absorb
            entered = active & (x >= lo) & (x <= hi)
            if entered.any():
                idx = np.nonzero(entered)[0]
                prev = xfull[k, idx]
                cur = x[idx]
                boundary = np.where(prev < lo, lo, hi)
                with np.errstate(divide="ignore", invalid="ignore"):
                    frac = np.where(cur == prev, 0.0,
                                    np.clip((boundary - prev) / (cur - prev), 0.0, 1.0))
                exit_steps[idx] = k
                exit_fracs[idx] = frac
                exit_xs[idx] = boundary
                x[idx] = boundary
                xfull[k + 1, idx] = boundary
                active[idx] = False
        if k % 256 == 0 or k == n_steps - 1:
            mx = np.max(np.abs(x))
            if mx > bound:
                raise BlowUpError(
                    f"path escaped |x| <= {bound:g} (reached {mx:g}); "
                    "the time step is too large for this potential")
    return xfull, exit_steps, exit_fracs, exit_xs


class _ModeInterp:
    """Linear interpolation of the spectral modes on the uniform grid,
    clamped at the ends (negligible stationary mass lives outside)."""

    def __init__(self, model: CouplingModel):
        self.nodes = model.grid_nodes
        self.h = self.nodes[1] - self.nodes[0]
        self.modes = model.modes
        self.vectors = model.vectors
        self.qz = model.Q.copy()
        np.fill_diagonal(self.qz, 0.0)

    def tilts(self, x):
        """(m+1, ...) tilt values at arbitrary positions."""
        x = np.asarray(x)
        pos = (x.reshape(-1) - self.nodes[0]) / self.h
        idx = np.clip(pos.astype(np.int64), 0, len(self.nodes) - 2)
        frac = np.clip(pos - idx, 0.0, 1.0)
        left = self.modes[:, idx]
        vals = left + frac * (self.modes[:, idx + 1] - left)
        out = 1.0 + self.vectors.T @ vals
        return out.reshape((self.vectors.shape[1],) + x.shape)


def _segment_depletion(qa, qb, t0, t1, dt):
    """Integral of the linearly interpolated rate over step fractions
    [t0, t1], scaled by dt. Shared by every depletion update so that scalar
    and vector paths round identically."""
    return dt * (qa * (t1 - t0) + (qb - qa) * (t1 * t1 - t0 * t0) * 0.5)


def _crossing_fraction(qa, qb, t0, budget, dt):
    """Smallest t in (t0, 1] with the segment depletion equal to the budget,
    or None. An exhausted budget fires immediately at t0; otherwise the
    quadratic is solved in the stable citardauq form."""
    if budget <= 0.0:
        return t0
    a = 0.5 * (qb - qa)
    b = qa
    g = budget / dt + a * t0 * t0 + b * t0
    disc = b * b + 4.0 * a * g
    denom = b + np.sqrt(max(disc, 0.0))
    if denom <= 0.0:
        return None
    t = 2.0 * g / denom
    if t0 < t <= 1.0:
        return float(t)
    return None


_Y_BLOCK_MAX = 256
_Y_REPLAY_BUDGET = 0.04   # target crossings per path per block


def _y_block_size(model: CouplingModel, dt: float) -> int:
    """Block length keeping the expected per-path crossings per block small,
    so the scalar replay stays rare. Depends only on the model and dt, which
    keeps ensemble and single-path runs on identical code paths."""
    rate_bound = float(np.max(model.jump_rates.sum(axis=1)))
    if rate_bound <= 0.0:
        return _Y_BLOCK_MAX
    return int(np.clip(_Y_REPLAY_BUDGET / (rate_bound * dt), 1, _Y_BLOCK_MAX))


def _replay_block(p, b0, nb, tilts_col, y_p, budgets_p, gen, qz, dt,
                  exit_step, exit_frac, jumps_p):
    """Step-by-step cascade for one path inside a block that contains a
    budget crossing or an absorption. tilts_col is (m+1, nb+1)."""
    m1 = budgets_p.shape[0]
    for k in range(nb):
        step = b0 + k
        if step > exit_step:
            break
        fend = exit_frac if step == exit_step else 1.0
        ta = tilts_col[:, k]
        tb = tilts_col[:, k + 1]
        t0 = 0.0
        while True:
            yp = int(y_p)
            qa_p = qz[yp] * ta / ta[yp]
            qb_p = qz[yp] * tb / tb[yp]
            best = None
            for j in range(m1):
                if j == yp:
                    continue
                tj = _crossing_fraction(qa_p[j], qb_p[j], t0,
                                        budgets_p[yp, j], dt)
                if tj is not None and tj <= fend and (best is None or tj < best[0]):
                    best = (tj, j)
            if best is None:
                for j in range(m1):
                    if j != yp:
                        budgets_p[yp, j] -= _segment_depletion(
                            qa_p[j], qb_p[j], t0, fend, dt)
                break
            tstar, jstar = best
            for j in range(m1):
                if j != yp and j != jstar:
                    budgets_p[yp, j] -= _segment_depletion(
                        qa_p[j], qb_p[j], t0, tstar, dt)
            budgets_p[yp, jstar] = gen.standard_exponential()
            jumps_p.append(((step + tstar) * dt, yp, jstar))
            y_p = jstar
            t0 = tstar
    return y_p


def _y_kernel(xfull, model, y0s, gens, dt, exit_steps, exit_fracs):
    """Time-change construction of the chain along a block of diffusion paths.

    Each ordered state pair owns a unit-rate exponential budget that depletes
    by the trapezoid integral of its rate along the path while the chain sits
    in the pair's source state; crossing times inside a step are located on
    the linearly interpolated depletion. Budgets persist across jumps of
    other pairs and are redrawn only for the pair that fired.

    Steps are processed in blocks: cumulative depletions decide, per path,
    whether anything can fire inside the block; the rare paths with a
    crossing (or an absorption) are replayed step by step, everyone else
    settles the whole block in one vector update.
    """
    n_steps = xfull.shape[0] - 1
    c = xfull.shape[1]
    m1 = model.n_states
    interp = _ModeInterp(model)
    qz = interp.qz

    # diagonal budgets are never armed; +inf keeps them out of every test
    budgets = np.full((c, m1, m1), np.inf)
    for p in range(c):
        draws = gens[p].standard_exponential(m1 * (m1 - 1))
        k = 0
        for i in range(m1):
            for j in range(m1):
                if i != j:
                    budgets[p, i, j] = draws[k]
                    k += 1
    y = np.asarray(y0s, dtype=np.int64).copy()
    jumps = [[] for _ in range(c)]
    arange = np.arange(c)
    block = _y_block_size(model, dt)

    for b0 in range(0, n_steps, block):
        nb = min(block, n_steps - b0)
        alive = exit_steps >= b0
        if not alive.any():
            break
        tilts_blk = interp.tilts(xfull[b0:b0 + nb + 1])     # (m1, nb+1, C)
        ty = tilts_blk[y, :, arange]                        # (C, nb+1)
        ratio = tilts_blk / ty.T[None, :, :]
        q_all = qz[y].T[:, None, :] * ratio                 # (m1, nb+1, C)
        dep = _segment_depletion(q_all[:, :-1, :], q_all[:, 1:, :], 0.0, 1.0, dt)
        cum = np.cumsum(dep, axis=1)
        row_budget = budgets[arange, y]                     # (C, m1)
        crossed = (cum >= row_budget.T[:, None, :]).any(axis=(0, 1))
        exits_here = (exit_steps >= b0) & (exit_steps < b0 + nb)
        replay = alive & (crossed | exits_here)
        plain = alive & ~replay
        if plain.any():
            idx = np.nonzero(plain)[0]
            budgets[idx, y[idx]] = row_budget[idx] - cum[:, -1, idx].T
        for p in np.nonzero(replay)[0]:
            y[p] = _replay_block(p, b0, nb, tilts_blk[:, :, p], int(y[p]),
                                 budgets[p], gens[p], qz, dt,
                                 int(exit_steps[p]), float(exit_fracs[p]),
                                 jumps[p])
    return y, jumps, budgets


def _assemble_record(path_index, seed, xcol, jumps_p, clocks, dt, stride,
                     eps, n_steps, exit_step, exit_frac, exit_x, y0):
    stored = np.arange(0, n_steps + 1, stride)
    if stored[-1] != n_steps:
        stored = np.append(stored, n_steps)
    exit_time = None
    if exit_step <= n_steps:
        exit_time = (exit_step + exit_frac) * dt
        stored = stored[stored * dt <= exit_time]
    times = stored * dt
    xs = xcol[stored]
    # insert exact jump times (linearly interpolated x) and the exit point
    extra_t, extra_x = [], []
    for tj, _, _ in jumps_p:
        if exit_time is not None and tj > exit_time:
            continue
        k = int(tj / dt)
        frac = tj / dt - k
        xk = xcol[min(k, n_steps)]
        xk1 = xcol[min(k + 1, n_steps)]
        extra_t.append(tj)
        extra_x.append(xk + frac * (xk1 - xk))
    if exit_time is not None:
        extra_t.append(exit_time)
        extra_x.append(exit_x)
    if extra_t:
        times = np.concatenate((times, extra_t))
        xs = np.concatenate((xs, extra_x))
        order = np.argsort(times, kind="stable")
        times = times[order]
        xs = xs[order]
        keep = np.concatenate(([True], np.diff(times) > 0))
        times = times[keep]
        xs = xs[keep]
    ys = np.empty(len(times), dtype=np.int64)
    yc = int(y0)
    jq = list(jumps_p)
    for i, t in enumerate(times):
        while jq and jq[0][0] <= t:
            yc = int(jq.pop(0)[2])
        ys[i] = yc
    return TrajectoryRecord(
        times=times, x=xs, y=ys, jumps=tuple(jumps_p), clocks=clocks,
        seed_key=seed, path_index=path_index, dt=dt, store_stride=stride,
        eps=eps, exit_time=exit_time)


def simulate_x(potential: Potential, eps: float, x0: float, dt: float, T: float,
               rng, bound: float | None = None, allow_large_dt: bool = False):
    """Euler-Maruyama path: X_{k+1} = X_k - F'(X_k) dt + sqrt(2 eps dt) Z_k.

    Draws the whole noise vector from rng in one call. Returns the (n_steps+1,)
    array of positions on the uniform grid k*dt.

    Raises:
        BlowUpError: the path left [-bound, bound] (default ten half-widths).
    """
    _check_dt(potential, dt, allow_large_dt)
    n_steps = int(round(T / dt))
    if bound is None:
        bound = _escape_bound(potential, eps, x0)
    noise = rng.standard_normal(n_steps)[:, None]
    xfull, *_ = _x_kernel(potential, eps, np.array([float(x0)]), noise, dt, bound)
    return xfull[:, 0]


def simulate_y_given_x(x_path, model: CouplingModel, y0: int, rng,
                       dt: float) -> TrajectoryRecord:
    """Chain path coupled to a given diffusion path by the time-change
    construction (full-resolution record)."""
    x_path = np.asarray(x_path, dtype=float)
    n_steps = len(x_path) - 1
    xfull = x_path[:, None]
    exit_steps = np.array([n_steps + 1], dtype=np.int64)
    y, jumps, budgets = _y_kernel(xfull, model, np.array([int(y0)]), [rng], dt,
                                  exit_steps, np.zeros(1))
    return _assemble_record(0, 0, x_path, jumps[0], budgets[0], dt, 1,
                            model.eps, n_steps, n_steps + 1, 0.0, 0.0, y0)


def _run_chunk(cfg, model, potential, p_init, indices, bound):
    gens = [path_stream(cfg.seed, int(i)) for i in indices]
    c = len(indices)
    n_steps = cfg.n_steps
    x0s = np.empty(c)
    y0s = np.empty(c, dtype=np.int64)
    if cfg.initial_kind == "law":
        for i, g in enumerate(gens):
            x0s[i], y0s[i] = sample_initial(model, p_init, g)
    else:
        x0s[:] = cfg.x0
        y0s[:] = cfg.y0
    # (n_steps, C) layout keeps the per-step slice contiguous
    noise = np.empty((n_steps, c))
    for i, g in enumerate(gens):
        noise[:, i] = g.standard_normal(n_steps)
    xfull, exit_steps, exit_fracs, exit_xs = _x_kernel(
        potential, cfg.eps, x0s, noise, cfg.dt, bound, absorb=cfg.absorb)
    del noise
    _, jumps, budgets = _y_kernel(xfull, model, y0s, gens, cfg.dt,
                                  exit_steps, exit_fracs)
    records = []
    for i, pidx in enumerate(indices):
        records.append(_assemble_record(
            int(pidx), cfg.seed, xfull[:, i].copy(), jumps[i], budgets[i].copy(),
            cfg.dt, cfg.store_stride, cfg.eps, n_steps,
            int(exit_steps[i]), float(exit_fracs[i]), float(exit_xs[i]), int(y0s[i])))
    return records


def simulate_ensemble(cfg: EnsembleConfig, model: CouplingModel,
                      potential: Potential, chain_spec=None,
                      allow_large_dt: bool = False):
    """Independent coupled paths, one Philox stream per path.

    The result is bit-identical to running sample_initial + simulate_x +
    simulate_y_given_x per path with path_stream(seed, index), regardless of
    chunking or the number of workers.
    """
    _check_dt(potential, cfg.dt, allow_large_dt)
    if abs(cfg.eps - model.eps) > 1e-15 * max(model.eps, 1.0):
        raise ValueError("config eps and coupling model eps disagree")
    p_init = chain_spec.p if chain_spec is not None else model.p
    bound = ESCAPE_FACTOR * float(np.max(np.abs(model.grid_nodes)))
    chunk = max(1, int(_CHUNK_BYTES / (16.0 * max(cfg.n_steps, 1))))
    splits = [np.arange(s, min(s + chunk, cfg.n_paths))
              for s in range(0, cfg.n_paths, chunk)]
    if cfg.workers > 1 and len(splits) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(
                lambda ix: _run_chunk(cfg, model, potential, p_init, ix, bound),
                splits))
    else:
        parts = [_run_chunk(cfg, model, potential, p_init, ix, bound)
                 for ix in splits]
    records = [r for part in parts for r in part]
    return records


def first_exit_time(record: TrajectoryRecord, region, target: str = "x"):
    """First time the chosen component hits the region.

    For the diffusion the region is an interval (lo, hi) and the hit is
    located by linear interpolation between the stored samples that straddle
    the boundary; for the chain the region is a set of states and the exact
    jump time is returned. None if the region is not hit on the record.
    """
    if target == "y":
        states = set(int(s) for s in region)
        if int(record.y[0]) in states:
            return 0.0
        for tj, _, to in record.jumps:
            if int(to) in states:
                return float(tj)
        return None
    if target != "x":
        raise ValueError("target must be 'x' or 'y'")
    lo, hi = float(region[0]), float(region[1])
    if not lo < hi:
        raise ValueError("empty region")
    x = record.x
    inside = (x >= lo) & (x <= hi)
    if not inside.any():
        return None
    idx = int(np.argmax(inside))
    if idx == 0:
        return 0.0
    prev, cur = x[idx - 1], x[idx]
    boundary = lo if prev < lo else hi
    denom = cur - prev
    frac = 0.0 if denom == 0 else (boundary - prev) / denom
    t0, t1 = record.times[idx - 1], record.times[idx]
    return float(t0 + np.clip(frac, 0.0, 1.0) * (t1 - t0))
