"""Config-driven command line: builds the pipeline and emits reports, CSV
data, and SVG plots.

    eigencoupler <spectrum|synth|oracle|simulate|verify|sweep>
                 --config <path> [--out <dir>] [--seed <u64>] [--threads <n>]

Exit codes: 0 success, 1 validation problem, 2 numerical failure,
3 verification-check failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import platform
import sys
import time

import numpy as np
import scipy
import scipy.sparse as sp

from . import __version__
from .chain import ChainSpec, scaled_eigenvectors, synth_generator, validate_chain
from .config import ExperimentConfig, parse_config
from .coupling import build_coupling, build_joint_generator, coupling_summary, coupling_to_csv
from .errors import ConfigError, EigencouplerError, GrowthAssumptionError
from .oracle import (DistributionVector, check_conditional_law, check_y_marginal,
                     evolve_distribution, mean_exit_times)
from .potential import domains_of_attraction, make_potential, require_coupling_ready
from .simulate import EnsembleConfig, simulate_ensemble
from .spectral import (auto_grid, build_generator, decompose, decomposition_to_csv,
                       eigenvalues_to_json, schrodinger_eigenvalues, two_route_decomposition)
from .stats import tv_distance, tracking_probability
from . import svgplot

CROSS_ROUTE_N = 4000
CROSS_ROUTE_REL = 1e-4
ORACLE_TOL = 1e-8
MC_TV_BASE = 0.05        # contract at the default 20000 paths
MC_TV_REF_PATHS = 20000


class VerificationFailure(EigencouplerError):
    pass


def _build_pipeline(cfg: ExperimentConfig, eps: float, n: int):
    """Potential, generator, decomposition, chain, coupling model for one
    noise level."""
    potential = make_potential(cfg.potential)
    require_coupling_ready(potential)
    grid = auto_grid(potential, eps, n=n, L=cfg.grid_L)
    gen = build_generator(potential, eps, grid)
    m = potential.n_wells - 1
    sign_node = int(np.argmin(np.abs(grid.nodes - potential.minima[0])))
    dec = decompose(gen, m, sign_node=sign_node)
    lams = dec.eigenvalues[1:]
    if cfg.explicit_Q is not None:
        Q = np.asarray(cfg.explicit_Q, dtype=float)
    elif m == 1:
        Q = synth_generator(lams, "two_state", theta=cfg.theta)
    else:
        Q = synth_generator(lams, "birth_death")
    vectors, scales, min_alpha = scaled_eigenvectors(
        Q, lams, dec.modes[1:], kappa=cfg.kappa,
        maximize=cfg.maximize_scale and m == 1)
    p = (np.asarray(cfg.chain_p, dtype=float) if cfg.chain_p is not None
         else np.full(m + 1, 1.0 / (m + 1)))
    spec = ChainSpec(Q=Q, rates=lams.copy(), vectors=vectors, scales=scales,
                     p=p, min_alpha_bound=min_alpha,
                     theta=cfg.theta if m == 1 else None)
    model = build_coupling(dec, spec)
    return potential, grid, gen, dec, spec, model


def _write_manifest(out_dir, cfg: ExperimentConfig, command, outputs, t_start):
    manifest = {
        "command": command,
        "config": cfg.resolved(),
        "outputs": outputs,
        "versions": {
            "eigencoupler": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "wall_clock_s": round(time.time() - t_start, 3),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return path


def _cmd_spectrum(cfg: ExperimentConfig, out_dir) -> list:
    outputs = []
    for eps in cfg.epsilons:
        potential = make_potential(cfg.potential)
        require_coupling_ready(potential, spectral_only=True,
                               override=cfg.allow_assumption_violation)
        grid = auto_grid(potential, eps, n=cfg.grid_n, L=cfg.grid_L)
        m = max(potential.n_wells - 1, 1) + 2
        dec = two_route_decomposition(potential, eps, grid, m)
        tag = f"eps{eps:g}"
        if "json" in cfg.formats:
            path = os.path.join(out_dir, f"eigenvalues_{tag}.json")
            eigenvalues_to_json(dec, path)
            outputs.append(path)
        if "csv" in cfg.formats:
            path = os.path.join(out_dir, f"decomposition_{tag}.csv")
            decomposition_to_csv(dec, path)
            outputs.append(path)
        if "svg" in cfg.formats:
            path = os.path.join(out_dir, f"modes_{tag}.svg")
            svgplot.line_chart(path, dec.grid.nodes,
                               {f"mode_{k}": dec.modes[k] for k in range(dec.m + 1)},
                               title=f"generator eigenfunctions, eps={eps:g}",
                               xlabel="x", ylabel="mode value")
            outputs.append(path)
    return outputs


def _cmd_synth(cfg: ExperimentConfig, out_dir) -> list:
    outputs = []
    for eps in cfg.epsilons:
        *_, spec, model = _build_pipeline(cfg, eps, cfg.grid_n)
        path = os.path.join(out_dir, f"chain_eps{eps:g}.json")
        spec.to_json(path)
        outputs.append(path)
        if "csv" in cfg.formats:
            cpath = os.path.join(out_dir, f"coupling_eps{eps:g}.csv")
            coupling_to_csv(model, cpath)
            outputs.append(cpath)
        spath = os.path.join(out_dir, f"coupling_summary_eps{eps:g}.json")
        coupling_summary(model, spath)
        outputs.append(spath)
    return outputs


def _oracle_run(cfg: ExperimentConfig, eps: float):
    potential, grid, gen, dec, spec, model = _build_pipeline(cfg, eps, cfg.oracle_n)
    B = build_joint_generator(model, gen)
    t0 = time.time()
    cond = check_conditional_law(B, model, spec.p, cfg.oracle_times)
    nu0 = DistributionVector(model.initial_law_for(spec.p).reshape(-1))
    marg = check_y_marginal(B, nu0, spec.Q, spec.p, cfg.oracle_times)
    return {
        "eps": eps,
        "oracle_n": cfg.oracle_n,
        "times": list(cfg.oracle_times),
        "max_tv": cond.max_tv,
        "max_l1": marg.max_l1,
        "tv_entries": [list(e) for e in cond.entries],
        "l1_entries": [list(e) for e in marg.entries],
        "skipped_states": [list(s) for s in cond.skipped],
        "chain": spec.to_json(),
        "runtime_s": round(time.time() - t0, 3),
    }


def _cmd_oracle(cfg: ExperimentConfig, out_dir) -> list:
    report = {"runs": [_oracle_run(cfg, eps) for eps in cfg.epsilons]}
    path = os.path.join(out_dir, "oracle_report.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
    return [path]


def _run_ensemble(cfg: ExperimentConfig, eps: float, n_grid=None):
    potential, grid, gen, dec, spec, model = _build_pipeline(
        cfg, eps, n_grid or cfg.grid_n)
    ens = EnsembleConfig(n_paths=cfg.n_paths, dt=cfg.dt, horizon=cfg.T, eps=eps,
                         seed=cfg.seed, store_stride=cfg.store_stride,
                         workers=cfg.threads)
    records = simulate_ensemble(ens, model, potential, spec)
    return potential, gen, dec, spec, model, records


def _cmd_simulate(cfg: ExperimentConfig, out_dir) -> list:
    outputs = []
    for eps in cfg.epsilons:
        *_, records = _run_ensemble(cfg, eps)
        traj_path = os.path.join(out_dir, f"trajectories_eps{eps:g}.csv")
        with open(traj_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path_id", "t", "x", "y"])
            for rec in records:
                for t, x, y in zip(rec.times, rec.x, rec.y):
                    writer.writerow([rec.path_index, f"{t:.10g}", f"{x:.10g}", y])
        jump_path = os.path.join(out_dir, f"jumps_eps{eps:g}.csv")
        with open(jump_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["path_id", "t", "from", "to"])
            for rec in records:
                for t, i, j in rec.jumps:
                    writer.writerow([rec.path_index, f"{t:.10g}", i, j])
        outputs += [traj_path, jump_path]
    return outputs


def _verify_one(cfg: ExperimentConfig, eps: float):
    checks = []

    def record(name, passed, value, threshold):
        checks.append({"name": name, "passed": bool(passed), "value": value,
                       "threshold": threshold})

    potential = make_potential(cfg.potential)
    audit = potential.growth
    record("growth_assumptions", audit.passed, audit.a1, "a2 < 2*a1 - 2")

    # two-route spectral consistency at the reference resolution
    grid4 = auto_grid(potential, eps, n=CROSS_ROUTE_N, L=cfg.grid_L)
    gen4 = build_generator(potential, eps, grid4)
    dec4 = decompose(gen4, 3)
    hat = schrodinger_eigenvalues(potential, eps, grid4, 4)
    rel = float(np.max(np.abs(dec4.eigenvalues[1:] - eps * hat[1:]) / (eps * hat[1:])))
    record("two_route_eigenvalues_rel", rel <= CROSS_ROUTE_REL, rel, CROSS_ROUTE_REL)

    # exact oracle identities
    orun = _oracle_run(cfg, eps)
    record("oracle_conditional_law_tv", orun["max_tv"] <= ORACLE_TOL,
           orun["max_tv"], ORACLE_TOL)
    record("oracle_y_marginal_l1", orun["max_l1"] <= ORACLE_TOL,
           orun["max_l1"], ORACLE_TOL)

    # chain structure
    potential_, grid, gen, dec, spec, model = _build_pipeline(cfg, eps, cfg.grid_n)
    chain_rep = validate_chain(spec)
    record("chain_structure", chain_rep.passed, list(chain_rep.failures), "no failures")
    record("tilt_positivity", model.min_alpha > 0 and
           model.min_alpha >= (1 - cfg.kappa) - 1e-12, model.min_alpha, 1 - cfg.kappa)

    # Monte Carlo checks
    ens = EnsembleConfig(n_paths=cfg.n_paths, dt=cfg.dt, horizon=cfg.T, eps=eps,
                         seed=cfg.seed, store_stride=cfg.store_stride,
                         workers=cfg.threads)
    records = simulate_ensemble(ens, model, potential, spec)
    tv_threshold = MC_TV_BASE * np.sqrt(MC_TV_REF_PATHS / cfg.n_paths)
    xT = np.array([r.x[-1] for r in records])
    yT = np.array([r.y[-1] for r in records])
    for j in range(model.n_states):
        sel = yT == j
        if sel.sum() < 50:
            continue
        tv = tv_distance(xT[sel], model.cond[j], model.grid_nodes, bins=50)
        record(f"mc_conditional_tv_state{j}", tv <= tv_threshold, tv, tv_threshold)

    for t in (cfg.T / 4, cfg.T / 2, cfg.T):
        pv = DistributionVector(spec.p.copy())
        pt = evolve_distribution(sp.csr_matrix(spec.Q), pv, t).weights
        occ = np.array([(np.array([r.y_at(t) for r in records]) == j).mean()
                        for j in range(model.n_states)])
        se = np.sqrt(np.maximum(pt * (1 - pt), 1e-12) / len(records))
        z = float(np.max(np.abs(occ - pt) / se))
        record(f"mc_y_marginal_t{t:g}", z <= 3.0, z, 3.0)

    part = domains_of_attraction(potential)
    tr = tracking_probability(records, part, cfg.T, model)
    for j, (est, oracle_val) in tr.items():
        if est is None:
            continue
        z = abs(est.point - oracle_val) / max(est.se, 1e-12)
        record(f"mc_tracking_state{j}", z <= 3.0, z, 3.0)

    return {"eps": eps, "checks": checks,
            "passed": all(c["passed"] for c in checks), "oracle": orun}


def _cmd_verify(cfg: ExperimentConfig, out_dir) -> list:
    runs = [_verify_one(cfg, eps) for eps in cfg.epsilons]
    report = {"runs": runs, "passed": all(r["passed"] for r in runs)}
    path = os.path.join(out_dir, "verify_report.json")
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
    for run in runs:
        for c in run["checks"]:
            status = "PASS" if c["passed"] else "FAIL"
            print(f"[{status}] eps={run['eps']:g} {c['name']}: value={c['value']} "
                  f"threshold={c['threshold']}")
    if not report["passed"]:
        raise VerificationFailure("one or more verification checks failed")
    return [path]


def _cmd_sweep(cfg: ExperimentConfig, out_dir) -> list:
    rows = []
    for eps in cfg.epsilons:
        potential, gen, dec, spec, model, records = _run_ensemble(cfg, eps)
        part = domains_of_attraction(potential)
        tr = tracking_probability(records, part, cfg.T, model)
        nodes = gen.grid.nodes
        minima = potential.minima
        rho = 0.5 * float(np.min(np.abs(minima[:, None] - part.boundaries[None, :])))
        rates = {}
        for i in range(model.n_states):
            for j in range(model.n_states):
                if i == j:
                    continue
                chain_t = float(mean_exit_times(spec.Q, [i], [j])[0])
                ball = (minima[j] - rho, minima[j] + rho)
                tgt = np.nonzero((nodes >= ball[0]) & (nodes <= ball[1]))[0]
                src = int(np.argmin(np.abs(nodes - minima[i])))
                diff_t = float(mean_exit_times(gen, [src], tgt)[0])
                rates[f"{i}->{j}"] = {"chain": chain_t, "diffusion": diff_t,
                                      "ratio": chain_t / diff_t}
        row = {"eps": eps, "lambdas": dec.eigenvalues[1:].tolist(),
               "rho": rho, "exit_times": rates}
        for j, (est, oracle_val) in tr.items():
            row[f"tracking_oracle_{j}"] = oracle_val
            row[f"tracking_mc_{j}"] = None if est is None else est.point
            row[f"tracking_se_{j}"] = None if est is None else est.se
        rows.append(row)
    outputs = []
    jpath = os.path.join(out_dir, "sweep_report.json")
    with open(jpath, "w") as fh:
        json.dump({"rows": rows}, fh, indent=2)
    outputs.append(jpath)
    if "csv" in cfg.formats:
        cpath = os.path.join(out_dir, "sweep.csv")
        keys = [k for k in rows[0] if k not in ("exit_times", "lambdas")]
        with open(cpath, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(keys)
            for row in rows:
                writer.writerow([row[k] for k in keys])
        outputs.append(cpath)
    if "svg" in cfg.formats and len(rows) > 1:
        spath = os.path.join(out_dir, "tracking_trend.svg")
        epss = [r["eps"] for r in rows]
        n_states = len([k for k in rows[0] if k.startswith("tracking_oracle_")])
        series = {f"oracle_{j}": [r[f"tracking_oracle_{j}"] for r in rows]
                  for j in range(n_states)}
        svgplot.line_chart(spath, epss, series, title="tracking vs noise level",
                           xlabel="eps", ylabel="P(X in D_j | Y = j)")
        outputs.append(spath)
    return outputs


_COMMANDS = {
    "spectrum": _cmd_spectrum,
    "synth": _cmd_synth,
    "oracle": _cmd_oracle,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "sweep": _cmd_sweep,
}


def execute(command: str, cfg: ExperimentConfig, out_dir=None) -> int:
    """Run one subcommand; returns the exit code and writes artifacts plus a
    reproducibility manifest under the output directory."""
    t0 = time.time()
    out_dir = out_dir or cfg.out_dir
    os.makedirs(out_dir, exist_ok=True)
    try:
        outputs = _COMMANDS[command](cfg, out_dir)
    except VerificationFailure as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        _write_manifest(out_dir, cfg, command, [], t0)
        return 3
    except (ConfigError, GrowthAssumptionError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except EigencouplerError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    with open(os.path.join(out_dir, "config_resolved.json"), "w") as fh:
        json.dump(cfg.resolved(), fh, indent=2)
    outputs.append(os.path.join(out_dir, "config_resolved.json"))
    _write_manifest(out_dir, cfg, command, outputs, t0)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="eigencoupler",
        description="eigenfunction coupling of a metastable diffusion to a "
                    "finite Markov chain: spectra, exact conditional-law "
                    "verification, and Monte Carlo diagnostics")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config path or inline JSON")
    parser.add_argument("--out", default=None, help="output directory (default from config)")
    parser.add_argument("--seed", type=int, default=None, help="override simulation seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (or env EIGENCOUPLER_THREADS)")
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return 1
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    threads = args.threads
    if threads is None and os.environ.get("EIGENCOUPLER_THREADS"):
        threads = int(os.environ["EIGENCOUPLER_THREADS"])
    if threads is not None:
        cfg = dataclasses.replace(cfg, threads=threads)
    return execute(args.command, cfg, out_dir=args.out)


if __name__ == "__main__":
    sys.exit(main())
