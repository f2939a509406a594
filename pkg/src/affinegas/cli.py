"""Command-line entry point: scenario orchestration and report emission.

Subcommands:
    affine   integrate the background ODE only; export trajectory and frame CSVs
    evolve   full perturbation run; emits a JSON-lines ledger
    verify   identity suites on seed-deterministic synthetic fields
    report   fits and claim summaries from existing ledgers

Environment overrides (CI hooks): AFFINEGAS_OUT, AFFINEGAS_SEED,
AFFINEGAS_THREADS take precedence over the corresponding flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .affine import asymptotic_fit, integrate_affine
from .config import Scenario
from .diagnostics import (
    decay_and_coercivity,
    equivalence_constants,
    identity_suite,
    support_and_propagation,
)
from .errors import AffineGasError, ConfigInvalid, LedgerCorrupt
from .evolve import evolve
from .fields import FlowState, Grid3, build_profiles
from .ledger import RunLedger, write_csv
from .modulation import FrameTrack, frames_to_csv
from .synthetic import synthetic_frame_pair, synthetic_state_pair
from .timeframe import build_rescaling, trajectory_spanning_tau


def _outdir(args) -> Path:
    out = os.environ.get("AFFINEGAS_OUT", args.out)
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _seed(args) -> int:
    return int(os.environ.get("AFFINEGAS_SEED", args.seed))


def _threads(args) -> int:
    return max(1, int(os.environ.get("AFFINEGAS_THREADS", args.threads)))


def cmd_affine(args) -> int:
    scenario = Scenario.load(args.config)
    out = _outdir(args)
    params = scenario.affine_params()
    traj = integrate_affine(params, scenario.t_end(), rel_tol=scenario.rel_tol())
    traj.to_csv(out / f"{scenario.name}_trajectory.csv")

    e0 = traj.energies[0]
    rows = [
        (
            float(t),
            float(d),
            float(d / (1.0 + t**3)),
            float(abs(e - e0) / abs(e0)),
        )
        for t, d, e in zip(traj.ts, traj.detAs, traj.energies)
    ]
    write_csv(
        out / f"{scenario.name}_affine_ledger.csv",
        ["t", "detA", "det_ratio", "energy_drift"],
        rows,
    )

    summary = {
        "name": scenario.name,
        "status": traj.status,
        "t_end": traj.t_end,
        "energy_drift": traj.energy_drift(),
    }
    if traj.status == "ok" and traj.t_end >= 100.0:
        fit = asymptotic_fit(traj)
        summary.update(
            {
                "mu1_est": fit.mu1_est,
                "M_decay_exponent": fit.M_decay_exponent,
                "A1_est": fit.A1_est.ravel().tolist(),
            }
        )
    n_frames = int(scenario.diagnostics.get("frames", 0))
    if n_frames > 0:
        resc = build_rescaling(traj)
        track = FrameTrack(traj, resc)
        taus = np.linspace(0.0, resc.tau_end * 0.999, n_frames)
        frames_to_csv([track.at(float(t)) for t in taus],
                      out / f"{scenario.name}_frames.csv")
    with open(out / f"{scenario.name}_affine_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    print(f"affine: status={traj.status} energy_drift={summary['energy_drift']:.3e}")
    return 0


def _write_slice(state: FlowState, path: Path, mode: str) -> None:
    mid = state.grid.n // 2
    if mode == "csv":
        amp_t = np.sqrt(np.einsum("i...,i...->...", state.theta, state.theta))
        amp_v = np.sqrt(np.einsum("i...,i...->...", state.V, state.V))
        rows = []
        for i, y1 in enumerate(state.grid.axis):
            for j, y2 in enumerate(state.grid.axis):
                rows.append((float(y1), float(y2), float(amp_t[i, j, mid]),
                             float(amp_v[i, j, mid])))
        write_csv(path.with_suffix(".csv"), ["y1", "y2", "abs_theta", "abs_V"], rows)
    elif mode == "binary":
        np.save(path.with_suffix(".npy"),
                np.stack([state.theta[:, :, :, mid], state.V[:, :, :, mid]]))


def cmd_evolve(args) -> int:
    scenario = Scenario.load(args.config)
    out = _outdir(args)
    cfg = scenario.evolver_config()
    params = scenario.affine_params()
    traj, resc = trajectory_spanning_tau(params, cfg.tau_end, rel_tol=scenario.rel_tol())
    if traj.status == "collapsed":
        print("evolve: background trajectory collapsed; no run performed")
        return 1

    on_snapshot = None
    if args.slices != "none":
        slice_dir = out / f"{scenario.name}_slices"
        slice_dir.mkdir(exist_ok=True)

        def on_snapshot(state, frame, idx):
            _write_slice(state, slice_dir / f"snap{idx:04d}", args.slices)

    ledger = evolve(cfg, traj, resc, on_snapshot=on_snapshot)
    ledger.meta["name"] = scenario.name
    ledger.meta["seed"] = _seed(args)
    ledger.write(out / f"{scenario.name}_run.jsonl")
    print(
        f"evolve: status={ledger.status} snapshots={len(ledger.rows)} "
        f"SN_final={ledger.rows[-1]['SN']:.6e}"
    )
    return 0 if ledger.status == "ok" else 1


def cmd_verify(args) -> int:
    out = _outdir(args)
    seed = _seed(args)
    n = args.grid_n
    grid = Grid3(half_width=2.5, n=n)
    profiles, _, _ = build_profiles(grid, 0.0, 0.0, 1)

    jobs = []
    for amp_scale, tag in ((1.0, "base"), (0.5, "half_amp")):
        for dtau, ttag in ((2e-3, "dt"), (1e-3, "dt_half")):
            jobs.append((amp_scale, tag, dtau, ttag))

    def run(job):
        amp_scale, tag, dtau, ttag = job
        s1, s2 = synthetic_state_pair(grid, seed, 0.1 * amp_scale, dtau)
        f1, f2 = synthetic_frame_pair(seed, s1.tau, s2.tau)
        res = identity_suite(s2, f2, profiles, 1.5, s1, f1)
        return [(f"{name}[{tag},{ttag}]", val) for name, val in sorted(res.items())]

    with ThreadPoolExecutor(max_workers=_threads(args)) as pool:
        chunks = list(pool.map(run, jobs))
    rows = [item for chunk in chunks for item in chunk]
    rows.sort(key=lambda r: r[0])
    write_csv(out / f"verify_seed{seed}.csv", ["identity", "residual"],
              [(name, float(v)) for name, v in rows])
    print(f"verify: {len(rows)} residuals written (seed={seed})")
    return 0


def cmd_report(args) -> int:
    out = _outdir(args)
    if not args.ledger:
        raise ConfigInvalid("ledger", "no ledger paths given")
    ledgers = [RunLedger.read(p) for p in args.ledger]

    lines = []
    table = []
    for path, led in zip(args.ledger, ledgers):
        name = led.meta.get("name", Path(path).stem)
        alpha = led.meta.get("alpha", float("nan"))
        lines.append(f"== scenario {name} (alpha={alpha}) status={led.status}")
        sn = np.array(led.series("SN"))
        sn_inst = np.array(led.series("SN_inst"))
        taus = np.array(led.series("tau"))
        if sn[-1] > 0:
            plateau = sn_inst[: max(2, len(sn_inst) // 4)].max()
            tail = taus >= taus[-1] / 2
            slope = (
                float(np.polyfit(taus[tail], np.log(np.maximum(sn_inst[tail], 1e-300)), 1)[0])
                if tail.sum() >= 2
                else 0.0
            )
            bounded = sn[-1] <= 3.0 * plateau and slope <= 0.01
            lines.append(
                f"   SN bounded: {'PASS' if bounded else 'FAIL'} "
                f"(final/plateau={sn[-1] / plateau:.3f}, trailing log-slope={slope:.4f})"
            )
            table.append((name, "SN_bounded", float(bounded), sn[-1] / plateau))
        else:
            lines.append("   SN bounded: PASS (identically zero run)")
            table.append((name, "SN_bounded", 1.0, 0.0))

        try:
            prop = support_and_propagation(led)
            lines.append(
                f"   propagation: {'PASS' if prop.bound_ok else 'FAIL'} "
                f"(K_fit={prop.K_fit:.4f}, r2={prop.r_squared:.4f})"
            )
            table.append((name, "propagation", float(prop.bound_ok), prop.K_fit))
        except AffineGasError as exc:
            lines.append(f"   propagation: SKIP ({exc})")

        eq = equivalence_constants(led)
        if eq is not None:
            lines.append(f"   norm-energy constants: C1={eq[0]:.4f} C2={eq[1]:.4f}")
            table.append((name, "equiv_C1", eq[0], eq[1]))
    text = "\n".join(lines) + "\n"
    (out / "report.txt").write_text(text)
    write_csv(out / "report.csv", ["scenario", "claim", "value", "extra"], table)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="affinegas")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--threads", type=int, default=1)
    sub = ap.add_subparsers(dest="command", required=True)

    p_aff = sub.add_parser("affine", help="integrate the background ODE only")
    p_aff.add_argument("--config", required=True)
    p_aff.set_defaults(func=cmd_affine)

    p_ev = sub.add_parser("evolve", help="full perturbation run")
    p_ev.add_argument("--config", required=True)
    p_ev.add_argument("--slices", choices=["none", "csv", "binary"], default="none")
    p_ev.set_defaults(func=cmd_evolve)

    p_vf = sub.add_parser("verify", help="identity suites on synthetic fields")
    p_vf.add_argument("--grid-n", type=int, default=33)
    p_vf.set_defaults(func=cmd_verify)

    p_rp = sub.add_parser("report", help="summaries from existing ledgers")
    p_rp.add_argument("--ledger", nargs="+", required=True)
    p_rp.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigInvalid, LedgerCorrupt) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except AffineGasError as exc:
        print(f"error: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
