"""Command-line pipeline: assemble, decompose, synthesize, simulate, eigs, report.

Exit codes: 0 success (a diverged simulation counts as success), 1 runtime
failure, 2 validation failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig
from .controllability import ConstraintInputWarning, decompose
from .discretize import build_plate
from .numerics import NumericsError, eigenvalues
from .simulation import (
    ReferenceSchedule,
    build_coupling,
    closed_loop_matrix,
    perfect_feedback,
    simulate_closed_loop,
    transverse_reference,
    write_eigenvalues_csv,
    write_snapshot_csv,
)
from .synthesis import SynthesisError, luenberger_obsf, save_controller, synthesize

log = logging.getLogger("mindlin_ph")

VARIANTS = ("perfect", "luenberger", "passive")
EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2


class Pipeline:
    """Lazily builds and caches each stage for one run."""

    def __init__(self, cfg: RunConfig, force: bool = False):
        self.cfg = cfg
        self.force = force
        self._cache = {}

    def _get(self, key, make):
        if key not in self._cache:
            t0 = time.perf_counter()
            self._cache[key] = make()
            log.info("%s ready in %.2f s", key, time.perf_counter() - t0)
        return self._cache[key]

    @property
    def plant(self):
        g = self.cfg.grid
        return self._get("plant", lambda: build_plate(self.cfg.plate, g.n_cells_1, g.n_cells_2))

    @property
    def high_plant(self):
        g = self.cfg.grid
        return self._get("high_plant", lambda: build_plate(self.cfg.plate, g.high_order_1, g.high_order_2))

    @property
    def realization(self):
        def make():
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always", ConstraintInputWarning)
                real = decompose(self.plant)
            for w in caught:
                log.warning("%s", w.message)
            return real

        return self._get("realization", make)

    @property
    def synthesis(self):
        return self._get("synthesis", lambda: synthesize(self.realization, self.cfg.synthesis, force=self.force))

    @property
    def coupling(self):
        return self._get("coupling", lambda: build_coupling(self.plant.grid, self.high_plant.grid))

    def controller(self, variant: str):
        res = self.synthesis
        if variant == "passive":
            return res.controller
        if variant == "luenberger":
            return self._get(
                "luenberger",
                lambda: luenberger_obsf(
                    self.realization, res.K, {"weight": self.cfg.simulation.observer_weight}, self.cfg.synthesis
                ),
            )
        if variant == "perfect":
            return perfect_feedback(res.K, res.controller.T)
        raise ValueError(f"unknown variant {variant!r}")


def _write_json(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


# --- subcommands ---------------------------------------------------------


def cmd_assemble(pipe: Pipeline, out: Path, args) -> dict:
    sys_ = pipe.high_plant if args.high_order else pipe.plant
    sys_.grid.write_csv(out / "grid.csv")
    for name in ("Jd", "Qd", "Bd"):
        sys_.write_triplets(out / f"{name}.txt", name)
    summary = {
        "n_cells": [sys_.grid.n_cells_1, sys_.grid.n_cells_2],
        "n_p": sys_.n_p,
        "n_q": sys_.n_q,
        "N": sys_.N,
        "n_inputs": sys_.n_inputs,
        "h1": sys_.grid.h1,
        "h2": sys_.grid.h2,
        "skew_defect": float(abs(sys_.Pdp + sys_.Pdq.T).max()) if sys_.Pdp.nnz else 0.0,
    }
    _write_json(out / "assemble.json", summary)
    return summary


def cmd_decompose(pipe: Pipeline, out: Path, args) -> dict:
    real = pipe.realization
    real.write_frequencies_csv(out / "skew_spectrum.csv")
    summary = {
        "N": real.N,
        "nc": real.nc,
        "n_constraints": real.n_constraints,
        "Bcbar_norm": float(np.linalg.norm(real.Bcbar)),
        "bcbar_ok": bool(real.bcbar_ok),
        "decomposition_error": real.decomposition_error,
        "cross_block_norm": real.cross_block_norm,
    }
    _write_json(out / "decompose.json", summary)
    return summary


def cmd_synthesize(pipe: Pipeline, out: Path, args) -> dict:
    res = pipe.synthesis
    cfg = pipe.cfg
    save_controller(res.controller, out / "controller.json", {"config": cfg.to_ini(), "report": res.report})
    _write_json(out / "synthesis.json", {"report": res.report, "rc_history": res.history})
    return res.report


def _run_variant(pipe: Pipeline, variant: str, out: Path, high_order: bool) -> dict:
    scfg = pipe.cfg.simulation
    ctrl = pipe.controller(variant)
    # full-state feedback needs the design plant's states, so it never
    # runs against the refined plant
    use_high = high_order and variant != "perfect"
    plant = pipe.high_plant if use_high else pipe.plant
    coupling = pipe.coupling if use_high else None
    m = pipe.plant.n_inputs
    sched = ReferenceSchedule(transverse_reference(m, scfg.u_ref_amplitude), scfg.schedule)
    t0 = time.perf_counter()
    tr = simulate_closed_loop(
        plant, ctrl, sched, coupling, dt=scfg.dt, T=scfg.T,
        realization=pipe.realization, activation_time=scfg.activation_time, stride=scfg.stride,
    )
    tr.write_csv(out / f"trace_{variant}.csv")
    if len(tr.snapshots):
        write_snapshot_csv(out / f"snapshot_{variant}.csv", plant, tr.snapshots[-1])
    summary = {
        "variant": variant,
        "plant_N": plant.N,
        "high_order": use_high,
        "diverged": tr.diverged,
        "t_end": float(tr.times[-1]) if len(tr) else 0.0,
        "H_final": float(tr.H_plant[-1]) if len(tr) else 0.0,
        "max_power_residual": float(np.max(np.abs(tr.power_residual))) if len(tr) else 0.0,
    }
    log.info("%s run finished in %.2f s", variant, time.perf_counter() - t0)
    return summary


def cmd_simulate(pipe: Pipeline, out: Path, args) -> dict:
    variants = args.variant or list(VARIANTS)
    # build shared stages once before fanning out
    pipe.realization
    pipe.synthesis
    if args.high_order:
        pipe.coupling
    for v in variants:
        pipe.controller(v)
    with ThreadPoolExecutor(max_workers=len(variants)) as pool:
        futures = {v: pool.submit(_run_variant, pipe, v, out, args.high_order) for v in variants}
        results = {v: f.result() for v, f in futures.items()}
    _write_json(out / "simulate.json", results)
    return results


def cmd_eigs(pipe: Pipeline, out: Path, args) -> dict:
    res = pipe.synthesis
    spectra = {"open_loop": eigenvalues(pipe.realization.A), "state_feedback": eigenvalues(res.A_K)}
    plant = pipe.high_plant if args.high_order else pipe.plant
    coupling = pipe.coupling if args.high_order else None
    for v in ("passive", "luenberger"):
        spectra[f"closed_loop_{v}"] = eigenvalues(closed_loop_matrix(plant, pipe.controller(v), coupling))
    write_eigenvalues_csv(out / "eigenvalues.csv", spectra)
    summary = {k: {"max_real": float(np.max(v.real)), "count": int(len(v))} for k, v in spectra.items()}
    _write_json(out / "eigs.json", summary)
    return summary


def cmd_report(pipe: Pipeline, out: Path, args) -> dict:
    report = {
        "assemble": cmd_assemble(pipe, out, args),
        "decompose": cmd_decompose(pipe, out, args),
        "synthesize": cmd_synthesize(pipe, out, args),
        "eigs": cmd_eigs(pipe, out, args),
        "simulate": cmd_simulate(pipe, out, args),
    }
    _write_json(out / "report.json", report)
    return report


COMMANDS = {
    "assemble": cmd_assemble,
    "decompose": cmd_decompose,
    "synthesize": cmd_synthesize,
    "simulate": cmd_simulate,
    "eigs": cmd_eigs,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mindlin-ph", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="INI run configuration (defaults built in)")
        p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        p.add_argument("--variant", action="append", choices=VARIANTS, help="controller variant (repeatable)")
        p.add_argument("--high-order", action="store_true", help="use the refined plant")
        p.add_argument("--force", action="store_true", help="synthesize despite inputs on constraint states")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.read(args.config) if args.config else RunConfig()
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out = args.out
    try:
        out.mkdir(parents=True, exist_ok=True)
        cfg.write(out / "config.ini")
        result = COMMANDS[args.command](Pipeline(cfg, force=args.force), out, args)
    except (ValueError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SynthesisError, NumericsError, np.linalg.LinAlgError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(result, indent=2, sort_keys=True, default=_json_default))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
