"""Requirement sweeps, per-node breakdowns and run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import platform
from importlib.metadata import version
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .env import Requirements, phi_grid
from .hrl import PolicyBank, synthesize
from .metrics import MetricsReport, evaluate, normalization_bounds
from .ranking import ProtocolMetrics
from .schedule import TschSchedule
from .slotsim import SimConfig, SimReport, run

SWEEP_FIELDS = ["alpha", "beta", "gamma", "P_mw", "D_ms", "T_pps", "L", "cost", "best_step", "n_cells"]
SIM_FIELDS = ["sim_plr", "sim_power_mw", "sim_latency_ms", "sim_throughput", "sim_collisions"]


def analytic_report(bank: PolicyBank, schedule: TschSchedule) -> MetricsReport:
    """Noise-free analytic metrics of ``schedule`` under the bank's configuration."""
    cfg = bank.env_config.noiseless()
    bounds = normalization_bounds(bank.tree, cfg.slotframe_size, cfg.slot_duration_ms,
                                  cfg.energy, cfg.traffic)
    return evaluate(schedule, bank.tree, cfg.energy, cfg.traffic, bounds=bounds)


def _sweep_point(bank: PolicyBank, phi: Requirements, seed: int, sim: SimConfig | None) -> dict:
    ro = synthesize(bank, phi, seed=seed)
    rep = analytic_report(bank, ro.schedule)
    row = {
        "alpha": phi.alpha, "beta": phi.beta, "gamma": phi.gamma,
        "P_mw": rep.P, "D_ms": rep.D, "T_pps": rep.T, "L": rep.L,
        "cost": ro.cost, "best_step": ro.best_step, "n_cells": len(ro.schedule),
    }
    if sim is not None:
        r = run(bank.graph, ro.schedule, sim, tree=bank.tree, energy=bank.env_config.energy,
                slot_duration_ms=bank.env_config.slot_duration_ms)
        row.update(sim_plr=r.plr, sim_power_mw=r.mean_power_mw, sim_latency_ms=r.latency_mean_ms,
                   sim_throughput=r.throughput, sim_collisions=r.collisions)
    return row


_WORKER_BANK: PolicyBank | None = None


def _init_worker(bank: PolicyBank) -> None:
    global _WORKER_BANK
    _WORKER_BANK = bank


def _worker_point(args) -> dict:
    return _sweep_point(_WORKER_BANK, *args)


def sweep_pareto(bank: PolicyBank, grid_step: float = 0.1, seed: int = 0,
                 sim: SimConfig | None = None, jobs: int = 1) -> list[dict]:
    """One row per requirement tuple on the simplex grid, in grid order.

    Each point synthesizes a schedule from a reset drawn with ``seed`` and
    evaluates it analytically and, if ``sim`` is given, in the simulator.
    """
    bank.check_complete()
    grid = phi_grid(grid_step)
    args = [(phi, seed, sim) for phi in grid]
    if jobs <= 1:
        return [_sweep_point(bank, *a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(bank,)) as ex:
        # map preserves submission order whatever the completion order
        return list(ex.map(_worker_point, args))


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 12))
    return str(v)


def write_csv(rows: list[dict], path: str | Path, fields: list[str] | None = None) -> Path:
    path = Path(path)
    fields = fields or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for row in rows:
            w.writerow([_fmt(row.get(f, "")) for f in fields])
    return path


def node_rows(report: MetricsReport, sim: SimReport | None = None) -> list[dict]:
    """Per-node analytic metrics, joined with simulated ones when available."""
    rows = []
    for n in sorted(report.node_t):
        row = {"node": n, "T_pps": report.node_t[n], "P_mw": report.node_p[n], "D_ms": report.node_d[n]}
        if sim is not None:
            s = sim.nodes[n]
            row.update(sim_throughput=s.throughput, sim_power_mw=s.mean_power_mw,
                       sim_latency_ms=s.latency_mean_ms, sim_jitter_ms=s.jitter_ms, sim_plr=s.plr)
        rows.append(row)
    return rows


def protocol_metrics(name: str, sim: SimReport) -> ProtocolMetrics:
    return ProtocolMetrics(name, sim.mean_power_mw, sim.latency_mean_ms, sim.throughput, sim.plr)


def load_protocols(path: str | Path) -> list[ProtocolMetrics]:
    """Read ``name,power,delay,throughput,plr`` rows."""
    with open(path, newline="") as fh:
        return [
            ProtocolMetrics(r["name"], float(r["power"]), float(r["delay"]),
                            float(r["throughput"]), float(r["plr"]))
            for r in csv.DictReader(fh)
        ]


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True, default=str).encode()).hexdigest()[:16]


def write_manifest(out_dir: str | Path, command: str, config: dict, seeds: dict,
                   outputs: list[str]) -> Path:
    manifest = {
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "seeds": seeds,
        "outputs": sorted(outputs),
        "versions": {
            "tschrl": __version__,
            "python": platform.python_version(),
            **{pkg: version(pkg) for pkg in ("numpy", "scikit-learn", "click")},
        },
    }
    path = Path(out_dir) / "run-manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path
