"""Command-line experiment runner.

Every command writes CSV (or JSON for schedules and reports) into
``--out-dir`` together with ``run-manifest.json``.
"""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .dqn import TrainConfig
from .env import KINDS, EnvConfig, Requirements
from .exceptions import TschError
from .experiments import (
    SIM_FIELDS,
    SWEEP_FIELDS,
    analytic_report,
    load_protocols,
    node_rows,
    sweep_pareto,
    write_csv,
    write_manifest,
)
from .hrl import PolicyBank, synthesize, train_high, train_low_bank
from .metrics import evaluate
from .netmodel import build_forwarding_tree, default_topology, graph_from_dict, load_topology
from .ranking import METRICS, RankingWeights, rank
from .schedule import load_schedule, save_schedule
from .slotsim import SimConfig, compare as compare_reports, orchestra_like, run, shared_cell


class RunContext:
    def __init__(self, config: dict, seed: int, out_dir: Path, jobs: int):
        self.config = config
        self.seed = seed
        self.out_dir = out_dir
        self.jobs = jobs
        self.outputs: list[str] = []

    def graph(self):
        topo = self.config.get("topology")
        if topo is None:
            return default_topology()
        if isinstance(topo, dict):
            return graph_from_dict(topo)
        return load_topology(topo)

    def env_config(self) -> EnvConfig:
        return EnvConfig.from_dict(self.config.get("env", {}))

    def train_config(self) -> TrainConfig:
        data = self.config.get("train")
        cfg = TrainConfig.from_dict(data) if data else TrainConfig.desk()
        return cfg.with_seed(self.seed)

    def sim_config(self, **overrides) -> SimConfig:
        data = {**self.config.get("sim", {}), "seed": self.seed}
        data.update({k: v for k, v in overrides.items() if v is not None})
        return SimConfig(**data)

    def path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.outputs.append(name)
        return self.out_dir / name

    def csv(self, name: str, rows, fields=None) -> None:
        write_csv(rows, self.path(name), fields)

    def finish(self, command: str, extra: dict | None = None) -> None:
        config = {**self.config, **(extra or {})}
        write_manifest(self.out_dir, command, config, {"seed": self.seed}, self.outputs)
        click.echo(f"wrote {', '.join(sorted(self.outputs))} to {self.out_dir}")


pass_run = click.make_pass_decorator(RunContext)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="JSON file with optional 'topology', 'env', 'train' and 'sim' sections.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out-dir", default="out", show_default=True, type=click.Path(file_okay=False))
@click.option("--jobs", default=1, show_default=True, type=click.IntRange(min=1))
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def cli(ctx, config_path, seed, out_dir, jobs, verbose):
    """Train, run and evaluate learned TSCH schedules."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    config = json.loads(Path(config_path).read_text()) if config_path else {}
    ctx.obj = RunContext(config, seed, Path(out_dir), jobs)


def _load_bank(path, complete: bool = True) -> PolicyBank:
    return PolicyBank.load(path, require_complete=complete)


def _progress(done, total):
    click.echo(f"  {done}/{total} low-level policies", err=True)


@cli.command("train-low")
@click.option("--bank", "bank_dir", required=True, type=click.Path(file_okay=False),
              help="Bank directory; created if missing, extended otherwise.")
@click.option("--link", "links", multiple=True, type=int, help="Only these link indices.")
@click.option("--kind", type=click.Choice(KINDS), help="Only this action kind.")
@pass_run
def train_low_cmd(run_ctx: RunContext, bank_dir, links, kind):
    """Train the per-link cell policies that are still missing."""
    if (Path(bank_dir) / "manifest.json").exists():
        bank = _load_bank(bank_dir, complete=False)
    else:
        bank = PolicyBank(run_ctx.graph(), run_ctx.env_config(), run_ctx.train_config())
    tasks = [(i, k) for i, k in bank.missing_low()
             if (not links or i in links) and (kind is None or k == kind)]
    train_low_bank(bank, jobs=run_ctx.jobs, tasks=tasks, progress=_progress)
    bank.save(bank_dir)
    rows = []
    for (i, k) in sorted(tasks):
        s = bank.summaries[f"{k}-{i}"]
        src, dst = bank.graph.links[i]
        rows.append({"link": i, "src": src, "dst": dst, "kind": k, "episodes": s.episodes,
                     "first_decile": s.first_decile, "last_decile": s.last_decile,
                     "improved": s.improved, "heldout_feasible": s.heldout_feasible})
    run_ctx.csv("low_training.csv", rows, ["link", "src", "dst", "kind", "episodes", "first_decile",
                                           "last_decile", "improved", "heldout_feasible"])
    run_ctx.finish("train-low", {"bank": str(bank_dir), "bank_config_hash": bank.config_hash})


@cli.command("train-high")
@click.option("--bank", "bank_dir", required=True, type=click.Path(exists=True, file_okay=False))
@pass_run
def train_high_cmd(run_ctx: RunContext, bank_dir):
    """Train the link picker on top of a complete set of cell policies."""
    bank = _load_bank(bank_dir, complete=False)
    train_high(bank)
    bank.save(bank_dir)
    log = bank.high_log
    run_ctx.csv("high_training.csv",
                [{"episode": i, "reward": r, "length": n}
                 for i, (r, n) in enumerate(zip(log.rewards, log.lengths))],
                ["episode", "reward", "length"])
    run_ctx.finish("train-high", {"bank": str(bank_dir), "bank_config_hash": bank.config_hash})


@cli.command("synthesize")
@click.option("--bank", "bank_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--phi", required=True, help="Weights on power, delay and throughput, e.g. 0.5,0.3,0.2")
@click.option("--budget", type=click.IntRange(min=0), help="Maximum number of schedule edits.")
@pass_run
def synthesize_cmd(run_ctx: RunContext, bank_dir, phi, budget):
    """Build a schedule for the given requirements."""
    bank = _load_bank(bank_dir)
    req = Requirements.parse(phi)
    ro = synthesize(bank, req, budget=budget, seed=run_ctx.seed)
    save_schedule(ro.schedule, run_ctx.path("schedule.json"))
    rep = analytic_report(bank, ro.schedule)
    run_ctx.csv("nodes.csv", node_rows(rep))
    run_ctx.csv("rollout.csv", [{"step": i, "cost": c} for i, c in enumerate(ro.costs)])
    click.echo(f"phi={req} cells={len(ro.schedule)} cost={ro.cost:.4f} "
               f"P={rep.P:.3f}mW D={rep.D:.1f}ms T={rep.T:.3f}pkt/s")
    run_ctx.finish("synthesize", {"bank_config_hash": bank.config_hash, "phi": str(req),
                                  "budget": budget})


def _scheduler(run_ctx: RunContext, kind, schedule_path, slotframe, channels):
    graph = run_ctx.graph()
    tree = build_forwarding_tree(graph)
    if kind == "file":
        if not schedule_path:
            raise click.UsageError("--scheduler file needs --schedule")
        return graph, tree, load_schedule(schedule_path)
    if kind == "orchestra":
        return graph, tree, orchestra_like(tree, slotframe or 11, channels)
    return graph, tree, shared_cell(tree, slotframe or 3, channels)


@cli.command()
@click.option("--scheduler", "kind", type=click.Choice(["file", "orchestra", "shared-cell"]),
              default="file", show_default=True)
@click.option("--schedule", "schedule_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--slotframe", type=click.IntRange(min=1), help="Baseline slotframe length.")
@click.option("--channels", default=2, show_default=True, type=click.IntRange(min=1))
@click.option("--duration", type=float, help="Simulated seconds.")
@click.option("--retx", type=click.IntRange(min=0), help="Retransmissions per packet.")
@click.option("--phase", type=click.Choice(["random", "aligned"]))
@click.option("--trace", is_flag=True, help="Also write the per-packet trace.")
@pass_run
def simulate(run_ctx: RunContext, kind, schedule_path, slotframe, channels, duration, retx,
             phase, trace):
    """Run the slot-level simulator on a schedule or a baseline scheduler."""
    graph, tree, sched = _scheduler(run_ctx, kind, schedule_path, slotframe, channels)
    cfg = run_ctx.sim_config(duration_s=duration, retransmissions=retx, phase=phase, trace=trace)
    rep = run(graph, sched, cfg, tree=tree)
    rep.save(run_ctx.path("sim_report.json"))
    rows = [{"node": n, **{k: getattr(s, k) for k in ("generated", "delivered", "dropped", "lost",
                                                       "collisions", "throughput", "mean_power_mw",
                                                       "latency_mean_ms", "jitter_ms")},
             "plr": s.plr} for n, s in sorted(rep.nodes.items())]
    run_ctx.csv("sim_nodes.csv", rows)
    if trace:
        rep.save_trace(run_ctx.path("trace.csv"))
    click.echo(f"{rep.scheduler}: PLR={rep.plr:.3f} power={rep.mean_power_mw:.3f}mW "
               f"latency={rep.latency_mean_ms:.1f}ms collisions={rep.collisions}")
    run_ctx.finish("simulate", {"scheduler": kind, "sim": vars(cfg)})


@cli.command()
@click.option("--bank", "bank_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--step", default=0.1, show_default=True, type=float, help="Requirement grid spacing.")
@click.option("--simulate/--no-simulate", "with_sim", default=False, show_default=True)
@click.option("--duration", type=float, help="Simulated seconds per point.")
@pass_run
def sweep(run_ctx: RunContext, bank_dir, step, with_sim, duration):
    """Synthesize and evaluate a schedule for every point of the requirement grid."""
    bank = _load_bank(bank_dir)
    sim = run_ctx.sim_config(duration_s=duration) if with_sim else None
    rows = sweep_pareto(bank, step, seed=run_ctx.seed, sim=sim, jobs=run_ctx.jobs)
    run_ctx.csv("sweep.csv", rows, SWEEP_FIELDS + (SIM_FIELDS if with_sim else []))
    click.echo(f"{len(rows)} requirement points")
    run_ctx.finish("sweep", {"bank_config_hash": bank.config_hash, "step": step,
                             "sim": vars(sim) if sim else None})


@cli.command("rank")
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="CSV with columns name,power,delay,throughput,plr.")
@click.option("--weights", "weights", multiple=True, default=("balanced",), show_default=True,
              help="Preset (balanced, power, delay, throughput, reliability) or four numbers.")
@pass_run
def rank_cmd(run_ctx: RunContext, input_path, weights):
    """Score and rank protocols from measured metrics."""
    protocols = load_protocols(input_path)
    rows = []
    for text in weights:
        w = RankingWeights.parse(text)
        for pos, r in enumerate(rank(protocols, w), 1):
            rows.append({"weights": text, "rank": pos, "name": r.name, "score": r.total,
                         **{f"s_{m}": r.scores[m] for m in METRICS}})
    run_ctx.csv("ranking.csv", rows, ["weights", "rank", "name", "score"]
                + [f"s_{m}" for m in METRICS])
    for r in rows:
        click.echo(f"{r['weights']:>12} {r['rank']:>3} {r['name']:<24} {r['score']:.2f}")
    run_ctx.finish("rank", {"input": str(input_path), "weights": list(weights)})


@cli.command()
@click.option("--bank", "bank_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--phi", help="Synthesize with these weights (needs --bank).")
@click.option("--schedule", "schedule_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--duration", type=float, help="Simulated seconds.")
@pass_run
def compare(run_ctx: RunContext, bank_dir, phi, schedule_path, duration):
    """Analytic model against the simulator for one schedule, per node."""
    if bank_dir and phi:
        bank = _load_bank(bank_dir)
        schedule = synthesize(bank, Requirements.parse(phi), seed=run_ctx.seed).schedule
        graph, tree, env_cfg = bank.graph, bank.tree, bank.env_config.noiseless()
    elif schedule_path:
        schedule = load_schedule(schedule_path)
        graph = run_ctx.graph()
        tree = build_forwarding_tree(graph)
        env_cfg = run_ctx.env_config().noiseless()
    else:
        raise click.UsageError("give --bank with --phi, or --schedule")
    rep = evaluate(schedule, tree, env_cfg.energy, env_cfg.traffic)
    sim_cfg = run_ctx.sim_config(duration_s=duration)
    sim = run(graph, schedule, sim_cfg, tree=tree, energy=env_cfg.energy)
    run_ctx.csv("compare.csv", compare_reports(rep, sim))
    run_ctx.finish("compare", {"phi": phi, "sim": vars(sim_cfg)})


def main(argv=None):
    try:
        cli.main(args=argv, prog_name="tschrl", standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except TschError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()
