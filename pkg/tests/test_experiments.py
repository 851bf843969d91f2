import csv
import json
from math import comb

import pytest

from tschrl.env import phi_grid
from tschrl.exceptions import PolicyBankError
from tschrl.experiments import (
    SIM_FIELDS,
    SWEEP_FIELDS,
    analytic_report,
    node_rows,
    sweep_pareto,
    write_csv,
    write_manifest,
)
from tschrl.hrl import PolicyBank, low_key, synthesize
from tschrl.slotsim import SimConfig


@pytest.mark.parametrize("step", [0.1, 0.2, 0.5])
def test_grid_size_formula(step):
    n = round(1 / step)
    assert len(phi_grid(step)) == comb(n + 2, 2)


def test_sweep_rows_follow_the_grid(small_bank):
    rows = sweep_pareto(small_bank, 0.5)
    assert len(rows) == 6
    triples = [(r["alpha"], r["beta"], r["gamma"]) for r in rows]
    assert triples == [p.as_tuple() for p in phi_grid(0.5)]
    assert len(set(triples)) == 6
    for r in rows:
        assert sum((r["alpha"], r["beta"], r["gamma"])) == pytest.approx(1.0)
        assert set(SWEEP_FIELDS) <= set(r)


def test_sweep_matches_direct_synthesis(small_bank):
    phi = phi_grid(0.5)[2]
    row = sweep_pareto(small_bank, 0.5, seed=3)[2]
    ro = synthesize(small_bank, phi, seed=3)
    rep = analytic_report(small_bank, ro.schedule)
    assert (row["P_mw"], row["D_ms"], row["T_pps"], row["cost"]) == (rep.P, rep.D, rep.T, ro.cost)


def test_sweep_csv_is_byte_identical_across_runs_and_pools(small_bank, tmp_path):
    sim = SimConfig(duration_s=5, seed=1)
    a = write_csv(sweep_pareto(small_bank, 0.5, sim=sim), tmp_path / "a.csv", SWEEP_FIELDS + SIM_FIELDS)
    b = write_csv(sweep_pareto(small_bank, 0.5, sim=sim), tmp_path / "b.csv", SWEEP_FIELDS + SIM_FIELDS)
    c = write_csv(sweep_pareto(small_bank, 0.5, sim=sim, jobs=2), tmp_path / "c.csv",
                  SWEEP_FIELDS + SIM_FIELDS)
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()
    rows = list(csv.DictReader(open(a)))
    assert len(rows) == 6 and all(int(r["sim_collisions"]) == 0 for r in rows)


def test_sweep_needs_a_complete_bank(small_bank):
    bank = PolicyBank(small_bank.graph, small_bank.env_config, small_bank.train_config,
                      low={k: v for k, v in small_bank.low.items() if k != low_key(0, "add")},
                      high=small_bank.high)
    with pytest.raises(PolicyBankError):
        sweep_pareto(bank, 0.5)


def test_node_rows_and_manifest(small_bank, tmp_path):
    ro = synthesize(small_bank, phi_grid(0.5)[0])
    rows = node_rows(analytic_report(small_bank, ro.schedule))
    assert [r["node"] for r in rows] == sorted(small_bank.tree.nodes)
    path = write_manifest(tmp_path, "sweep", {"x": 1}, {"seed": 4}, ["b.csv", "a.csv"])
    m = json.loads(path.read_text())
    assert m["outputs"] == ["a.csv", "b.csv"] and m["seeds"] == {"seed": 4}
    assert {"numpy", "scikit-learn", "click", "python", "tschrl"} <= set(m["versions"])
    assert len(m["config_hash"]) == 16
