"""TSCH slotframe with contention-free cell assignment.

A schedule is an immutable value. ``add_link``/``remove_link`` return a new
schedule together with a feasibility flag instead of raising: the learning
environment turns infeasible requests into penalties.

Feasibility rules:

* a cell ``(u, ch)`` holds at most one link;
* a node takes part in at most one link per timeslot, across all channel
  offsets (half-duplex radio, one frequency at a time).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

from .exceptions import ConfigurationError, ContractError


class Cell(NamedTuple):
    u: int
    ch: int


@dataclass(frozen=True, order=True)
class ScheduledLink:
    """A dedicated Tx cell at ``src`` paired with an Rx cell at ``dst``."""

    u: int
    ch: int
    src: int
    dst: int

    @property
    def cell(self) -> Cell:
        return Cell(self.u, self.ch)


@dataclass(frozen=True)
class TschSchedule:
    slotframe_size: int = 17
    num_channels: int = 2
    slot_duration_ms: float = 10.0
    entries: tuple[ScheduledLink, ...] = ()
    asn: int = 0
    _by_cell: dict = field(init=False, repr=False, compare=False)
    _busy: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.slotframe_size <= 0 or self.num_channels <= 0 or self.slot_duration_ms <= 0:
            raise ConfigurationError(
                "slotframe size, channel count and slot duration must all be positive"
            )
        by_cell = {}
        busy = {}
        for e in self.entries:
            self._check_cell(e.cell)
            if e.src == e.dst:
                raise ContractError(f"link {e.src}->{e.dst} loops on itself")
            if e.cell in by_cell:
                raise ContractError(f"cell {tuple(e.cell)} assigned twice")
            for node in (e.src, e.dst):
                if (node, e.u) in busy:
                    raise ContractError(f"node {node} used twice in timeslot {e.u}")
                busy[(node, e.u)] = e
            by_cell[e.cell] = e
        object.__setattr__(self, "entries", tuple(sorted(self.entries)))
        object.__setattr__(self, "_by_cell", by_cell)
        object.__setattr__(self, "_busy", busy)

    # -------------------------------------------------------------- queries

    @property
    def num_cells(self) -> int:
        return self.slotframe_size * self.num_channels

    @property
    def slot_seconds(self) -> float:
        return self.slot_duration_ms / 1000.0

    def _check_cell(self, cell) -> None:
        u, ch = cell
        if not (0 <= u < self.slotframe_size and 0 <= ch < self.num_channels):
            raise ContractError(
                f"cell ({u}, {ch}) outside {self.slotframe_size}x{self.num_channels} slotframe"
            )

    def at(self, cell) -> ScheduledLink | None:
        return self._by_cell.get(Cell(*cell))

    def busy(self, node: int, u: int) -> bool:
        return (node, u) in self._busy

    def entries_for(self, src: int, dst: int) -> list[ScheduledLink]:
        return [e for e in self.entries if e.src == src and e.dst == dst]

    def tx_entries(self, node: int) -> list[ScheduledLink]:
        return [e for e in self.entries if e.src == node]

    def cells_of(self, src: int, dst: int) -> int:
        return sum(1 for e in self.entries if e.src == src and e.dst == dst)

    def __len__(self) -> int:
        return len(self.entries)

    def replace_entries(self, entries: Iterable[ScheduledLink]) -> "TschSchedule":
        return TschSchedule(
            self.slotframe_size, self.num_channels, self.slot_duration_ms, tuple(entries), self.asn
        )

    # ------------------------------------------------------------------ io

    def to_dict(self) -> dict:
        return {
            "slotframe_size": self.slotframe_size,
            "num_channels": self.num_channels,
            "slot_duration_ms": self.slot_duration_ms,
            "asn": self.asn,
            "entries": [{"src": e.src, "dst": e.dst, "u": e.u, "ch": e.ch} for e in self.entries],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TschSchedule":
        try:
            entries = tuple(
                ScheduledLink(int(d["u"]), int(d["ch"]), int(d["src"]), int(d["dst"]))
                for d in data["entries"]
            )
            return cls(
                int(data["slotframe_size"]),
                int(data["num_channels"]),
                float(data["slot_duration_ms"]),
                entries,
                int(data.get("asn", 0)),
            )
        except KeyError as exc:
            raise ConfigurationError(f"schedule file missing field {exc}") from None


def empty_schedule(slotframe_size: int = 17, num_channels: int = 2, slot_duration_ms: float = 10.0):
    return TschSchedule(slotframe_size, num_channels, slot_duration_ms)


def can_add(s: TschSchedule, src: int, dst: int, cell) -> bool:
    u, ch = cell
    s._check_cell(cell)
    if src == dst:
        return False
    return Cell(u, ch) not in s._by_cell and not s.busy(src, u) and not s.busy(dst, u)


def add_link(s: TschSchedule, src: int, dst: int, cell, graph=None) -> tuple[TschSchedule, bool]:
    """Schedule ``src -> dst`` in ``cell``; returns ``(schedule, feasible)``.

    When infeasible the input schedule is returned unchanged. Passing
    ``graph`` additionally rejects pairs that are not radio neighbors.
    """
    if graph is not None and not graph.has_link(src, dst):
        return s, False
    if not can_add(s, src, dst, cell):
        return s, False
    u, ch = cell
    return s.replace_entries(s.entries + (ScheduledLink(u, ch, src, dst),)), True


def remove_link(s: TschSchedule, cell, expected_dst: int) -> tuple[TschSchedule, bool]:
    """Free ``cell`` if it holds a link toward ``expected_dst``."""
    s._check_cell(cell)
    e = s.at(cell)
    if e is None or e.dst != expected_dst:
        return s, False
    return s.replace_entries(x for x in s.entries if x is not e), True


def lookup_next(s: TschSchedule, node: int, dst_addr: int, asn: int) -> Cell | None:
    """Nearest upcoming Tx cell of ``node`` toward ``dst_addr``.

    Scans the node's links in order and keeps the one with the smallest
    forward distance ``(u - asn mod U) mod U``; a distance of 0 means the
    current timeslot. First match wins on ties.
    """
    if asn < 0:
        raise ContractError("asn must be non-negative")
    size = s.slotframe_size
    u_now = asn % size
    best = None
    best_diff = size
    for e in s.entries:
        if e.src != node or e.dst != dst_addr:
            continue
        diff = e.u - u_now
        if diff < 0:
            diff += size
        if diff < best_diff:
            best_diff = diff
            best = Cell(e.u, e.ch)
    return best


def tx_slot_count(s: TschSchedule, n: int) -> int:
    return len({e.u for e in s.entries if e.src == n})


def rx_slot_count(s: TschSchedule, n: int) -> int:
    return len({e.u for e in s.entries if e.dst == n})


def save_schedule(s: TschSchedule, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(s.to_dict(), fh, indent=2)


def load_schedule(path: str | Path) -> TschSchedule:
    with open(path) as fh:
        return TschSchedule.from_dict(json.load(fh))
