"""Independent reference computations used only by the tests.

Nothing here calls into the code paths under test beyond reading the
schedule's raw entry list and the tree's parent map.
"""

from __future__ import annotations

import math


def slot_flow_simulation(entries, parent, sink, t0, size, slot_s, seconds):
    """Integer packet accounting over ``seconds`` of slots.

    Every non-sink node generates a packet each ``1/t0`` seconds into an
    unbounded FIFO. In each slot a node that owns a Tx entry toward its
    parent in that timeslot forwards one queued packet (if any); the packet
    reaches the parent at the end of the slot. Returns the per-node rate of
    transmitted packets (packets received, for the sink).
    """
    nodes = set(parent) | {sink}
    queue = {n: 0 for n in nodes}
    sent = {n: 0 for n in nodes}
    by_slot = {}
    for u, _ch, src, dst in entries:
        if parent.get(src) == dst:
            by_slot.setdefault(u, []).append(src)
    horizon = int(round(seconds / slot_s))
    gen_every = 1.0 / t0
    next_gen = {n: 0.0 for n in nodes if n != sink}
    for t in range(horizon):
        now = t * slot_s
        for n, when in next_gen.items():
            while when <= now + 1e-12:
                queue[n] += 1
                when += gen_every
            next_gen[n] = when
        arrivals = []
        for src in by_slot.get(t % size, ()):
            if queue[src] > 0:
                queue[src] -= 1
                sent[src] += 1
                arrivals.append(parent[src])
        for dst in arrivals:
            if dst == sink:
                sent[sink] += 1
            else:
                queue[dst] += 1
    return {n: sent[n] / seconds for n in nodes}


def worst_slot_wait(entries, path, size):
    """Worst number of slots from generation to the last hop's transmission.

    Walks forward one slot at a time from every generation offset; the
    packet leaves a node in the first slot (counting the current one) that
    has a Tx entry toward the next hop. Hops without any such entry are
    skipped and reported separately.
    """
    slots_of = {}
    for u, _ch, src, dst in entries:
        slots_of.setdefault((src, dst), set()).add(u)
    missing = sum(1 for link in path if link not in slots_of)
    worst = 0
    for gen in range(size):
        t = gen
        for link in path:
            slots = slots_of.get(link)
            if not slots:
                continue
            while t % size not in slots:
                t += 1
        worst = max(worst, t - gen)
    return worst, missing


def linear_score(values, lower_is_better):
    lo, hi = min(values), max(values)
    out = []
    for v in values:
        frac = (v - lo) / (hi - lo)
        out.append(100.0 * (1.0 - frac) if lower_is_better else 100.0 * frac)
    return out


def comb(n, k):
    return math.comb(n, k)
