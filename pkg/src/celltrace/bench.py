"""Scene-population benchmark: builds lineage graphs with a target link
count and spots-per-timepoint range, then times instance-pool population."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .graph import LineageGraph
from .render import populate_pools


def build_bench_graph(links: int, spots_lo: int, spots_hi: int,
                      seed: int = 0) -> LineageGraph:
    """Random lineage with exactly `links` links and per-timepoint spot
    counts drawn from [spots_lo, spots_hi]."""
    if links < 0 or spots_lo < 1 or spots_hi < spots_lo:
        raise ValidationError("bad bench shape")
    rng = np.random.default_rng(seed)
    mean = (spots_lo + spots_hi) / 2
    timepoints = max(2, int(np.ceil(links / mean)) + 1)
    counts = rng.integers(spots_lo, spots_hi + 1, timepoints)
    g = LineageGraph(timepoints=timepoints)
    tps = np.repeat(np.arange(timepoints, dtype=np.int32), counts)
    positions = rng.uniform(0, 100, (len(tps), 3))
    ids = g.bulk_add_spots(tps, positions)
    starts = np.r_[0, np.cumsum(counts)]
    layer = [ids[starts[t]:starts[t + 1]] for t in range(timepoints)]
    # one parent per spot in the next layer until the target count is reached,
    # then extra division links on pairs not yet connected
    sources: list[int] = []
    targets: list[int] = []
    made = 0
    for t in range(timepoints - 1):
        if made >= links:
            break
        take = min(links - made, len(layer[t + 1]))
        parents = rng.integers(0, len(layer[t]), take)
        sources.extend(layer[t][parents].tolist())
        targets.extend(layer[t + 1][:take].tolist())
        made += take
    if made < links:
        seen = set(zip(sources, targets))
        t = 0
        while made < links:
            s = int(rng.choice(layer[t]))
            d = int(rng.choice(layer[t + 1]))
            if (s, d) not in seen:
                seen.add((s, d))
                sources.append(s)
                targets.append(d)
                made += 1
            t = (t + 1) % (timepoints - 1)
    g.bulk_add_links(sources, targets)
    return g


def run_populate_bench(links: int, spots_lo: int, spots_hi: int,
                       seed: int = 0, repeats: int = 3) -> dict:
    """Build the shape, populate the pools, and report the timings.
    Population runs `repeats` times and the minimum is reported, which
    removes first-touch page-fault noise from the comparison."""
    g = build_bench_graph(links, spots_lo, spots_hi, seed)
    pools = populate_pools(g)
    seconds = pools.population_seconds
    for _ in range(max(0, repeats - 1)):
        pools = populate_pools(g)
        seconds = min(seconds, pools.population_seconds)
    per_tp = [len(g.spots_at_timepoint(t)) for t in range(g.timepoints)]
    return {
        "links": g.link_count(),
        "spotsPerTimepoint": {"min": int(min(per_tp)), "max": int(max(per_tp))},
        "timepoints": g.timepoints,
        "populationSeconds": seconds,
        "spotPoolCapacity": pools.spot_pool.capacity,
        "linkPoolCapacity": pools.link_pool.capacity,
        "seed": seed,
    }


def write_report(report: dict | list[dict], path) -> None:
    Path(path).write_text(json.dumps(report, indent=2) + "\n")
