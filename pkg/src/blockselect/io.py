"""Edge-list reading and writing.

Format: UTF-8 text, one ``<u> <v>`` pair of 0-based integers per line,
whitespace separated. Lines starting with ``#`` and blank lines are ignored.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import Graph

log = logging.getLogger(__name__)


class EdgeListError(ValueError):
    """Malformed or empty edge-list input."""


@dataclass(frozen=True)
class EdgeListRead:
    graph: Graph
    node_ids: np.ndarray      # original id of each node in the returned graph
    self_loops: int
    duplicates: int


def parse_edge_list(lines, drop_isolated: bool = True) -> EdgeListRead:
    pairs = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise EdgeListError(f"line {lineno}: expected two node ids, got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise EdgeListError(f"line {lineno}: node ids must be integers, got {line!r}") from None
        if u < 0 or v < 0:
            raise EdgeListError(f"line {lineno}: node ids must be nonnegative")
        pairs.append((u, v))
    if not pairs:
        raise EdgeListError("edge list contains no edges")
    p = np.array(pairs, dtype=np.int64)
    loops = int(np.sum(p[:, 0] == p[:, 1]))
    if loops:
        log.info("dropped %d self-loop(s)", loops)
    n_raw = int(p.max()) + 1
    kept = p[p[:, 0] != p[:, 1]]
    if drop_isolated:
        ids = np.unique(kept)
        kept = np.searchsorted(ids, kept)
    else:
        ids = np.arange(n_raw)
    g = Graph.from_edges(len(ids), kept)
    if g.n_edges == 0:
        raise EdgeListError("edge list contains no edges after removing self-loops")
    return EdgeListRead(g, ids, loops, len(kept) - g.n_edges)


def read_edge_list(path, drop_isolated: bool = True) -> EdgeListRead:
    """Read an edge list; isolated nodes are removed and ids compacted by default."""
    with open(path, encoding="utf-8") as fh:
        return parse_edge_list(fh, drop_isolated)


def write_edge_list(g: Graph, path, header: str | None = None) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for u, v in g.edges:
            fh.write(f"{u} {v}\n")
