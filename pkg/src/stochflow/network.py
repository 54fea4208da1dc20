"""Stochastic flow network model, model files, and benchmark topologies.

A model is a graph whose links carry independent discrete random capacities,
together with a source, a sink and an integer demand.  Links are undirected
unless the model says otherwise.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

__all__ = [
    "ModelError",
    "Link",
    "NetworkModel",
    "ParametricFamily",
    "load_model",
    "dump_model",
    "save_model",
    "normalize_levels",
    "builtin",
    "lattice",
    "dodecahedron",
    "DODECAHEDRON_LINKS",
]

PROB_TOL = 1e-12


class ModelError(ValueError):
    """Raised for malformed or infeasible network models."""


@dataclass(frozen=True)
class Link:
    """One link with its capacity levels and their probabilities."""

    tail: int
    head: int
    levels: tuple[int, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        levels = tuple(int(c) for c in self.levels)
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "probs", probs)
        if len(levels) != len(probs):
            raise ModelError(
                f"link ({self.tail},{self.head}): {len(levels)} levels "
                f"but {len(probs)} probabilities"
            )
        if len(levels) < 2:
            raise ModelError(
                f"link ({self.tail},{self.head}) has a single capacity level; "
                "constant links are not supported"
            )
        if levels[0] < 0:
            raise ModelError(f"link ({self.tail},{self.head}): negative capacity")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ModelError(
                f"link ({self.tail},{self.head}): levels must be strictly increasing"
            )
        if any(not p > 0.0 or not math.isfinite(p) for p in probs):
            raise ModelError(
                f"link ({self.tail},{self.head}): probabilities must be positive"
            )

    @property
    def b(self) -> int:
        """Index of the top capacity level."""
        return len(self.levels) - 1


@dataclass(frozen=True)
class NetworkModel:
    """Immutable stochastic flow network.

    Parameters
    ----------
    nodes : int
        Number of nodes; node ids are ``0 .. nodes-1``.
    links : sequence of Link
        Links in a fixed order; link ``i`` of the model is ``links[i]``.
    source, sink : int
        Terminal nodes.
    demand : int
        Flow units that must reach the sink.
    directed : bool
        When false (default) every link carries flow in both directions.
    """

    nodes: int
    links: tuple[Link, ...]
    source: int
    sink: int
    demand: int
    directed: bool = False
    _digest: str = field(default="", repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        if self.nodes < 2:
            raise ModelError("a network needs at least two nodes")
        if not self.links:
            raise ModelError("a network needs at least one link")
        for link in self.links:
            for v in (link.tail, link.head):
                if not 0 <= v < self.nodes:
                    raise ModelError(f"unknown node {v} (nodes are 0..{self.nodes - 1})")
            if link.tail == link.head:
                raise ModelError(f"self-loop at node {link.tail}")
        for v in (self.source, self.sink):
            if not 0 <= v < self.nodes:
                raise ModelError(f"unknown terminal node {v}")
        if self.source == self.sink:
            raise ModelError("source and sink must differ")
        if int(self.demand) != self.demand or self.demand < 1:
            raise ModelError("demand must be a positive integer")
        object.__setattr__(self, "demand", int(self.demand))

    @property
    def m(self) -> int:
        return len(self.links)

    @property
    def endpoints(self) -> np.ndarray:
        """``(m, 2)`` int array of link endpoints."""
        return np.array([(l.tail, l.head) for l in self.links], dtype=np.int64)

    def base_capacities(self) -> np.ndarray:
        return np.array([l.levels[0] for l in self.links], dtype=np.int64)

    def top_capacities(self) -> np.ndarray:
        return np.array([l.levels[-1] for l in self.links], dtype=np.int64)

    def state_count(self) -> int:
        return math.prod(len(l.levels) for l in self.links)

    def is_normalized(self) -> bool:
        return all(l.levels[-1] <= self.demand for l in self.links)

    def with_demand(self, demand: int) -> "NetworkModel":
        return NetworkModel(self.nodes, self.links, self.source, self.sink, demand, self.directed)

    def to_dict(self) -> dict:
        doc = {
            "nodes": self.nodes,
            "links": [
                {"from": l.tail, "to": l.head, "levels": list(l.levels), "probs": list(l.probs)}
                for l in self.links
            ],
            "source": self.source,
            "sink": self.sink,
            "demand": self.demand,
        }
        if self.directed:
            doc["directed"] = True
        return doc

    def digest(self) -> str:
        """Short content hash of the canonical serialization."""
        if not self._digest:
            h = hashlib.sha256(dump_model(self).encode()).hexdigest()[:16]
            object.__setattr__(self, "_digest", h)
        return self._digest


@dataclass(frozen=True)
class ParametricFamily:
    """Capacity law ``P(X_i = k) = rho**(b - k - 1) * eps`` for ``k < b``.

    The top level ``b`` takes the remaining mass.  ``b`` is either a single
    integer shared by all links or a per-link sequence.
    """

    rho: float
    epsilon: float
    b: int | Sequence[int] = 1

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ModelError(f"rho must lie in (0, 1), got {self.rho}")
        if not self.epsilon > 0.0:
            raise ModelError(f"epsilon must be positive, got {self.epsilon}")

    def levels_for(self, i: int) -> int:
        return int(self.b) if np.isscalar(self.b) else int(self.b[i])

    def link_law(self, b: int) -> tuple[tuple[int, ...], tuple[float, ...]]:
        if b < 1:
            raise ModelError("each link needs at least two capacity levels (b >= 1)")
        low = [self.rho ** (b - k - 1) * self.epsilon for k in range(b)]
        total = math.fsum(low)
        if not total < 1.0:
            raise ModelError(
                f"rho={self.rho}, epsilon={self.epsilon}, b={b}: "
                f"sub-maximal probabilities sum to {total:.6g} >= 1"
            )
        # top-level mass is the complement of the small side
        return tuple(range(b + 1)), tuple(low + [1.0 - total])


def _canonical_float(x: float) -> str:
    return format(float(x), ".17g")


def dump_model(model: NetworkModel) -> str:
    """Byte-stable JSON text of a model (sorted keys, 17 significant digits)."""

    def enc(obj, indent=0):
        pad = "  " * indent
        if isinstance(obj, dict):
            items = [f'{pad}  "{k}": {enc(obj[k], indent + 1).lstrip()}' for k in sorted(obj)]
            return pad + "{\n" + ",\n".join(items) + "\n" + pad + "}"
        if isinstance(obj, list):
            if all(not isinstance(v, (dict, list)) for v in obj):
                return pad + "[" + ", ".join(enc(v) for v in obj) + "]"
            return pad + "[\n" + ",\n".join(enc(v, indent + 1) for v in obj) + "\n" + pad + "]"
        if isinstance(obj, bool):
            return pad + ("true" if obj else "false")
        if isinstance(obj, float):
            return pad + _canonical_float(obj)
        return pad + json.dumps(obj)

    return enc(model.to_dict()) + "\n"


def save_model(model: NetworkModel, path: str | Path) -> None:
    Path(path).write_text(dump_model(model))


def _parse_link(doc: Mapping, idx: int) -> Link:
    try:
        tail, head = int(doc["from"]), int(doc["to"])
        levels = [int(c) for c in doc["levels"]]
        probs = [float(p) for p in doc["probs"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelError(f"link {idx}: malformed entry ({exc})") from None
    if len(levels) != len(probs):
        raise ModelError(f"link {idx}: {len(levels)} levels but {len(probs)} probabilities")
    if any(p < 0 for p in probs):
        raise ModelError(f"link {idx}: negative probability")
    total = math.fsum(probs)
    if abs(total - 1.0) > PROB_TOL:
        raise ModelError(f"link {idx}: probabilities sum to {total:.12g}")
    kept = [(c, p) for c, p in zip(levels, probs) if p > 0.0]
    levels = [c for c, _ in kept]
    # rounding-level deviations are left alone so that load(dump(m)) == m
    scale = total if abs(total - 1.0) > 1e-15 else 1.0
    probs = [p / scale for _, p in kept]
    return Link(tail, head, tuple(levels), tuple(probs))


def load_model(source: str | Path | Mapping) -> NetworkModel:
    """Build a validated model from a file path, JSON text or parsed document.

    Zero-probability levels are dropped and probabilities are renormalized;
    sums further than ``1e-12`` from one are rejected.
    """
    if isinstance(source, Mapping):
        doc = source
    else:
        text = str(source)
        if isinstance(source, Path) or not text.lstrip().startswith("{"):
            text = Path(source).read_text()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelError(f"model document is not valid JSON: {exc}") from None
    missing = {"nodes", "links", "source", "sink", "demand"} - set(doc)
    if missing:
        raise ModelError(f"model document lacks {sorted(missing)}")
    if not isinstance(doc["links"], list):
        raise ModelError("'links' must be a list")
    links = [_parse_link(l, i) for i, l in enumerate(doc["links"])]
    return NetworkModel(
        nodes=int(doc["nodes"]),
        links=tuple(links),
        source=int(doc["source"]),
        sink=int(doc["sink"]),
        demand=int(doc["demand"]),
        directed=bool(doc.get("directed", False)),
    )


def normalize_levels(model: NetworkModel) -> NetworkModel:
    """Merge capacity levels above the demand into a single level at the demand.

    The law of ``min(X_i, demand)`` is unchanged, hence so is the
    unreliability.  Links whose levels all collapse to one value are rejected
    since they would be constant.
    """
    d = model.demand
    out = []
    for link in model.links:
        if link.levels[-1] <= d:
            out.append(link)
            continue
        levels = [c for c in link.levels if c < d]
        probs = [p for c, p in zip(link.levels, link.probs) if c < d]
        levels.append(d)
        probs.append(math.fsum(p for c, p in zip(link.levels, link.probs) if c >= d))
        out.append(Link(link.tail, link.head, tuple(levels), tuple(probs)))
    return NetworkModel(model.nodes, tuple(out), model.source, model.sink, d, model.directed)


# Dodecahedron benchmark, 1-based node labels as in the usual figure: node 1 is
# the source with links 1-3, node 20 the sink with links 28-30.  Nodes are
# numbered by distance layer from node 1 (layers of size 1, 3, 6, 6, 3, 1) and
# links sorted by (smaller, larger) endpoint.
DODECAHEDRON_LINKS: tuple[tuple[int, int], ...] = (
    (1, 2), (1, 3), (1, 4), (2, 5), (2, 6), (3, 7), (3, 8), (4, 9), (4, 10),
    (5, 8), (5, 11), (6, 9), (6, 12), (7, 10), (7, 13), (8, 14), (9, 15),
    (10, 16), (11, 12), (11, 17), (12, 18), (13, 14), (13, 19), (14, 17),
    (15, 16), (15, 18), (16, 19), (17, 20), (18, 20), (19, 20),
)


def _family_links(pairs, family: ParametricFamily) -> tuple[Link, ...]:
    links = []
    for i, (v, w) in enumerate(pairs):
        levels, probs = family.link_law(family.levels_for(i))
        links.append(Link(v, w, levels, probs))
    return tuple(links)


def lattice(k: int, family: ParametricFamily, demand: int) -> NetworkModel:
    """``k x k`` grid, flow from corner node 0 to the opposite corner."""
    if k < 2:
        raise ModelError(f"lattice size must be at least 2, got {k}")
    pairs = []
    for r in range(k):
        for c in range(k):
            v = r * k + c
            if c + 1 < k:
                pairs.append((v, v + 1))
            if r + 1 < k:
                pairs.append((v, v + k))
    return NetworkModel(k * k, _family_links(pairs, family), 0, k * k - 1, demand)


def dodecahedron(family: ParametricFamily, demand: int) -> NetworkModel:
    pairs = [(v - 1, w - 1) for v, w in DODECAHEDRON_LINKS]
    return NetworkModel(20, _family_links(pairs, family), 0, 19, demand)


def builtin(name: str, family: ParametricFamily, demand: int) -> NetworkModel:
    """Look up a benchmark by name: ``"dodecahedron"``, ``"lattice:k"`` or ``"lattice"`` (k=4)."""
    key, _, arg = name.partition(":")
    key = key.strip().lower()
    if key == "dodecahedron":
        if arg:
            raise ModelError("dodecahedron takes no size argument")
        return dodecahedron(family, demand)
    if key == "lattice":
        try:
            k = int(arg) if arg else 4
        except ValueError:
            raise ModelError(f"bad lattice size {arg!r}") from None
        return lattice(k, family, demand)
    raise ModelError(f"unknown builtin network {name!r}")
