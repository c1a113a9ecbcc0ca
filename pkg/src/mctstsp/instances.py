"""Euclidean TSP instances: generation, file I/O and length arithmetic.

Random numbers come from numpy's ``PCG64`` bit generator (``np.random.default_rng``),
so instance suites are reproducible across machines for a given seed.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import MalformedInput, UnsupportedFormat

SQUARE_SIDE = 1e6
NUM_CLUSTERS = 4
CLUSTER_SIGMA = SQUARE_SIDE / 20

Tour = tuple[int, ...]


@dataclass(frozen=True, eq=False)
class TspInstance:
    """A complete undirected Euclidean graph.

    ``rounded`` selects the TSPLIB EUC_2D convention (distances rounded to the
    nearest integer). Instances hash by identity and are immutable.
    """

    points: np.ndarray
    coord_scale: float = SQUARE_SIDE
    rounded: bool = False
    name: str = ""
    dist: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"points must have shape (n, 2), got {pts.shape}")
        if pts.shape[0] < 2:
            raise ValueError("an instance needs at least 2 cities")
        if not np.all(np.isfinite(pts)):
            raise ValueError("coordinates must be finite")
        if not (self.coord_scale > 0 and math.isfinite(self.coord_scale)):
            raise ValueError("coord_scale must be positive and finite")
        diff = pts[:, None, :] - pts[None, :, :]
        d = np.sqrt((diff**2).sum(axis=-1))
        if self.rounded:
            d = np.floor(d + 0.5)
        pts.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "dist", d)
        object.__setattr__(self, "coord_scale", float(self.coord_scale))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def length_unit(self) -> float:
        """Divisor that brings lengths into the network's normalized units."""
        return self.coord_scale * math.sqrt(2.0)

    def __repr__(self):
        return f"TspInstance(name={self.name!r}, n={self.n}, rounded={self.rounded})"


class PathState:
    """Ordered partial tour (the traversed sequence) plus membership flags."""

    __slots__ = ("instance", "visited", "in_path")

    def __init__(self, instance: TspInstance, visited: Iterable[int] = ()):
        self.instance = instance
        self.visited: list[int] = []
        self.in_path = np.zeros(instance.n, dtype=bool)
        for v in visited:
            self.append(v)

    @classmethod
    def start(cls, instance: TspInstance, city: int) -> "PathState":
        return cls(instance, (city,))

    def append(self, v: int) -> None:
        v = int(v)
        if not 0 <= v < self.instance.n:
            raise ValueError(f"city index {v} out of range for n={self.instance.n}")
        if self.in_path[v]:
            raise ValueError(f"city {v} is already in the path")
        self.visited.append(v)
        self.in_path[v] = True

    def extended(self, v: int) -> "PathState":
        new = PathState.__new__(PathState)
        new.instance = self.instance
        new.visited = list(self.visited)
        new.in_path = self.in_path.copy()
        new.append(v)
        return new

    def unvisited(self) -> list[int]:
        return np.flatnonzero(~self.in_path).tolist()

    @property
    def first(self) -> int:
        return self.visited[0]

    @property
    def last(self) -> int:
        return self.visited[-1]

    def is_terminal(self) -> bool:
        return len(self.visited) == self.instance.n

    def __len__(self):
        return len(self.visited)

    def __repr__(self):
        return f"PathState({self.visited})"


# -- generators ---------------------------------------------------------------


def gen_random(n: int, seed, name: str = "") -> TspInstance:
    """``n`` points uniform over the square [0, 1e6]^2."""
    if n < 2:
        raise ValueError(f"random instances need n >= 2, got {n}")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0.0, SQUARE_SIDE, size=(n, 2))
    return TspInstance(pts, SQUARE_SIDE, name=name)


def gen_clustered(n: int, seed, name: str = "") -> TspInstance:
    """Four Gaussian clusters with uniformly placed centers, points assigned round-robin."""
    if n < NUM_CLUSTERS:
        raise ValueError(f"clustered instances need n >= {NUM_CLUSTERS}, got {n}")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.0, SQUARE_SIDE, size=(NUM_CLUSTERS, 2))
    offsets = rng.normal(0.0, CLUSTER_SIGMA, size=(n, 2))
    pts = centers[np.arange(n) % NUM_CLUSTERS] + offsets
    np.clip(pts, 0.0, SQUARE_SIDE, out=pts)
    return TspInstance(pts, SQUARE_SIDE, name=name)


# -- lengths ------------------------------------------------------------------


def edge_weight(inst: TspInstance, i: int, j: int) -> float:
    n = inst.n
    if not (0 <= i < n and 0 <= j < n):
        raise ValueError(f"city index out of range: ({i}, {j}) for n={n}")
    return float(inst.dist[i, j])


def check_tour(inst: TspInstance, tour: Sequence[int]) -> np.ndarray:
    t = np.asarray(tour)
    if t.ndim != 1 or t.size != inst.n or not np.issubdtype(t.dtype, np.integer):
        raise ValueError(f"tour must list {inst.n} city indices")
    if not np.array_equal(np.sort(t), np.arange(inst.n)):
        raise ValueError("tour is not a permutation of the cities")
    return t


def tour_length(inst: TspInstance, tour: Sequence[int]) -> float:
    t = check_tour(inst, tour)
    return float(inst.dist[t, np.roll(t, -1)].sum())


def path_length(inst: TspInstance, seq: Sequence[int]) -> float:
    t = np.asarray(seq, dtype=np.intp)
    if t.size < 2:
        return 0.0
    return float(inst.dist[t[:-1], t[1:]].sum())


def partial_length(inst: TspInstance, state: PathState) -> float:
    """Length along the traversed sequence, without the closing edge."""
    if not state.visited:
        raise ValueError("partial_length of an empty path")
    return path_length(inst, state.visited)


def canonical_tour(tour: Sequence[int]) -> Tour:
    """Rotate to start at city 0 and orient so the second city is below the last."""
    t = [int(v) for v in tour]
    k = t.index(0)
    t = t[k:] + t[:k]
    if len(t) > 2 and t[1] > t[-1]:
        t = [t[0]] + t[:0:-1]
    return tuple(t)


# -- native text format -------------------------------------------------------
#
#   <n> <coord_scale> [exact|rounded]
#   <x> <y>            (n lines, floats written with repr so they round-trip)


def dumps_instance(inst: TspInstance) -> str:
    mode = "rounded" if inst.rounded else "exact"
    lines = [f"{inst.n} {inst.coord_scale!r} {mode}"]
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in inst.points]
    return "\n".join(lines) + "\n"


def loads_instance(text: str, name: str = "") -> TspInstance:
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows:
        raise MalformedInput("empty instance file")
    head = rows[0]
    try:
        n = int(head[0])
        scale = float(head[1])
    except (IndexError, ValueError):
        raise MalformedInput(f"bad header line: {' '.join(head)!r}") from None
    mode = head[2] if len(head) > 2 else "exact"
    if mode not in ("exact", "rounded"):
        raise MalformedInput(f"unknown distance mode {mode!r}")
    body = rows[1:]
    if len(body) != n:
        raise MalformedInput(f"header says {n} points, found {len(body)}")
    try:
        pts = [(float(r[0]), float(r[1])) for r in body]
    except (IndexError, ValueError):
        raise MalformedInput("coordinate lines must hold two numbers") from None
    return TspInstance(np.array(pts), scale, rounded=(mode == "rounded"), name=name)


def save_instance(inst: TspInstance, path) -> None:
    Path(path).write_text(dumps_instance(inst))


def dumps_tour(tour: Sequence[int]) -> str:
    return " ".join(str(int(v)) for v in tour) + "\n"


def loads_tour(text: str) -> Tour:
    try:
        return tuple(int(tok) for tok in text.split())
    except ValueError:
        raise MalformedInput("tour file must hold whitespace-separated integers") from None


# -- TSPLIB -------------------------------------------------------------------

_KEYWORD = re.compile(r"^\s*([A-Z_]+)\s*(?::\s*(.*))?$")


def parse_tsplib(text: str) -> TspInstance:
    """Read an EUC_2D TSPLIB problem. TSPLIB ids (1-based) become 0-based indices."""
    header: dict[str, str] = {}
    coords: dict[int, tuple[float, float]] = {}
    lines = iter(text.splitlines())
    for raw in lines:
        line = raw.strip()
        if not line:
            continue
        m = _KEYWORD.match(line)
        if m is None:
            raise MalformedInput(f"unexpected line {line!r}")
        key, value = m.group(1), (m.group(2) or "").strip()
        if key == "EOF":
            break
        if key == "NODE_COORD_SECTION":
            for raw in lines:
                line = raw.strip()
                if not line:
                    continue
                if line == "EOF":
                    break
                parts = line.split()
                if len(parts) != 3:
                    raise MalformedInput(f"bad coordinate line {line!r}")
                try:
                    coords[int(parts[0])] = (float(parts[1]), float(parts[2]))
                except ValueError:
                    raise MalformedInput(f"bad coordinate line {line!r}") from None
            break
        header[key] = value

    wtype = header.get("EDGE_WEIGHT_TYPE")
    if wtype != "EUC_2D":
        raise UnsupportedFormat(f"EDGE_WEIGHT_TYPE {wtype!r} not supported (EUC_2D only)")
    if header.get("TYPE", "TSP").split()[0] != "TSP":
        raise UnsupportedFormat(f"TYPE {header['TYPE']!r} not supported")
    try:
        dim = int(header["DIMENSION"])
    except (KeyError, ValueError):
        raise MalformedInput("missing or invalid DIMENSION") from None
    if len(coords) != dim:
        raise MalformedInput(f"DIMENSION is {dim} but {len(coords)} coordinates were given")
    if sorted(coords) != list(range(1, dim + 1)):
        raise MalformedInput("node ids must be 1..DIMENSION")
    pts = np.array([coords[i] for i in range(1, dim + 1)])
    scale = float(np.abs(pts).max()) or 1.0
    return TspInstance(pts, scale, rounded=True, name=header.get("NAME", ""))


def parse_tsplib_tour(text: str) -> Tour:
    """Read a TSPLIB TOUR_SECTION into 0-based indices."""
    out: list[int] = []
    in_section = False
    for tok in text.split():
        if tok == "TOUR_SECTION":
            in_section = True
            continue
        if not in_section:
            continue
        if tok in ("-1", "EOF"):
            break
        out.append(int(tok) - 1)
    if not out:
        raise MalformedInput("no TOUR_SECTION found")
    return tuple(out)


def load_instance(path) -> TspInstance:
    """Load a ``.tsp`` (TSPLIB) file or a native instance file."""
    p = Path(path)
    text = p.read_text()
    if p.suffix.lower() == ".tsp":
        inst = parse_tsplib(text)
        return inst if inst.name else TspInstance(inst.points, inst.coord_scale, True, p.stem)
    return loads_instance(text, name=p.stem)
