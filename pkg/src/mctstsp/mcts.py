"""Tree search over partial tours, guided by a learned completion-length estimate.

Each node holds a partial path; its reward is ``-f`` with ``f = g + h`` where
``g`` is the traversed length and ``h`` estimates the remaining length back to
the start city. Nodes remember the best (largest) reward seen in their subtree
and siblings are min-max normalized to [0, 1] before the UCT comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from .embed_net import EmbeddingParams, instance_edge_term, successor_values
from .errors import ContractViolation
from .instances import PathState, Tour, TspInstance, tour_length
from .oracles import HeldKarpTable


class CompletionValue(Protocol):
    """Estimated remaining length (normalized units) after appending each candidate."""

    def __call__(self, state: PathState, candidates: Sequence[int]) -> np.ndarray: ...


class NetworkValue:
    """Wraps network parameters; caches the distance messages per instance."""

    def __init__(self, params: EmbeddingParams):
        self.params = params
        self._edge_cache: dict[int, tuple[TspInstance, np.ndarray]] = {}

    def __call__(self, state, candidates):
        inst = state.instance
        hit = self._edge_cache.get(id(inst))
        if hit is None or hit[0] is not inst:
            if len(self._edge_cache) > 64:
                self._edge_cache.clear()
            hit = (inst, instance_edge_term(self.params, inst))
            self._edge_cache[id(inst)] = hit
        return successor_values(self.params, state, candidates, edge_term=hit[1])


class ExactCompletion:
    """Optimal remaining length from a Held-Karp table; only for small n."""

    def __init__(self):
        self._tables: dict[tuple[int, int], tuple[TspInstance, HeldKarpTable]] = {}

    def __call__(self, state, candidates):
        inst = state.instance
        key = (id(inst), state.first)
        hit = self._tables.get(key)
        if hit is None or hit[0] is not inst:
            hit = (inst, HeldKarpTable(inst, state.first))
            self._tables[key] = hit
        table = hit[1]
        rest = set(state.unvisited())
        out = [table.completion(v, rest - {v}) for v in candidates]
        return np.asarray(out) / inst.length_unit


class ZeroValue:
    def __call__(self, state, candidates):
        return np.zeros(len(candidates))


def as_value(value) -> CompletionValue:
    if isinstance(value, EmbeddingParams):
        return NetworkValue(value)
    if callable(value):
        return value
    raise TypeError(f"cannot use {type(value).__name__} as a value function")


@dataclass(frozen=True)
class SearchConfig:
    playouts: int = 400
    c_p: float = 0.5
    expansion_threshold: int = 40

    def __post_init__(self):
        if self.playouts < 1:
            raise ValueError("playouts must be >= 1")
        if self.c_p < 0:
            raise ValueError("c_p must be >= 0")
        if self.expansion_threshold < 1:
            raise ValueError("expansion_threshold must be >= 1")


class SearchNode:
    __slots__ = ("state", "action", "parent", "g", "reward", "visit_count", "best_reward_raw", "q_normalized", "children", "expanded")

    def __init__(self, state: PathState, action: int | None = None, parent: "SearchNode | None" = None, g: float = 0.0):
        self.state = state
        self.action = action
        self.parent = parent
        self.g = g  # traversed length, normalized
        self.reward = -math.inf  # this node's own evaluation, -f
        self.visit_count = 0
        self.best_reward_raw = -math.inf
        self.q_normalized = 0.5
        self.children: list[SearchNode] = []
        self.expanded = False

    def __repr__(self):
        return f"SearchNode(action={self.action}, N={self.visit_count}, best={self.best_reward_raw:.6g}, q={self.q_normalized:.3f})"


def _root(state: PathState) -> SearchNode:
    return SearchNode(state, g=_traversed(state))


def _traversed(state: PathState) -> float:
    inst = state.instance
    v = np.asarray(state.visited, dtype=np.intp)
    return float(inst.dist[v[:-1], v[1:]].sum()) / inst.length_unit


def child_f_values(state: PathState, candidates: Sequence[int], value, g: float | None = None) -> np.ndarray:
    """f = g(state + v) + h(v) for every candidate; exact closing edge at the last step."""
    inst = state.instance
    unit = inst.length_unit
    cand = np.asarray(candidates, dtype=np.intp)
    if g is None:
        g = _traversed(state)
    g_next = g + inst.dist[state.last, cand] / unit
    if len(state) + 1 == inst.n:
        return g_next + inst.dist[cand, state.first] / unit
    return g_next + np.asarray(as_value(value)(state, cand), dtype=np.float64)


def f_value(state: PathState, v: int, value) -> float:
    if state.in_path[v]:
        raise ValueError(f"city {v} is already traversed")
    return float(child_f_values(state, [v], value)[0])


def normalize_siblings(parent: SearchNode) -> None:
    kids = parent.children
    if not kids:
        return
    lo = min(k.best_reward_raw for k in kids)
    hi = max(k.best_reward_raw for k in kids)
    if hi == lo:
        for k in kids:
            k.q_normalized = 0.5
        return
    span = hi - lo
    for k in kids:
        k.q_normalized = (k.best_reward_raw - lo) / span


def select_child(node: SearchNode, c_p: float) -> SearchNode:
    """argmax of q + c_p * sqrt(ln N_parent / N_child); first (lowest action) on ties."""
    if not node.expanded or not node.children:
        raise ContractViolation("select_child on an unexpanded node")
    log_n = math.log(node.visit_count) if node.visit_count > 0 else 0.0
    best, best_score = None, -math.inf
    for ch in node.children:
        if ch.visit_count < 1:
            raise ContractViolation("child without visits")
        score = ch.q_normalized + c_p * math.sqrt(log_n / ch.visit_count)
        if score > best_score:
            best, best_score = ch, score
    return best


def simulate(node: SearchNode, value) -> float:
    """Value lookup for a single node: the negated f of the move that produced it."""
    if node.parent is None or node.action is None:
        raise ContractViolation("simulate needs a node with a parent move")
    parent = node.parent
    return -float(child_f_values(parent.state, [node.action], value, g=parent.g)[0])


def expand(leaf: SearchNode, value, threshold: int) -> bool:
    """Create and evaluate every child once the leaf has been visited ``threshold`` times."""
    if leaf.state.is_terminal():
        raise ContractViolation("cannot expand a terminal state")
    if leaf.expanded:
        raise ContractViolation("node is already expanded")
    if leaf.visit_count < threshold:
        return False
    inst = leaf.state.instance
    cand = leaf.state.unvisited()
    f = child_f_values(leaf.state, cand, value, g=leaf.g)
    unit = inst.length_unit
    last = leaf.state.last
    for v, fv in zip(cand, f):
        ch = SearchNode(leaf.state.extended(v), v, leaf, leaf.g + inst.dist[last, v] / unit)
        ch.reward = ch.best_reward_raw = -float(fv)
        ch.visit_count = 1
        leaf.children.append(ch)
    leaf.expanded = True
    normalize_siblings(leaf)
    return True


def backprop(node: SearchNode, reward: float) -> None:
    """Count the visit and keep the best reward on every node up to the root."""
    cur = node
    while cur is not None:
        cur.visit_count += 1
        if reward > cur.best_reward_raw:
            cur.best_reward_raw = reward
            if cur.parent is not None:
                normalize_siblings(cur.parent)
        cur = cur.parent


def playout(root: SearchNode, value, config: SearchConfig) -> None:
    if not root.expanded:
        expand(root, value, 0)
        backprop(root, max(ch.reward for ch in root.children))
        return
    node = root
    while node.expanded:
        node = select_child(node, config.c_p)
    if not node.state.is_terminal() and expand(node, value, config.expansion_threshold):
        backprop(node, max(ch.reward for ch in node.children))
    else:
        backprop(node, node.reward)


def best_root_action(root: SearchNode) -> int:
    best = max(root.children, key=lambda ch: ch.best_reward_raw)  # first max -> lowest index
    return best.action


def run_search(root_state: PathState, value, config: SearchConfig) -> SearchNode:
    """Build the tree for one move and return its root."""
    if root_state.is_terminal():
        raise ValueError("search from a terminal state")
    value = as_value(value)
    root = _root(root_state)
    for _ in range(config.playouts):
        playout(root, value, config)
    return root


def search(root_state: PathState, params, config: SearchConfig, trace: list | None = None) -> int:
    """Pick the next city: the root child with the best raw reward after all playouts."""
    if root_state.is_terminal():
        raise ValueError("search from a terminal state")
    rest = root_state.unvisited()
    if len(rest) == 1:
        if trace is not None:
            trace.append({"step": len(root_state), "playouts": 0, "action": rest[0], "children": []})
        return rest[0]
    root = run_search(root_state, params, config)
    action = best_root_action(root)
    if trace is not None:
        trace.append(
            {
                "step": len(root_state),
                "playouts": root.visit_count,
                "action": action,
                "children": [
                    {"action": ch.action, "best_reward": ch.best_reward_raw, "visits": ch.visit_count} for ch in root.children
                ],
            }
        )
    return action


def solve_instance(inst: TspInstance, params, start: int, config: SearchConfig, trace: list | None = None) -> Tour:
    """Grow a tour from ``start`` one searched move at a time (fresh tree per move)."""
    if not 0 <= start < inst.n:
        raise ValueError(f"start city {start} out of range for n={inst.n}")
    value = as_value(params)
    state = PathState.start(inst, start)
    while not state.is_terminal():
        state.append(search(state, value, config, trace))
    return tuple(state.visited)


def best_of_starts(
    inst: TspInstance,
    params,
    config: SearchConfig,
    starts: Iterable[int],
    on_result: Callable[[int, Tour], None] | None = None,
) -> Tour:
    starts = sorted(set(int(s) for s in starts))
    if not starts:
        raise ValueError("need at least one start city")
    value = as_value(params)
    best, best_len = None, math.inf
    for s in starts:
        tour = solve_instance(inst, value, s, config)
        length = tour_length(inst, tour)
        if on_result is not None:
            on_result(s, tour)
        if length < best_len:
            best, best_len = tour, length
    return best
