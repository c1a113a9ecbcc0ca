"""Graph-embedding value network with hand-written backprop and Adam.

Per node v the embedding recursion is::

    H[t+1, v] = relu(th1 @ x_v + th2 @ sum_{u != v} H[t, u] + th3 @ sum_{u != v} relu(th4 * w_vu))

starting from H[0] = 0, for T = 4 rounds, and the value readout is::

    h(v) = th5 . relu([th6 @ sum_u H[T, u], th7 @ H[T, v]])

All lengths (coordinates, edge weights, rewards, h) are expressed in units of
``coord_scale * sqrt(2)``, i.e. the diagonal of the bounding square.

Node feature layout (9 slots):

    0 traversed flag           3 is-first flag      6 w(v, last) normalized
    1 x / coord_scale          4 is-last flag       7 mean w(v, u) over u != v, normalized
    2 y / coord_scale          5 w(v, first) norm.  8 constant 1
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError
from .instances import PathState, TspInstance

FEATURE_DIM = 9
EMBED_DIM = 64
T_ITERATIONS = 4
INIT_SCALE = 0.08


@dataclass
class EmbeddingParams:
    theta1: np.ndarray  # (l, 9)
    theta2: np.ndarray  # (l, l)
    theta3: np.ndarray  # (l, l)
    theta4: np.ndarray  # (l,)
    theta5: np.ndarray  # (2p,)
    theta6: np.ndarray  # (p, l)
    theta7: np.ndarray  # (p, l)

    @staticmethod
    def shapes(l: int = EMBED_DIM, p: int = EMBED_DIM) -> dict[str, tuple[int, ...]]:
        return {
            "theta1": (l, FEATURE_DIM),
            "theta2": (l, l),
            "theta3": (l, l),
            "theta4": (l,),
            "theta5": (2 * p,),
            "theta6": (p, l),
            "theta7": (p, l),
        }

    @property
    def l(self) -> int:
        return self.theta1.shape[0]

    @property
    def p(self) -> int:
        return self.theta6.shape[0]

    def blocks(self) -> list[np.ndarray]:
        return [getattr(self, f.name) for f in fields(self)]

    @classmethod
    def from_blocks(cls, blocks: Sequence[np.ndarray]) -> "EmbeddingParams":
        return cls(*[np.asarray(b, dtype=np.float64) for b in blocks])

    @classmethod
    def zeros(cls, l: int = EMBED_DIM, p: int = EMBED_DIM) -> "EmbeddingParams":
        return cls(*[np.zeros(s) for s in cls.shapes(l, p).values()])

    def zeros_like(self) -> "EmbeddingParams":
        return EmbeddingParams.from_blocks([np.zeros_like(b) for b in self.blocks()])

    def copy(self) -> "EmbeddingParams":
        return EmbeddingParams.from_blocks([b.copy() for b in self.blocks()])

    def validate(self) -> None:
        want = self.shapes(self.l, self.p)
        for name, block in zip(want, self.blocks()):
            if block.shape != want[name]:
                raise ValueError(f"{name} has shape {block.shape}, expected {want[name]}")
            if not np.all(np.isfinite(block)):
                raise ValueError(f"{name} has non-finite entries")

    def sq_norm(self) -> float:
        return float(sum((b * b).sum() for b in self.blocks()))

    def flat(self) -> np.ndarray:
        return np.concatenate([b.ravel() for b in self.blocks()])

    def __eq__(self, other):
        if not isinstance(other, EmbeddingParams):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.blocks(), other.blocks()))


def init_params(seed, l: int = EMBED_DIM, p: int = EMBED_DIM) -> EmbeddingParams:
    """Uniform in [-0.08, 0.08], drawn block by block in declaration order."""
    rng = np.random.default_rng(seed)
    return EmbeddingParams(*[rng.uniform(-INIT_SCALE, INIT_SCALE, size=s) for s in EmbeddingParams.shapes(l, p).values()])


# -- features -----------------------------------------------------------------


class InstanceFeatures:
    """Per-instance constants: normalized weights, coordinates and mean weights."""

    __slots__ = ("weights", "coords", "mean_weight")

    def __init__(self, inst: TspInstance):
        n = inst.n
        self.weights = inst.dist / inst.length_unit
        self.coords = inst.points / inst.coord_scale
        self.mean_weight = self.weights.sum(axis=1) / (n - 1)


_FEATURE_CACHE: dict[int, tuple[TspInstance, InstanceFeatures]] = {}


def instance_features(inst: TspInstance) -> InstanceFeatures:
    hit = _FEATURE_CACHE.get(id(inst))
    if hit is not None and hit[0] is inst:
        return hit[1]
    if len(_FEATURE_CACHE) > 256:
        _FEATURE_CACHE.clear()
    feats = InstanceFeatures(inst)
    _FEATURE_CACHE[id(inst)] = (inst, feats)
    return feats


def state_features(state: PathState) -> np.ndarray:
    """(n, 9) feature matrix of a non-empty path state."""
    if not state.visited:
        raise ValueError("features need a non-empty path")
    inst = state.instance
    f = instance_features(inst)
    first, last = state.visited[0], state.visited[-1]
    x = np.zeros((inst.n, FEATURE_DIM))
    x[:, 0] = state.in_path
    x[:, 1:3] = f.coords
    x[first, 3] = 1.0
    x[last, 4] = 1.0
    x[:, 5] = f.weights[:, first]
    x[:, 6] = f.weights[:, last]
    x[:, 7] = f.mean_weight
    x[:, 8] = 1.0
    return x


def node_features(state: PathState, v: int) -> np.ndarray:
    if not 0 <= v < state.instance.n:
        raise ValueError(f"city index {v} out of range")
    return state_features(state)[v]


def successor_features(state: PathState, candidates: Sequence[int]) -> np.ndarray:
    """Features of ``state + [v]`` for each candidate v, shape (k, n, 9)."""
    base = state_features(state)
    f = instance_features(state.instance)
    cand = np.asarray(candidates, dtype=np.intp)
    k = cand.size
    x = np.repeat(base[None], k, axis=0)
    rows = np.arange(k)
    x[rows, cand, 0] = 1.0
    x[:, state.visited[-1], 4] = 0.0
    x[rows, cand, 4] = 1.0
    x[:, :, 6] = f.weights[:, cand].T
    return x


# -- forward / backward -------------------------------------------------------


def _relu(z):
    return np.maximum(z, 0.0)


def edge_messages(params: EmbeddingParams, weights: np.ndarray):
    """Return (pre, C): pre-activations th4*w_vu and C_v = sum_u relu(th4 w_vu).

    The u = v term contributes relu(0) = 0, so no mask is needed.
    """
    pre = weights[..., None] * params.theta4
    return pre, _relu(pre).sum(axis=-2)


def _embed(params: EmbeddingParams, x: np.ndarray, edge_term: np.ndarray):
    """Run the T rounds. x: (..., n, 9); edge_term broadcastable to (..., n, l)."""
    u_term = x @ params.theta1.T + edge_term
    hs = [np.zeros(u_term.shape)]
    zs, ss = [], []
    for _ in range(T_ITERATIONS):
        h = hs[-1]
        s = h.sum(axis=-2, keepdims=True) - h
        z = u_term + s @ params.theta2.T
        ss.append(s)
        zs.append(z)
        hs.append(_relu(z))
    return hs, zs, ss


@dataclass
class EmbeddingState:
    H: list[np.ndarray]  # T + 1 arrays of shape (n, l); H[0] is zero

    @property
    def final(self) -> np.ndarray:
        return self.H[-1]


def embed_forward(params: EmbeddingParams, inst: TspInstance, state: PathState) -> EmbeddingState:
    if params.theta1.shape[1] != FEATURE_DIM or params.theta2.shape != (params.l, params.l):
        raise ValueError("parameter dimensions are inconsistent")
    f = instance_features(inst)
    _, c = edge_messages(params, f.weights)
    hs, _, _ = _embed(params, state_features(state), c @ params.theta3.T)
    return EmbeddingState(hs)


def _readout(params: EmbeddingParams, h_final: np.ndarray, nodes: np.ndarray):
    pooled = h_final.sum(axis=-2)
    a = pooled @ params.theta6.T
    b = np.take_along_axis(h_final, nodes[..., None, None], axis=-2)[..., 0, :] @ params.theta7.T
    z = np.concatenate([a, b], axis=-1)
    return _relu(z) @ params.theta5, (pooled, z)


def value_h(params: EmbeddingParams, emb: EmbeddingState, v: int) -> float:
    final = emb.final
    if not 0 <= v < final.shape[0]:
        raise ValueError(f"city index {v} out of range")
    out, _ = _readout(params, final, np.asarray(v))
    return float(out)


def successor_values(params: EmbeddingParams, state: PathState, candidates: Sequence[int], edge_term=None) -> np.ndarray:
    """h(v) evaluated on ``state + [v]`` for every candidate v (normalized units).

    ``edge_term`` (n, l) may be passed in to skip recomputing the state-independent
    distance messages.
    """
    cand = np.asarray(candidates, dtype=np.intp)
    if cand.size == 0:
        return np.zeros(0)
    if edge_term is None:
        edge_term = instance_edge_term(params, state.instance)
    x = successor_features(state, cand)
    hs, _, _ = _embed(params, x, edge_term)
    out, _ = _readout(params, hs[-1], cand)
    return out


def instance_edge_term(params: EmbeddingParams, inst: TspInstance) -> np.ndarray:
    _, c = edge_messages(params, instance_features(inst).weights)
    return c @ params.theta3.T


# -- loss and gradient --------------------------------------------------------


def _pack(batch) -> list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
    """Group experiences by city count into (x, w, node, target) arrays."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    groups: dict[int, list] = {}
    for e in batch:
        groups.setdefault(e.instance.n, []).append(e)
    packed = []
    for _, items in sorted(groups.items()):
        xs, ws, nodes, targets = [], [], [], []
        for e in items:
            state = PathState(e.instance, e.visited)
            xs.append(successor_features(state, [e.action])[0])
            ws.append(instance_features(e.instance).weights)
            nodes.append(e.action)
            targets.append(e.reward)
        packed.append((np.stack(xs), np.stack(ws), np.array(nodes, dtype=np.intp), np.array(targets, dtype=np.float64)))
    return packed


def _predict(params: EmbeddingParams, x, w, nodes):
    pre, c = edge_messages(params, w)
    hs, zs, ss = _embed(params, x, c @ params.theta3.T)
    out, (pooled, z) = _readout(params, hs[-1], nodes)
    return out, (pre, c, hs, zs, ss, pooled, z)


def loss(params: EmbeddingParams, batch, l2_coeff: float = 0.0) -> float:
    """Mean squared error of h against the stored rewards plus c * ||Theta||^2."""
    packed = _pack(batch)
    sse = 0.0
    for x, w, nodes, target in packed:
        out, _ = _predict(params, x, w, nodes)
        sse += float(((target - out) ** 2).sum())
    return sse / len(batch) + l2_coeff * params.sq_norm()


def loss_and_grad(params: EmbeddingParams, batch, l2_coeff: float = 0.0) -> tuple[float, EmbeddingParams]:
    packed = _pack(batch)
    total = len(batch)
    g = params.zeros_like()
    sse = 0.0
    for x, w, nodes, target in packed:
        out, (pre, c, hs, zs, ss, pooled, z) = _predict(params, x, w, nodes)
        resid = out - target
        sse += float((resid**2).sum())
        d_out = 2.0 * resid / total  # (B,)
        bsz = x.shape[0]
        rows = np.arange(bsz)
        p = params.p

        y = _relu(z)
        g.theta5 += d_out @ y
        dz = (d_out[:, None] * params.theta5) * (z > 0)
        da, db = dz[:, :p], dz[:, p:]
        h_last = hs[-1]
        h_node = h_last[rows, nodes]
        g.theta6 += da.T @ pooled
        g.theta7 += db.T @ h_node
        dh = np.repeat((da @ params.theta6)[:, None, :], h_last.shape[1], axis=1)
        dh[rows, nodes] += db @ params.theta7

        du = np.zeros_like(dh)
        for t in range(T_ITERATIONS - 1, -1, -1):
            dzt = dh * (zs[t] > 0)
            du += dzt
            g.theta2 += np.einsum("bvi,bvj->ij", dzt, ss[t])
            if t == 0:
                break
            ds = dzt @ params.theta2
            dh = ds.sum(axis=1, keepdims=True) - ds

        g.theta1 += np.einsum("bvi,bvj->ij", du, x)
        g.theta3 += np.einsum("bvi,bvj->ij", du, c)
        dc = du @ params.theta3  # (B, n, l)
        g.theta4 += np.einsum("bvi,bvui,bvu->i", dc, (pre > 0).astype(np.float64), w)

    if l2_coeff:
        for gb, pb in zip(g.blocks(), params.blocks()):
            gb += 2.0 * l2_coeff * pb
    return sse / total + l2_coeff * params.sq_norm(), g


def grad(params: EmbeddingParams, batch, l2_coeff: float = 0.0) -> EmbeddingParams:
    return loss_and_grad(params, batch, l2_coeff)[1]


# -- Adam ---------------------------------------------------------------------

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    m: EmbeddingParams
    v: EmbeddingParams
    step: int = 0

    @classmethod
    def for_params(cls, params: EmbeddingParams) -> "AdamState":
        return cls(params.zeros_like(), params.zeros_like(), 0)


def adam_step(params: EmbeddingParams, adam: AdamState, grads: EmbeddingParams, lr: float):
    """One bias-corrected Adam update. Returns new (params, adam); inputs are not mutated."""
    pb, gb = params.blocks(), grads.blocks()
    if any(p.shape != q.shape for p, q in zip(pb, gb)) or any(p.shape != q.shape for p, q in zip(pb, adam.m.blocks())):
        raise ValueError("parameter, gradient and moment shapes differ")
    step = adam.step + 1
    c1 = 1.0 - ADAM_BETA1**step
    c2 = 1.0 - ADAM_BETA2**step
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(pb, gb, adam.m.blocks(), adam.v.blocks()):
        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS))
        new_m.append(m)
        new_v.append(v)
    return (
        EmbeddingParams.from_blocks(new_p),
        AdamState(EmbeddingParams.from_blocks(new_m), EmbeddingParams.from_blocks(new_v), step),
    )


# -- checkpoints --------------------------------------------------------------
#
# little-endian header: magic(8) version(u32) l(u32) p(u32) features(u32) adam_step(u64) has_adam(u32)
# then float64 row-major blocks theta1..theta7, followed by m1..m7, v1..v7 when has_adam.

MAGIC = b"MCTSTSP\x00"
VERSION = 1
_HEADER = struct.Struct("<8sIIIIQI")


def save_checkpoint(path, params: EmbeddingParams, adam: AdamState | None = None) -> None:
    parts = [_HEADER.pack(MAGIC, VERSION, params.l, params.p, FEATURE_DIM, adam.step if adam else 0, int(adam is not None))]
    groups = [params] + ([adam.m, adam.v] if adam else [])
    for group in groups:
        for block in group.blocks():
            parts.append(np.ascontiguousarray(block, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> tuple[EmbeddingParams, AdamState | None]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError("checkpoint too short")
    magic, version, l, p, nfeat, step, has_adam = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError("not a checkpoint file")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if nfeat != FEATURE_DIM:
        raise FormatError(f"checkpoint uses {nfeat} node features, expected {FEATURE_DIM}")
    shapes = list(EmbeddingParams.shapes(l, p).values())
    per_group = sum(int(np.prod(s)) for s in shapes)
    ngroups = 3 if has_adam else 1
    expected = _HEADER.size + 8 * per_group * ngroups
    if len(data) != expected:
        raise FormatError(f"checkpoint has {len(data)} bytes, expected {expected}")
    flat = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    groups, pos = [], 0
    for _ in range(ngroups):
        blocks = []
        for s in shapes:
            size = int(np.prod(s))
            blocks.append(flat[pos : pos + size].reshape(s).copy())
            pos += size
        groups.append(EmbeddingParams.from_blocks(blocks))
    adam = AdamState(groups[1], groups[2], int(step)) if has_adam else None
    return groups[0], adam


def dump_text(params: EmbeddingParams) -> str:
    """Human-readable parameter dump, one block per theta."""
    out = []
    for f, block in zip(fields(params), params.blocks()):
        out.append(f"# {f.name} shape={block.shape}")
        rows = block.reshape(block.shape[0], -1) if block.ndim > 1 else block[None]
        out.extend(" ".join(f"{v:.8g}" for v in row) for row in rows)
    return "\n".join(out) + "\n"
