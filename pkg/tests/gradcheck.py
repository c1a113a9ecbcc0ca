"""Finite-difference check of the hand-written loss gradient."""

import numpy as np

from mctstsp.embed_net import EmbeddingParams, _embed, _pack, _readout, edge_messages, init_params, loss, loss_and_grad
from mctstsp.instances import gen_random
from mctstsp.trainer import Experience


def random_batch(inst, rng, size):
    n = inst.n
    batch = []
    for _ in range(size):
        perm = rng.permutation(n)
        k = int(rng.integers(1, n))
        batch.append(Experience(inst, tuple(perm[:k].tolist()), int(perm[k]), float(rng.uniform(0.1, 2.0))))
    return batch


FD_STEP = 1e-5
KINK_TOL = 1e-6


def _relu_inputs(p, batch):
    """All relu pre-activations that the loss passes through, flattened."""
    out = []
    for x, w, nodes, _ in _pack(batch):
        pre, c = edge_messages(p, w)
        hs, zs, _ = _embed(p, x, c @ p.theta3.T)
        _, (_, z) = _readout(p, hs[-1], nodes)
        out += [pre[w > 0].ravel(), *(zt.ravel() for zt in zs), z.ravel()]
    return np.concatenate(out)


def fd_gradient_check(seed, n=6, batch_size=6, c=1e-3, samples=80):
    """Max relative error over sampled coordinates whose perturbation does not cross a relu kink."""
    inst = gen_random(n, [77, seed])
    rng = np.random.default_rng(seed)
    batch = random_batch(inst, rng, batch_size)
    p = init_params(seed)
    _, g = loss_and_grad(p, batch, c)
    worst, checked, skipped = 0.0, 0, 0
    base_signs = _relu_inputs(p, batch)
    names = list(EmbeddingParams.shapes())
    picks = []
    for name, block in zip(names, p.blocks()):
        # every block gets coordinates, small blocks entirely
        k = min(block.size, samples // len(names) + 1)
        for flat in rng.choice(block.size, size=k, replace=False):
            picks.append((name, block, np.unravel_index(flat, block.shape)))
    for name, block, idx in picks:
        gblock = getattr(g, name)
        orig = block[idx]
        block[idx] = orig + FD_STEP
        up, z_up = loss(p, batch, c), _relu_inputs(p, batch)
        block[idx] = orig - FD_STEP
        down, z_down = loss(p, batch, c), _relu_inputs(p, batch)
        block[idx] = orig
        near = np.abs(base_signs) < KINK_TOL
        crossed = (np.sign(z_up) != np.sign(base_signs)) | (np.sign(z_down) != np.sign(base_signs))
        if np.any(crossed | (near & (z_up != base_signs))):
            skipped += 1
            continue
        fd = (up - down) / (2 * FD_STEP)
        an = gblock[idx]
        err = abs(fd - an) / max(abs(fd), abs(an), 1e-6)
        worst = max(worst, err)
        checked += 1
    return worst, checked, skipped
