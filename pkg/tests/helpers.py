"""Shared test oracles: finite differences, naive DFT, flood fill."""
from __future__ import annotations

import numpy as np

from whistlekit.nn import Model, loss_bce


def fd_gradients(model64: Model, x, y_onehot, seed: int, eps: float = 1e-5) -> dict:
    """Central finite differences over every weight of a float64 model."""
    params = model64.named_params()

    def loss_at() -> float:
        probs, _ = model64.forward(x, mode="train", rng_seed=seed)
        return loss_bce(probs, y_onehot)[0]

    out = {}
    for name, w in params.items():
        flat = w.reshape(-1)
        g = np.empty_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            lp = loss_at()
            flat[i] = orig - eps
            lm = loss_at()
            flat[i] = orig
            g[i] = (lp - lm) / (2 * eps)
        out[name] = g.reshape(w.shape)
    return out


def max_rel_error(analytic: dict, numeric: dict, floor: float = 1e-3) -> float:
    worst = 0.0
    for name in numeric:
        a = np.asarray(analytic[name], dtype=np.float64)
        n = np.asarray(numeric[name], dtype=np.float64)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def check_model_gradients(config, seed: int, batch: int = 4,
                          eps: float = 1e-5) -> tuple[float, float]:
    """(float32 analytic vs float64 FD, float64 analytic vs float64 FD)."""
    from whistlekit.nn import one_hot

    rng = np.random.default_rng(1000 + seed)
    x = rng.standard_normal((batch,) + tuple(config.input_shape))
    labels = rng.integers(0, 2, batch)

    m32 = Model(config, seed=seed, dtype=np.float32)
    probs, cache = m32.forward(x.astype(np.float32), mode="train", rng_seed=seed)
    _, dlog = loss_bce(probs, one_hot(labels, dtype=np.float32))
    g32 = m32.backward(cache, dlog)

    m64 = m32.astype(np.float64)
    y64 = one_hot(labels, dtype=np.float64)
    probs64, cache64 = m64.forward(x, mode="train", rng_seed=seed)
    _, dlog64 = loss_bce(probs64, y64)
    g64 = m64.backward(cache64, dlog64)

    fd = fd_gradients(m64, x, y64, seed, eps)
    fd = {name: fd[name] for name in g64}  # frozen layers have no analytic grads
    return max_rel_error(g32, fd), max_rel_error(g64, fd, floor=1e-6)


def naive_dft_power(frame: np.ndarray) -> np.ndarray:
    """O(N^2) DFT power spectrum for the first N//2+1 bins."""
    n = len(frame)
    k = np.arange(n // 2 + 1)[:, None]
    t = np.arange(n)[None, :]
    basis = np.exp(-2j * np.pi * k * t / n)
    return np.abs(basis @ frame) ** 2


def flood_fill_regions(mask: np.ndarray, connectivity: int):
    """Recursive-style (stack-based) flood fill oracle; sorted cell lists."""
    if connectivity == 4:
        neigh = ((-1, 0), (1, 0), (0, -1), (0, 1))
    else:
        neigh = tuple((di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1)
                      if (di, dj) != (0, 0))
    h, w = mask.shape
    visited = set()
    regions = []
    for i in range(h):
        for j in range(w):
            if not mask[i, j] or (i, j) in visited:
                continue
            stack = [(i, j)]
            visited.add((i, j))
            cells = []
            while stack:
                ci, cj = stack.pop()
                cells.append((ci, cj))
                for di, dj in neigh:
                    ni, nj = ci + di, cj + dj
                    if (0 <= ni < h and 0 <= nj < w and mask[ni, nj]
                            and (ni, nj) not in visited):
                        visited.add((ni, nj))
                        stack.append((ni, nj))
            regions.append(sorted(cells))
    regions.sort(key=lambda cells: cells[0])
    return regions
