"""Seeded sample generators for the bundled test shapes.

Every generator takes ``n`` and ``seed`` and returns an (n, d) float array.
Area-uniform sampling is used unless noted otherwise.
"""

from __future__ import annotations

import numpy as np


def _rng(seed):
    return np.random.default_rng(seed)


def circle(n: int, seed: int = 0, radius: float = 1.0, noise: float = 0.0,
           regular: bool = False) -> np.ndarray:
    """Unit circle in R^2; ``regular`` gives equally spaced angles."""
    rng = _rng(seed)
    t = 2 * np.pi * (np.arange(n) / n if regular else rng.uniform(0, 1, n))
    X = radius * np.c_[np.cos(t), np.sin(t)]
    return X + noise * rng.standard_normal(X.shape) if noise else X


def annulus(n: int, seed: int = 0, inner: float = 0.5, outer: float = 1.0) -> np.ndarray:
    rng = _rng(seed)
    r = np.sqrt(rng.uniform(inner ** 2, outer ** 2, n))
    t = rng.uniform(0, 2 * np.pi, n)
    return np.c_[r * np.cos(t), r * np.sin(t)]


def flat_square(n: int, seed: int = 0, grid: bool = False) -> np.ndarray:
    """[-1, 1]^2, uniformly random or as the nearest square grid (side round(sqrt n))."""
    if grid:
        s = int(round(np.sqrt(n)))
        g = np.linspace(-1, 1, s)
        return np.array(np.meshgrid(g, g)).reshape(2, -1).T
    return _rng(seed).uniform(-1, 1, (n, 2))


def disk(n: int, seed: int = 0, radius: float = 1.0) -> np.ndarray:
    rng = _rng(seed)
    r = radius * np.sqrt(rng.uniform(0, 1, n))
    t = rng.uniform(0, 2 * np.pi, n)
    return np.c_[r * np.cos(t), r * np.sin(t)]


def sphere(n: int, seed: int = 0, dim: int = 2, fibonacci: bool = False) -> np.ndarray:
    """Unit sphere S^dim in R^(dim+1); ``fibonacci`` gives the quasi-regular spiral (dim 2 only)."""
    if fibonacci:
        if dim != 2:
            raise ValueError("fibonacci sampling is only defined on S^2")
        i = np.arange(n) + 0.5
        z = 1 - 2 * i / n
        t = np.pi * (1 + 5 ** 0.5) * i
        r = np.sqrt(1 - z * z)
        return np.c_[r * np.cos(t), r * np.sin(t), z]
    v = _rng(seed).standard_normal((n, dim + 1))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def torus_angles(n: int, seed: int = 0, R: float = 2.0, r: float = 1.0):
    """Area-uniform (theta, phi) on the torus by rejection on theta."""
    rng = _rng(seed)
    theta = np.empty(0)
    while theta.size < n:
        t = rng.uniform(0, 2 * np.pi, 2 * n)
        keep = rng.uniform(0, R + r, 2 * n) < R + r * np.cos(t)
        theta = np.concatenate([theta, t[keep]])
    theta = theta[:n]
    phi = rng.uniform(0, 2 * np.pi, n)
    return theta, phi


def torus(n: int, seed: int = 0, R: float = 2.0, r: float = 1.0) -> np.ndarray:
    """Torus of revolution in R^3; theta is the tube angle (0 on the outer ring)."""
    theta, phi = torus_angles(n, seed, R, r)
    return torus_embed(theta, phi, R, r)


def torus_embed(theta, phi, R: float = 2.0, r: float = 1.0) -> np.ndarray:
    w = R + r * np.cos(theta)
    return np.c_[w * np.cos(phi), w * np.sin(phi), r * np.sin(theta)]


def torus_curvature(theta, R: float = 2.0, r: float = 1.0) -> np.ndarray:
    """Gaussian curvature cos(theta) / (r (R + r cos(theta)))."""
    return np.cos(theta) / (r * (R + r * np.cos(theta)))


def sphere_with_two_circles(n: int, seed: int = 0, circle_share: float = 0.4) -> np.ndarray:
    """Unit sphere with two radius-0.5 circles touching it at (+-1, 0, 0).

    ``circle_share`` of the points go to the circles (split evenly).
    """
    rng = _rng(seed)
    nc = int(round(n * circle_share / 2))
    ns = n - 2 * nc
    S = sphere(ns, seed=int(rng.integers(2 ** 31)))
    parts = [S]
    for sgn in (1.0, -1.0):
        t = rng.uniform(0, 2 * np.pi, nc)
        parts.append(np.c_[sgn * (1.5 + 0.5 * np.cos(t)), 0.5 * np.sin(t), np.zeros(nc)])
    return np.concatenate(parts)


def two_components(n: int, seed: int = 0, gap: float = 3.0) -> np.ndarray:
    """Two unit disks whose centres are ``2 + gap`` apart."""
    rng = _rng(seed)
    X = disk(n, seed=int(rng.integers(2 ** 31)))
    X[: n // 2, 0] -= 1 + gap / 2
    X[n // 2:, 0] += 1 + gap / 2
    return X


def branching(n: int, seed: int = 0) -> np.ndarray:
    """Non-manifold planar cloud: a 2d patch, a path, and a three-way branch point.

    Points are shared out in proportion to patch area and path length.
    """
    rng = _rng(seed)
    segments = [((-1.0, 0.0), (1.0, 0.0)), ((1.0, 0.0), (2.0, 1.0)), ((1.0, 0.0), (2.0, -1.0))]
    lengths = np.array([np.hypot(b[0] - a[0], b[1] - a[1]) for a, b in segments])
    # A 1 x 1 patch weighted like a path of length 3 keeps both parts well sampled.
    weights = np.r_[3.0, lengths]
    counts = np.floor(n * weights / weights.sum()).astype(int)
    counts[0] += n - counts.sum()
    parts = [np.c_[rng.uniform(-2, -1, counts[0]), rng.uniform(-0.5, 0.5, counts[0])]]
    for (a, b), c in zip(segments, counts[1:]):
        s = rng.uniform(0, 1, c)[:, None]
        parts.append((1 - s) * np.asarray(a) + s * np.asarray(b))
    return np.concatenate(parts)


def add_noise(X: np.ndarray, fraction: float, seed: int = 0) -> np.ndarray:
    """Gaussian perturbation with sigma = fraction * bounding-box diameter."""
    diam = np.linalg.norm(X.max(0) - X.min(0))
    return X + fraction * diam * _rng(seed).standard_normal(X.shape)


def add_outliers(X: np.ndarray, fraction: float, seed: int = 0) -> np.ndarray:
    """Append ``fraction * len(X)`` points uniform in the bounding box."""
    rng = _rng(seed)
    m = int(round(fraction * len(X)))
    lo, hi = X.min(0), X.max(0)
    return np.concatenate([X, rng.uniform(lo, hi, (m, X.shape[1]))])


SHAPES = {
    "circle": circle,
    "annulus": annulus,
    "square": flat_square,
    "disk": disk,
    "sphere": sphere,
    "torus": torus,
    "sphere_circles": sphere_with_two_circles,
    "two_components": two_components,
    "branching": branching,
}


def make(name: str, n: int, seed: int = 0, **kw) -> np.ndarray:
    try:
        gen = SHAPES[name]
    except KeyError:
        raise ValueError(f"unknown shape {name!r}; choose from {sorted(SHAPES)}") from None
    return gen(n, seed=seed, **kw)
