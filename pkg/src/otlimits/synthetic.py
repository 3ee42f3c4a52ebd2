"""Synthetic position histograms for exercising the image pipeline.

Densities are sums of a few thin curved filaments on an ``L x L`` pixel
grid, loosely imitating fluorescence images of fibre structures.  Pixel
``[i, j]`` has row ``i`` (the y direction) and column ``j`` (x).
"""

from __future__ import annotations

import numpy as np

__all__ = ["filament_density", "shift_image", "multinomial_image", "shifted_pair"]


def filament_density(L: int = 256, rng=None, n_filaments: int = 3, n_points: int = 200_000, width: float = 0.8, margin: float = 40.0) -> np.ndarray:
    """Probability image made of quadratic Bezier curves blurred by ``width`` pixels."""
    rng = np.random.default_rng(rng)
    per = n_points // n_filaments
    pts = []
    for _ in range(n_filaments):
        P = rng.uniform(margin, L - margin, (3, 2))
        s = rng.random(per)[:, None]
        curve = (1 - s) ** 2 * P[0] + 2 * s * (1 - s) * P[1] + s**2 * P[2]
        pts.append(curve + rng.normal(0.0, width, curve.shape))
    pts = np.concatenate(pts)
    ij = np.floor(pts).astype(np.int64)
    ok = np.all((ij >= 0) & (ij < L), axis=1)
    img = np.zeros((L, L))
    np.add.at(img, (ij[ok, 0], ij[ok, 1]), 1.0)
    return img / img.sum()


def shift_image(img, dx: int, dy: int) -> np.ndarray:
    """Translate by ``dx`` columns and ``dy`` rows, filling with zeros."""
    img = np.asarray(img)
    out = np.zeros_like(img)
    h, w = img.shape
    src_r = slice(max(0, -dy), min(h, h - dy))
    dst_r = slice(max(0, dy), min(h, h + dy))
    src_c = slice(max(0, -dx), min(w, w - dx))
    dst_c = slice(max(0, dx), min(w, w + dx))
    out[dst_r, dst_c] = img[src_r, src_c]
    return out


def multinomial_image(density, n: int, rng=None) -> np.ndarray:
    """Counts of ``n`` independent positions drawn from ``density``."""
    rng = np.random.default_rng(rng)
    d = np.asarray(density, dtype=float)
    counts = rng.multinomial(int(n), d.ravel() / d.sum())
    return counts.reshape(d.shape)


def shifted_pair(L: int = 256, n: int = 1_000_000, shift=(3, 1), seed: int = 0, **density_kw):
    """Two count images: one from a filament density, one from its shift.

    ``shift = (0, 0)`` gives two independent samples from the same law.
    """
    rng = np.random.default_rng(seed)
    dens = filament_density(L, rng, **density_kw)
    moved = shift_image(dens, shift[0], shift[1])
    return multinomial_image(dens, n, rng), multinomial_image(moved, n, rng)
