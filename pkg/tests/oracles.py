"""Independent oracles used across the test suite.

These deliberately avoid the library's own code paths: finite differences for
gradients, exhaustive enumeration for clustering, Monte-Carlo bounds for
noising distributions, and brute-force recounts for metrics.
"""

from __future__ import annotations

import itertools

import numpy as np


def finite_difference_grad(f, x, eps=1e-5):
    """Central-difference gradient of scalar f at x (ndarray), elementwise."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * eps)
    return g


def relative_error(a, b, floor=1e-6):
    """Max elementwise |a-b| / max(|a|, |b|, floor)."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def best_kmeans_partition(points, k):
    """Exhaustive optimal k-means clustering of a tiny point set.

    Returns (inertia, assignment tuple). Only feasible for n <= ~10.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    best = (np.inf, None)
    for assign in itertools.product(range(k), repeat=n):
        if len(set(assign)) < k:
            continue
        inertia = 0.0
        for c in range(k):
            members = points[[i for i in range(n) if assign[i] == c]]
            centroid = members.mean(axis=0)
            inertia += float(((members - centroid) ** 2).sum())
        if inertia < best[0] - 1e-12:
            best = (inertia, assign)
    return best


def bilinear_sample_scalar(grid, y, x):
    """Reference bilinear interpolation of a 2-D grid at a single point.

    Coordinates are in cell units with (0, 0) the center of the top-left cell.
    Out-of-range coordinates clamp to the border (ROI boxes are in-bounds by
    precondition, so clamping only guards float fuzz).
    """
    grid = np.asarray(grid, dtype=np.float64)
    H, W = grid.shape
    y = min(max(y, 0.0), H - 1.0)
    x = min(max(x, 0.0), W - 1.0)
    y0, x0 = int(np.floor(y)), int(np.floor(x))
    y1, x1 = min(y0 + 1, H - 1), min(x0 + 1, W - 1)
    fy, fx = y - y0, x - x0
    return float(
        grid[y0, x0] * (1 - fy) * (1 - fx)
        + grid[y0, x1] * (1 - fy) * fx
        + grid[y1, x0] * fy * (1 - fx)
        + grid[y1, x1] * fy * fx
    )


def rectangles_overlap_shapely(c1,
                               c2):
    """Closed overlap test between two oriented rectangles via shapely.

    Each rectangle is (cx, cy, length, width, yaw).
    """
    from shapely.geometry import Polygon

    def poly(c):
        cx, cy, length, width, yaw = c
        dx, dy = length / 2.0, width / 2.0
        corners = np.array([[dx, dy], [dx, -dy], [-dx, -dy], [-dx, dy]])
        rot = np.array([[np.cos(yaw), -np.sin(yaw)], [np.sin(yaw), np.cos(yaw)]])
        return Polygon(corners @ rot.T + np.array([cx, cy]))

    return poly(c1).intersects(poly(c2))
