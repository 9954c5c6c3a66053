"""Reference computations that share no code with the projection operators.

These exist to cross-check the library: a brute-force nearest-point search
built only from each set's defining inequality, and textbook sequential and
simultaneous projection loops for halfspace systems written directly on the
``(A, b)`` data.
"""
from __future__ import annotations

import numpy as np


def membership_2d(kind: str, params: dict, P: np.ndarray) -> np.ndarray:
    """Boolean mask of points ``P`` (shape ``(n, 2)``) satisfying the set's inequality.

    A hyperplane has no interior, so its mask is the closed lower side
    ``<a, p> <= b``; only boundary points count as members.
    """
    if kind in ("halfspace", "hyperplane"):
        return P @ params["a"] <= params["b"]
    if kind == "ball":
        return np.sum((P - params["c"]) ** 2, axis=1) <= params["r"] ** 2
    if kind == "box":
        return np.all((P >= params["l"]) & (P <= params["u"]), axis=1)
    raise ValueError(kind)


def _crossings(kind, params, inside: np.ndarray, outside: np.ndarray, rounds: int = 60) -> np.ndarray:
    """Bisect each segment ``[inside_i, outside_i]`` to the boundary, keeping the inner end."""
    lo, hi = inside.copy(), outside.copy()
    for _ in range(rounds):
        mid = 0.5 * (lo + hi)
        m = membership_2d(kind, params, mid)
        lo[m] = mid[m]
        hi[~m] = mid[~m]
    return lo


def grid_nearest_2d(kind: str, params: dict, x, h: float = 1e-3, lo: float = -4.0, hi: float = 4.0):
    """Nearest point of the set to ``x`` by exhaustive search on a lattice.

    Candidates are the member lattice points together with the points where
    lattice edges cross the boundary, located by bisection on the membership
    test.  Boundary candidates are what keep the answer within about one step
    of the truth when ``x`` is far away; member lattice points alone sit at
    scattered depths, and a slightly deeper point well off to the side can
    win.  A coarse pass at ``10 h`` over ``[lo, hi]^2`` picks a window that a
    pass at step ``h`` then settles.
    """
    x = np.asarray(x, dtype=float)

    def search(x_lo, y_lo, x_hi, y_hi, step):
        gx = np.arange(max(x_lo, lo), min(x_hi, hi) + 0.5 * step, step)
        gy = np.arange(max(y_lo, lo), min(y_hi, hi) + 0.5 * step, step)
        XX, YY = np.meshgrid(gx, gy, indexing="ij")
        M = membership_2d(kind, params, np.column_stack([XX.ravel(), YY.ravel()])).reshape(XX.shape)
        G = np.stack([XX, YY], axis=-1)
        cands = []
        if kind != "hyperplane":
            cands.append(G[M])
        for ax in (0, 1):
            a = [slice(None), slice(None)]
            b = [slice(None), slice(None)]
            a[ax], b[ax] = slice(None, -1), slice(1, None)
            Ma, Mb, Ga, Gb = M[tuple(a)], M[tuple(b)], G[tuple(a)], G[tuple(b)]
            for src_in, pin, pout in ((Ma & ~Mb, Ga, Gb), (Mb & ~Ma, Gb, Ga)):
                if np.any(src_in):
                    cands.append(_crossings(kind, params, pin[src_in], pout[src_in]))
        Q = np.concatenate(cands) if cands else np.empty((0, 2))
        if Q.shape[0] == 0:
            return None
        return Q[int(np.argmin(np.sum((Q - x) ** 2, axis=1)))]

    coarse = 10.0 * h
    c = search(lo, lo, hi, hi, coarse)
    if c is None:
        return None
    w = 3.0 * coarse
    return search(c[0] - w, c[1] - w, c[0] + w, c[1] + w, h)


def cyclic_halfspace_reference(A: np.ndarray, b: np.ndarray, x0, iters: int) -> np.ndarray:
    """Sequential cyclic projections onto ``A x <= b``; returns all iterates."""
    x = np.array(x0, dtype=float)
    out = [x.copy()]
    for _ in range(iters):
        for i in range(A.shape[0]):
            a = A[i]
            excess = a @ x - b[i]
            if excess > 0:
                x = x - (excess / (a @ a)) * a
        out.append(x.copy())
    return np.array(out)


def simultaneous_halfspace_reference(A: np.ndarray, b: np.ndarray, x0, iters: int) -> np.ndarray:
    """Equal-weight averaging of all halfspace projections; returns all iterates."""
    x = np.array(x0, dtype=float)
    m = A.shape[0]
    out = [x.copy()]
    for _ in range(iters):
        total = np.zeros_like(x)
        for i in range(m):
            a = A[i]
            excess = a @ x - b[i]
            total += (1.0 / m) * (x - (max(excess, 0.0) / (a @ a)) * a)
        x = total
        out.append(x.copy())
    return np.array(out)
