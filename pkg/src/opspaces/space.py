"""
Finite spaces of homogeneous type
=================================

A :class:`Space` is a finite set of points with a quasi-distance and a
positive measure. Balls are open, ``B(x, r) = {y : d(x, y) < r}``.

All spaces here have finite total measure; homogeneous constructions that
would need ``mu(X) = inf`` are truncated to the spectral band of whatever
operator lives on the space.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import shortest_path

__all__ = [
    "Space",
    "DoublingReport",
    "build_space",
    "space_from_graph_file",
    "ball_volume",
    "ball_volumes",
    "fit_doubling",
    "default_r_grid",
    "maximal_function",
    "fefferman_stein_ratio",
]

EXACT_TRIPLE_LIMIT = 512


class SpaceError(ValueError):
    """Raised for malformed distance or weight data; ``pair`` names the witness."""

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


@dataclass(frozen=True, eq=False)
class Space:
    """Finite quasi-metric measure space.

    Parameters
    ----------
    dist : ndarray (N, N)
        Symmetric quasi-distance, zero exactly on the diagonal.
    weight : ndarray (N,)
        Strictly positive point masses.
    quasi_const : float
        Smallest K with ``d(x, z) <= K (d(x, y) + d(y, z))`` (exact for
        N <= 512, sampled otherwise).
    edges : ndarray (N, N) or None
        Symmetric nonnegative edge weights, used by the graph Laplacian.
    """

    dist: np.ndarray
    weight: np.ndarray
    quasi_const: float
    edges: np.ndarray | None = None
    name: str = "space"
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return self.dist.shape[0]

    @property
    def total_measure(self) -> float:
        return float(self.weight.sum())

    @property
    def diameter(self) -> float:
        return float(self.dist.max())

    @property
    def min_distance(self) -> float:
        """Smallest positive distance (inf for a single point)."""
        off = self.dist[~np.eye(self.size, dtype=bool)]
        return float(off.min()) if off.size else math.inf


def _check_distance(dist: np.ndarray) -> None:
    n = dist.shape[0]
    if dist.ndim != 2 or dist.shape[1] != n:
        raise SpaceError(f"distance matrix must be square, got {dist.shape}")
    if np.any(np.isnan(dist)):
        i, j = np.argwhere(np.isnan(dist))[0]
        raise SpaceError(f"undefined distance at ({i}, {j})", (int(i), int(j)))
    neg = np.argwhere(dist < 0)
    if len(neg):
        i, j = neg[0]
        raise SpaceError(f"negative distance d({i},{j}) = {dist[i, j]}", (int(i), int(j)))
    asym = np.argwhere(dist != dist.T)
    if len(asym):
        i, j = asym[0]
        raise SpaceError(
            f"non-symmetric distance: d({i},{j}) = {dist[i, j]} != d({j},{i}) = {dist[j, i]}",
            (int(i), int(j)),
        )
    if np.any(np.diag(dist) != 0):
        i = int(np.flatnonzero(np.diag(dist))[0])
        raise SpaceError(f"d({i},{i}) must be 0", (i, i))
    off = ~np.eye(n, dtype=bool)
    bad = np.argwhere((dist == 0) & off)
    if len(bad):
        i, j = bad[0]
        raise SpaceError(f"distinct points {i}, {j} at distance 0", (int(i), int(j)))
    if np.any(np.isinf(dist)):
        i, j = np.argwhere(np.isinf(dist))[0]
        raise SpaceError(f"points {i} and {j} are disconnected", (int(i), int(j)))


def quasi_triangle_constant(dist: np.ndarray, rng=None, samples: int = 200_000) -> float:
    """Smallest K with d(x,z) <= K (d(x,y) + d(y,z)) over all (or sampled) triples."""
    n = dist.shape[0]
    if n <= 2:
        return 1.0
    if n <= EXACT_TRIPLE_LIMIT:
        # min-plus square: best detour through any y
        detour = np.full_like(dist, np.inf)
        for y in range(n):
            np.minimum(detour, dist[:, y, None] + dist[None, y, :], out=detour)
        off = ~np.eye(n, dtype=bool)
        return float(np.max(dist[off] / detour[off]))
    rng = np.random.default_rng(0) if rng is None else rng
    x, y, z = rng.integers(0, n, size=(3, samples))
    keep = x != z
    x, y, z = x[keep], y[keep], z[keep]
    return float(max(1.0, np.max(dist[x, z] / (dist[x, y] + dist[y, z]))))


def _make_space(dist, weight=None, edges=None, name="space", meta=None) -> Space:
    dist = np.array(dist, dtype=float)
    _check_distance(dist)
    n = dist.shape[0]
    weight = np.ones(n) if weight is None else np.array(weight, dtype=float)
    if weight.shape != (n,):
        raise SpaceError(f"expected {n} weights, got {weight.shape}")
    if np.any(~(weight > 0)) or not np.all(np.isfinite(weight)):
        i = int(np.flatnonzero(~(weight > 0) | ~np.isfinite(weight))[0])
        raise SpaceError(f"weight[{i}] = {weight[i]} must be positive and finite", (i, i))
    dist.setflags(write=False)
    weight.setflags(write=False)
    if edges is not None:
        edges = np.array(edges, dtype=float)
        edges.setflags(write=False)
    return Space(dist, weight, quasi_triangle_constant(dist), edges, name, dict(meta or {}))


def _graph_space(adj: np.ndarray, weight=None, name="graph", meta=None) -> Space:
    # adjacency holds edge lengths; edge weights for the Laplacian are 1/length
    lengths = np.where(adj > 0, adj, 0.0)
    dist = shortest_path(lengths, method="D", directed=False)
    # path sums may differ in the last bit between directions
    dist = np.minimum(dist, dist.T)
    conduct = np.zeros_like(lengths)
    conduct[lengths > 0] = 1.0 / lengths[lengths > 0]
    return _make_space(dist, weight, conduct, name, meta)


def build_space(kind: str, size: int = 0, weights=None, **params) -> Space:
    """Build a named finite space.

    ``kind`` is one of ``cycle``, ``path``, ``grid2d`` (``size`` x ``size``
    lattice with Manhattan distance) or ``weighted_graph_file`` (``path=...``
    pointing at a JSON graph description). Weights default to counting measure.
    """
    if kind == "weighted_graph_file":
        return space_from_graph_file(params["path"])
    if size < 2:
        raise SpaceError(f"size must be >= 2, got {size}")
    if kind == "cycle":
        n = size
        adj = np.zeros((n, n))
        i = np.arange(n)
        adj[i, (i + 1) % n] = adj[(i + 1) % n, i] = 1.0
    elif kind == "path":
        n = size
        adj = np.zeros((n, n))
        i = np.arange(n - 1)
        adj[i, i + 1] = adj[i + 1, i] = 1.0
    elif kind == "grid2d":
        n = size * size
        adj = np.zeros((n, n))
        for r in range(size):
            for c in range(size):
                k = r * size + c
                if c + 1 < size:
                    adj[k, k + 1] = adj[k + 1, k] = 1.0
                if r + 1 < size:
                    adj[k, k + size] = adj[k + size, k] = 1.0
    else:
        raise ValueError(f"unknown space kind {kind!r}")
    name = {"cycle": "C", "path": "P", "grid2d": "G"}[kind] + str(size)
    return _graph_space(adj, weights, name, {"kind": kind, "size": size})


def space_from_graph_file(path) -> Space:
    """Load ``{"n": int, "edges": [[i, j, length], ...], "weights": [...]}``."""
    with open(path) as fh:
        data = json.load(fh)
    return space_from_graph_dict(data, name=str(path))


def space_from_graph_dict(data: dict, name="graph") -> Space:
    n = int(data["n"])
    if n < 2:
        raise SpaceError(f"graph needs at least 2 vertices, got {n}")
    adj = np.zeros((n, n))
    for edge in data["edges"]:
        i, j = int(edge[0]), int(edge[1])
        length = float(edge[2]) if len(edge) > 2 else 1.0
        if length <= 0:
            raise SpaceError(f"edge ({i},{j}) has non-positive length {length}", (i, j))
        if i == j:
            raise SpaceError(f"self-loop at {i}", (i, j))
        adj[i, j] = adj[j, i] = length
    weights = data.get("weights")
    if weights is None:
        weights = np.ones(n)
    return _graph_space(adj, weights, name, {"kind": "weighted_graph_file"})


def space_from_distance(dist, weight=None, name="metric") -> Space:
    """Wrap an explicit quasi-distance matrix (no edges, so no graph Laplacian)."""
    return _make_space(dist, weight, None, name)


def ball_volume(space: Space, x: int, r: float) -> float:
    """``V(x, r) = mu({y : d(x, y) < r})``."""
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")
    return float(space.weight[space.dist[x] < r].sum())


def ball_volumes(space: Space, r) -> np.ndarray:
    """Vector of ``V(x, r)`` over all x; ``r`` may be an array broadcast against x."""
    r = np.asarray(r, dtype=float)
    if r.ndim == 0:
        return (space.dist < r) @ space.weight
    return np.einsum("...xy,y->...x", space.dist[None] < r[..., None, None], space.weight)


def default_r_grid(space: Space) -> np.ndarray:
    top = max(0, math.ceil(math.log2(space.diameter)))
    return 2.0 ** np.arange(-1, top + 1)


DEFAULT_LAMBDAS = (1.0, 2.0, 4.0, 8.0)


@dataclass
class DoublingReport:
    """Certified doubling constants over the sampled (x, r, lambda) grid.

    ``C_doubling`` certifies V(x,2r) <= C V(x,r); ``C_upper`` certifies
    V(x,lr) <= C_upper l^n V(x,r) at the fitted ``n``; the comparison
    V(x,r) <= (1 + d(x,y)/r)^n_tilde V(y,r) holds with constant 1.
    """

    C_doubling: float
    n: float
    n_tilde: float
    C_upper: float
    worst_triple: dict
    clamped: bool = False


def fit_doubling(space: Space, r_grid=None, lambda_grid=DEFAULT_LAMBDAS) -> DoublingReport:
    r_grid = default_r_grid(space) if r_grid is None else np.asarray(r_grid, dtype=float)
    lambda_grid = np.asarray(lambda_grid, dtype=float)
    if r_grid.size == 0 or lambda_grid.size == 0:
        raise ValueError("grids must be nonempty")
    if np.any(lambda_grid < 1):
        raise ValueError("lambda values must be >= 1")
    r_grid = np.unique(r_grid)
    total = space.total_measure
    vol = {float(r): ball_volumes(space, r) for r in np.unique(np.concatenate(
        [r_grid, 2 * r_grid, np.outer(lambda_grid, r_grid).ravel()]))}

    ratios2 = np.array([vol[2 * r] / vol[r] for r in r_grid])
    k, x = np.unravel_index(np.argmax(ratios2), ratios2.shape)
    C2 = float(ratios2[k, x])
    witness = {"doubling": {"x": int(x), "r": float(r_grid[k])}}

    # exponent: through-origin log-log fit of the worst-over-x growth,
    # excluding samples where the larger ball already fills the space
    xs, ys, samples = [], [], []
    for r in r_grid:
        for lam in lambda_grid:
            ratio = vol[lam * r] / vol[r]
            samples.append((float(r), float(lam), ratio))
            if lam > 1:
                unsat = vol[lam * r] < total
                if unsat.any():
                    xs.append(math.log(lam))
                    ys.append(math.log(ratio[unsat].max()))
    if xs:
        xs, ys = np.array(xs), np.array(ys)
        n = float(max(0.0, xs @ ys / (xs @ xs)))
    else:
        n = 0.0
    C_up, wit = 0.0, None
    for r, lam, ratio in samples:
        c = ratio / lam**n
        i = int(np.argmax(c))
        if c[i] > C_up:
            C_up, wit = float(c[i]), {"x": i, "r": r, "lambda": lam}
    witness["upper"] = wit

    # comparison exponent with constant 1
    D = space.dist
    nt, wit = 0.0, None
    for r in r_grid:
        v = vol[r]
        ratio = v[:, None] / v[None, :]
        base = np.log1p(D / r)
        mask = (ratio > 1) & (base > 0)
        if mask.any():
            e = np.zeros_like(base)
            e[mask] = np.log(ratio[mask]) / base[mask]
            i, j = np.unravel_index(np.argmax(e), e.shape)
            if e[i, j] > nt:
                nt, wit = float(e[i, j]), {"x": int(i), "y": int(j), "r": float(r)}
    witness["comparison"] = wit
    clamped = False
    if nt > n:
        warnings.warn(f"fitted comparison exponent {nt:.3f} exceeds n = {n:.3f}; clamped", stacklevel=2)
        nt, clamped = n, True
    return DoublingReport(C2, n, nt, C_up, witness, clamped)


def maximal_function(space: Space, f, r: float = 1.0) -> np.ndarray:
    """Hardy-Littlewood maximal function ``M_r f``.

    The sup runs over every distinct ball of the finite space: for each centre
    z the balls are the prefixes of the points sorted by distance to z.
    """
    if not r > 0:
        raise ValueError(f"exponent r must be positive, got {r}")
    f = np.abs(np.asarray(f, dtype=float)) ** r
    mu = space.weight
    n = space.size
    out = np.zeros(n)
    for z in range(n):
        d = space.dist[z]
        order = np.argsort(d, kind="stable")
        ds = d[order]
        mass = np.cumsum(mu[order])
        num = np.cumsum((mu * f)[order])
        # only prefixes that end at a distance jump are genuine balls
        last = np.r_[ds[1:] != ds[:-1], True]
        avg = np.where(last, num / mass, -np.inf)
        best = np.maximum.accumulate(avg[::-1])[::-1]
        # tied points share the value of the last index in their group
        group_end = np.searchsorted(ds, ds, side="right") - 1
        np.maximum.at(out, order, best[group_end])
    return out ** (1.0 / r)


def fefferman_stein_ratio(space: Space, fs, r: float, p: float, q: float) -> float:
    """``||(sum |M_r f_v|^q)^(1/q)||_p / ||(sum |f_v|^q)^(1/q)||_p`` for one sequence."""
    fs = np.atleast_2d(np.asarray(fs, dtype=float))
    if not 0 < r < min(p, q):
        raise ValueError("need 0 < r < min(p, q)")
    mf = np.array([maximal_function(space, f, r) for f in fs])

    def mixed(g):
        inner = np.sum(np.abs(g) ** q, axis=0) ** (1 / q)
        return np.sum(inner**p * space.weight) ** (1 / p)

    return float(mixed(mf) / mixed(fs))
