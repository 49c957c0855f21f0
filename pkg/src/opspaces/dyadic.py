"""
Christ-type dyadic cubes on a finite space.

Nets are nested and chosen greedily by lowest index, coarse to fine. Every
level is a Voronoi partition of the finest net refined upwards: a cube at
level k is the union of the level k+1 cubes whose centres lie closest to
its own centre. The constants of the cube construction (diameter constant
``kappa0`` and inner-ball constant ``a0``) are measured, not assumed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .space import Space

__all__ = [
    "Cube",
    "DyadicTree",
    "christ_decomposition",
    "auto_tree",
    "cubes_at_level",
    "tree_invariants",
    "tree_to_json",
]


@dataclass(eq=False)
class Cube:
    level: int
    id: int
    center: int
    members: np.ndarray
    parent: "Cube | None" = None
    children: list = field(default_factory=list)
    kappa0: float = 0.0

    @property
    def sidelength(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def ball_radius(self) -> float:
        """Radius of B_Q, ``kappa0 * 2^-level``."""
        return self.kappa0 * self.sidelength

    def dilated_ball(self, space: Space, factor: float = 3.0) -> np.ndarray:
        """Indicator of ``factor * B_Q`` (open ball around the centre)."""
        return space.dist[self.center] < factor * self.ball_radius

    def measure(self, space: Space) -> float:
        return float(space.weight[self.members].sum())

    def __repr__(self):
        return f"Cube(level={self.level}, id={self.id}, center={self.center}, size={len(self.members)})"


@dataclass(eq=False)
class DyadicTree:
    space: Space
    levels: dict
    kappa0: float
    a0_achieved: float
    labels: dict

    @property
    def level_range(self) -> tuple[int, int]:
        return min(self.levels), max(self.levels)

    def all_cubes(self):
        for k in sorted(self.levels):
            yield from self.levels[k]

    def cube_of(self, level: int, x: int) -> Cube:
        return self.levels[level][self.labels[level][x]]


def _greedy_net(dist, scale, seed_centers):
    """Extend ``seed_centers`` to a maximal ``scale``-separated set, lowest index first."""
    centers = list(seed_centers)
    n = dist.shape[0]
    covered = np.zeros(n, dtype=bool)
    for c in centers:
        covered |= dist[c] < scale
    for x in range(n):
        if not covered[x]:
            centers.append(x)
            covered |= dist[x] < scale
    return sorted(centers)


def christ_decomposition(space: Space, level_min: int, level_max: int) -> DyadicTree:
    """Dyadic cubes at levels ``level_min..level_max`` (sidelength ``2^-level``)."""
    if level_min > level_max:
        raise ValueError("level_min must not exceed level_max")
    if 2.0 ** (-level_min) <= space.diameter and space.size > 1:
        raise ValueError(
            f"top scale 2^{-level_min} must exceed the diameter {space.diameter} so the top level is one cube"
        )
    dist = space.dist
    n = space.size
    nets = {}
    prev: list[int] = []
    for k in range(level_min, level_max + 1):
        prev = _greedy_net(dist, 2.0 ** (-k), prev)
        nets[k] = prev

    labels = {}
    # finest level: nearest net centre, ties to the lowest index
    centers = np.array(nets[level_max])
    labels[level_max] = np.argmin(dist[:, centers], axis=1)
    for k in range(level_max - 1, level_min - 1, -1):
        coarse = np.array(nets[k])
        fine = np.array(nets[k + 1])
        child_to_parent = np.argmin(dist[np.ix_(fine, coarse)], axis=1)
        labels[k] = child_to_parent[labels[k + 1]]

    levels = {}
    for k in range(level_min, level_max + 1):
        cs = nets[k]
        levels[k] = [
            Cube(k, i, c, np.flatnonzero(labels[k] == i)) for i, c in enumerate(cs)
        ]
    for k in range(level_min + 1, level_max + 1):
        plab = labels[k - 1]
        for cube in levels[k]:
            parent = levels[k - 1][plab[cube.center]]
            cube.parent = parent
            parent.children.append(cube)

    kappa0 = 0.0
    a0 = math.inf
    for k, cubes in levels.items():
        ell = 2.0 ** (-k)
        for q in cubes:
            sub = dist[np.ix_(q.members, q.members)]
            kappa0 = max(kappa0, sub.max() / ell)
            outside = np.ones(n, dtype=bool)
            outside[q.members] = False
            if outside.any():
                a0 = min(a0, dist[q.center, outside].min() / ell)
    if not kappa0 > 0:
        # all cubes are singletons; any positive constant certifies the diameter bound
        kappa0 = 2.0 ** (level_max - level_min) if level_max > level_min else 1.0
        kappa0 = max(kappa0, 1.0)
    for q in (c for cubes in levels.values() for c in cubes):
        q.kappa0 = kappa0
    if math.isinf(a0):
        a0 = 1.0
    return DyadicTree(space, levels, float(kappa0), float(a0), labels)


def auto_tree(space: Space, finest_scale: float | None = None, coarsest_scale: float | None = None) -> DyadicTree:
    """Tree whose levels run from above the diameter down to ``finest_scale``."""
    top = max(space.diameter, coarsest_scale or 0.0)
    level_min = -math.floor(math.log2(top)) - 1 if top > 0 else 0
    finest = finest_scale if finest_scale is not None else space.min_distance
    level_max = max(level_min, -math.floor(math.log2(finest)))
    return christ_decomposition(space, level_min, level_max)


def cubes_at_level(tree: DyadicTree, nu: int) -> list:
    """The family of cubes at level ``nu``, ordered by id."""
    if nu not in tree.levels:
        lo, hi = tree.level_range
        raise IndexError(f"level {nu} outside constructed range [{lo}, {hi}]")
    return list(tree.levels[nu])


def tree_invariants(tree: DyadicTree) -> dict:
    """Exhaustive check of the partition, nesting and unique-ancestor properties.

    Returns ``{name: list of violations}``; every list is empty for a valid tree.
    """
    space = tree.space
    n = space.size
    out = {"partition": [], "nested": [], "ancestor": [], "measure": [], "diameter": [], "inner_ball": []}
    total = math.fsum(space.weight)
    member_sets = {}
    for lv in sorted(tree.levels):
        count = np.zeros(n, dtype=int)
        for q in tree.levels[lv]:
            count[q.members] += 1
            member_sets[id(q)] = set(int(m) for m in q.members)
            if q.center not in member_sets[id(q)]:
                out["partition"].append((lv, q.id, "center outside cube"))
            if len(q.members) > 1:
                diam = space.dist[np.ix_(q.members, q.members)].max()
                if diam > tree.kappa0 * q.sidelength * (1 + 1e-12):
                    out["diameter"].append((lv, q.id, float(diam)))
            inner = np.flatnonzero(space.dist[q.center] < tree.a0_achieved * q.sidelength)
            if not set(int(i) for i in inner) <= member_sets[id(q)]:
                out["inner_ball"].append((lv, q.id))
        if np.any(count != 1):
            out["partition"].append((lv, "points covered", np.flatnonzero(count != 1).tolist()))
        if math.fsum(space.weight[m] for q in tree.levels[lv] for m in q.members) != total:
            out["measure"].append(lv)
    levels = sorted(tree.levels)
    for i, lk in enumerate(levels):
        for lj in levels[i + 1:]:
            for a in tree.levels[lk]:
                sa = member_sets[id(a)]
                for b in tree.levels[lj]:
                    sb = member_sets[id(b)]
                    if sb & sa and not sb <= sa:
                        out["nested"].append((lk, a.id, lj, b.id))
    for lv in levels[1:]:
        for q in tree.levels[lv]:
            sq = member_sets[id(q)]
            for up in levels[:levels.index(lv)]:
                anc = [a for a in tree.levels[up] if sq <= member_sets[id(a)]]
                if len(anc) != 1:
                    out["ancestor"].append((lv, q.id, up, len(anc)))
    return out


def tree_to_json(tree: DyadicTree) -> str:
    rows = []
    for q in tree.all_cubes():
        rows.append({
            "level": q.level,
            "id": q.id,
            "center": int(q.center),
            "members": [int(m) for m in q.members],
            "parent": None if q.parent is None else q.parent.id,
        })
    return json.dumps({"kappa0": tree.kappa0, "a0_achieved": tree.a0_achieved, "cubes": rows}, indent=1)
