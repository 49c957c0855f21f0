"""
Atoms adapted to L and the stopping-time decomposition into new atoms.

Two notions of atom live here. A *classic* (L, M, p) atom is ``a = L^M b``
with ``L^k b`` supported in ``3 B_Q`` and pointwise bounded by
``l(Q)^{2(M-k)} V(Q)^{-1/p}``. A *new* (L, M, alpha, p, q) atom replaces the
pointwise bounds by Triebel-Lizorkin ``F^alpha_{q,q}`` bounds on a ball.

:func:`atomic_decompose` follows the Hardy-space style stopping argument:
level sets of a Lusin function select maximal dyadic cubes, and the Calderon
reproducing formula restricted to the Carleson boxes under each maximal cube
produces one atom per cube.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dyadic import Cube, DyadicTree, auto_tree
from .norms import NormSpec, lp_norm, lusin_field, project_kernel, spectral_field, triebel_lizorkin_norm
from .space import ball_volumes
from .spectral import OperatorSpectrum
from .symbols import PartitionOfUnity, SpectralFunction, propagation_symbol

__all__ = [
    "ClassicAtom",
    "NewAtom",
    "Decomposition",
    "ValidationReport",
    "AtomError",
    "make_classic_atom",
    "validate_atom",
    "atomic_decompose",
    "coefficient_norm",
    "reconstruct",
    "synthesis_bound_check",
    "reproducing_symbol",
    "decomposition_to_json",
]


class AtomError(ValueError):
    pass


@dataclass(eq=False)
class ClassicAtom:
    cube: Cube
    M: int
    p: float
    b: np.ndarray

    def powers(self, spec: OperatorSpectrum):
        """``[b, L b, ..., L^{2M} b]`` via the operator matrix."""
        out = [np.asarray(self.b, dtype=float)]
        for _ in range(2 * self.M):
            out.append(spec.matrix @ out[-1])
        return out

    def signal(self, spec: OperatorSpectrum):
        return self.powers(spec)[self.M]


@dataclass(eq=False)
class NewAtom:
    center: int
    radius: float
    M: int
    alpha: float
    p: float
    q: float
    b_coef: np.ndarray  # spectral coefficients of b
    cube: Cube | None = None
    k: int | None = None

    def power(self, spec: OperatorSpectrum, j: int):
        """``L^j b`` synthesised from the spectral coefficients."""
        return spec.synthesize(spec.eigenvalues**j * self.b_coef)

    def b(self, spec):
        return self.power(spec, 0)

    def signal(self, spec):
        return self.power(spec, self.M)

    def ball(self, spec):
        return spec.space.dist[self.center] < self.radius


@dataclass
class ValidationReport:
    ok: bool
    worst_violation: float
    witnesses: list = field(default_factory=list)
    support_leak: float = 0.0
    size_ratio: float = 0.0


def make_classic_atom(spec: OperatorSpectrum, cube: Cube, M: int, p: float, rng=None) -> ClassicAtom:
    """A classic atom built around ``x_Q``.

    ``b`` is a random (or, without ``rng``, constant) profile on the ball of
    radius ``3 kappa0 l(Q)`` shrunk by ``2M`` graph hops, so every
    ``L^k b`` stays inside ``3 B_Q``, then scaled to meet all size bounds.
    """
    space = spec.space
    L = spec.matrix
    R = 3 * cube.ball_radius
    inside = space.dist[cube.center] < R
    # points whose 2M-hop neighbourhood stays inside the ball
    adj = np.abs(L) > 0
    allowed = inside.copy()
    for _ in range(2 * M):
        allowed = allowed & ~np.any(adj[:, ~allowed], axis=1)
    if not allowed.any():
        raise AtomError(f"cube {cube} is too small to carry an atom of order M={M}")
    b = np.zeros(space.size)
    if rng is None:
        b[allowed] = 1.0
    else:
        b[allowed] = rng.standard_normal(int(allowed.sum()))
    atom = ClassicAtom(cube, M, p, b)
    VQ = cube.measure(space)
    ell = cube.sidelength
    scale = math.inf
    for k, v in enumerate(atom.powers(spec)):
        m = np.abs(v).max()
        if m > 0:
            scale = min(scale, ell ** (2 * (M - k)) * VQ ** (-1.0 / p) / m)
    if math.isfinite(scale):
        atom.b = b * scale
    return atom


def validate_atom(atom, spec: OperatorSpectrum, pou=None, constant: float = 1.0,
                  support_tol: float | None = None) -> ValidationReport:
    """Check every clause of the atom definition; never raises.

    ``constant`` relaxes the size clauses by a fixed factor (the
    normalisation of pipeline atoms). The support clause compares the
    largest value outside the ball with the largest value overall and
    fails above ``support_tol``: 1e-12 for classic atoms (built with exact
    support) and 1e-3 for new atoms, whose support comes from finite
    propagation speed and is only approximate on a graph.
    """
    if support_tol is None:
        support_tol = 1e-12 if isinstance(atom, ClassicAtom) else 1e-3
    space = spec.space
    wit = []
    worst = 0.0
    leak = 0.0
    size = 0.0
    if isinstance(atom, ClassicAtom):
        ball = atom.cube.dilated_ball(space, 3.0)
        VQ = atom.cube.measure(space)
        ell = atom.cube.sidelength
        for k, v in enumerate(atom.powers(spec)):
            m = np.abs(v).max()
            out = np.abs(v[~ball]).max() if (~ball).any() else 0.0
            rel = out / m if m > 0 else 0.0
            leak = max(leak, rel)
            if rel > support_tol:
                wit.append(("support", k, float(rel)))
                worst = max(worst, rel / support_tol)
            bound = constant * ell ** (2 * (atom.M - k)) * VQ ** (-1.0 / atom.p)
            r = m / bound if bound > 0 else (math.inf if m > 0 else 0.0)
            size = max(size, r)
            if r > 1 + 1e-12:
                wit.append(("size", k, float(r)))
                worst = max(worst, r)
    elif isinstance(atom, NewAtom):
        if pou is None:
            raise ValueError("new atoms need a partition of unity for the norm clauses")
        ball = atom.ball(spec)
        muB = float(space.weight[ball].sum())
        ns = NormSpec(atom.alpha, atom.q, atom.q, "triebel_lizorkin")
        for k in range(atom.M + 1):
            v = atom.power(spec, k)
            m = np.abs(v).max()
            out = np.abs(v[~ball]).max() if (~ball).any() else 0.0
            rel = out / m if m > 0 else 0.0
            leak = max(leak, rel)
            if rel > support_tol:
                wit.append(("support", k, float(rel)))
                worst = max(worst, rel / support_tol)
            nrm = float(triebel_lizorkin_norm(spec, pou, v, ns))
            bound = constant * atom.radius ** (2 * (atom.M - k)) * muB ** (1.0 / atom.q - 1.0 / atom.p)
            r = nrm / bound if bound > 0 else (math.inf if nrm > 0 else 0.0)
            size = max(size, r)
            if r > 1 + 1e-12:
                wit.append(("norm", k, float(r)))
                worst = max(worst, r)
    else:
        raise TypeError(f"not an atom: {type(atom).__name__}")
    return ValidationReport(not wit, float(worst), wit, float(leak), float(size))


def reproducing_symbol(alpha: float, Phi: SpectralFunction | None = None):
    """``Psi(s) = s^{2m} Phi(s)`` with m the least integer above ``|alpha|/4 + 1/2``."""
    Phi = propagation_symbol() if Phi is None else Phi
    m = math.floor(abs(alpha) / 4 + 0.5) + 1
    return SpectralFunction(lambda s: s ** (2 * m) * Phi(s), Phi.support, f"s^{2 * m} Phi"), m


@dataclass
class Decomposition:
    atoms: list
    coefficients: np.ndarray
    residual: float
    source: np.ndarray
    spec: OperatorSpectrum
    stopping_data: dict = field(default_factory=dict)
    normalization: float = 1.0
    kernel_mass_removed: float = 0.0

    def __len__(self):
        return len(self.atoms)


def _t_grid(spec: OperatorSpectrum, per_octave: int):
    lo = 0.5 / math.sqrt(spec.lambda_max)
    hi = 2.0 / math.sqrt(spec.lambda_min_positive)
    # offset by half a step so no sample sits on a dyadic boundary
    m0 = math.ceil(per_octave * math.log2(lo) - 0.5)
    m1 = math.floor(per_octave * math.log2(hi) - 0.5)
    m = np.arange(m0, m1 + 1)
    t = 2.0 ** ((m + 0.5) / per_octave)
    w = np.full(t.size, math.log(2) / per_octave)
    return t, w


def _cone_constant(tree: DyadicTree) -> float:
    """Smallest ``c0 >= 1`` with ``d(x, y) < c0 t`` for ``x in Q`` and ``(y, t) in Q^+``."""
    dist = tree.space.dist
    c0 = 1.0
    for q in tree.all_cubes():
        if len(q.members) > 1:
            diam = dist[np.ix_(q.members, q.members)].max()
            c0 = max(c0, 2.0 * diam / q.sidelength)
    return c0 * (1 + 1e-12)


def atomic_decompose(spec: OperatorSpectrum, tree: DyadicTree | None, pou: PartitionOfUnity, f,
                     alpha: float = 0.0, p: float = 1.0, q: float = 2.0, M: int = 2,
                     per_octave: int = 17, n: float | None = None) -> Decomposition:
    """Decompose ``f`` into new (L, M, alpha, p, q) atoms by the stopping-time argument.

    Steps: the field ``F(y,t) = psi(t sqrt L) f`` on a log t-grid; the Lusin
    function with aperture ``c0`` from the tree geometry; level sets
    ``O_k = {S^p > 2^k}``; the families
    ``A_k = {Q : mu(Q & O_k) > mu(Q)/2 >= mu(Q & O_{k+1})}``; their maximal
    cubes; and for each maximal cube the part of the reproducing formula
    carried by the Carleson boxes ``Q x (l(Q)/2, l(Q)]`` of its cubes.

    The reproducing formula is normalised by its own quadrature,
    ``G(lam) = sum_t w g(t sqrt lam)`` with ``g(s) = s^{2M} Psi(s) psi(s)``,
    so the resummation is exact up to roundoff. The continuum constant
    ``c_{Psi,psi}`` and the relative deviation of ``G`` from ``1/c`` are
    stored in ``stopping_data``.
    """
    if not (0 < p <= 1 < q < math.inf):
        raise ValueError("need 0 < p <= 1 < q < inf")
    space = spec.space
    f = np.asarray(f, dtype=float)
    fp, removed = project_kernel(spec, f)
    norm_f = float(lp_norm(space, fp, 2))
    if not np.any(f):
        return Decomposition([], np.zeros(0), 0.0, fp, spec, {"empty": True}, 1.0, 0.0)
    # eigenvector roundoff leaves ~1e-13 of a kernel signal behind
    if norm_f <= 1e-10 * float(lp_norm(space, f, 2)):
        raise AtomError("signal lies entirely in the kernel of L")
    if n is None:
        from .space import fit_doubling

        n = fit_doubling(space).n
    if M <= n / (2 * p):
        warnings.warn(f"M={M} does not exceed n/(2p)={n / (2 * p):.3g}", stacklevel=2)

    t, w = _t_grid(spec, per_octave)
    levels = np.floor(-np.log2(t)).astype(int)
    if tree is None:
        tree = auto_tree(space, finest_scale=float(t.min()))
    lo_lv, hi_lv = tree.level_range
    if levels.min() < lo_lv or levels.max() > hi_lv:
        raise AtomError(f"tree levels [{lo_lv}, {hi_lv}] do not cover the t-grid levels "
                        f"[{levels.min()}, {levels.max()}]")

    F = spectral_field(spec, pou, fp, t)  # (N, T)
    c0 = _cone_constant(tree)
    S = lusin_field(space, F, t, w, alpha, q, c0)
    pos = S[S > 0]
    if pos.size == 0:
        raise AtomError("Lusin function vanishes identically")
    k_lo = math.floor(p * math.log2(pos.min())) - 1
    k_hi = math.ceil(p * math.log2(pos.max())) + 1
    ks = np.arange(k_lo, k_hi + 1)
    Sp = S**p
    O = {int(k): Sp > 2.0**k for k in ks}
    O[int(k_hi) + 1] = Sp > 2.0 ** (k_hi + 1)

    mu = space.weight
    assign = {}
    unassigned = []
    for Q in tree.all_cubes():
        mQ = mu[Q.members].sum()
        got = None
        for k in ks:
            a = mu[Q.members][O[int(k)][Q.members]].sum()
            b = mu[Q.members][O[int(k) + 1][Q.members]].sum()
            if a > mQ / 2 >= b:
                got = int(k)
                break
        if got is None:
            unassigned.append((Q.level, Q.id))
        else:
            assign[(Q.level, Q.id)] = got

    # maximal cubes: no ancestor in the same family
    def top_in_family(Q, k):
        top = Q
        cur = Q.parent
        while cur is not None:
            if assign.get((cur.level, cur.id)) == k:
                top = cur
            cur = cur.parent
        return top

    groups: dict = {}
    for Q in tree.all_cubes():
        key = (Q.level, Q.id)
        if key not in assign:
            continue
        k = assign[key]
        top = top_in_family(Q, k)
        groups.setdefault((k, top.level, top.id), []).append(Q)

    Psi, m = reproducing_symbol(alpha)
    freq = spec.frequencies
    psi = pou.psi
    # per-eigenvalue quadrature of the reproducing formula
    Tl = np.outer(t, freq)  # (T, Neig)
    Psi_tl = Psi(Tl)
    g = Tl ** (2 * M) * Psi_tl * psi(Tl)
    Gsum = (w[:, None] * g).sum(axis=0)
    live = spec.eigenvalues > spec.kernel_tol
    if np.any(Gsum[live] <= 0):
        raise AtomError("reproducing formula degenerates on the spectrum")
    s_grid = np.geomspace(0.5, 2.0, 20001)
    gs = s_grid ** (2 * M) * Psi(s_grid) * psi(s_grid)
    c_cont = 1.0 / np.trapezoid(gs / s_grid, s_grid)
    deviation = float(np.abs(Gsum[live] * c_cont - 1).max())
    inv = np.zeros_like(Gsum)
    inv[live] = 1.0 / Gsum[live]
    # kernel multipliers t^{2M} Psi(t sqrt lam) / G(lam), one row per t
    B_mult = (t[:, None] ** (2 * M)) * Psi_tl * inv[None, :]
    phi_mu = spec.eigenvectors * mu[:, None]  # (N, Neig)

    level_of_t = {lv: np.flatnonzero(levels == lv) for lv in np.unique(levels)}
    A = (np.abs(F) * (t ** (-alpha))[None, :]) ** q * mu[:, None] * w[None, :]
    atoms, coefs, records = [], [], []
    for key in sorted(groups):
        k, lv, cid = key
        top = tree.levels[lv][cid]
        mask = np.zeros(F.shape, dtype=bool)
        for Q in groups[key]:
            ts = level_of_t.get(Q.level)
            if ts is None or ts.size == 0:
                continue
            mask[np.ix_(Q.members, ts)] = True
        mass = float(A[mask].sum())
        if mass <= 0:
            continue
        lam = top.measure(space) ** (1.0 / p - 1.0 / q) * mass ** (1.0 / q)
        Fm = np.where(mask, F, 0.0)
        proj = phi_mu.T @ Fm  # (Neig, T): <phi_i, F_t 1_Omega>
        bhat = (w[None, :] * B_mult.T * proj).sum(axis=1) / lam
        atom = NewAtom(int(top.center), 3 * top.ball_radius, M, alpha, p, q, bhat, top, k)
        atoms.append(atom)
        coefs.append(lam)
        records.append({"k": k, "level": lv, "cube": cid, "n_cubes": len(groups[key]), "lambda": lam})

    coefs = np.array(coefs)
    dec = Decomposition(atoms, coefs, 0.0, fp, spec, {}, 1.0, float(removed))
    rec = reconstruct(dec)[0]
    dec.residual = float(lp_norm(space, fp - rec, 2) / norm_f)
    dec.stopping_data = {
        "c0": c0,
        "k_range": (int(k_lo), int(k_hi)),
        "O_sizes": {int(k): int(O[int(k)].sum()) for k in ks},
        "O": {int(k): np.flatnonzero(O[int(k)]).tolist() for k in ks},
        "family": assign,
        "unassigned": unassigned,
        "maximal": records,
        "m": m,
        "c_Psi_psi": float(c_cont),
        "quadrature_deviation": deviation,
        "t_grid": t,
        "lusin": S,
    }
    dec.normalization = _normalization(dec, pou)
    return dec


def _normalization(dec: Decomposition, pou) -> float:
    """Largest factor by which a pipeline atom exceeds its norm clauses."""
    worst = 0.0
    for atom in dec.atoms:
        r = validate_atom(atom, dec.spec, pou, 1.0, support_tol=math.inf)
        worst = max(worst, r.size_ratio)
    return worst


def coefficient_norm(dec, p: float) -> float:
    c = np.abs(np.asarray(dec.coefficients if isinstance(dec, Decomposition) else dec, dtype=float))
    if c.size == 0:
        return 0.0
    return float(np.sum(c**p) ** (1.0 / p))


def reconstruct(dec: Decomposition):
    """``(sum_j lambda_j a_j, ||f - sum||_2)``."""
    spec = dec.spec
    if not dec.atoms:
        out = np.zeros(spec.size)
    else:
        coef = sum(lam * a.b_coef for lam, a in zip(dec.coefficients, dec.atoms))
        out = spec.synthesize(spec.eigenvalues ** dec.atoms[0].M * coef)
    return out, float(lp_norm(spec.space, dec.source - out, 2))


def _sequence_norm(spec: OperatorSpectrum, atoms, s, alpha, p, q):
    levels = sorted({a.cube.level for a in atoms})
    N = spec.size
    per_level = {lv: np.zeros(N) for lv in levels}
    for a, sq in zip(atoms, s):
        V = a.cube.measure(spec.space)
        per_level[a.cube.level][a.cube.members] += V ** (-1.0 / p) * abs(sq)
    if math.isinf(q):
        inner = np.max([2.0 ** (lv * alpha) * per_level[lv] for lv in levels], axis=0)
    else:
        inner = sum((2.0 ** (lv * alpha) * per_level[lv]) ** q for lv in levels) ** (1.0 / q)
    return float(lp_norm(spec.space, inner, p))


def synthesis_bound_check(spec: OperatorSpectrum, tree, atoms, s, ns: NormSpec, pou) -> dict:
    """Ratio of ``||sum s_Q a_Q||`` to the sequence norm of the coefficients.

    Triebel-Lizorkin uses ``|| [sum_nu 2^{nu alpha q} (sum_Q V(Q)^{-1/p} |s_Q| chi_Q)^q]^{1/q} ||_p``;
    Besov uses ``[sum_nu 2^{nu alpha q} (sum_Q |s_Q|^p)^{q/p}]^{1/q}``.
    """
    s = np.asarray(s, dtype=float)
    for a in atoms:
        r = validate_atom(a, spec)
        if not r.ok:
            clause, k, val = r.witnesses[0]
            raise AtomError(f"invalid atom on {a.cube}: {clause} clause fails at k={k} (ratio {val:.3g})")
    if len(atoms) == 0 or not np.any(s):
        return {"ratio": 0.0, "lhs": 0.0, "rhs": 0.0}
    f = sum(sq * a.signal(spec) for a, sq in zip(atoms, s))
    from .norms import norm as _norm

    lhs = float(_norm(spec, pou, f, ns))
    if ns.kind == "besov":
        by_level: dict = {}
        for a, sq in zip(atoms, s):
            by_level[a.cube.level] = by_level.get(a.cube.level, 0.0) + abs(sq) ** ns.p
        vals = np.array([2.0 ** (lv * ns.alpha) * v ** (1.0 / ns.p) for lv, v in sorted(by_level.items())])
        rhs = float(vals.max() if math.isinf(ns.q) else np.sum(vals**ns.q) ** (1.0 / ns.q))
    else:
        rhs = _sequence_norm(spec, atoms, s, ns.alpha, ns.p, ns.q)
    return {"ratio": lhs / rhs if rhs > 0 else math.inf, "lhs": lhs, "rhs": rhs}


def decomposition_to_json(dec: Decomposition) -> str:
    """Atoms (cube, M, sampled b) and coefficients, plus the O_k audit."""
    atoms = []
    for a, lam in zip(dec.atoms, dec.coefficients):
        atoms.append({
            "cube": None if a.cube is None else {"level": a.cube.level, "id": a.cube.id},
            "k": a.k,
            "center": a.center,
            "radius": a.radius,
            "M": a.M,
            "lambda": float(lam),
            "b": [float(v) for v in a.b(dec.spec)],
        })
    sd = dec.stopping_data
    return json.dumps({
        "residual": dec.residual,
        "normalization": dec.normalization,
        "kernel_mass_removed": dec.kernel_mass_removed,
        "O_sizes": sd.get("O_sizes", {}),
        "atoms": atoms,
    }, indent=1)
