"""
Besov and Triebel-Lizorkin norms adapted to L, and their square functions.

All norms are homogeneous: the component of a signal in the kernel of L is
projected out first and its L^2 mass is reported alongside. Because psi has
exact support in [1/2, 2], the sum over j is finite and truncating it to the
spectral band loses nothing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .space import Space, ball_volumes
from .spectral import OperatorSpectrum, _symbol_values
from .symbols import PartitionOfUnity, SpectralFunction

__all__ = [
    "NormSpec",
    "SquareFunctionSpec",
    "lp_norm",
    "project_kernel",
    "default_j_range",
    "littlewood_paley_pieces",
    "besov_norm",
    "triebel_lizorkin_norm",
    "norm",
    "lp_lower_constant",
    "square_t_grid",
    "spectral_field",
    "g_function",
    "lusin_function",
    "g_function_field",
    "lusin_field",
    "change_of_angle_report",
    "ChangeOfAngleReport",
    "equivalence_report",
    "EquivalenceReport",
    "norm_row",
]


@dataclass(frozen=True)
class NormSpec:
    alpha: float = 0.0
    p: float = 2.0
    q: float = 2.0
    kind: str = "triebel_lizorkin"
    j_range: tuple | None = None

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError("p must be positive")
        if not self.q > 0:
            raise ValueError("q must be positive")
        if self.kind not in ("besov", "triebel_lizorkin"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.kind == "triebel_lizorkin" and math.isinf(self.p):
            raise ValueError("p = inf is not supported for Triebel-Lizorkin norms")

    def with_kind(self, kind):
        return NormSpec(self.alpha, self.p, self.q, kind, self.j_range)


@dataclass(frozen=True)
class SquareFunctionSpec:
    alpha: float = 0.0
    q: float = 2.0
    lambda_decay: float = 4.0
    aperture: float = 1.0
    per_octave: int = 17
    t_range: tuple | None = None

    def __post_init__(self):
        if not self.aperture >= 1:
            raise ValueError("aperture must be >= 1")


def _sum_power(a, p, axis=0, weights=None):
    if math.isinf(p):
        return np.max(a, axis=axis)
    if weights is not None:
        s = np.sum(a**p * weights, axis=axis)
    else:
        s = np.sum(a**p, axis=axis)
    return s ** (1.0 / p)


def lp_norm(space: Space, f, p: float):
    """``(sum_x |f(x)|^p mu(x))^{1/p}``; columns of a 2-d array are separate signals."""
    if not p > 0:
        raise ValueError("p must be positive")
    a = np.abs(np.asarray(f))
    w = space.weight if a.ndim == 1 else space.weight[:, None]
    return _sum_power(a, p, axis=0, weights=None if math.isinf(p) else w)


def project_kernel(spec: OperatorSpectrum, f):
    """Remove the ``ker L`` component; return ``(f_perp, removed_L2_mass)``."""
    f = np.asarray(f)
    ker = spec.eigenvalues <= spec.kernel_tol
    if not ker.any():
        return f.copy(), np.zeros(f.shape[1:]) if f.ndim > 1 else 0.0
    phi0 = spec.eigenvectors[:, ker]
    coef = spec.coefficients(f)[ker]
    removed = phi0 @ coef
    mass = lp_norm(spec.space, removed, 2)
    return f - removed, mass


def default_j_range(spec: OperatorSpectrum) -> tuple[int, int]:
    """``2^{j_min} <= sqrt(lam_min+)/2`` and ``2^{j_max} >= 2 sqrt(lam_max)``."""
    lo = spec.lambda_min_positive
    if math.isnan(lo):
        return (0, 0)
    j_min = math.floor(math.log2(math.sqrt(lo) / 2))
    j_max = math.ceil(math.log2(2 * math.sqrt(spec.lambda_max)))
    return j_min, j_max


def _as_signal(f):
    # complex signals arise from complex multipliers such as lam^{i beta}
    f = np.asarray(f)
    return f if np.iscomplexobj(f) else f.astype(float)


def _psi(pou):
    return pou.psi if isinstance(pou, PartitionOfUnity) else pou


def littlewood_paley_pieces(spec: OperatorSpectrum, pou, f, j_range=None, multiplier=None):
    """``psi_j(sqrt L) f`` stacked along a leading axis, kernel component removed.

    Returns ``(js, pieces, removed_mass)`` with ``pieces[k] = psi_{js[k]}(sqrt L) f``.
    A ``multiplier`` F gives the pieces of ``F(sqrt L) f`` in the same
    spectral pass, so F = 1 reproduces the pieces of f bit for bit.
    """
    j_min, j_max = default_j_range(spec) if j_range is None else j_range
    js = np.arange(j_min, j_max + 1)
    f = _as_signal(f)
    fp, mass = project_kernel(spec, f)
    coef = spec.coefficients(fp)
    freq = spec.frequencies
    psi = _psi(pou)
    # (J, Neig) multipliers
    mult = np.array([psi(freq * 2.0 ** (-j)) for j in js])
    if multiplier is not None:
        mult = mult * _symbol_values(spec, multiplier)[None, :]
    mult[:, spec.eigenvalues <= spec.kernel_tol] = 0.0
    if coef.ndim == 1:
        pieces = (mult * coef[None, :]) @ spec.eigenvectors.T
    else:
        pieces = np.einsum("jk,kb,xk->jxb", mult, coef, spec.eigenvectors)
    return js, pieces, mass


def besov_norm(spec: OperatorSpectrum, pou, f, ns: NormSpec, multiplier=None):
    """``[sum_j (2^{j alpha} ||psi_j(sqrt L) f||_p)^q]^{1/q}``."""
    js, pieces, _ = littlewood_paley_pieces(spec, pou, f, ns.j_range, multiplier)
    scale = 2.0 ** (ns.alpha * js)
    norms = np.array([lp_norm(spec.space, P, ns.p) for P in pieces])
    norms = norms * (scale if norms.ndim == 1 else scale[:, None])
    return _sum_power(norms, ns.q, axis=0)


def triebel_lizorkin_norm(spec: OperatorSpectrum, pou, f, ns: NormSpec, multiplier=None):
    """``|| [sum_j (2^{j alpha} |psi_j(sqrt L) f|)^q]^{1/q} ||_p``."""
    js, pieces, _ = littlewood_paley_pieces(spec, pou, f, ns.j_range, multiplier)
    scale = 2.0 ** (ns.alpha * js)
    a = np.abs(pieces) * scale.reshape((-1,) + (1,) * (pieces.ndim - 1))
    inner = _sum_power(a, ns.q, axis=0)
    return lp_norm(spec.space, inner, ns.p)


def norm(spec: OperatorSpectrum, pou, f, ns: NormSpec, multiplier=None):
    """Norm of ``f``, or of ``F(sqrt L) f`` when a ``multiplier`` F is given."""
    if ns.kind == "besov":
        return besov_norm(spec, pou, f, ns, multiplier)
    return triebel_lizorkin_norm(spec, pou, f, ns, multiplier)


def lp_lower_constant(spec: OperatorSpectrum, pou, j_range=None) -> float:
    """``min over positive eigenvalues of (sum_j psi_j(sqrt lam)^2)^{1/2}``.

    With alpha = 0 and p = q = 2 the norm lies between this constant times
    ``||f||_2`` and ``||f||_2`` (for f orthogonal to ker L).
    """
    j_min, j_max = default_j_range(spec) if j_range is None else j_range
    freq = spec.frequencies[spec.eigenvalues > spec.kernel_tol]
    if freq.size == 0:
        return 1.0
    psi = _psi(pou)
    s = sum(psi(freq * 2.0 ** (-j)) ** 2 for j in range(j_min, j_max + 1))
    return float(np.sqrt(s.min()))


def square_t_grid(spec: OperatorSpectrum, per_octave: int = 17, t_range=None):
    """Log-uniform t-grid and trapezoid weights for ``dt/t``.

    The default range ``[1/(2 sqrt lam_max), 2/sqrt lam_min+]`` is exactly
    where ``psi(t sqrt lam)`` can be nonzero on the spectrum.
    """
    if t_range is None:
        lo = 0.5 / math.sqrt(spec.lambda_max) if spec.lambda_max > 0 else 1.0
        lmp = spec.lambda_min_positive
        hi = 2.0 / math.sqrt(lmp) if not math.isnan(lmp) else 2 * lo
        t_range = (lo, hi)
    lo, hi = t_range
    octaves = math.log2(hi / lo)
    count = max(2, int(math.ceil(per_octave * octaves)) + 1)
    t = np.geomspace(lo, hi, count)
    h = math.log(hi / lo) / (count - 1)
    w = np.full(count, h)
    w[0] = w[-1] = h / 2
    return t, w


def spectral_field(spec: OperatorSpectrum, symbol, f, t):
    """``F(y, t) = phi(t sqrt L) f(y)`` on a t-grid; shape ``(N, T)`` or ``(N, T, B)``."""
    phi = _psi(symbol)
    fp, _ = project_kernel(spec, _as_signal(f))
    coef = spec.coefficients(fp)
    freq = spec.frequencies
    mult = np.array([phi(tk * freq) for tk in t])  # (T, Neig)
    mult[:, spec.eigenvalues <= spec.kernel_tol] = 0.0
    if coef.ndim == 1:
        return spec.eigenvectors @ (mult * coef[None, :]).T
    return np.einsum("tk,kb,xk->xtb", mult, coef, spec.eigenvectors)


def _field_power(field, t, alpha, q):
    scale = t ** (-alpha)
    shape = (1, -1) + (1,) * (field.ndim - 2)
    return (np.abs(field) * scale.reshape(shape)) ** q


def _accumulate(space: Space, A, t, w, kernel_for_t):
    N = space.size
    out = np.zeros((N,) + A.shape[2:])
    mu = space.weight
    for k, tk in enumerate(t):
        Kt = kernel_for_t(tk) * mu[None, :] / ball_volumes(space, tk)[:, None]
        out += w[k] * (Kt @ A[:, k])
    return out


def g_function_field(space: Space, field, t, w, alpha=0.0, q=2.0, lambda_decay=4.0):
    """Discretised ``G^alpha_{lambda,q} F`` for a field sampled at ``t`` with weights ``w``."""
    A = _field_power(field, t, alpha, q)
    d = space.dist
    out = _accumulate(space, A, t, w, lambda tk: (1.0 + d / tk) ** (-lambda_decay * q))
    return out ** (1.0 / q)


def lusin_field(space: Space, field, t, w, alpha=0.0, q=2.0, aperture=1.0):
    """Discretised ``S^alpha_{a,q} F``: cone ``d(x,y) < a t``."""
    if not aperture >= 1:
        raise ValueError("aperture must be >= 1")
    A = _field_power(field, t, alpha, q)
    d = space.dist
    out = _accumulate(space, A, t, w, lambda tk: (d < aperture * tk).astype(float))
    return out ** (1.0 / q)


def g_function(spec: OperatorSpectrum, pou, f, sq: SquareFunctionSpec = SquareFunctionSpec()):
    t, w = square_t_grid(spec, sq.per_octave, sq.t_range)
    F = spectral_field(spec, pou, f, t)
    return g_function_field(spec.space, F, t, w, sq.alpha, sq.q, sq.lambda_decay)


def lusin_function(spec: OperatorSpectrum, pou, f, sq: SquareFunctionSpec = SquareFunctionSpec()):
    t, w = square_t_grid(spec, sq.per_octave, sq.t_range)
    F = spectral_field(spec, pou, f, t)
    return lusin_field(spec.space, F, t, w, sq.alpha, sq.q, sq.aperture)


@dataclass
class ChangeOfAngleReport:
    exponent: float
    apertures: np.ndarray
    ratios: np.ndarray
    bound: float
    n: float
    ok: bool


def change_of_angle_report(spec: OperatorSpectrum, pou, batch, alpha=0.0, p=2.0, q=2.0,
                           a_list=(1, 2, 4, 8), n: float | None = None, slack: float = 0.3,
                           per_octave: int = 17) -> ChangeOfAngleReport:
    """Growth exponent of ``||S_a F||_p / ||S_1 F||_p`` in the aperture.

    The ratio is maximised over the batch for each ``a`` and ``log ratio`` is
    fitted against ``log a`` through the origin (the ratio is 1 at a = 1).
    ``ok`` compares against ``n/(p ^ q) + slack``.
    """
    batch = np.atleast_2d(np.asarray(batch, dtype=float))
    if batch.shape[0] != spec.size:
        batch = batch.T
    a_list = np.asarray(a_list, dtype=float)
    if np.any(a_list < 1) or np.any(a_list > 16):
        raise ValueError("apertures must lie in [1, 16]")
    t, w = square_t_grid(spec, per_octave)
    F = spectral_field(spec, pou, batch, t)
    base = lp_norm(spec.space, lusin_field(spec.space, F, t, w, alpha, q, 1.0), p)
    live = base > 1e-14 * max(1.0, float(np.max(base)))
    if not live.any():
        raise ValueError("degenerate batch: every signal has zero square function")
    ratios = []
    for a in a_list:
        Sa = lp_norm(spec.space, lusin_field(spec.space, F[..., live], t, w, alpha, q, a), p)
        ratios.append(float(np.max(Sa / base[live])))
    ratios = np.array(ratios)
    x = np.log(a_list)
    y = np.log(ratios)
    e = float(np.dot(x, y) / np.dot(x, x)) if np.dot(x, x) > 0 else 0.0
    if n is None:
        from .space import fit_doubling

        n = fit_doubling(spec.space).n
    bound = n / min(p, q) + slack
    return ChangeOfAngleReport(e, a_list, ratios, bound, float(n), e <= bound)


@dataclass
class EquivalenceReport:
    bands: dict = field(default_factory=dict)

    def band(self, name):
        return self.bands[name]["min"], self.bands[name]["max"]


def _band(r):
    r = np.asarray(r, dtype=float)
    return {"min": float(r.min()), "max": float(r.max()), "argmin": int(np.argmin(r)), "argmax": int(np.argmax(r))}


def equivalence_report(spec: OperatorSpectrum, pou1, pou2, batch, ns: NormSpec,
                       sq: SquareFunctionSpec | None = None, phi: SpectralFunction | None = None) -> EquivalenceReport:
    """Ratio bands (min, max over the batch, with witnesses) for equivalent norms.

    ``partition``: norm with ``pou2`` over norm with ``pou1``. ``g_function``
    and ``lusin``: ``||G(psi(t sqrt L) f)||_p`` and ``||S(psi(t sqrt L) f)||_p``
    over the Triebel-Lizorkin norm. With ``phi`` given, ``lusin_phi`` and
    ``g_function_phi`` use ``phi(t sqrt L) f`` on a widened t-grid.
    """
    batch = np.asarray(batch, dtype=float)
    if batch.size == 0:
        raise ValueError("empty batch")
    if batch.ndim == 1:
        batch = batch[:, None]
    sq = sq or SquareFunctionSpec(alpha=ns.alpha, q=ns.q)
    base = norm(spec, pou1, batch, ns)
    rep = EquivalenceReport()
    if pou2 is not None:
        rep.bands["partition"] = _band(norm(spec, pou2, batch, ns) / base)
    tlspec = ns.with_kind("triebel_lizorkin")
    tl = triebel_lizorkin_norm(spec, pou1, batch, tlspec)
    t, w = square_t_grid(spec, sq.per_octave, sq.t_range)
    F = spectral_field(spec, pou1, batch, t)
    G = lp_norm(spec.space, g_function_field(spec.space, F, t, w, ns.alpha, ns.q, sq.lambda_decay), ns.p)
    S = lp_norm(spec.space, lusin_field(spec.space, F, t, w, ns.alpha, ns.q, sq.aperture), ns.p)
    rep.bands["g_function"] = _band(G / tl)
    rep.bands["lusin"] = _band(S / tl)
    if phi is not None:
        lo = 1.0 / (32 * math.sqrt(spec.lambda_max))
        hi = 8.0 / math.sqrt(spec.lambda_min_positive)
        t2, w2 = square_t_grid(spec, sq.per_octave, (lo, hi))
        F2 = spectral_field(spec, phi, batch, t2)
        S2 = lp_norm(spec.space, lusin_field(spec.space, F2, t2, w2, ns.alpha, ns.q, sq.aperture), ns.p)
        G2 = lp_norm(spec.space, g_function_field(spec.space, F2, t2, w2, ns.alpha, ns.q, sq.lambda_decay), ns.p)
        rep.bands["lusin_phi"] = _band(S2 / tl)
        rep.bands["g_function_phi"] = _band(G2 / tl)
    return rep


def norm_row(spec: OperatorSpectrum, pou, f, ns: NormSpec) -> dict:
    """CSV-ready record ``{space, N, alpha, p, q, kind, value, kernel_mass_removed}``."""
    _, mass = project_kernel(spec, f)
    return {
        "space": spec.space.name,
        "N": spec.size,
        "alpha": ns.alpha,
        "p": ns.p,
        "q": ns.q,
        "kind": ns.kind,
        "value": float(norm(spec, pou, f, ns)),
        "kernel_mass_removed": float(mass),
    }
