"""
Spectral calculus of a nonnegative operator self-adjoint in L^2(mu).

Kernels follow the convention ``(K f)(x) = sum_y K(x, y) f(y) mu(y)`` so the
kernel of ``F(sqrt L)`` is ``sum_i F(sqrt(lam_i)) phi_i(x) phi_i(y)`` with
the ``phi_i`` orthonormal in the weighted inner product.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .jacobi import jacobi_eigh
from .space import Space, ball_volumes
from .symbols import SpectralFunction, propagation_symbol, sobolev_norm

__all__ = [
    "OperatorSpectrum",
    "KernelMatrix",
    "SpectralError",
    "graph_laplacian",
    "load_operator",
    "spectral_decompose",
    "heat_kernel",
    "apply_function",
    "gaussian_diagnostic",
    "GaussianFit",
    "finite_propagation_check",
    "PropagationReport",
    "restricted_kernel_bounds",
    "operator_norm_power",
    "JACOBI_MAX_SIZE",
]

# Jacobi is O(N^3) per sweep in Python-level rounds; above this size LAPACK is used
JACOBI_MAX_SIZE = 256


class SpectralError(ValueError):
    """Operator or symbol rejected; ``witness`` names the offending entry."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


@dataclass(frozen=True, eq=False)
class OperatorSpectrum:
    space: Space
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    matrix: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.eigenvalues.size

    @property
    def lambda_max(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def kernel_tol(self) -> float:
        return 1e-10 * max(1.0, self.lambda_max)

    @property
    def lambda_min_positive(self) -> float:
        pos = self.eigenvalues[self.eigenvalues > self.kernel_tol]
        return float(pos[0]) if pos.size else math.nan

    @property
    def frequencies(self) -> np.ndarray:
        """``sqrt(lam_i)``, the points where symbols are evaluated."""
        return np.sqrt(self.eigenvalues)

    def inner(self, f, g):
        return np.sum(np.conj(f) * g * self.space.weight, axis=0)

    def coefficients(self, f):
        """``<phi_i, f>_mu`` for a signal or a stack of signals (columns)."""
        w = self.space.weight
        f = np.asarray(f)
        if f.ndim == 1:
            return self.eigenvectors.T @ (w * f)
        return self.eigenvectors.T @ (w[:, None] * f)

    def synthesize(self, coef):
        return self.eigenvectors @ coef

    def apply(self, F, f):
        """``F(sqrt L) f`` without forming the kernel."""
        vals = _symbol_values(self, F)
        coef = self.coefficients(f)
        if coef.ndim == 1:
            return self.synthesize(vals * coef)
        return self.synthesize(vals[:, None] * coef)


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    values: np.ndarray
    weight: np.ndarray
    generator: str = ""

    def operator(self) -> np.ndarray:
        """Matrix acting on plain vectors: ``K diag(mu)``."""
        return self.values * self.weight[None, :]

    def apply(self, f):
        return self.operator() @ f

    def compose(self, other: "KernelMatrix") -> "KernelMatrix":
        """Kernel of the composition ``self o other``."""
        return KernelMatrix(self.values @ (self.weight[:, None] * other.values), self.weight,
                            f"{self.generator} o {other.generator}")

    @property
    def is_symmetric(self) -> bool:
        return bool(np.allclose(self.values, self.values.T, rtol=0, atol=1e-12 * max(1.0, np.abs(self.values).max())))


def graph_laplacian(space: Space) -> np.ndarray:
    """``(L f)(x) = mu(x)^-1 sum_y w_xy (f(x) - f(y))`` with edge conductances ``w``."""
    if space.edges is None:
        raise SpectralError(f"{space.name} has no edges; supply an operator matrix instead")
    W = np.asarray(space.edges, dtype=float)
    L = np.diag(W.sum(axis=1)) - W
    return L / space.weight[:, None]


def load_operator(path) -> np.ndarray:
    """Read ``{"matrix": [[...], ...]}`` (or a bare nested list) from JSON."""
    with open(path) as fh:
        data = json.load(fh)
    if isinstance(data, dict):
        data = data["matrix"]
    return np.array(data, dtype=float)


def _sign_fix(V: np.ndarray) -> np.ndarray:
    V = V.copy()
    for i in range(V.shape[1]):
        col = V[:, i]
        nz = np.flatnonzero(np.abs(col) > 1e-12 * np.abs(col).max())
        if nz.size and col[nz[0]] < 0:
            V[:, i] = -col
    return V


def spectral_decompose(space: Space, L_matrix=None, method: str = "auto",
                       asym_tol: float = 1e-9, neg_tol: float = 1e-6) -> OperatorSpectrum:
    """Eigen-decomposition of ``L`` in the inner product weighted by ``mu``.

    ``L`` must satisfy ``diag(mu) L = (diag(mu) L)^T``. The symmetric matrix
    ``D^{1/2} L D^{-1/2}`` is diagonalised (Jacobi for N <= JACOBI_MAX_SIZE,
    LAPACK otherwise, or as forced by ``method``) and eigenvectors are mapped
    back by ``D^{-1/2}``. Eigenvalues in ``[-neg_tol, 0)`` are clamped to 0.
    """
    if L_matrix is None:
        L_matrix = graph_laplacian(space)
    L = np.array(L_matrix, dtype=float)
    n = space.size
    if L.shape != (n, n):
        raise SpectralError(f"operator shape {L.shape} does not match space size {n}")
    if not np.all(np.isfinite(L)):
        i, j = np.argwhere(~np.isfinite(L))[0]
        raise SpectralError(f"non-finite operator entry at ({i}, {j})", (int(i), int(j)))
    mu = space.weight
    form = mu[:, None] * L
    asym = np.abs(form - form.T)
    scale = max(1.0, np.abs(form).max())
    if asym.max() > asym_tol * scale:
        i, j = np.unravel_index(np.argmax(asym), asym.shape)
        raise SpectralError(
            f"operator is not self-adjoint in L^2(mu): |mu_x L_xy - mu_y L_yx| = {asym[i, j]:.3e} at ({i}, {j})",
            (int(i), int(j)),
        )
    r = np.sqrt(mu)
    S = r[:, None] * L / r[None, :]
    S = 0.5 * (S + S.T)
    if method == "auto":
        method = "jacobi" if n <= JACOBI_MAX_SIZE else "lapack"
    if method == "jacobi":
        w, U = jacobi_eigh(S)
    elif method == "lapack":
        w, U = np.linalg.eigh(S)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    lam_scale = max(1.0, float(np.abs(w).max()))
    if w[0] < -neg_tol * lam_scale:
        raise SpectralError(f"operator is not nonnegative: eigenvalue {w[0]:.3e}", int(np.argmin(w)))
    w = np.where(w < 0, 0.0, w)
    # snap roundoff-level kernel eigenvalues to exact zeros
    w = np.where(w < 1e-12 * lam_scale, 0.0, w)
    phi = _sign_fix(U / r[:, None])
    w.setflags(write=False)
    phi.setflags(write=False)
    L.setflags(write=False)
    return OperatorSpectrum(space, w, phi, L)


def _symbol_values(spec: OperatorSpectrum, F) -> np.ndarray:
    freq = spec.frequencies
    vals = F(freq) if isinstance(F, SpectralFunction) else np.asarray(F(freq))
    vals = np.broadcast_to(vals, freq.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        name = getattr(F, "name", repr(F))
        raise SpectralError(f"{name} is not finite at sqrt(lambda_{i}) = {freq[i]:.6g} (lambda = {spec.eigenvalues[i]:.6g})", i)
    return np.array(vals)


def apply_function(spec: OperatorSpectrum, F) -> KernelMatrix:
    """Kernel of ``F(sqrt L)``."""
    vals = _symbol_values(spec, F)
    phi = spec.eigenvectors
    K = (phi * vals[None, :]) @ phi.T
    if np.iscomplexobj(K) and np.all(K.imag == 0):
        K = K.real
    return KernelMatrix(K, spec.space.weight, getattr(F, "name", "F"))


def heat_kernel(spec: OperatorSpectrum, t: float) -> KernelMatrix:
    """Kernel ``p_t`` of ``exp(-t L)``."""
    if not t > 0:
        raise ValueError(f"heat time must be positive, got {t}")
    phi = spec.eigenvectors
    K = (phi * np.exp(-t * spec.eigenvalues)[None, :]) @ phi.T
    return KernelMatrix(K, spec.space.weight, f"heat(t={t:g})")


@dataclass
class GaussianFit:
    C: float
    c: float
    witness: tuple
    per_c: dict = field(default_factory=dict)
    min_entry: float = 0.0


def gaussian_diagnostic(spec: OperatorSpectrum, t_grid, c_grid=(1, 2, 4, 8, 16), floor: float = 1e-10) -> GaussianFit:
    """Smallest ``C`` with ``|p_t(x,y)| <= C / V(x, sqrt t) * exp(-d^2/(c t))`` on the samples.

    For each candidate ``c`` the constant is a max over all ``(x, y, t)``;
    the pair with the smallest ``C`` is returned. Entries below
    ``floor * max|p_t|`` are excluded: the eigensolver resolves kernels to
    about 1e-13 absolute, and below that level the computed entries are
    noise that the Gaussian factor would amplify without bound.
    """
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if t_grid.size == 0 or np.any(t_grid <= 0):
        raise ValueError("t_grid must be nonempty and positive")
    d2 = spec.space.dist ** 2
    per_c = {}
    min_entry = math.inf
    for c in c_grid:
        best, arg = 0.0, None
        for t in t_grid:
            p = heat_kernel(spec, t).values
            min_entry = min(min_entry, float(p.min()))
            V = ball_volumes(spec.space, math.sqrt(t))
            a = np.abs(p)
            keep = a > floor * a.max()
            with np.errstate(over="ignore"):
                ratio = np.where(keep, a * V[:, None] * np.exp(d2 / (c * t)), 0.0)
            k = np.unravel_index(np.argmax(ratio), ratio.shape)
            if ratio[k] > best:
                best, arg = float(ratio[k]), (int(k[0]), int(k[1]), float(t))
        per_c[float(c)] = (best, arg)
    c_best = min(per_c, key=lambda c: (per_c[c][0], c))
    C, witness = per_c[c_best]
    return GaussianFit(C, c_best, witness, per_c, min_entry)


@dataclass
class PropagationReport:
    t: float
    k: int
    off_ratio: float
    on_max: float
    off_max: float
    size_constant: float
    witness: tuple | None


def finite_propagation_check(spec: OperatorSpectrum, t: float, k: int = 0, Phi: SpectralFunction | None = None) -> PropagationReport:
    """Leakage of ``(t^2 L)^k Phi(t sqrt L)`` outside ``d(x, y) <= t``.

    Reports ``max_{d > t} |K| / max_{d <= t} |K|`` and the size constant
    ``max |K(x, y)| V(x, t)``.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    Phi = propagation_symbol() if Phi is None else Phi

    def symbol(lam):
        return (t * lam) ** (2 * k) * Phi(t * lam)

    K = np.abs(apply_function(spec, SpectralFunction(symbol, None, f"Phi_k{k}(t={t:g})")).values)
    d = spec.space.dist
    off = d > t
    on_max = float(K[~off].max())
    V = ball_volumes(spec.space, t)
    size_c = float((K * V[:, None]).max())
    if not off.any():
        return PropagationReport(t, k, 0.0, on_max, 0.0, size_c, None)
    masked = np.where(off, K, -1.0)
    i, j = np.unravel_index(np.argmax(masked), K.shape)
    off_max = float(K[i, j])
    ratio = off_max / on_max if on_max > 0 else 0.0
    return PropagationReport(t, k, ratio, on_max, off_max, size_c, (int(i), int(j)))


def _lq_on_unit(G: SpectralFunction, q: float, points: int = 2**14) -> float:
    x = np.linspace(0.0, 1.0, points + 1)
    a = np.abs(G(x))
    if math.isinf(q):
        return float(a.max())
    return float(np.trapezoid(a**q, x)) ** (1.0 / q)


def restricted_kernel_bounds(spec: OperatorSpectrum, F: SpectralFunction, R: float, s: float = 1.0,
                             q: float = math.inf, eps: float = 0.1, check_points: int = 8192) -> dict:
    """Fitted constants for three kernel bounds of a symbol supported in ``[R/4, R]``.

    ``pointwise``: ``|K(x,y)| <= C ||delta_R F||_q / sqrt(V(x,1/R) V(y,1/R))``;
    ``l2_column``: ``int |K(x,y)|^2 dmu(x) <= C ||delta_R F||_q^2 / V(y,1/R)``;
    ``weighted``: ``[int |K(x,y)|^2 (1+R d)^{2s} dmu(y)]^{1/2} <= C ||delta_R F||_{W^q_{s+eps}} / V(x,1/R)^{1/2}``.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    top = max(2.0 * R, 2.0 * math.sqrt(spec.lambda_max)) + 1.0
    grid = np.union1d(np.linspace(0.0, top, check_points), spec.frequencies)
    outside = (grid < R / 4) | (grid > R)
    vals = np.abs(F(grid))
    if np.any(vals[outside] != 0):
        bad = grid[outside][np.argmax(vals[outside] != 0)]
        raise SpectralError(f"{F.name} is nonzero at {bad:.6g}, outside [R/4, R] = [{R / 4:.6g}, {R:.6g}]", float(bad))
    K = np.abs(apply_function(spec, F).values)
    mu = spec.space.weight
    V = ball_volumes(spec.space, 1.0 / R)
    G = SpectralFunction(lambda lam: F(R * lam), (0.25, 1.0), f"delta_R {F.name}")
    nq = _lq_on_unit(G, q)
    nW = sobolev_norm(G, s + eps, q if q >= 1 else 1.0)

    def fit(lhs, rhs):
        if lhs == 0:
            return 0.0
        return lhs / rhs if rhs > 0 else math.inf

    pointwise = fit(float((K * np.sqrt(V[:, None] * V[None, :])).max()), nq)
    col = (K**2 * mu[:, None]).sum(axis=0)
    l2_column = fit(float((col * V).max()), nq**2)
    weight = (1.0 + R * spec.space.dist) ** (2 * s)
    row = np.sqrt((K**2 * weight * mu[None, :]).sum(axis=1))
    weighted = fit(float((row * np.sqrt(V)).max()), nW)
    return {"pointwise": pointwise, "l2_column": l2_column, "weighted": weighted,
            "delta_R_F_q": nq, "delta_R_F_W": nW, "R": float(R)}


def operator_norm_power(spec: OperatorSpectrum, F, iters: int = 5000, tol: float = 1e-14, seed: int = 0) -> float:
    """``||F(sqrt L)||_{L^2(mu) -> L^2(mu)}`` by power iteration on ``A* A``.

    Works on the matrix directly, so it is an independent check of the
    spectral theorem value ``max_i |F(sqrt lam_i)|``.
    """
    A = apply_function(spec, F).operator()
    mu = spec.space.weight
    Astar = (np.conj(A).T * mu[None, :]) / mu[:, None]
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(spec.size)

    def norm(u):
        return math.sqrt(float(np.sum(np.abs(u) ** 2 * mu)))

    v = v / norm(v)
    est = 0.0
    for _ in range(iters):
        w = Astar @ (A @ v)
        nw = norm(w)
        if nw == 0:
            return 0.0
        new = math.sqrt(nw)
        v = w / nw
        if abs(new - est) <= tol * max(new, 1e-300):
            est = new
            break
        est = new
    return est
