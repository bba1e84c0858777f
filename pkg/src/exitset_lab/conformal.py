"""Energies r, k, J, their gradient, normalization, and the Dirichlet
eigenvalue probes behind the sign hypotheses on K."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg
from scipy.spatial import cKDTree

from .bubbles import closed_form_constants
from .errors import ConvergenceError, DomainError, MaskError
from .grid import TorusGrid

X_TOL = 1e-10


@dataclass(frozen=True)
class CurvatureField:
    K: np.ndarray
    kmin: float = field(init=False)
    kmax: float = field(init=False)

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if not np.all(np.isfinite(K)):
            raise DomainError("curvature has non-finite values")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "kmin", float(K.min()))
        object.__setattr__(self, "kmax", float(K.max()))
        if self.kmin >= 0:
            raise DomainError("min K must be negative")

    @classmethod
    def constant(cls, grid: TorusGrid, c: float) -> "CurvatureField":
        return cls(grid.constant(c))

    @property
    def nonneg_mask(self) -> np.ndarray:
        return self.K >= 0

    @property
    def sign_changing(self) -> bool:
        return self.kmax > 0


def exponents(n: int) -> tuple[float, float]:
    """(2n/(n-2), (n+2)/(n-2))."""
    return 2.0 * n / (n - 2), (n + 2.0) / (n - 2)


def compute_rk(grid: TorusGrid, u: np.ndarray, K: CurvatureField) -> tuple[float, float]:
    p, _ = exponents(grid.n)
    r = grid.l_inner(u, u)
    k = grid.integrate(K.K * np.abs(u) ** p)
    return r, k


def in_X(r: float, k: float) -> bool:
    return r < -X_TOL and k < -X_TOL


def J_from_rk(n: int, r: float, k: float) -> float:
    if not in_X(r, k):
        raise DomainError(f"state outside X: r = {r:.3e}, k = {k:.3e}")
    return (-k) / (-r) ** (n / (n - 2.0))


def compute_J(grid: TorusGrid, u, K: CurvatureField) -> float:
    r, k = compute_rk(grid, u, K)
    return J_from_rk(grid.n, r, k)


def grad_J(grid: TorusGrid, u, K: CurvatureField) -> np.ndarray:
    """L2 gradient of J: 2*/(-r)^(n/(n-2)) * ((-k/-r) L u - K u^q)."""
    if np.any(u <= 0):
        raise DomainError("u must be positive")
    n = grid.n
    p, q = exponents(n)
    r, k = compute_rk(grid, u, K)
    if not in_X(r, k):
        raise DomainError(f"state outside X: r = {r:.3e}, k = {k:.3e}")
    return p / (-r) ** (n / (n - 2.0)) * ((k / r) * grid.apply_L(u) - K.K * u**q)


def equation_residual(grid: TorusGrid, u, K: CurvatureField) -> float:
    """W^{-1,2} residual of L w = K w^q for the rescaling w = (r/k)^((n-2)/4) u.

    Critical points of J solve the equation only after this rescaling.
    """
    n = grid.n
    _, q = exponents(n)
    r, k = compute_rk(grid, u, K)
    if not in_X(r, k):
        raise DomainError(f"state outside X: r = {r:.3e}, k = {k:.3e}")
    w = (r / k) ** ((n - 2) / 4.0) * u
    return grid.w_neg1(grid.apply_L(w) - K.K * w**q)


def normalize(grid: TorusGrid, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if np.any(u <= 0):
        raise DomainError("normalize needs a positive field")
    s = grid.lcrit(u)
    if s == 0:
        raise DomainError("zero critical norm")
    return u / s


@dataclass(frozen=True)
class ConformalState:
    u: np.ndarray
    r: float
    k: float
    J: float | None
    normalized: bool

    @classmethod
    def build(cls, grid: TorusGrid, u, K: CurvatureField, normalized: bool = False):
        u = grid.check_field(u)
        if np.any(u <= 0):
            raise DomainError("conformal factor must be positive")
        if normalized:
            u = normalize(grid, u)
        r, k = compute_rk(grid, u, K)
        J = J_from_rk(grid.n, r, k) if in_X(r, k) else None
        norm_ok = abs(grid.lcrit(u) - 1.0) <= 1e-10
        return cls(u, r, k, J, norm_ok)

    @property
    def in_X(self) -> bool:
        return in_X(self.r, self.k)


# Dirichlet eigenvalue of the conformal Laplacian on a mask --------------------
def nu1_shift(grid: TorusGrid) -> float:
    return 2.0 + grid.cn * (2.0 * np.pi / grid.L) ** 2


def _check_mask(grid, mask):
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != grid.shape:
        raise MaskError("mask shape does not match grid")
    if not mask.any() or mask.all():
        raise MaskError("mask and its complement must both be nonempty")
    return mask


def dirichlet_nu1(grid: TorusGrid, mask, max_iters=500, tol=1e-12) -> float:
    """Lowest eigenvalue of the conformal Laplacian compressed to the mask.

    Inverse power iteration on the shifted compression; inner solves by CG.
    """
    mask = _check_mask(grid, mask)
    idx = np.flatnonzero(mask)
    sigma = nu1_shift(grid)
    full = np.zeros(grid.shape)

    def apply(x):
        full.ravel()[idx] = x
        y = grid.apply_L(full).ravel()[idx] + sigma * x
        full.ravel()[idx] = 0.0
        return y

    def precondition(x):
        # compression of the unmasked inverse, diagonal in Fourier space
        full.ravel()[idx] = x
        y = grid.ifft(grid.fft(full) / (grid.cn * grid.k2 - 1.0 + sigma)).ravel()[idx]
        full.ravel()[idx] = 0.0
        return y

    shape = (idx.size, idx.size)
    A = LinearOperator(shape, matvec=apply, dtype=float)
    M = LinearOperator(shape, matvec=precondition, dtype=float)
    x = np.ones(idx.size) / np.sqrt(idx.size)
    rho_old = np.inf
    for _ in range(max_iters):
        y, info = cg(A, x, x0=x / max(rho_old + sigma, 1.0) if np.isfinite(rho_old) else None,
                     rtol=1e-12, atol=0.0, maxiter=5000, M=M)
        if info > 0:
            raise ConvergenceError("inner CG solve did not converge")
        x = y / np.linalg.norm(y)
        Ax = apply(x)
        rho = float(x @ Ax) - sigma
        res = np.linalg.norm(Ax - (rho + sigma) * x)
        if abs(rho - rho_old) <= tol * max(1.0, abs(rho)) and res <= 1e-7 * max(1.0, abs(rho) + sigma):
            return rho
        rho_old = rho
    raise ConvergenceError(f"inverse iteration did not converge in {max_iters} iterations")


def _second_derivative_matrix(N: int, L: float) -> np.ndarray:
    # 1-D Fourier second-derivative matrix with the same Nyquist convention
    k = 2.0 * np.pi * np.fft.fftfreq(N, d=L / N)
    return np.real(np.fft.ifft(-(k**2)[:, None] * np.fft.fft(np.eye(N), axis=0), axis=0))


def dense_nu1(grid: TorusGrid, mask) -> float:
    """Dense eigensolve of the compressed operator built from Kronecker factors."""
    mask = _check_mask(grid, mask)
    coords = np.argwhere(mask)
    D2 = _second_derivative_matrix(grid.N, grid.L)
    m = coords.shape[0]
    lap = np.zeros((m, m))
    for ax in range(grid.n):
        others = [b for b in range(grid.n) if b != ax]
        same = np.ones((m, m), dtype=bool)
        for b in others:
            same &= coords[:, b][:, None] == coords[:, b][None, :]
        lap += np.where(same, D2[coords[:, ax][:, None], coords[:, ax][None, :]], 0.0)
    A = -grid.cn * lap - np.eye(m)
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])


# report on the sign structure of K --------------------------------------------
def boundary_cells(mask: np.ndarray) -> np.ndarray:
    inner = mask.copy()
    for ax in range(mask.ndim):
        for s in (1, -1):
            inner &= np.roll(mask, s, axis=ax)
    return mask & ~inner


def dilate(mask: np.ndarray) -> np.ndarray:
    out = mask.copy()
    for ax in range(mask.ndim):
        for s in (1, -1):
            out |= np.roll(mask, s, axis=ax)
    return out


def prop11_report(grid: TorusGrid, K: CurvatureField, omega, D) -> dict:
    omega = _check_mask(grid, omega)
    D = _check_mask(grid, D)
    nonneg = K.nonneg_mask
    if (dilate(nonneg) & ~omega).any() and nonneg.any():
        raise MaskError("{K >= 0} is not strictly inside Omega")
    if (dilate(omega) & ~D).any():
        raise MaskError("Omega is not strictly inside D")
    n = grid.n
    nu1 = dirichlet_nu1(grid, D)
    pts_o = np.argwhere(boundary_cells(omega)) * grid.h
    pts_d = np.argwhere(boundary_cells(D)) * grid.h
    tree = cKDTree(pts_d, boxsize=grid.L * (1 + 1e-12))
    dist = float(tree.query(pts_o % grid.L)[0].min())
    sup_K = K.kmax
    inf_out = float(np.min(-K.K[~omega]))
    bracket = (dist ** (2.0 * (n - 1) / (n - 2)) * (nu1 / (nu1 + 1.0)) ** (n / (n - 2.0))
               if nu1 > 0 else float("nan"))
    c1 = closed_form_constants(n).c1
    bound = (4.0 * n * (n - 1)) ** (n / (n - 2.0)) * (c1 / grid.volume) ** (2.0 / (n - 2))
    ratio = sup_K / inf_out if inf_out > 0 else float("inf")
    return {
        "nu1_D": nu1,
        "nu1_positive": bool(nu1 > 0),
        "dist_boundaries": dist,
        "sup_K": sup_K,
        "inf_outside_minus_K": inf_out,
        "bracket": bracket,
        "ratio": ratio,
        "ratio_lower_bound": bound,
        "ratio_bound_holds": bool(ratio >= bound * (1 - 1e-12)) if sup_K > 0 else None,
    }
