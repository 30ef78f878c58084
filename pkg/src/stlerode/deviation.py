"""Probabilistic bounds on the deviation between associated trajectories.

For a system ``X_{t+1} = f(X_t, d_t, t) + w_t`` whose step map is
``L_t``-Lipschitz in a weighted norm and whose noise is sub-Gaussian with
variance proxy ``sigma_t^2`` (in the same norm), the stochastic state stays
within ``r_t`` of the noise-free state with probability at least ``1 - theta``:

    r_t = sqrt(Psi_t * (eps1 * n + eps2 * log(1/theta)))

with ``psi_t = prod_{k<=t} L_k^2`` and
``Psi_t = psi_{t-1} * sum_{k<t} sigma_k^2 / psi_k``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .geometry import Ellipsoid

#: multiplicative inflation applied to sampled Lipschitz estimates
LIPSCHITZ_SAFETY = 1.002


def _check_open_unit(x: float, name: str) -> float:
    x = float(x)
    if not 0 < x < 1:
        raise ValueError(f"{name} must lie in (0, 1), got {x}")
    return x


def epsilon_coeffs(eps: float) -> tuple[float, float]:
    """The two coefficients multiplying ``n`` and ``log(1/theta)``."""
    eps = _check_open_unit(eps, "epsilon")
    eps1 = 2 * math.log(1 + 2 / eps) / (1 - eps) ** 2
    eps2 = 2 / (1 - eps) ** 2
    return eps1, eps2


def _bound_objective(eps: float, n: int, log_inv_theta: float) -> float:
    e1, e2 = epsilon_coeffs(eps)
    return e1 * n + e2 * log_inv_theta


def _bound_slope(eps: float, n: int, log_inv_theta: float) -> float:
    d1 = (-4 / (eps * (eps + 2))) / (1 - eps) ** 2 + 4 * math.log(1 + 2 / eps) / (1 - eps) ** 3
    d2 = 4 / (1 - eps) ** 3
    return d1 * n + d2 * log_inv_theta


def optimize_epsilon(n: int, theta: float, grid: int = 999, bisection_steps: int = 40) -> float:
    """Minimise ``eps1 * n + eps2 * log(1/theta)`` over ``eps`` in (0, 1).

    A uniform grid locates the basin; bisection on the derivative sign then
    refines within the neighbouring grid cells. The refined point is only
    accepted if it does not lose to the grid minimum.
    """
    theta = _check_open_unit(theta, "theta")
    if n < 1:
        raise ValueError("state dimension must be positive")
    lit = math.log(1 / theta)
    pts = np.arange(1, grid + 1) / (grid + 1)
    vals = np.array([_bound_objective(e, n, lit) for e in pts])
    i = int(np.argmin(vals))
    lo = pts[i - 1] if i > 0 else pts[i] / 2
    hi = pts[i + 1] if i < grid - 1 else (pts[i] + 1) / 2
    for _ in range(bisection_steps):
        mid = 0.5 * (lo + hi)
        if _bound_slope(mid, n, lit) > 0:
            hi = mid
        else:
            lo = mid
    best = 0.5 * (lo + hi)
    if _bound_objective(best, n, lit) <= vals[i]:
        return best
    return float(pts[i])


def bound_constant(n: int, theta: float, eps: float) -> float:
    e1, e2 = epsilon_coeffs(eps)
    return e1 * n + e2 * math.log(1 / theta)


def _check_schedule(L: Sequence[float], sigma2: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    L = np.asarray(L, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if L.ndim != 1 or sigma2.shape != L.shape:
        raise ValueError("Lipschitz and variance-proxy schedules must be 1-D and equally long")
    if np.any(~(L > 0)):
        raise ValueError("Lipschitz constants must be positive")
    if np.any(~(sigma2 >= 0)):
        raise ValueError("variance proxies must be nonnegative")
    return L, sigma2


def _terms(L: np.ndarray, sigma2: np.ndarray, t: int, log_psi: np.ndarray) -> np.ndarray:
    """``a_k = sigma_k sqrt(psi_{t-1} / psi_k)`` for ``k < t``, so ``Psi_t = sum a_k^2``."""
    return np.sqrt(sigma2[:t]) * np.exp(0.5 * (log_psi[t - 1] - log_psi[:t]))


def psi_schedules(L: Sequence[float], sigma2: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Return ``psi_0..psi_{T-1}`` and ``Psi_0..Psi_T``.

    ``psi_{-1} = 1`` and the empty sum give ``Psi_0 = 0``. The ratios
    ``psi_{t-1} / psi_k`` are formed in log space so long horizons with
    ``L > 1`` do not overflow before they cancel.
    """
    L, sigma2 = _check_schedule(L, sigma2)
    T = len(L)
    log_psi = np.cumsum(2 * np.log(L))
    psi = np.exp(log_psi)
    Psi = np.zeros(T + 1)
    for t in range(1, T + 1):
        a = _terms(L, sigma2, t, log_psi)
        Psi[t] = float(np.sum(a * a))
    return psi, Psi


def prs_radius(L: Sequence[float], sigma2: Sequence[float], n: int, theta: float,
               eps: float | None = None) -> np.ndarray:
    """Tight PRS radii ``r_{theta,0..T}`` in the norm of ``L`` and ``sigma2``."""
    theta = _check_open_unit(theta, "theta")
    if eps is None:
        eps = optimize_epsilon(n, theta)
    c = bound_constant(n, theta, eps)
    _, Psi = psi_schedules(L, sigma2)
    return math.sqrt(c) * np.sqrt(Psi)


def worst_case_radius(L: Sequence[float], sigma2: Sequence[float], n: int, delta: float, T: int,
                      eps: float | None = None) -> np.ndarray:
    """Radii ``r^w_{delta,0..len(L)}`` from summing per-step noise bounds.

    Each step's noise is bounded at level ``delta/T`` and propagated through
    the Lipschitz products, so the terms add linearly instead of in quadrature.
    """
    delta = _check_open_unit(delta, "delta")
    if T < 1:
        raise ValueError("horizon must be at least 1")
    theta = delta / T
    if eps is None:
        eps = optimize_epsilon(n, theta)
    c = bound_constant(n, theta, eps)
    L, sigma2 = _check_schedule(L, sigma2)
    log_psi = np.cumsum(2 * np.log(L))
    # same terms as the tight bound: sum a_k versus sqrt(sum a_k^2)
    sums = np.zeros(len(L) + 1)
    for t in range(1, len(L) + 1):
        sums[t] = float(np.sum(_terms(L, sigma2, t, log_psi)))
    return math.sqrt(c) * sums


def subgaussian_proxy(cov, P=None) -> float:
    """Variance proxy of ``N(0, cov)`` measured in the ``P``-weighted norm."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise ValueError("covariance must be square")
    if not np.allclose(cov, cov.T, atol=1e-14):
        raise ValueError("covariance must be symmetric")
    if np.linalg.eigvalsh(cov)[0] < -1e-12 * max(1.0, np.abs(cov).max()):
        raise ValueError("covariance must be positive semidefinite")
    if P is None:
        return float(max(0.0, np.linalg.eigvalsh(cov)[-1]))
    Ph = matrix_sqrt(P)
    return float(max(0.0, np.linalg.eigvalsh(Ph @ cov @ Ph)[-1]))


def matrix_sqrt(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    lam, vec = np.linalg.eigh(0.5 * (P + P.T))
    if lam[0] <= 0:
        raise ValueError("weight matrix must be positive definite")
    return (vec * np.sqrt(lam)) @ vec.T


def induced_norm(A, P=None) -> float:
    """Operator norm of ``A`` from and to the ``P``-weighted norm."""
    A = np.asarray(A, dtype=float)
    if P is None:
        return float(np.linalg.norm(A, 2))
    Ph = matrix_sqrt(P)
    return float(np.linalg.norm(Ph @ A @ np.linalg.inv(Ph), 2))


def weighted_norm(x, P=None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if P is None:
        return np.linalg.norm(x, axis=-1)
    return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", x, np.asarray(P), x), 0.0))


# ---------------------------------------------------------------------------
# Weight search for linear closed loops
# ---------------------------------------------------------------------------

def _lyapunov_fixed_point(A: np.ndarray, mu: float, max_iter: int = 100000,
                          tol: float = 1e-12, blowup: float = 1e12) -> np.ndarray | None:
    n = A.shape[0]
    P = np.eye(n)
    M = A / mu
    for _ in range(max_iter):
        P_next = M.T @ P @ M + np.eye(n)
        if not np.all(np.isfinite(P_next)) or np.abs(P_next).max() > blowup:
            return None
        if np.abs(P_next - P).max() <= tol * np.abs(P_next).max():
            return 0.5 * (P_next + P_next.T)
        P = P_next
    return None


def weight_search_linear(A_cl, rel_tol: float = 0.01) -> np.ndarray:
    """Weight ``P`` (largest eigenvalue 1) making ``A_cl`` contractive in ``||.||_P``.

    Bisection on ``mu`` over feasibility of ``A^T P A <= mu^2 P``; feasibility
    is decided by iterating ``P <- A^T P A / mu^2 + I``, which converges exactly
    when ``mu`` exceeds the spectral radius. Stops once the bracket is within
    ``rel_tol`` of the infeasible end and returns the feasible end's ``P``.
    """
    A = np.asarray(A_cl, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("closed-loop matrix must be square")
    rho = float(np.max(np.abs(np.linalg.eigvals(A))))
    if rho >= 1:
        raise ValueError(f"closed loop is not stable (spectral radius {rho:.6g})")
    lo = rho
    hi = max(float(np.linalg.norm(A, 2)), rho) * 1.01 + 1e-12
    P_hi = _lyapunov_fixed_point(A, hi)
    if P_hi is None:
        raise RuntimeError("weight search failed to find a feasible starting point")
    while hi - lo > rel_tol * max(lo, 1e-12):
        mid = 0.5 * (lo + hi)
        P = _lyapunov_fixed_point(A, mid) if mid > 0 else None
        if P is None:
            lo = mid
        else:
            hi, P_hi = mid, P
    return P_hi / np.linalg.eigvalsh(P_hi)[-1]


# ---------------------------------------------------------------------------
# Sampled Lipschitz constants
# ---------------------------------------------------------------------------

StepFn = Callable[[np.ndarray, np.ndarray, int], np.ndarray]


def _box(lo, hi, name: str) -> tuple[np.ndarray, np.ndarray]:
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    if lo.shape != hi.shape or np.any(hi < lo) or not np.all(np.isfinite(lo) & np.isfinite(hi)):
        raise ValueError(f"{name} box bounds are invalid")
    return lo, hi


def _chunk_ratio(step: StepFn, lo, hi, dlo, dhi, t: int, count: int, seed: int, chunk: int,
                 Ph: np.ndarray, refine: int) -> float:
    rng = np.random.default_rng([seed, t, chunk])
    n = len(lo)
    x = rng.uniform(lo, hi, size=(count, n))
    y = rng.uniform(lo, hi, size=(count, n))
    d = rng.uniform(dlo, dhi, size=(count, len(dlo)))

    def ratio(x, y, d):
        num = np.linalg.norm((step(x, d, t) - step(y, d, t)) @ Ph.T, axis=-1)
        den = np.linalg.norm((x - y) @ Ph.T, axis=-1)
        return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)

    r = ratio(x, y, d)
    best = float(r.max(initial=0.0))
    if refine:
        # local hill climb from the best pairs (still sampled, just not uniformly)
        top = np.argsort(r)[-min(16, count):]
        bx, by, bd, br = x[top], y[top], d[top], r[top]
        width = hi - lo
        for k in range(refine):
            scale = 0.1 * width * (0.5 ** (k // 10))
            cx = np.clip(bx + rng.normal(size=bx.shape) * scale, lo, hi)
            cy = np.clip(by + rng.normal(size=by.shape) * scale, lo, hi)
            cr = ratio(cx, cy, bd)
            better = cr > br
            bx[better], by[better], br[better] = cx[better], cy[better], cr[better]
        best = max(best, float(br.max()))
    return best


def lipschitz_estimate_sampling(step: StepFn, state_lo, state_hi, dist_lo, dist_hi, t: int = 0,
                                pairs: int = 10_000, seed: int = 0, P=None,
                                safety: float = LIPSCHITZ_SAFETY, chunk_size: int = 5000,
                                refine: int = 60, workers: int = 1) -> float:
    """Sampled Lipschitz constant of ``x -> step(x, d, t)`` in the ``P`` norm.

    Samples are split into fixed-size chunks indexed by sample position, each
    with its own seeded stream, and merged by max; the result does not depend
    on ``workers``.
    """
    lo, hi = _box(state_lo, state_hi, "state")
    dlo, dhi = _box(dist_lo, dist_hi, "disturbance")
    if np.any(hi - lo <= 0):
        raise ValueError("state box must have positive volume")
    if pairs < 1:
        raise ValueError("need at least one sample pair")
    Ph = np.eye(len(lo)) if P is None else matrix_sqrt(P)
    sizes = [min(chunk_size, pairs - s) for s in range(0, pairs, chunk_size)]
    jobs = [(i, c) for i, c in enumerate(sizes)]

    def run(job):
        i, c = job
        return _chunk_ratio(step, lo, hi, dlo, dhi, t, c, seed, i, Ph, refine if i == 0 else 0)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            ratios = list(pool.map(run, jobs))
    else:
        ratios = [run(j) for j in jobs]
    return safety * max(ratios)


# ---------------------------------------------------------------------------
# Schedule container
# ---------------------------------------------------------------------------

@dataclass
class DeviationSchedule:
    """Per-step Lipschitz constants and variance proxies with derived radii."""

    lipschitz: np.ndarray
    sigma2: np.ndarray
    n: int
    theta: float
    weight: np.ndarray = field(default=None, repr=False)
    eps: float | None = None
    radii: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.lipschitz, self.sigma2 = _check_schedule(self.lipschitz, self.sigma2)
        _check_open_unit(self.theta, "theta")
        if self.weight is None:
            self.weight = np.eye(self.n)
        if self.eps is None:
            self.eps = optimize_epsilon(self.n, self.theta)
        self.radii = prs_radius(self.lipschitz, self.sigma2, self.n, self.theta, self.eps)

    @property
    def horizon(self) -> int:
        return len(self.lipschitz)

    def worst_case(self, delta: float) -> np.ndarray:
        """Worst-case radii for the same ``eps``, with ``delta = theta * T``."""
        return worst_case_radius(self.lipschitz, self.sigma2, self.n, delta, self.horizon, self.eps)


def deviation_set(radii: Sequence[float], P) -> Ellipsoid:
    """Union of the concentric per-step PRS balls: the largest one."""
    radii = np.asarray(radii, dtype=float)
    return Ellipsoid(np.asarray(P, dtype=float), float(radii.max(initial=0.0)))
