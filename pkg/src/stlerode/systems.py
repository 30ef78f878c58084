"""Closed-loop discrete-time systems and their simulation.

States are rows; every step map accepts a batch ``x`` of shape ``(N, n)`` and
disturbances ``d`` of shape ``(N, m)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

StepFn = Callable[[np.ndarray, np.ndarray, int], np.ndarray]

DI_FIELDS = ("px", "py", "vx", "vy", "ux", "uy")
UNICYCLE_FIELDS = ("px", "py", "theta", "v", "omega")


@dataclass
class ReferencePlan:
    """Per-step reference states and feedforward inputs."""

    states: np.ndarray
    inputs: np.ndarray
    fields: tuple[str, ...] = ()

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.inputs = np.asarray(self.inputs, dtype=float)
        if self.states.ndim != 2 or self.inputs.ndim != 2 or len(self.states) != len(self.inputs):
            raise ValueError("reference states and inputs must be 2-D with one row per step")

    def __len__(self) -> int:
        return len(self.states)

    def require(self, T: int) -> None:
        if len(self) < T + 1:
            raise ValueError(f"reference has {len(self)} steps, horizon {T} needs {T + 1}")


def load_reference(path: str | Path, fields: Sequence[str], n_state: int, T: int | None = None) -> ReferencePlan:
    """Read a reference CSV with a header row naming ``fields``.

    The first ``n_state`` fields are the reference state, the rest the
    feedforward input.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [f for f in fields if f not in header]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append([float(row[f]) for f in fields])
            except (TypeError, ValueError):
                raise ValueError(f"{path}:{lineno}: malformed row") from None
    if not rows:
        raise ValueError(f"{path}: no reference rows")
    data = np.array(rows)
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{path}: non-finite reference values")
    plan = ReferencePlan(data[:, :n_state], data[:, n_state:], tuple(fields))
    if T is not None:
        plan.require(T)
    return plan


def save_reference(path: str | Path, plan: ReferencePlan) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(plan.fields)
        for s, u in zip(plan.states, plan.inputs):
            w.writerow([f"{v:.12g}" for v in (*s, *u)])


@dataclass
class SystemModel:
    """A closed-loop map ``x' = f(x, d, t)`` with additive Gaussian noise.

    ``disturbance_gain`` is set when ``f`` is affine in ``d`` with that input
    matrix; ``linear_part`` is set when ``f`` is affine in ``x``.
    """

    name: str
    n: int
    m: int
    step: StepFn
    noise_cov: np.ndarray
    dist_lo: np.ndarray
    dist_hi: np.ndarray
    disturbance_gain: np.ndarray | None = None
    linear_part: np.ndarray | None = None
    reference: ReferencePlan | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.noise_cov = np.asarray(self.noise_cov, dtype=float)
        self.dist_lo = np.atleast_1d(np.asarray(self.dist_lo, dtype=float))
        self.dist_hi = np.atleast_1d(np.asarray(self.dist_hi, dtype=float))
        if self.noise_cov.shape != (self.n, self.n):
            raise ValueError("noise covariance shape does not match state dimension")
        if np.linalg.eigvalsh(0.5 * (self.noise_cov + self.noise_cov.T))[0] < -1e-14:
            raise ValueError("noise covariance must be positive semidefinite")
        if self.dist_lo.shape != (self.m,) or self.dist_hi.shape != (self.m,) or np.any(self.dist_hi < self.dist_lo):
            raise ValueError("disturbance box is invalid")
        lam, vec = np.linalg.eigh(0.5 * (self.noise_cov + self.noise_cov.T))
        self._noise_factor = vec * np.sqrt(np.clip(lam, 0.0, None))

    @property
    def dist_center(self) -> np.ndarray:
        return 0.5 * (self.dist_lo + self.dist_hi)

    @property
    def noise_factor(self) -> np.ndarray:
        """``F`` with ``F F^T = noise_cov``."""
        return self._noise_factor

    def check_disturbance(self, d: np.ndarray) -> None:
        tol = 1e-12 * (1 + np.abs(self.dist_hi - self.dist_lo))
        if np.any(d < self.dist_lo - tol) or np.any(d > self.dist_hi + tol):
            raise ValueError("disturbance outside the admissible box")


def _batch(x, dim: int, name: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != dim:
        raise ValueError(f"{name} has dimension {x.shape[-1]}, expected {dim}")
    return x, single


def det_step(model: SystemModel, x, d, t: int) -> np.ndarray:
    x, single = _batch(x, model.n, "state")
    d, _ = _batch(d, model.m, "disturbance")
    model.check_disturbance(d)
    out = model.step(x, np.broadcast_to(d, (len(x), model.m)), t)
    return out[0] if single else out


def stoch_step(model: SystemModel, x, d, t: int, rng: np.random.Generator) -> np.ndarray:
    nxt = det_step(model, x, d, t)
    z = rng.standard_normal(np.shape(nxt))
    return nxt + z @ model.noise_factor.T


def simulate(model: SystemModel, x0, d_seq, T: int, mode: str = "det", seed: int | None = None) -> np.ndarray:
    """One trajectory of shape ``(T+1, n)``.

    ``d_seq`` has one row per step (``T`` rows) or a single row held
    constant. In ``stoch`` mode the noise comes from a generator seeded with
    ``seed``; with a zero covariance both modes coincide.
    """
    if mode not in ("det", "stoch"):
        raise ValueError(f"unknown simulation mode {mode!r}")
    x0, _ = _batch(x0, model.n, "initial state")
    d_seq = np.atleast_2d(np.asarray(d_seq, dtype=float))
    if len(d_seq) == 1:
        d_seq = np.repeat(d_seq, T, axis=0)
    if d_seq.shape != (T, model.m):
        raise ValueError(f"disturbance sequence must have shape ({T}, {model.m})")
    noise = None
    if mode == "stoch":
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal((1, T, model.n)) @ model.noise_factor.T
    return simulate_batch(model, x0, d_seq[None], T, noise)[0]


def simulate_batch(model: SystemModel, x0: np.ndarray, d_seq: np.ndarray, T: int,
                   noise: np.ndarray | None = None) -> np.ndarray:
    """Trajectories of shape ``(N, T+1, n)`` from ``x0`` (N, n) and ``d_seq`` (N, T, m).

    ``noise`` (N, T, n), when given, is added after each closed-loop step.
    """
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    d_seq = np.asarray(d_seq, dtype=float)
    N = len(x0)
    if d_seq.shape != (N, T, model.m):
        raise ValueError(f"disturbance sequences must have shape ({N}, {T}, {model.m})")
    model.check_disturbance(d_seq)
    if model.reference is not None:
        model.reference.require(T)
    traj = np.empty((N, T + 1, model.n))
    traj[:, 0] = x0
    for t in range(T):
        nxt = model.step(traj[:, t], d_seq[:, t], t)
        if noise is not None:
            nxt = nxt + noise[:, t]
        traj[:, t + 1] = nxt
    return traj


@dataclass
class Draws:
    x0: np.ndarray
    d_seq: np.ndarray
    noise: np.ndarray


def draw_inputs(model: SystemModel, x0_lo, x0_hi, T: int, seed: int, start: int, count: int,
                noise: bool = True) -> Draws:
    """Initial states, disturbance sequences and noise for trajectory indices
    ``start .. start+count-1``.

    Trajectory ``i`` uses its own generator seeded by ``(seed, i)``, so any
    partition of the index range yields the same draws. Noise is drawn
    last, so ``noise=False`` leaves ``x0`` and ``d_seq`` unchanged.
    """
    x0_lo = np.asarray(x0_lo, dtype=float)
    x0_hi = np.asarray(x0_hi, dtype=float)
    x0 = np.empty((count, model.n))
    ds = np.empty((count, T, model.m))
    z = np.zeros((count, T, model.n))
    for j in range(count):
        rng = np.random.default_rng([seed, start + j])
        x0[j] = rng.uniform(x0_lo, x0_hi)
        ds[j] = rng.uniform(model.dist_lo, model.dist_hi, size=(T, model.m))
        if noise:
            z[j] = rng.standard_normal((T, model.n))
    return Draws(x0, ds, z @ model.noise_factor.T if noise else z)


# ---------------------------------------------------------------------------
# Double integrator
# ---------------------------------------------------------------------------

DI_GAIN = ((-2.0, 0.0, -1.0, 0.0), (0.0, -2.0, 0.0, -1.0))


def double_integrator_matrices(dt: float = 0.01, mass: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    A = np.eye(4)
    A[0, 2] = A[1, 3] = dt
    B = np.zeros((4, 2))
    B[2, 0] = B[3, 1] = dt / mass
    return A, B


def double_integrator_closed_loop(reference: ReferencePlan | None, dt: float = 0.01, mass: float = 0.1,
                                  gain=DI_GAIN, noise_cov=None, dist_lo=(-0.1, -0.1),
                                  dist_hi=(0.1, 0.1)) -> SystemModel:
    """Reference tracking ``u = u_ref + K (x - x_ref)``; the disturbance adds to ``u``."""
    if reference is None:
        raise ValueError("double integrator needs a reference plan")
    A, B = double_integrator_matrices(dt, mass)
    K = np.asarray(gain, dtype=float)
    if K.shape != (2, 4):
        raise ValueError("feedback gain must be 2x4")
    if noise_cov is None:
        noise_cov = dt * 0.04 * np.eye(4)
    xr, ur = reference.states, reference.inputs
    if xr.shape[1] != 4 or ur.shape[1] != 2:
        raise ValueError("double integrator reference needs 4 states and 2 inputs per step")

    def step(x, d, t):
        u = ur[t] + (x - xr[t]) @ K.T + d
        return x @ A.T + u @ B.T

    return SystemModel("double_integrator", 4, 2, step, noise_cov, dist_lo, dist_hi,
                       disturbance_gain=B, linear_part=A + B @ K, reference=reference,
                       params={"dt": dt, "mass": mass, "gain": K})


def double_integrator_reference(waypoints: Sequence[Sequence[float]], T: int, dt: float = 0.01,
                                mass: float = 0.1, arrive: int | None = None) -> ReferencePlan:
    """Rest-to-rest reference through ``waypoints`` arriving at step ``arrive``.

    Positions follow a quintic time scaling along the piecewise-linear path
    (smoothed by corner-cutting); velocities and forces are the exact
    discrete-time values, so the reference is a trajectory of the nominal
    dynamics.
    """
    arrive = T - 15 if arrive is None else arrive
    path = _smooth_path(np.asarray(waypoints, dtype=float))
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    tau = np.clip(np.arange(T + 3) / arrive, 0.0, 1.0)
    s = arc[-1] * (10 * tau**3 - 15 * tau**4 + 6 * tau**5)
    pos = np.stack([np.interp(s, arc, path[:, 0]), np.interp(s, arc, path[:, 1])], axis=1)
    vel = np.diff(pos, axis=0) / dt
    acc = np.diff(vel, axis=0) / dt
    states = np.concatenate([pos[: T + 1], vel[: T + 1]], axis=1)
    inputs = mass * acc[: T + 1]
    return ReferencePlan(states, inputs, DI_FIELDS)


def _smooth_path(points: np.ndarray, rounds: int = 5) -> np.ndarray:
    """Chaikin corner cutting with fixed endpoints."""
    p = points
    for _ in range(rounds):
        q = 0.75 * p[:-1] + 0.25 * p[1:]
        r = 0.25 * p[:-1] + 0.75 * p[1:]
        mid = np.empty((2 * len(q), 2))
        mid[0::2], mid[1::2] = q, r
        p = np.concatenate([p[:1], mid[1:-1], p[-1:]])
    return p


# ---------------------------------------------------------------------------
# Unicycle
# ---------------------------------------------------------------------------

def unicycle_inputs(x: np.ndarray, ref_state: np.ndarray, ref_input: np.ndarray,
                    gains: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Tracking law returning ``(v, omega)`` for a batch of states."""
    kx, ky, kth = gains
    x = np.atleast_2d(x)
    c, s = np.cos(x[:, 2]), np.sin(x[:, 2])
    ex = ref_state[0] - x[:, 0]
    ey = ref_state[1] - x[:, 1]
    v = ref_input[0] + kx * (c * ex + s * ey)
    w = ref_input[1] + ky * (-s * ex + c * ey) + kth * (ref_state[2] - x[:, 2])
    return v, w


def unicycle_closed_loop(reference: ReferencePlan | None, dt: float = 0.05, gains=(2.0, 2.0, 2.0),
                         noise_cov=None, dist_lo=(-0.02,), dist_hi=(0.02,)) -> SystemModel:
    """Kinematic unicycle under the tracking law; the disturbance adds to the turn rate."""
    if reference is None:
        raise ValueError("unicycle needs a reference plan")
    if noise_cov is None:
        noise_cov = dt * 0.001 * np.eye(3)
    xr, ur = reference.states, reference.inputs
    if xr.shape[1] != 3 or ur.shape[1] != 2:
        raise ValueError("unicycle reference needs (px, py, theta) and (v, omega) per step")
    gains = tuple(float(g) for g in gains)

    def step(x, d, t):
        v, w = unicycle_inputs(x, xr[t], ur[t], gains)
        th = x[:, 2]
        return x + dt * np.stack([v * np.cos(th), v * np.sin(th), w + d[:, 0]], axis=1)

    G = np.zeros((3, 1))
    G[2, 0] = dt
    return SystemModel("unicycle", 3, 1, step, noise_cov, dist_lo, dist_hi,
                       disturbance_gain=G, reference=reference,
                       params={"dt": dt, "gains": gains})


def unicycle_reference(waypoints: Sequence[Sequence[float]], T: int, dt: float = 0.05,
                       arrive: int | None = None) -> ReferencePlan:
    """Reference through ``waypoints`` that is an exact nominal unicycle trajectory.

    Headings and speeds come from successive position differences, so
    ``p_{t+1} = p_t + dt * v_t * (cos th_t, sin th_t)`` and
    ``th_{t+1} = th_t + dt * omega_t`` hold to rounding.
    """
    arrive = T if arrive is None else arrive
    path = _smooth_path(np.asarray(waypoints, dtype=float))
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    # constant speed after a short ramp; the ramp keeps the start at nonzero heading rate zero
    tau = np.clip(np.arange(T + 2) / arrive, 0.0, 1.0)
    s = arc[-1] * tau
    pos = np.stack([np.interp(s, arc, path[:, 0]), np.interp(s, arc, path[:, 1])], axis=1)
    dp = np.diff(pos, axis=0)
    speed = np.linalg.norm(dp, axis=1) / dt
    heading = np.unwrap(np.arctan2(dp[:, 1], dp[:, 0]))
    # hold the last heading once the path has been traversed
    still = speed < 1e-12
    for i in np.flatnonzero(still):
        heading[i] = heading[i - 1] if i > 0 else heading[i]
    omega = np.diff(heading) / dt
    states = np.stack([pos[: T + 1, 0], pos[: T + 1, 1], heading[: T + 1]], axis=1)
    inputs = np.stack([speed[: T + 1], np.append(omega, 0.0)[: T + 1]], axis=1)
    return ReferencePlan(states, inputs, UNICYCLE_FIELDS)
