"""Fixed-step simulation of closed loops, signal generators and metrics.

The deterministic integrator is classic fourth-order Runge-Kutta.  For
an LTI system with piecewise-constant inputs the four stages collapse
to the affine update x <- Phi x + Gamma B u with

    Phi   = I + hA + (hA)^2/2 + (hA)^3/6 + (hA)^4/24
    Gamma = h (I + hA/2 + (hA)^2/6 + (hA)^3/24)

which is exactly the RK4 map, so the dt^4 convergence behavior is
preserved while the hot loop stays a single matrix-vector product.
White noise enters Euler-Maruyama style: an increment of standard
deviation sigma*sqrt(dt) per channel per step, gated by the onset time,
on top of the fourth-order deterministic update.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels

__all__ = [
    "SignalSpec",
    "Trajectory",
    "EnsembleStats",
    "SimulationDiverged",
    "integrate",
    "integrate_stochastic",
    "run_ensemble",
    "settling_time",
    "disagreement_norm",
    "drift_slope",
    "rk4_transition",
]

DIVERGENCE_LIMIT = 1e9


class SimulationDiverged(RuntimeError):
    """State magnitude crossed the divergence threshold."""

    def __init__(self, time: float):
        super().__init__(f"simulation diverged at t = {time:.6g} s")
        self.time = time


@dataclass(frozen=True)
class SignalSpec:
    """Per-channel input description.

    kind is one of "zero", "step" (amplitude from the onset time on) or
    "white_noise" (two-sided spectral density `intensity`, active from
    the onset time on).
    """

    kind: str
    amplitude: float = 0.0
    onset: float = 0.0
    intensity: float = 0.0

    def __post_init__(self):
        if self.kind not in ("zero", "step", "white_noise"):
            raise ValueError(f"unknown signal kind {self.kind!r}")
        if self.onset < 0:
            raise ValueError("onset must be nonnegative")
        if self.kind == "white_noise" and self.intensity < 0:
            raise ValueError("noise intensity must be nonnegative")

    @staticmethod
    def zero() -> "SignalSpec":
        return SignalSpec("zero")

    @staticmethod
    def step(amplitude: float, onset: float = 0.0) -> "SignalSpec":
        return SignalSpec("step", amplitude=float(amplitude), onset=float(onset))

    @staticmethod
    def white_noise(intensity: float, onset: float = 0.0) -> "SignalSpec":
        return SignalSpec("white_noise", intensity=float(intensity), onset=float(onset))

    @property
    def is_stochastic(self) -> bool:
        return self.kind == "white_noise"


@dataclass(frozen=True)
class Trajectory:
    """Outputs on a uniform time grid."""

    times: np.ndarray
    outputs: np.ndarray
    dt: float

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        y = np.asarray(self.outputs, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if t.ndim != 1 or y.shape[0] != t.size:
            raise ValueError("times and outputs are inconsistent")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "outputs", y)

    @property
    def nagents(self) -> int:
        return self.outputs.shape[1]

    def index_at(self, t: float) -> int:
        k = int(round(t / self.dt))
        if k < 0 or k >= self.times.size or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the simulation grid")
        return k

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"y{i + 1}" for i in range(self.nagents)])
            for k in range(self.times.size):
                writer.writerow(
                    [f"{self.times[k]:.17g}"]
                    + [f"{v:.17g}" for v in self.outputs[k]]
                )

    @staticmethod
    def read_csv(path: str | Path) -> "Trajectory":
        path = Path(path)
        with path.open() as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[0] != "t":
                raise ValueError("trajectory CSV must start with a 't' column")
            rows = [[float(v) for v in row] for row in reader if row]
        data = np.asarray(rows)
        if data.shape[0] < 2:
            raise ValueError("trajectory CSV needs at least two grid points")
        times = data[:, 0]
        dt = times[1] - times[0]
        return Trajectory(times=times, outputs=data[:, 1:], dt=float(dt))


def rk4_transition(A: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """(Phi, Gamma) of the RK4 step for constant-input LTI dynamics."""
    n = A.shape[0]
    eye = np.eye(n)
    hA = dt * A
    P2 = hA @ hA
    P3 = P2 @ hA
    P4 = P3 @ hA
    phi = eye + hA + P2 / 2.0 + P3 / 6.0 + P4 / 24.0
    gamma = dt * (eye + hA / 2.0 + P2 / 6.0 + P3 / 24.0)
    return phi, gamma


def _as_spec_list(spec, m: int, label: str) -> list[SignalSpec]:
    if isinstance(spec, SignalSpec):
        return [spec] * m
    spec = list(spec)
    if len(spec) != m:
        raise ValueError(f"{label} needs {m} channel specs, got {len(spec)}")
    return spec


def _onset_index(onset: float, dt: float, nsteps: int) -> int:
    k = int(round(onset / dt))
    return min(max(k, 0), nsteps)


def _deterministic_tables(
    specs: Sequence[SignalSpec], dt: float, nsteps: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-interval constants and node samples for zero/step channels."""
    m = len(specs)
    u_const = np.zeros((nsteps, m))
    u_nodes = np.zeros((nsteps + 1, m))
    for c, s in enumerate(specs):
        if s.kind == "step":
            k0 = _onset_index(s.onset, dt, nsteps)
            u_const[k0:, c] = s.amplitude
            u_nodes[k0:, c] = s.amplitude
    return u_const, u_nodes


class _Prepared:
    """Precomputed integration tables shared across ensemble members."""

    __slots__ = (
        "phi", "g", "x0", "C", "Dmat", "u_nodes", "bn", "noise_scale",
        "noise_gate", "dt", "nsteps", "times",
    )

    def __init__(self, loop, d, n, y0, dt, T):
        from .protocol import ClosedLoop  # local import to avoid a cycle

        if not isinstance(loop, ClosedLoop):
            raise TypeError("expected a ClosedLoop")
        if dt <= 0:
            raise ValueError("dt must be positive")
        nu = loop.nagents
        d_specs = _as_spec_list(d, nu, "disturbance")
        n_specs = _as_spec_list(n, nu, "noise")
        for s in d_specs:
            if s.is_stochastic:
                raise ValueError("white noise is only supported on the noise channels")
        specs = d_specs + n_specs
        sys = loop.dynamics
        nsteps = int(round(T / dt))
        if nsteps < 1:
            raise ValueError("horizon too short for the step size")
        white = np.array([s.is_stochastic for s in specs], dtype=bool)
        if np.any(np.abs(sys.D[:, white]) > 0.0):
            raise ValueError("white-noise channel with direct feedthrough is not simulable")
        det_specs = [s if not s.is_stochastic else SignalSpec.zero() for s in specs]
        u_const, u_nodes = _deterministic_tables(det_specs, dt, nsteps)
        phi, gamma = rk4_transition(sys.A, dt)
        gb = gamma @ sys.B
        self.phi = phi
        self.g = u_const @ gb.T
        y0 = np.asarray(y0, dtype=float).reshape(-1)
        if y0.size != nu:
            raise ValueError(f"y0 needs {nu} entries")
        self.x0 = loop.x0_map @ y0
        self.C = sys.C
        self.Dmat = sys.D
        self.u_nodes = u_nodes
        self.bn = sys.B[:, white]
        scale = np.array([np.sqrt(s.intensity * dt) for s in specs if s.is_stochastic])
        self.noise_scale = scale
        self.noise_gate = np.array(
            [_onset_index(s.onset, dt, nsteps) for s in specs if s.is_stochastic],
            dtype=np.int64,
        )
        self.dt = dt
        self.nsteps = nsteps
        self.times = np.arange(nsteps + 1) * dt

    @property
    def n_noise(self) -> int:
        return self.bn.shape[1]

    def draw_increments(self, rng: np.random.Generator) -> np.ndarray:
        w = rng.standard_normal((self.nsteps, self.n_noise))
        w *= self.noise_scale[None, :]
        for c, k0 in enumerate(self.noise_gate):
            w[:k0, c] = 0.0
        return w

    def outputs_from_states(self, states: np.ndarray) -> np.ndarray:
        return states @ self.C.T + self.u_nodes @ self.Dmat.T

    def run(self, rng: np.random.Generator | None = None) -> np.ndarray:
        if rng is not None and self.n_noise > 0:
            w = self.draw_increments(rng)
            states, blow = _kernels.affine_path_noise(
                self.phi, self.g, self.bn, w, self.x0, DIVERGENCE_LIMIT
            )
        else:
            states, blow = _kernels.affine_path(
                self.phi, self.g, self.x0, DIVERGENCE_LIMIT
            )
        if blow >= 0:
            raise SimulationDiverged(blow * self.dt)
        return self.outputs_from_states(states)


def integrate(loop, d, n, y0, dt: float, T: float) -> Trajectory:
    """Deterministic RK4 run; white-noise specs are rejected."""
    nu = loop.nagents
    for s in _as_spec_list(d, nu, "disturbance") + _as_spec_list(n, nu, "noise"):
        if s.is_stochastic:
            raise ValueError("integrate handles deterministic signals only")
    prep = _Prepared(loop, d, n, y0, dt, T)
    y = prep.run()
    return Trajectory(times=prep.times, outputs=y, dt=dt)


def member_seed(master_seed: int, realization: int) -> np.random.SeedSequence:
    """Counter-based split of a master seed into per-realization streams."""
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(realization),))


def ensemble_member(
    loop, d, n, y0, dt: float, T: float, master_seed: int, realization: int
) -> Trajectory:
    """The exact trajectory that realization `realization` contributes
    to run_ensemble(master_seed, ...)."""
    prep = _Prepared(loop, d, n, y0, dt, T)
    rng = np.random.Generator(np.random.Philox(member_seed(master_seed, realization)))
    y = prep.run(rng if prep.n_noise else None)
    return Trajectory(times=prep.times, outputs=y, dt=dt)


def integrate_stochastic(loop, d, n, y0, dt: float, T: float, seed: int) -> Trajectory:
    """Euler-Maruyama noise increments over the RK4 deterministic map.

    Bit-reproducible for a fixed (seed, dt, T) triple.
    """
    prep = _Prepared(loop, d, n, y0, dt, T)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    y = prep.run(rng if prep.n_noise else None)
    return Trajectory(times=prep.times, outputs=y, dt=dt)


@dataclass(frozen=True)
class EnsembleStats:
    """Streaming ensemble statistics of one scalar output projection."""

    times: np.ndarray
    count: int
    projection: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    finals: np.ndarray
    master_seed: int

    def drift_slope(self, window: tuple[float, float] | None = None) -> float:
        if self.count < 30:
            raise ValueError("drift slope requires at least 30 realizations")
        return _variance_slope(self.times, self.variance, window)


def _variance_slope(times, variance, window) -> float:
    T = times[-1]
    if window is None:
        window = (T / 2.0, T)
    lo, hi = window
    mask = (times >= lo - 1e-12) & (times <= hi + 1e-12)
    t = times[mask]
    v = variance[mask]
    if t.size < 2:
        raise ValueError("drift window contains fewer than two samples")
    tbar = t.mean()
    return float(np.dot(t - tbar, v - v.mean()) / np.dot(t - tbar, t - tbar))


def run_ensemble(
    loop, d, n, y0, dt: float, T: float, seed: int, realizations: int,
    projection: np.ndarray,
) -> EnsembleStats:
    """Monte-Carlo ensemble of stochastic runs.

    Per-realization streams are derived from the master seed by a
    counter-based split, so the merged statistics do not depend on
    evaluation order.
    """
    if realizations < 1:
        raise ValueError("need at least one realization")
    prep = _Prepared(loop, d, n, y0, dt, T)
    projection = np.asarray(projection, dtype=float).reshape(-1)
    if projection.size != loop.nagents:
        raise ValueError("projection length must equal the agent count")
    npts = prep.nsteps + 1
    s1 = np.zeros(npts)
    s2 = np.zeros(npts)
    finals = np.empty((realizations, loop.nagents))
    for r in range(realizations):
        rng = np.random.Generator(np.random.Philox(member_seed(seed, r)))
        y = prep.run(rng if prep.n_noise else None)
        z = y @ projection
        s1 += z
        s2 += z * z
        finals[r] = y[-1]
    mean = s1 / realizations
    if realizations > 1:
        variance = (s2 - realizations * mean * mean) / (realizations - 1)
        variance = np.maximum(variance, 0.0)
    else:
        variance = np.zeros(npts)
    return EnsembleStats(
        times=prep.times,
        count=realizations,
        projection=projection,
        mean=mean,
        variance=variance,
        finals=finals,
        master_seed=int(seed),
    )


def settling_time(traj: Trajectory, band: float = 0.02) -> float:
    """Smallest grid time after which every output stays within
    band * initial deviation of the terminal consensus value."""
    y = traj.outputs
    y_final = float(np.mean(y[-1]))
    dev = np.max(np.abs(y - y_final), axis=1)
    threshold = band * np.max(np.abs(y[0] - y_final))
    above = np.nonzero(dev > threshold)[0]
    if above.size == 0:
        return 0.0
    k = above[-1] + 1
    if k >= traj.times.size:
        raise RuntimeError("unsettled: trajectory never enters the band")
    return float(traj.times[k])


def disagreement_norm(traj: Trajectory, t: float, reference: float) -> float:
    """Euclidean distance of y(t) from reference * ones."""
    k = traj.index_at(t)
    return float(np.linalg.norm(traj.outputs[k] - reference))


def drift_slope(
    ensemble: Sequence[Trajectory] | EnsembleStats,
    projection: np.ndarray,
    window: tuple[float, float] | None = None,
) -> float:
    """Least-squares slope of the ensemble variance of a projection.

    The fit runs over [T/2, T] unless a window is given; at least 30
    realizations are required.
    """
    if isinstance(ensemble, EnsembleStats):
        if ensemble.count < 30:
            raise ValueError("drift slope requires at least 30 realizations")
        return _variance_slope(ensemble.times, ensemble.variance, window)
    trajs = list(ensemble)
    if len(trajs) < 30:
        raise ValueError("drift slope requires at least 30 realizations")
    projection = np.asarray(projection, dtype=float).reshape(-1)
    z = np.stack([t.outputs @ projection for t in trajs])
    variance = z.var(axis=0, ddof=1)
    return _variance_slope(trajs[0].times, variance, window)
