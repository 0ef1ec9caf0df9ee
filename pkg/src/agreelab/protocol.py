"""Closed-loop builders, the agreement certificate and the
cancellation-condition checker.

Two protocols are supported for networks of SISO LTI agents
y_i = P_i (u_i + d_i) + (initial-condition response):

* classic diffusive consensus
    u_i = k_i F sum_{j in N_i} (y_j - y_i + n_ij)
  with the per-agent aggregated noise n_i = (1/|N_i|) sum_j n_ij, and

* the two-degrees-of-freedom protocol
    u_i = Fd_i y_i + (P_i^{-1} - Fd_i) Fa (ConM_i + n_i)
  where ConM_i is the neighbor average and Fa the shared network
  filter.

Loops are assembled at the agent level; the modal closed form
U^{-1} diag(T_i) U with T_i = 1/(1 - alpha_i Fa) is exposed through
:func:`modal_analysis` for analysis and cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import (
    Graph,
    ModalData,
    degrees,
    is_connected,
    laplacian,
    modal_transform,
    normalized_adjacency,
)
from .lti import (
    RationalTF,
    StateSpace,
    HURWITZ_MARGIN,
    ss_block_diag,
    tf_cancel,
    tf_feedback,
    tf_inverse,
    tf_poles,
    tf_series,
    tf_to_ss,
    tf_zeros,
)
from .numerics import lyapunov_solve, poly_roots, poly_sub

__all__ = [
    "AgentModel",
    "ClassicConfig",
    "TwoDofConfig",
    "ClosedLoop",
    "ModalAnalysis",
    "AgreementCertificate",
    "CancellationVerdict",
    "build_classic",
    "build_2dof",
    "modal_analysis",
    "check_agreement",
    "check_cancellation",
    "mode_transfer",
    "classic_noise_disagreement_variance",
]

IMAG_AXIS_TOL = 1e-6
_POLE_CLUSTER_TOL = 1e-6


@dataclass(frozen=True)
class AgentModel:
    """Plant P_i plus, for the 2DOF protocol, its local controller Fd_i."""

    plant: RationalTF
    local_controller: RationalTF | None = None


@dataclass(frozen=True)
class ClassicConfig:
    """Gains k_i (scalar broadcasts) and the shared filter F."""

    gains: float | Sequence[float]
    shared_filter: RationalTF = field(default_factory=lambda: RationalTF.constant(1.0))

    def gain_vector(self, nu: int) -> np.ndarray:
        k = np.asarray(self.gains, dtype=float).reshape(-1)
        if k.size == 1:
            k = np.full(nu, k[0])
        if k.size != nu:
            raise ValueError(f"need {nu} gains, got {k.size}")
        if np.any(k <= 0):
            raise ValueError("consensus gains must be positive")
        return k


@dataclass(frozen=True)
class TwoDofConfig:
    """The uniform network filter Fa; Fd_i live on the agents."""

    network_filter: RationalTF


@dataclass(frozen=True)
class ClosedLoop:
    """Simulable aggregate loop.

    Inputs are stacked [d (nu); n (nu)], outputs are the agent outputs
    y (nu).  ``x0_map`` injects per-agent initial output levels into the
    plant states (controller states start at zero), so y(0) = y0 for
    strictly proper plants.
    """

    dynamics: StateSpace
    x0_map: np.ndarray
    nagents: int

    def __post_init__(self):
        x0 = np.asarray(self.x0_map, dtype=float)
        if x0.shape != (self.dynamics.nstates, self.nagents):
            raise ValueError("x0_map shape mismatch")
        x0.setflags(write=False)
        object.__setattr__(self, "x0_map", x0)
        if self.dynamics.ninputs != 2 * self.nagents or self.dynamics.noutputs != self.nagents:
            raise ValueError("closed loop must map [d; n] to y")

    def noise_transfer(self, s: complex) -> np.ndarray:
        return self.dynamics.eval(s)[:, self.nagents :]

    def disturbance_transfer(self, s: complex) -> np.ndarray:
        return self.dynamics.eval(s)[:, : self.nagents]


@dataclass(frozen=True)
class ModalAnalysis:
    """Per-mode network transfers and per-agent local-loop transfers."""

    alphas: np.ndarray
    mode_transfers: list
    local_sensitivities: list
    disturbance_transfers: list
    agreement_poles: np.ndarray
    modal: ModalData


@dataclass(frozen=True)
class AgreementCertificate:
    """Outcome of the agreement test for (Fa, spectrum) pairs."""

    passed: bool
    agreement_poles: np.ndarray
    failures: list
    alphas: np.ndarray

    @property
    def is_consensus(self) -> bool:
        """True when the only agreement pole sits at the origin."""
        return (
            self.passed
            and self.agreement_poles.size == 1
            and abs(self.agreement_poles[0]) <= 1e-6
        )


@dataclass(frozen=True)
class CancellationVerdict:
    """Necessary-condition test for cancellation of an agreement pole.

    ``holds`` means every supplied loop transfer vanishes at the pole,
    i.e. the necessary condition for the pole to cancel is met.  This
    is not a sufficiency statement.
    """

    pole: complex
    holds: bool
    vanishes: list
    distances: list

    @property
    def verdict(self) -> str:
        return "NECESSARY-CONDITION-HOLDS" if self.holds else "CANCELLATION-EXCLUDED"


# -- loop assembly ------------------------------------------------------


def _output_injection(ss: StateSpace) -> np.ndarray:
    """Minimum-norm state vector x with C x = 1 (per-agent y0 injection)."""
    c = ss.C.reshape(-1)
    nrm2 = float(c @ c)
    if ss.nstates == 0 or nrm2 == 0.0:
        raise ValueError("cannot set an initial output level on a static plant")
    return c / nrm2


def _assemble(
    plants: Sequence[StateSpace],
    banks: Sequence[tuple[Sequence[StateSpace], np.ndarray, np.ndarray]],
) -> tuple[StateSpace, np.ndarray]:
    """Close u = sum_b bank_b(My_b y + Mn_b n) around y = P (u + d).

    Returns the aggregate (A, [Bd Bn], C, [Dd Dn]) system and the
    y0-injection map.
    """
    nu = len(plants)
    plant = ss_block_diag(plants)
    np_states = plant.nstates

    bank_sys = [ss_block_diag(b) for b, _, _ in banks]
    nc = sum(b.nstates for b in bank_sys)
    Ac = np.zeros((nc, nc))
    Bcy = np.zeros((nc, nu))
    Bcn = np.zeros((nc, nu))
    Cc = np.zeros((nu, nc))
    Dcy = np.zeros((nu, nu))
    Dcn = np.zeros((nu, nu))
    ofs = 0
    for sysb, (_, My, Mn) in zip(bank_sys, banks):
        nb = sysb.nstates
        Ac[ofs : ofs + nb, ofs : ofs + nb] = sysb.A
        Bcy[ofs : ofs + nb] = sysb.B @ My
        Bcn[ofs : ofs + nb] = sysb.B @ Mn
        Cc[:, ofs : ofs + nb] = sysb.C
        Dcy += sysb.D @ My
        Dcn += sysb.D @ Mn
        ofs += nb

    E = np.eye(nu) - plant.D @ Dcy
    if abs(np.linalg.det(E)) < 1e-12:
        raise ValueError("algebraic loop: interconnection is not well posed")
    Ei = np.linalg.inv(E)

    Y_xp = Ei @ plant.C
    Y_xc = Ei @ plant.D @ Cc
    Y_d = Ei @ plant.D
    Y_n = Ei @ plant.D @ Dcn
    U_xp = Dcy @ Y_xp
    U_xc = Cc + Dcy @ Y_xc
    U_d = Dcy @ Y_d
    U_n = Dcn + Dcy @ Y_n

    n_total = np_states + nc
    A = np.zeros((n_total, n_total))
    A[:np_states, :np_states] = plant.A + plant.B @ U_xp
    A[:np_states, np_states:] = plant.B @ U_xc
    A[np_states:, :np_states] = Bcy @ Y_xp
    A[np_states:, np_states:] = Ac + Bcy @ Y_xc

    Bd = np.vstack([plant.B @ (U_d + np.eye(nu)), Bcy @ Y_d])
    Bn = np.vstack([plant.B @ U_n, Bcn + Bcy @ Y_n])
    C = np.hstack([Y_xp, Y_xc])
    D = np.hstack([Y_d, Y_n])

    x0_map = np.zeros((n_total, nu))
    ofs = 0
    for i, p in enumerate(plants):
        x0_map[ofs : ofs + p.nstates, i] = _output_injection(p)
        ofs += p.nstates

    sys = StateSpace(A, np.hstack([Bd, Bn]), C, D)
    return sys, x0_map


def _validate_network(g: Graph, agents: Sequence[AgentModel]) -> np.ndarray:
    if not is_connected(g):
        raise ValueError("protocol requires a connected graph")
    if len(agents) != g.n:
        raise ValueError(f"need {g.n} agents, got {len(agents)}")
    for i, a in enumerate(agents, start=1):
        if not a.plant.is_proper:
            raise ValueError(f"agent {i}: plant is improper")
    return normalized_adjacency(g)


def build_classic(g: Graph, agents: Sequence[AgentModel], cfg: ClassicConfig) -> ClosedLoop:
    """Closed loop of the diffusive protocol.

    The controller path realizes u = K D F ((Adjn - I) y + n) with the
    per-agent aggregated noise n_i on the noise channels; for
    integrator plants and F = 1 this is ydot = -K L y + K D n + d.
    """
    adjn = _validate_network(g, agents)
    nu = g.n
    k = cfg.gain_vector(nu)
    F = cfg.shared_filter
    if not F.is_proper:
        raise ValueError("shared filter must be proper")
    deg = degrees(g)
    bank = [tf_to_ss(tf_series(F, RationalTF.constant(k[i] * deg[i]))) for i in range(nu)]
    plants = [tf_to_ss(a.plant) for a in agents]
    My = adjn - np.eye(nu)
    Mn = np.eye(nu)
    sys, x0_map = _assemble(plants, [(bank, My, Mn)])
    return ClosedLoop(dynamics=sys, x0_map=x0_map, nagents=nu)


def _local_loop(agent: AgentModel, index: int) -> tuple[RationalTF, RationalTF]:
    fd = agent.local_controller
    if fd is None:
        raise ValueError(f"agent {index}: 2DOF protocol needs a local controller")
    S, Td = tf_feedback(agent.plant, fd)
    char_roots = poly_roots(S.den)
    if np.max(char_roots.real) >= -HURWITZ_MARGIN:
        raise ValueError(f"agent {index}: local controller does not stabilize the plant")
    return S, Td


def _feedforward(agent: AgentModel, fa: RationalTF, index: int) -> RationalTF:
    kff = tf_series(tf_inverse(agent.plant) - agent.local_controller, fa)
    if not kff.is_proper:
        raise ValueError(
            f"agent {index}: consistency condition unrealizable (improper feedforward)"
        )
    return kff


def build_2dof(g: Graph, agents: Sequence[AgentModel], cfg: TwoDofConfig) -> ClosedLoop:
    """Closed loop of the 2DOF protocol, assembled at the agent level:
    a decentralized feedback path Fd_i y_i plus a distributed path
    (P_i^{-1} - Fd_i) Fa applied to the neighbor average and noise."""
    adjn = _validate_network(g, agents)
    nu = g.n
    fa = cfg.network_filter
    for i, a in enumerate(agents, start=1):
        _local_loop(a, i)
    fd_bank = [tf_to_ss(a.local_controller) for a in agents]
    kff_bank = [
        tf_to_ss(_feedforward(a, fa, i)) for i, a in enumerate(agents, start=1)
    ]
    plants = [tf_to_ss(a.plant) for a in agents]
    eye = np.eye(nu)
    sys, x0_map = _assemble(
        plants,
        [
            (fd_bank, eye, np.zeros((nu, nu))),
            (kff_bank, adjn, eye),
        ],
    )
    return ClosedLoop(dynamics=sys, x0_map=x0_map, nagents=nu)


# -- modal analysis and certificates ------------------------------------


def mode_transfer(fa: RationalTF, alpha: float) -> RationalTF:
    """T = 1/(1 - alpha Fa) as an exact rational identity."""
    den = poly_sub(fa.den, fa.num.scaled(alpha))
    if den.is_zero:
        raise ZeroDivisionError("1 - alpha*Fa vanishes identically")
    return RationalTF(fa.den, den)


def _imaginary_axis_poles(tf: RationalTF) -> np.ndarray:
    poles = tf_poles(tf)
    if poles.size == 0:
        return poles
    return poles[np.abs(poles.real) <= HURWITZ_MARGIN]


def _cluster_poles(poles: np.ndarray, tol: float) -> list[tuple[complex, int]]:
    clusters: list[list[complex]] = []
    for p in poles:
        for c in clusters:
            if abs(p - c[0]) <= tol:
                c.append(p)
                break
        else:
            clusters.append([p])
    return [(c[0], len(c)) for c in clusters]


def check_agreement(fa: RationalTF, alphas: Sequence[float]) -> AgreementCertificate:
    """Agreement certificate for a network filter and a graph spectrum.

    Modes with alpha != 1 must be stable and proper; the alpha = 1 mode
    may keep simple imaginary-axis poles, which become the agreement
    poles shaping the common trajectory (a single pole at the origin
    means consensus).
    """
    alphas = np.asarray(alphas, dtype=float)
    ones = np.nonzero(np.abs(alphas - 1.0) <= 1e-9)[0]
    if ones.size != 1:
        raise ValueError("spectrum must contain the eigenvalue 1 exactly once")
    failures = []
    agreement_poles = np.zeros(0, dtype=complex)
    for i, alpha in enumerate(alphas):
        t = mode_transfer(fa, alpha)
        if i in ones:
            if not t.is_proper:
                failures.append((float(alpha), "improper agreement mode"))
                continue
            poles = tf_poles(t)
            if poles.size and np.max(poles.real) > HURWITZ_MARGIN:
                failures.append((float(alpha), "unstable agreement mode"))
                continue
            axis = poles[np.abs(poles.real) <= HURWITZ_MARGIN] if poles.size else poles
            clusters = _cluster_poles(axis, _POLE_CLUSTER_TOL)
            if any(mult > 1 for _, mult in clusters):
                failures.append((float(alpha), "repeated imaginary-axis agreement pole"))
                continue
            agreement_poles = np.array([p for p, _ in clusters], dtype=complex)
        else:
            if not t.is_proper:
                failures.append((float(alpha), "improper mode"))
                continue
            poles = tf_poles(t)
            if poles.size and np.max(poles.real) >= -HURWITZ_MARGIN:
                failures.append((float(alpha), "unstable mode"))
    return AgreementCertificate(
        passed=not failures,
        agreement_poles=agreement_poles,
        failures=failures,
        alphas=alphas,
    )


def modal_analysis(
    g: Graph, agents: Sequence[AgentModel], cfg: TwoDofConfig
) -> ModalAnalysis:
    _validate_network(g, agents)
    fa = cfg.network_filter
    md = modal_transform(g)
    mode_tfs = [mode_transfer(fa, a) for a in md.alphas]
    locals_ = [_local_loop(a, i) for i, a in enumerate(agents, start=1)]
    for i, a in enumerate(agents, start=1):
        _feedforward(a, fa, i)
    t1 = mode_tfs[0]
    agreement_poles = _imaginary_axis_poles(t1)
    return ModalAnalysis(
        alphas=md.alphas,
        mode_transfers=mode_tfs,
        local_sensitivities=[s for s, _ in locals_],
        disturbance_transfers=[td for _, td in locals_],
        agreement_poles=agreement_poles,
        modal=md,
    )


def check_cancellation(
    p: complex, loop_tfs: Sequence[RationalTF], tol: float = IMAG_AXIS_TOL
) -> CancellationVerdict:
    """Necessary condition for an agreement pole p to cancel against the
    local loops: p must be a zero of every supplied transfer.

    The test is numerator-root proximity after exact-tolerance
    cancellation; it can only exclude cancellation, never prove it.
    """
    p = complex(p)
    if abs(p.real) > tol:
        raise ValueError("cancellation check applies to imaginary-axis poles only")
    vanishes = []
    distances = []
    for tf in loop_tfs:
        cancelled = tf_cancel(tf)
        if cancelled.num.is_zero:
            vanishes.append(True)
            distances.append(0.0)
            continue
        zeros = tf_zeros(tf)
        d = float(np.min(np.abs(zeros - p))) if zeros.size else np.inf
        vanishes.append(bool(d <= tol))
        distances.append(d)
    return CancellationVerdict(
        pole=p, holds=bool(all(vanishes)), vanishes=vanishes, distances=distances
    )


# -- noise-model resolution ----------------------------------------------


def classic_noise_disagreement_variance(
    g: Graph, gain: float, model: str = "per-link"
) -> float:
    """Steady-state mean per-agent variance of the disagreement vector
    y - mean(y) * ones for the classic integrator loop ydot = -kLy + kDn.

    model "per-link" takes unit-intensity link noises aggregated by
    1/|N_i| (so n has covariance D^{-1}); "per-agent" takes
    unit-intensity white noise directly on each aggregated channel.
    """
    d = degrees(g)
    nu = g.n
    A = -gain * laplacian(g)
    if model == "per-link":
        B = gain * np.diag(np.sqrt(d))
    elif model == "per-agent":
        B = gain * np.diag(d)
    else:
        raise ValueError(f"unknown noise model {model!r}")
    # deterministic orthonormal basis of the disagreement subspace
    basis = np.zeros((nu, nu))
    basis[:, 0] = 1.0 / np.sqrt(nu)
    basis[: nu - 1, 1:] = np.eye(nu - 1)
    q, _ = np.linalg.qr(basis)
    Qp = q[:, 1:]
    Ared = Qp.T @ A @ Qp
    Qred = Qp.T @ (B @ B.T) @ Qp
    X = lyapunov_solve(Ared, Qred)
    return float(np.trace(X)) / nu
