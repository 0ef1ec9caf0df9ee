import subprocess
import sys

import numpy as np
import pytest

from agreelab import _kernels
from agreelab.graph import Graph
from agreelab.lti import RationalTF, StateSpace
from agreelab.protocol import AgentModel, ClassicConfig, ClosedLoop, build_classic
from agreelab.sim import (
    SignalSpec,
    SimulationDiverged,
    Trajectory,
    disagreement_norm,
    drift_slope,
    ensemble_member,
    integrate,
    integrate_stochastic,
    rk4_transition,
    run_ensemble,
    settling_time,
)

ZERO = SignalSpec.zero()
DART = Graph(5, [(1, 2), (1, 3), (1, 4), (1, 5), (2, 3), (2, 4)])
INTEGRATOR = RationalTF([1.0], [0.0, 1.0])


def scalar_loop(a: float) -> ClosedLoop:
    """Single-agent loop xdot = a x + d + n for integrator-style tests."""
    sys = StateSpace([[a]], [[1.0, 1.0]], [[1.0]], [[0.0, 0.0]])
    return ClosedLoop(dynamics=sys, x0_map=np.array([[1.0]]), nagents=1)


def consensus_loop(n_agents=5, k=2.65):
    agents = [AgentModel(INTEGRATOR) for _ in range(n_agents)]
    return build_classic(DART, agents, ClassicConfig(gains=k))


class TestSignalSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            SignalSpec("ramp")
        with pytest.raises(ValueError):
            SignalSpec.step(1.0, onset=-1.0)
        with pytest.raises(ValueError):
            SignalSpec.white_noise(-1.0)

    def test_kinds(self):
        assert SignalSpec.zero().kind == "zero"
        assert SignalSpec.step(2.0, 5.0).amplitude == 2.0
        assert SignalSpec.white_noise(0.3, 5.0).is_stochastic


class TestDeterministicIntegration:
    def test_scalar_decay_matches_exponential(self):
        loop = scalar_loop(-1.0)
        traj = integrate(loop, ZERO, ZERO, [1.0], 1e-3, 1.0)
        assert abs(traj.outputs[-1, 0] - np.exp(-1.0)) < 1e-8

    def test_two_agent_consensus_average(self):
        g = Graph(2, [(1, 2)])
        loop = build_classic(g, [AgentModel(INTEGRATOR)] * 2, ClassicConfig(gains=1.0))
        traj = integrate(loop, ZERO, ZERO, [0.0, 2.0], 1e-3, 10.0)
        assert np.allclose(traj.outputs[-1], 1.0, atol=1e-7)

    def test_order_four_convergence(self):
        loop = scalar_loop(-1.0)
        errors = []
        steps = [1e-2, 5e-3, 2.5e-3]
        for dt in steps:
            traj = integrate(loop, ZERO, ZERO, [1.0], dt, 1.0)
            errors.append(abs(traj.outputs[-1, 0] - np.exp(-1.0)))
        slopes = np.diff(np.log(errors)) / np.diff(np.log(steps))
        assert np.all(np.abs(slopes - 4.0) <= 0.3)

    def test_step_onset_alignment_exact(self):
        # integrator with a step at t = 1: y(T) = amp * (T - 1) exactly
        loop = scalar_loop(0.0)
        traj = integrate(loop, SignalSpec.step(2.0, onset=1.0), ZERO, [0.0], 1e-3, 3.0)
        assert traj.outputs[-1, 0] == pytest.approx(4.0, abs=1e-9)
        k_onset = traj.index_at(1.0)
        assert traj.outputs[k_onset, 0] == pytest.approx(0.0, abs=1e-12)

    def test_white_noise_rejected(self):
        loop = scalar_loop(-1.0)
        with pytest.raises(ValueError, match="deterministic"):
            integrate(loop, ZERO, SignalSpec.white_noise(1.0), [0.0], 1e-3, 1.0)

    def test_divergence_detection(self):
        loop = scalar_loop(5.0)
        with pytest.raises(SimulationDiverged) as err:
            integrate(loop, ZERO, ZERO, [1.0], 1e-3, 10.0)
        assert err.value.time == pytest.approx(np.log(1e9) / 5.0, rel=0.05)

    def test_zero_everything_stays_zero(self):
        loop = consensus_loop()
        traj = integrate(loop, ZERO, ZERO, np.zeros(5), 1e-3, 2.0)
        assert np.max(np.abs(traj.outputs)) == 0.0


class TestStochasticIntegration:
    def test_brownian_variance_slope(self):
        loop = scalar_loop(0.0)
        stats = run_ensemble(
            loop, ZERO, SignalSpec.white_noise(1.0), [0.0], 1e-2, 20.0,
            seed=1, realizations=500, projection=[1.0],
        )
        assert stats.variance[-1] == pytest.approx(20.0, rel=0.1)
        assert stats.drift_slope() == pytest.approx(1.0, rel=0.1)

    def test_bitwise_determinism(self):
        loop = consensus_loop()
        spec = [SignalSpec.white_noise(0.1, onset=1.0)] * 5
        a = integrate_stochastic(loop, ZERO, spec, [1, 0, 0, 0, -1.0], 1e-3, 5.0, seed=42)
        b = integrate_stochastic(loop, ZERO, spec, [1, 0, 0, 0, -1.0], 1e-3, 5.0, seed=42)
        assert np.array_equal(a.outputs, b.outputs)

    def test_different_seed_differs(self):
        loop = scalar_loop(-1.0)
        a = integrate_stochastic(loop, ZERO, SignalSpec.white_noise(1.0), [0.0], 1e-2, 2.0, seed=1)
        b = integrate_stochastic(loop, ZERO, SignalSpec.white_noise(1.0), [0.0], 1e-2, 2.0, seed=2)
        assert not np.array_equal(a.outputs, b.outputs)

    def test_ou_stationary_variance(self):
        # xdot = -x + white noise of intensity sigma^2: Var -> sigma^2/2
        loop = scalar_loop(-1.0)
        sigma2 = 2.0
        stats = run_ensemble(
            loop, ZERO, SignalSpec.white_noise(sigma2), [0.0], 1e-2, 30.0,
            seed=10, realizations=500, projection=[1.0],
        )
        window = stats.variance[stats.times >= 20.0]
        assert np.mean(window) == pytest.approx(sigma2 / 2.0, rel=0.1)

    def test_onset_gating(self):
        loop = scalar_loop(0.0)
        traj = integrate_stochastic(
            loop, ZERO, SignalSpec.white_noise(1.0, onset=2.0), [0.0], 1e-2, 4.0, seed=3
        )
        before = traj.outputs[traj.times <= 2.0]
        assert np.max(np.abs(before)) == 0.0
        assert np.max(np.abs(traj.outputs[-1])) > 0.0

    def test_ensemble_member_matches_streaming_stats(self):
        loop = scalar_loop(-0.5)
        spec = SignalSpec.white_noise(1.0)
        R = 40
        stats = run_ensemble(loop, ZERO, spec, [0.0], 1e-2, 5.0, seed=9, realizations=R, projection=[1.0])
        members = [
            ensemble_member(loop, ZERO, spec, [0.0], 1e-2, 5.0, 9, r) for r in range(R)
        ]
        z = np.stack([m.outputs[:, 0] for m in members])
        assert np.allclose(z.var(axis=0, ddof=1), stats.variance, atol=1e-12)
        assert np.allclose(z[:, -1], stats.finals[:, 0])


class TestMetrics:
    def test_settling_constant_trajectory(self):
        t = np.arange(11) * 0.1
        traj = Trajectory(times=t, outputs=np.ones((11, 3)), dt=0.1)
        assert settling_time(traj) == 0.0

    def test_settling_exponential(self):
        # horizon long enough that the terminal residue is negligible
        loop = scalar_loop(-1.0)
        traj = integrate(loop, ZERO, ZERO, [1.0], 1e-3, 16.0)
        assert settling_time(traj, band=0.02) == pytest.approx(np.log(50.0), abs=1e-3)

    def test_settling_unsettled_raises(self):
        t = np.arange(11) * 0.1
        y = np.linspace(0, 1, 11)[:, None] * np.array([[1.0, -1.0]])
        traj = Trajectory(times=t, outputs=y, dt=0.1)
        with pytest.raises(RuntimeError, match="unsettled"):
            settling_time(traj)

    def test_disagreement_norm(self):
        t = np.arange(3) * 1.0
        y = np.tile([2.0, 2.0, 2.0], (3, 1))
        traj = Trajectory(times=t, outputs=y, dt=1.0)
        assert disagreement_norm(traj, 2.0, 2.0) == 0.0
        y2 = y.copy()
        y2[2, 0] += 1.0
        traj2 = Trajectory(times=t, outputs=y2, dt=1.0)
        assert disagreement_norm(traj2, 2.0, 2.0) == pytest.approx(1.0)

    def test_disagreement_norm_off_grid(self):
        t = np.arange(3) * 1.0
        traj = Trajectory(times=t, outputs=np.zeros((3, 2)), dt=1.0)
        with pytest.raises(ValueError, match="grid"):
            disagreement_norm(traj, 0.5, 0.0)

    def test_drift_slope_requires_30(self):
        t = np.arange(5) * 1.0
        trajs = [Trajectory(times=t, outputs=np.zeros((5, 1)), dt=1.0)] * 5
        with pytest.raises(ValueError, match="30"):
            drift_slope(trajs, [1.0])

    def test_drift_slope_list_matches_stats(self):
        loop = scalar_loop(0.0)
        spec = SignalSpec.white_noise(1.0)
        R = 60
        stats = run_ensemble(loop, ZERO, spec, [0.0], 1e-2, 10.0, seed=2, realizations=R, projection=[1.0])
        members = [ensemble_member(loop, ZERO, spec, [0.0], 1e-2, 10.0, 2, r) for r in range(R)]
        assert drift_slope(members, [1.0]) == pytest.approx(stats.drift_slope(), rel=1e-9)


class TestAgreementLimit:
    def test_noise_free_agreement_gap(self):
        loop = consensus_loop()
        rng = np.random.default_rng(55)
        y0 = rng.uniform(-2, 2, 5)
        traj = integrate(loop, ZERO, ZERO, y0, 1e-3, 40.0)
        gap = np.max(traj.outputs[-1]) - np.min(traj.outputs[-1])
        assert gap <= 1e-4 * np.linalg.norm(y0)


class TestTrajectoryCsv:
    def test_roundtrip_full_precision(self, tmp_path):
        loop = consensus_loop()
        traj = integrate(loop, ZERO, ZERO, [1.5, 0.75, 0.0, -0.75, -1.5], 1e-2, 1.0)
        path = tmp_path / "traj.csv"
        traj.write_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "t,y1,y2,y3,y4,y5"
        back = Trajectory.read_csv(path)
        assert np.array_equal(back.outputs, traj.outputs)
        assert np.array_equal(back.times, traj.times)

    def test_read_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("x,y1\n0,1\n1,2\n")
        with pytest.raises(ValueError, match="'t' column"):
            Trajectory.read_csv(path)


class TestKernelBackends:
    def test_rk4_transition_matches_expm_series(self):
        rng = np.random.default_rng(6)
        A = rng.normal(size=(4, 4)) * 0.5
        dt = 1e-3
        phi, gamma = rk4_transition(A, dt)
        from scipy.linalg import expm

        assert np.allclose(phi, expm(A * dt), atol=1e-14)

    def test_numpy_and_numba_paths_agree(self):
        if not _kernels.HAVE_NUMBA:
            pytest.skip("numba unavailable")
        rng = np.random.default_rng(12)
        n, steps = 7, 500
        phi = np.eye(n) + rng.normal(size=(n, n)) * 1e-3
        g = rng.normal(size=(steps, n)) * 1e-2
        x0 = rng.normal(size=n)
        out_np, blow_np = _kernels.affine_path_numpy(phi, g, x0, 1e9)
        out_nb, blow_nb = _kernels.affine_path_numba(phi, g, x0, 1e9)
        assert blow_np == blow_nb == -1
        assert np.allclose(out_np, out_nb, atol=1e-12)
        bn = rng.normal(size=(n, 2))
        w = rng.normal(size=(steps, 2)) * 0.1
        noisy_np, _ = _kernels.affine_path_noise_numpy(phi, g, bn, w, x0, 1e9)
        noisy_nb, _ = _kernels.affine_path_noise_numba(phi, g, bn, w, x0, 1e9)
        assert np.allclose(noisy_np, noisy_nb, atol=1e-12)

    def test_blow_index_agreement(self):
        if not _kernels.HAVE_NUMBA:
            pytest.skip("numba unavailable")
        phi = np.array([[1.5]])
        g = np.zeros((100, 1))
        x0 = np.array([1.0])
        _, k_np = _kernels.affine_path_numpy(phi, g, x0, 1e3)
        _, k_nb = _kernels.affine_path_numba(phi, g, x0, 1e3)
        assert k_np == k_nb > 0

    def test_env_flag_selects_numpy_backend(self):
        code = (
            "import os; os.environ['AGREELAB_NUMBA'] = '0'; "
            "from agreelab import _kernels; print(_kernels.backend())"
        )
        out = subprocess.run(
            [sys.executable, "-c", code], capture_output=True, text=True, check=True
        )
        assert out.stdout.strip() == "numpy"

    def test_backend_reports_a_valid_name(self):
        assert _kernels.backend() in ("numba", "numpy")
