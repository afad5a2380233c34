import numpy as np
import pytest

from pnkit.diffeq import IVP, EULER, RK4, PerturbedSolution, perturbed_solve, rk_solve
from pnkit.errors import NumericalError


def _decay_ivp(tmax=1.0):
    return IVP(f=lambda y, t: -y, t0=0.0, tmax=tmax, y0=[1.0])


class TestBaseMethod:
    def test_rk4_order(self):
        errors = []
        for h in (0.1, 0.05):
            _, states = rk_solve(_decay_ivp(), "rk4", h)
            errors.append(abs(states[-1, 0] - np.exp(-1.0)))
        assert errors[0] / errors[1] >= 2**4 * 0.7

    def test_euler_order(self):
        errors = []
        for h in (0.01, 0.005):
            _, states = rk_solve(_decay_ivp(), "euler", h)
            errors.append(abs(states[-1, 0] - np.exp(-1.0)))
        assert 2 * 0.8 <= errors[0] / errors[1] <= 2 * 1.2

    def test_rk4_classic_accuracy(self):
        _, states = rk_solve(_decay_ivp(), "rk4", 0.05)
        assert abs(states[-1, 0] - np.exp(-1.0)) <= 1e-7

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            rk_solve(_decay_ivp(), "rk2", 0.1)


class TestPerturbedSolve:
    def test_scale_zero_reproduces_base_bitwise(self):
        ivp = _decay_ivp()
        _, base = rk_solve(ivp, "rk4", 0.05)
        sol = perturbed_solve(
            ivp, "rk4", h=0.05, scale=0.0, ensemble_size=5, rng=np.random.default_rng(3)
        )
        for i in range(sol.size):
            assert np.array_equal(sol.ensemble[i], base)
        assert np.max(sol.std()) == 0.0

    def test_scale_zero_euler_bitwise(self):
        ivp = _decay_ivp()
        _, base = rk_solve(ivp, "euler", 0.1)
        sol = perturbed_solve(
            ivp, EULER, h=0.1, scale=0.0, ensemble_size=3, rng=np.random.default_rng(0)
        )
        assert np.array_equal(sol.ensemble[0], base)

    def test_fixed_seed_bit_identical(self):
        ivp = _decay_ivp()
        a = perturbed_solve(ivp, "rk4", 0.05, 1.0, 20, np.random.default_rng(7))
        b = perturbed_solve(ivp, "rk4", 0.05, 1.0, 20, np.random.default_rng(7))
        assert np.array_equal(a.ensemble, b.ensemble)

    def test_clt_gate_at_t1(self):
        # Ensemble of 100, scale 1, h = 0.05, RK4 on dy/dt = -y: the ensemble
        # mean at t = 1 lies within 3 ensemble standard errors of exp(-1).
        sol = perturbed_solve(_decay_ivp(), "rk4", 0.05, 1.0, 100, np.random.default_rng(42))
        values = sol.at(1.0)[:, 0]
        se = values.std(ddof=1) / np.sqrt(values.size)
        assert abs(values.mean() - np.exp(-1.0)) <= 3.0 * se

    def test_spread_shrinks_with_h(self):
        # Fixed seed ladder: spread at t=1 decreases in h up to 20% noise.
        spreads = []
        for h in (0.1, 0.05, 0.025):
            sol = perturbed_solve(_decay_ivp(), "rk4", h, 1.0, 60, np.random.default_rng(11))
            spreads.append(float(sol.at(1.0)[:, 0].std(ddof=1)))
        assert spreads[1] <= spreads[0] * 1.2
        assert spreads[2] <= spreads[1] * 1.2

    def test_delta_truncated_to_09h(self):
        # Huge scale: increments stay positive because delta <= 0.9 h.
        sol = perturbed_solve(_decay_ivp(), "euler", 0.1, 1e9, 10, np.random.default_rng(1))
        assert np.all(np.isfinite(sol.ensemble))

    def test_step_positivity_contract(self):
        sol = perturbed_solve(_decay_ivp(), "rk4", 0.2, 5.0, 30, np.random.default_rng(2))
        assert np.all(np.isfinite(sol.ensemble))

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_nonfinite_members_excluded_and_counted(self):
        # A field that explodes when a member's internal clock drifts past the
        # deterministic stability boundary; blows up for every member.
        def unstable(y, t):
            return y**2 * 40.0

        ivp = IVP(f=unstable, t0=0.0, tmax=1.0, y0=[1.0])
        with pytest.raises(NumericalError):
            perturbed_solve(ivp, "euler", 0.1, 0.0, 3, np.random.default_rng(0))

    def test_partial_exclusion_reported(self):
        def flaky(y, t):
            # Deterministic in (y, t): diverges only for trajectories whose
            # state exceeds a threshold inside the terminal ensemble spread.
            if y[0] > 1.6289:
                return np.full_like(y, np.inf)
            return y.copy()

        ivp = IVP(f=flaky, t0=0.0, tmax=0.5, y0=[1.0])
        sol = perturbed_solve(ivp, "euler", 0.05, 50.0, 40, np.random.default_rng(5))
        assert sol.excluded >= 1
        assert sol.size >= 1
        assert sol.size + sol.excluded == 40
        assert np.all(np.isfinite(sol.ensemble))

    def test_interpolation_at_nodes_exact(self):
        sol = perturbed_solve(_decay_ivp(), "rk4", 0.1, 1.0, 5, np.random.default_rng(9))
        values = sol.at(float(sol.times[4]))
        assert np.array_equal(values, sol.ensemble[:, 4, :])

    def test_interpolation_order_between_nodes(self):
        # Hermite interpolation keeps RK4-level accuracy off the grid.
        sol = perturbed_solve(_decay_ivp(), "rk4", 0.05, 0.0, 1, np.random.default_rng(0))
        for t in (0.333, 0.777):
            val = sol.at(t)[0, 0]
            assert abs(val - np.exp(-t)) <= 1e-6

    def test_invalid_arguments(self):
        ivp = _decay_ivp()
        with pytest.raises(ValueError):
            perturbed_solve(ivp, "rk4", -0.1, 1.0, 5, np.random.default_rng(0))
        with pytest.raises(ValueError):
            perturbed_solve(ivp, "rk4", 0.1, -1.0, 5, np.random.default_rng(0))
        with pytest.raises(ValueError):
            perturbed_solve(ivp, "rk4", 0.1, 1.0, 0, np.random.default_rng(0))

    def test_solution_metadata(self):
        sol = perturbed_solve(_decay_ivp(), "rk4", 0.1, 0.5, 7, np.random.default_rng(4))
        assert isinstance(sol, PerturbedSolution)
        assert sol.order == RK4.order
        assert sol.scale == 0.5
        assert sol.times[0] == 0.0 and sol.times[-1] == 1.0
