import io
import json

import numpy as np
import pytest
from scipy.integrate import solve_ivp as scipy_solve_ivp

from pnkit.linops import to_dense
from pnkit.problems import (
    ProblemFormatError,
    ProblemSpec,
    builtin,
    builtin_names,
    load,
    random_spd_system,
    reference_solution_fn,
    save,
)


class TestRandomSpdSystem:
    def test_n_equals_one(self):
        spec = random_spd_system(1, 1.0, seed=0)
        system = spec.to_linear_system()
        A = to_dense(system.A)
        x_star = spec.reference_values()
        assert A.shape == (1, 1)
        assert system.b[0] == pytest.approx(A[0, 0] * x_star[0], rel=1e-14)

    def test_condition_one_gives_identity_spectrum(self):
        spec = random_spd_system(6, 1.0, seed=3)
        A = to_dense(spec.to_linear_system().A)
        eigs = np.linalg.eigvalsh(A)
        assert np.ptp(eigs) <= 1e-10

    def test_condition_number_matches_target(self):
        spec = random_spd_system(30, 80.0, seed=5)
        A = to_dense(spec.to_linear_system().A)
        cond = np.linalg.cond(A)
        assert abs(cond - 80.0) <= 0.1 * 80.0

    def test_deterministic_per_seed(self):
        a = random_spd_system(5, 10.0, seed=9)
        b = random_spd_system(5, 10.0, seed=9)
        assert np.array_equal(
            to_dense(a.to_linear_system().A), to_dense(b.to_linear_system().A)
        )
        assert a.reference_solution == b.reference_solution

    def test_reference_solves_system(self):
        spec = random_spd_system(8, 25.0, seed=2)
        system = spec.to_linear_system()
        x_star = spec.reference_values()
        assert np.max(np.abs(to_dense(system.A) @ x_star - system.b)) <= 1e-12

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            random_spd_system(0, 1.0)
        with pytest.raises(ValueError):
            random_spd_system(3, 0.5)


class TestBuiltins:
    def test_names(self):
        assert set(builtin_names()) == {
            "hilbert10",
            "logistic",
            "lotka_volterra",
            "linear_decay",
            "genz_oscillatory_1d",
            "gauss_x2",
        }

    def test_unknown_name_lists_available(self):
        with pytest.raises(ValueError, match="gauss_x2"):
            builtin("nope")

    def test_linear_decay_reference(self):
        spec = builtin("linear_decay")
        assert spec.reference_values()[0] == pytest.approx(np.exp(-1.0), rel=1e-15)
        fn = reference_solution_fn("linear_decay")
        assert fn(1.0)[0] == pytest.approx(np.exp(-1.0), rel=1e-15)

    def test_logistic_reference(self):
        spec = builtin("logistic")
        assert spec.reference_values()[0] == pytest.approx(
            1.0 / (1.0 + np.exp(-4.0)), rel=1e-15
        )

    def test_gauss_x2_reference(self):
        assert builtin("gauss_x2").reference_values()[0] == 1.0

    def test_genz_reference_analytic(self):
        spec = builtin("genz_oscillatory_1d")
        u, a = 0.5, 5.0
        exact = (np.sin(2 * np.pi * u + a) - np.sin(2 * np.pi * u)) / a
        assert spec.reference_values()[0] == pytest.approx(exact, rel=1e-13)

    def test_lotka_volterra_reference_vs_independent_tight_integration(self):
        spec = builtin("lotka_volterra")
        ivp = spec.to_ivp()
        result = scipy_solve_ivp(
            lambda t, y: ivp.f(y, t),
            (ivp.t0, ivp.tmax),
            ivp.y0,
            method="RK45",
            rtol=1e-11,
            atol=1e-11,
        )
        assert np.max(np.abs(result.y[:, -1] - spec.reference_values())) <= 1e-6

    def test_hilbert10_materializes(self):
        system = builtin("hilbert10").to_linear_system()
        A = to_dense(system.A)
        assert A[0, 0] == 1.0
        assert A[9, 9] == pytest.approx(1.0 / 19.0)
        assert np.linalg.cond(A) >= 1e12

    def test_ivp_materialization_evaluates(self):
        ivp = builtin("logistic").to_ivp()
        assert ivp.eval_f(np.array([0.5]), 0.0)[0] == pytest.approx(0.25)
        assert ivp.eval_jacobian(np.array([0.5]), 0.0)[0, 0] == pytest.approx(0.0)

    def test_quad_materialization(self):
        spec = builtin("gauss_x2")
        problem = spec.to_quad_problem()
        kernel = spec.default_kernel()
        assert problem.dim == 1
        assert problem.evaluate(np.array([[2.0]]))[0] == 4.0
        assert kernel.lengthscales[0] == 1.0


class TestSerialization:
    def test_save_load_identity_on_builtins(self, tmp_path):
        for name in builtin_names():
            spec = builtin(name)
            path = tmp_path / f"{name}.json"
            save(spec, path)
            loaded = load(path)
            assert loaded == spec

    def test_stream_round_trip(self):
        spec = random_spd_system(4, 10.0, seed=1)
        buffer = io.StringIO()
        save(spec, buffer)
        buffer.seek(0)
        assert load(buffer) == spec

    def test_truncated_file_reports_location(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"schema_version": 1, "kind": "ivp"')
        with pytest.raises(ProblemFormatError, match="line 1"):
            load(path)

    def test_unknown_field_named(self, tmp_path):
        payload = builtin("linear_decay").to_dict()
        payload["dmi"] = 3
        path = tmp_path / "typo.json"
        path.write_text(json.dumps(payload))
        with pytest.raises(ProblemFormatError, match="dmi"):
            load(path)

    def test_unknown_parameter_field_named(self):
        with pytest.raises(ProblemFormatError, match="tmaxx"):
            ProblemSpec.from_dict(
                {
                    "schema_version": 1,
                    "kind": "ivp",
                    "name": "x",
                    "parameters": {"field": "logistic", "t0": 0.0, "tmaxx": 1.0, "y0": [0.5]},
                }
            )

    def test_wrong_schema_version(self):
        with pytest.raises(ProblemFormatError, match="schema_version"):
            ProblemSpec.from_dict(
                {"schema_version": 2, "kind": "ivp", "name": "x", "parameters": {}}
            )

    def test_unknown_measure_field(self):
        with pytest.raises(ProblemFormatError, match="varr"):
            ProblemSpec.from_dict(
                {
                    "schema_version": 1,
                    "kind": "quad",
                    "name": "x",
                    "parameters": {
                        "integrand": "gauss_x2",
                        "dim": 1,
                        "measure": {"type": "gaussian", "mean": [0.0], "varr": [1.0]},
                    },
                }
            )

    def test_missing_required_field(self):
        with pytest.raises(ProblemFormatError, match="parameters"):
            ProblemSpec.from_dict({"schema_version": 1, "kind": "ivp", "name": "x"})

    def test_kind_mismatch_on_materialization(self):
        spec = builtin("gauss_x2")
        with pytest.raises(ValueError):
            spec.to_ivp()
        with pytest.raises(ValueError):
            spec.to_linear_system()
