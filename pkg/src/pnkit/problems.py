"""Problem zoo and strict JSON serialization.

Canonical linear-system / IVP / quadrature instances with known reference
solutions for tests, benchmarks, and the CLI. The JSON schema is strict:
unknown fields are rejected by name, since silent typos corrupt benchmark
comparability. Schema version: 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import hilbert

from .diffeq import IVP
from .linalg import LinearSystem
from .quad import (
    GaussianMeasure,
    LebesgueBoxMeasure,
    QuadProblem,
    SquaredExpKernel,
)

__all__ = [
    "ProblemSpec",
    "ProblemFormatError",
    "SCHEMA_VERSION",
    "builtin",
    "builtin_names",
    "random_spd_system",
    "load",
    "save",
    "reference_solution_fn",
]

SCHEMA_VERSION = 1

_KINDS = ("linear_system", "ivp", "quad")
_TOP_FIELDS = {"schema_version", "kind", "name", "parameters", "reference_solution"}
_REF_FIELDS = {"values", "provenance", "at"}
_PARAM_FIELDS = {
    "linear_system": {"matrix", "rhs", "family", "n", "generator", "condition_target", "seed"},
    "ivp": {"field", "field_params", "t0", "tmax", "y0"},
    "quad": {"integrand", "integrand_params", "dim", "measure", "kernel", "n_nodes", "nodes", "seed"},
}
_MEASURE_FIELDS = {
    "gaussian": {"type", "mean", "var"},
    "lebesgue_box": {"type", "a", "b", "normalize"},
}


class ProblemFormatError(ValueError):
    """A problem description violated the JSON schema."""


def _check_fields(payload: dict, allowed: set, where: str):
    for key in payload:
        if key not in allowed:
            raise ProblemFormatError(f"unknown field {key!r} in {where}")


# --- vector field and integrand registries (JSON carries names, not code) ---


def _make_logistic(params):
    def f(y, t):
        return y * (1.0 - y)

    def jac(y, t):
        return np.diag(1.0 - 2.0 * y)

    return f, jac


def _make_linear_decay(params):
    def f(y, t):
        return -y

    def jac(y, t):
        return -np.eye(y.shape[0])

    return f, jac


def _make_lotka_volterra(params):
    a = params.get("a", 0.5)
    b = params.get("b", 0.05)
    c = params.get("c", 0.5)
    d = params.get("d", 0.05)

    def f(y, t):
        return np.array([a * y[0] - b * y[0] * y[1], -c * y[1] + d * y[0] * y[1]])

    def jac(y, t):
        return np.array(
            [[a - b * y[1], -b * y[0]], [d * y[1], -c + d * y[0]]]
        )

    return f, jac


_VECTOR_FIELDS = {
    "logistic": _make_logistic,
    "linear_decay": _make_linear_decay,
    "lotka_volterra": _make_lotka_volterra,
}


def _make_gauss_x2(params):
    return lambda x: float(x[0] ** 2)


def _make_genz_oscillatory(params):
    u = params.get("u", 0.5)
    a = np.atleast_1d(np.asarray(params.get("a", 5.0), dtype=float))

    def f(x):
        return float(np.cos(2.0 * np.pi * u + np.dot(a, np.atleast_1d(x))))

    return f


_INTEGRANDS = {
    "gauss_x2": _make_gauss_x2,
    "genz_oscillatory": _make_genz_oscillatory,
}

# Analytic reference solutions as callables of t (IVPs only).
_IVP_REFERENCES = {
    "logistic": lambda t: np.atleast_1d(1.0 / (1.0 + np.exp(-np.asarray(t)))),
    "linear_decay": lambda t: np.atleast_1d(np.exp(-np.asarray(t))),
}


@dataclass(frozen=True)
class ProblemSpec:
    """Serializable description of one numerical problem.

    ``parameters`` is the kind-specific JSON object; ``reference_solution``
    optionally carries values plus a provenance string ("analytic" or
    "oracle:<name>").
    """

    kind: str
    name: str
    parameters: dict
    reference_solution: dict | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ProblemFormatError(f"unknown problem kind {self.kind!r}")
        _check_fields(self.parameters, _PARAM_FIELDS[self.kind], f"parameters of {self.name!r}")
        if self.reference_solution is not None:
            _check_fields(self.reference_solution, _REF_FIELDS, "reference_solution")

    # -- materialization ----------------------------------------------------

    def to_linear_system(self) -> LinearSystem:
        if self.kind != "linear_system":
            raise ValueError(f"problem {self.name!r} is a {self.kind}, not a linear system")
        p = self.parameters
        if "matrix" in p:
            return LinearSystem(np.asarray(p["matrix"], dtype=float), np.asarray(p["rhs"], dtype=float))
        if p.get("family") == "hilbert":
            n = int(p["n"])
            A = hilbert(n)
            return LinearSystem(A, A @ np.ones(n))
        if p.get("generator") == "random_spd":
            A, b, _ = _generate_spd(int(p["n"]), float(p["condition_target"]), int(p["seed"]))
            return LinearSystem(A, b)
        raise ProblemFormatError(f"cannot materialize linear system {self.name!r}")

    def to_ivp(self) -> IVP:
        if self.kind != "ivp":
            raise ValueError(f"problem {self.name!r} is a {self.kind}, not an IVP")
        p = self.parameters
        try:
            factory = _VECTOR_FIELDS[p["field"]]
        except KeyError:
            raise ProblemFormatError(
                f"unknown vector field {p.get('field')!r}; known: {sorted(_VECTOR_FIELDS)}"
            ) from None
        f, jac = factory(p.get("field_params", {}))
        return IVP(f=f, t0=float(p["t0"]), tmax=float(p["tmax"]), y0=np.asarray(p["y0"], dtype=float), jacobian=jac)

    def to_quad_problem(self) -> QuadProblem:
        if self.kind != "quad":
            raise ValueError(f"problem {self.name!r} is a {self.kind}, not a quad problem")
        p = self.parameters
        try:
            factory = _INTEGRANDS[p["integrand"]]
        except KeyError:
            raise ProblemFormatError(
                f"unknown integrand {p.get('integrand')!r}; known: {sorted(_INTEGRANDS)}"
            ) from None
        integrand = factory(p.get("integrand_params", {}))
        measure = _measure_from_dict(p["measure"])
        return QuadProblem(integrand=integrand, measure=measure)

    def default_kernel(self) -> SquaredExpKernel:
        if self.kind != "quad":
            raise ValueError("kernels only apply to quad problems")
        p = self.parameters
        dim = int(p.get("dim", 1))
        spec = p.get("kernel")
        if spec is None:
            return SquaredExpKernel(np.ones(dim), 1.0)
        _check_fields(spec, {"lengthscales", "output_scale"}, "kernel")
        return SquaredExpKernel(
            np.asarray(spec.get("lengthscales", np.ones(dim)), dtype=float),
            float(spec.get("output_scale", 1.0)),
        )

    def reference_values(self) -> np.ndarray | None:
        if self.reference_solution is None:
            return None
        return np.asarray(self.reference_solution["values"], dtype=float)

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "name": self.name,
            "parameters": self.parameters,
        }
        if self.reference_solution is not None:
            payload["reference_solution"] = self.reference_solution
        return payload

    @classmethod
    def from_dict(cls, payload: dict) -> "ProblemSpec":
        if not isinstance(payload, dict):
            raise ProblemFormatError("problem description must be a JSON object")
        _check_fields(payload, _TOP_FIELDS, "problem description")
        for required in ("schema_version", "kind", "name", "parameters"):
            if required not in payload:
                raise ProblemFormatError(f"missing required field {required!r}")
        if payload["schema_version"] != SCHEMA_VERSION:
            raise ProblemFormatError(
                f"unsupported schema_version {payload['schema_version']!r} "
                f"(expected {SCHEMA_VERSION})"
            )
        params = payload["parameters"]
        if not isinstance(params, dict):
            raise ProblemFormatError("'parameters' must be a JSON object")
        if payload["kind"] == "quad" and "measure" in params:
            measure = params["measure"]
            mtype = measure.get("type")
            if mtype not in _MEASURE_FIELDS:
                raise ProblemFormatError(
                    f"unknown measure type {mtype!r}; known: {sorted(_MEASURE_FIELDS)}"
                )
            _check_fields(measure, _MEASURE_FIELDS[mtype], f"measure of type {mtype!r}")
        return cls(
            kind=payload["kind"],
            name=payload["name"],
            parameters=params,
            reference_solution=payload.get("reference_solution"),
        )


def _measure_from_dict(payload: dict):
    mtype = payload.get("type")
    if mtype == "gaussian":
        return GaussianMeasure(np.asarray(payload["mean"], dtype=float), np.asarray(payload["var"], dtype=float))
    if mtype == "lebesgue_box":
        return LebesgueBoxMeasure(
            np.asarray(payload["a"], dtype=float),
            np.asarray(payload["b"], dtype=float),
            normalize=bool(payload.get("normalize", False)),
        )
    raise ProblemFormatError(f"unknown measure type {mtype!r}")


def _generate_spd(n: int, condition_target: float, seed: int):
    rng = np.random.default_rng(seed)
    gauss = rng.standard_normal((n, n))
    Q, R = np.linalg.qr(gauss)
    signs = np.sign(np.diagonal(R))
    signs = np.where(signs == 0, 1.0, signs)
    Q = Q * signs
    if n == 1:
        spectrum = np.array([1.0])
    else:
        spectrum = condition_target ** (np.arange(n) / (n - 1))
    A = (Q * spectrum) @ Q.T
    A = 0.5 * (A + A.T)
    x_star = rng.standard_normal(n)
    return A, A @ x_star, x_star


def random_spd_system(n: int, condition_target: float = 10.0, seed: int = 0) -> ProblemSpec:
    """Seeded random SPD system with a log-uniform spectrum and known solution.

    The matrix is U^T D U with a seeded orthogonal U and spectrum spanning
    ``condition_target``; the right-hand side is built from a sampled solution
    x*, which is stored as the analytic reference.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if condition_target < 1:
        raise ValueError(f"condition_target must be >= 1, got {condition_target}")
    _, _, x_star = _generate_spd(n, condition_target, seed)
    return ProblemSpec(
        kind="linear_system",
        name=f"random_spd(n={n},condition_target={condition_target:g},seed={seed})",
        parameters={
            "generator": "random_spd",
            "n": n,
            "condition_target": condition_target,
            "seed": seed,
        },
        reference_solution={"values": x_star.tolist(), "provenance": "analytic"},
    )


def _builtin_specs() -> dict[str, ProblemSpec]:
    # lotka_volterra reference frozen from a tight-tolerance integration
    # (fixed-step RK4 at h = 5e-6 cross-checked against an adaptive
    # high-order run; the two agree to 2e-13).
    return {
        "hilbert10": ProblemSpec(
            kind="linear_system",
            name="hilbert10",
            parameters={"family": "hilbert", "n": 10},
        ),
        "logistic": ProblemSpec(
            kind="ivp",
            name="logistic",
            parameters={"field": "logistic", "t0": 0.0, "tmax": 4.0, "y0": [0.5]},
            reference_solution={
                "values": [1.0 / (1.0 + math.exp(-4.0))],
                "at": 4.0,
                "provenance": "analytic",
            },
        ),
        "linear_decay": ProblemSpec(
            kind="ivp",
            name="linear_decay",
            parameters={"field": "linear_decay", "t0": 0.0, "tmax": 1.0, "y0": [1.0]},
            reference_solution={
                "values": [math.exp(-1.0)],
                "at": 1.0,
                "provenance": "analytic",
            },
        ),
        "lotka_volterra": ProblemSpec(
            kind="ivp",
            name="lotka_volterra",
            parameters={
                "field": "lotka_volterra",
                "field_params": {"a": 0.5, "b": 0.05, "c": 0.5, "d": 0.05},
                "t0": 0.0,
                "tmax": 7.0,
                "y0": [20.0, 20.0],
            },
            reference_solution={
                "values": [4.135846619041535, 3.993760091838967],
                "at": 7.0,
                "provenance": "oracle:rk-tight",
            },
        ),
        "genz_oscillatory_1d": ProblemSpec(
            kind="quad",
            name="genz_oscillatory_1d",
            parameters={
                "integrand": "genz_oscillatory",
                "integrand_params": {"u": 0.5, "a": 5.0},
                "dim": 1,
                "measure": {"type": "lebesgue_box", "a": [0.0], "b": [1.0], "normalize": False},
                "kernel": {"lengthscales": [0.25], "output_scale": 1.0},
            },
            reference_solution={
                # (sin(2 pi u + a) - sin(2 pi u)) / a at u = 1/2, a = 5.
                "values": [0.1917848549326277],
                "provenance": "analytic",
            },
        ),
        "gauss_x2": ProblemSpec(
            kind="quad",
            name="gauss_x2",
            parameters={
                "integrand": "gauss_x2",
                "dim": 1,
                "measure": {"type": "gaussian", "mean": [0.0], "var": [1.0]},
                # Amplitude prior sized to the integrand's range on the
                # measure's bulk (x^2 reaches ~9 within three sigma).
                "kernel": {"lengthscales": [1.0], "output_scale": 100.0},
            },
            reference_solution={"values": [1.0], "provenance": "analytic"},
        ),
    }


def builtin_names() -> tuple[str, ...]:
    return tuple(sorted(_builtin_specs()))


def builtin(name: str) -> ProblemSpec:
    """Named canonical problem with a reference solution where analytic."""
    specs = _builtin_specs()
    try:
        return specs[name]
    except KeyError:
        raise ValueError(
            f"unknown builtin {name!r}; available: {', '.join(sorted(specs))}"
        ) from None


def reference_solution_fn(name: str):
    """Analytic solution t -> y(t) for builtins that have one, else None."""
    return _IVP_REFERENCES.get(name)


def save(spec: ProblemSpec, path) -> None:
    """Write a problem spec as JSON (lossless round trip)."""
    text = json.dumps(spec.to_dict(), indent=2, sort_keys=True)
    if hasattr(path, "write"):
        path.write(text + "\n")
    else:
        Path(path).write_text(text + "\n")


def load(path) -> ProblemSpec:
    """Read a problem spec from a path or stream; strict about the schema.

    Raises:
        ProblemFormatError: On malformed JSON (with location) or unknown fields.
    """
    if hasattr(path, "read"):
        text = path.read()
    else:
        text = Path(path).read_text()
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFormatError(
            f"malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    return ProblemSpec.from_dict(payload)
