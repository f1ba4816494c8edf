"""Reduced amplitude dynamics on the critical eigenspace.

States are stored in the real chart ``(x₀, y₁, z₁, …, y_{l_c}, z_{l_c})``
with ``x_m = (y_m + i z_m)/√2`` for ``m > 0``; negative orders follow from
``x_{-m} = (-1)^m conj(x_m)``.  In this chart
``N = x₀² + 2 Σ_{m>0} |x_m|²`` is the squared Euclidean norm and the cubic
field reads ``v' = β⁺ v - q N v``.

The cubic truncation makes the whole sphere ``N = β⁺/q`` steady.  These
steady states are degenerate and do not persist under higher-order terms,
so :func:`attractor` reports the sphere only as an invariant-manifold
estimate.  How far above ``λ_c`` the cubic model stays quantitative is not
known.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from math import sqrt

import numpy as np
from scipy.integrate import solve_ivp
from scipy.stats import norm, qmc

from .fields import ShellField, mode_field
from .harmonics import SphereGrid
from .reduction import CenterManifoldCoeffs, ReducedModel
from .spectrum import Branch, ModeIndex

__all__ = [
    "IntegrationError",
    "NoAttractorError",
    "ReducedState",
    "Trajectory",
    "AttractorEstimate",
    "vector_field",
    "jacobian",
    "integrate",
    "logistic_norm",
    "attractor",
    "reconstruct",
    "rotate",
]


class IntegrationError(RuntimeError):
    pass


class NoAttractorError(ValueError):
    pass


@dataclass(frozen=True)
class ReducedState:
    """Amplitudes ``x_m`` for ``0 ≤ m ≤ l_c`` (``x₀`` real) at ``time``."""

    x: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=complex)
        if x.ndim != 1 or x.size < 2:
            raise ValueError("state needs x_0 .. x_{l_c} with l_c >= 1")
        if abs(x[0].imag) > 0:
            raise ValueError("x_0 must be real")
        object.__setattr__(self, "x", x)

    @property
    def l_c(self) -> int:
        return self.x.size - 1

    @classmethod
    def from_real(cls, v, time: float = 0.0) -> "ReducedState":
        v = np.asarray(v, dtype=float)
        l_c = (v.size - 1) // 2
        x = np.empty(l_c + 1, dtype=complex)
        x[0] = v[0]
        x[1:] = (v[1::2] + 1j * v[2::2]) / sqrt(2.0)
        return cls(x, time)

    @classmethod
    def from_full(cls, x_full, time: float = 0.0) -> "ReducedState":
        """From amplitudes indexed ``m = -l_c..l_c`` (must satisfy the reality rule)."""
        x_full = np.asarray(x_full, dtype=complex)
        l_c = (x_full.size - 1) // 2
        x = x_full[l_c:].copy()
        x[0] = x[0].real
        return cls(x, time)

    def real(self) -> np.ndarray:
        """``(x₀, y₁, z₁, …)``."""
        v = np.empty(2 * self.l_c + 1)
        v[0] = self.x[0].real
        v[1::2] = sqrt(2.0) * self.x[1:].real
        v[2::2] = sqrt(2.0) * self.x[1:].imag
        return v

    def full(self) -> np.ndarray:
        """All ``x_m`` for ``m = -l_c..l_c``."""
        l_c = self.l_c
        ms = np.arange(1, l_c + 1)
        neg = ((-1.0) ** ms * np.conj(self.x[1:]))[::-1]
        return np.concatenate([neg, self.x])

    @property
    def N(self) -> float:
        return float(self.x[0].real ** 2 + 2.0 * np.sum(np.abs(self.x[1:]) ** 2))


def _rhs(beta, q):
    def f(t, v):
        return v * (beta - q * np.dot(v, v))

    return f


def vector_field(model: ReducedModel, s: ReducedState) -> ReducedState:
    """``dx_m/dt = β⁺ x_m - q x_m N(s)``."""
    if s.l_c != model.l_c:
        raise ValueError(f"state has l_c={s.l_c}, model has l_c={model.l_c}")
    beta = model.beta_plus()
    return ReducedState(s.x * (beta - model.q * s.N), s.time)


def jacobian(model: ReducedModel, s: ReducedState) -> np.ndarray:
    """Jacobian of the field in the real chart, ``(β - qN) I - 2q v vᵀ``."""
    v = s.real()
    beta = model.beta_plus()
    return (beta - model.q * v @ v) * np.eye(v.size) - 2.0 * model.q * np.outer(v, v)


def logistic_norm(beta: float, q: float, N0: float, t):
    """Closed-form ``N(t)`` solving ``dN/dt = 2N(β - qN)``."""
    t = np.asarray(t, dtype=float)
    if beta == 0.0:
        return N0 / (1.0 + 2.0 * q * N0 * t)
    e = np.exp(2.0 * beta * t)
    return N0 * beta * e / (beta + q * N0 * (e - 1.0))


@dataclass(frozen=True)
class Trajectory:
    t: np.ndarray
    v: np.ndarray  # (len(t), 2 l_c + 1) real chart

    @property
    def N(self) -> np.ndarray:
        return np.sum(self.v**2, axis=1)

    def state(self, i: int) -> ReducedState:
        return ReducedState.from_real(self.v[i], float(self.t[i]))

    def write_csv(self, stream) -> None:
        l_c = (self.v.shape[1] - 1) // 2
        cols = ["t", "x0"]
        for m in range(1, l_c + 1):
            cols += [f"y{m}", f"z{m}"]
        writer = csv.writer(stream, lineterminator="\r\n")
        writer.writerow(cols + ["N"])
        for t, v, n in zip(self.t, self.v, self.N):
            writer.writerow([f"{t:.17g}"] + [f"{c:.17g}" for c in v] + [f"{n:.17g}"])


def integrate(
    model: ReducedModel,
    s0: ReducedState,
    t_end: float,
    rtol: float = 1e-9,
    atol: float = 1e-12,
    t_eval=None,
    first_step: float | None = None,
) -> Trajectory:
    """Integrate the reduced field with adaptive Dormand-Prince 5(4) steps.

    Only the independent real coordinates are evolved, so the reality
    constraint holds exactly along the trajectory.
    """
    if not model.q > 0:
        raise ValueError("integration requires q > 0")
    if s0.l_c != model.l_c:
        raise ValueError(f"state has l_c={s0.l_c}, model has l_c={model.l_c}")
    sol = solve_ivp(
        _rhs(model.beta_plus(), model.q),
        (s0.time, s0.time + t_end),
        s0.real(),
        method="RK45",
        rtol=rtol,
        atol=atol,
        t_eval=t_eval,
        first_step=first_step,
    )
    if sol.status != 0:
        raise IntegrationError(sol.message)
    return Trajectory(sol.t, sol.y.T.copy())


def rotate(s: ReducedState, angle: float) -> ReducedState:
    """Phase rotation ``x_m → e^{imφ} x_m`` (rotation about the polar axis)."""
    ms = np.arange(s.l_c + 1)
    return ReducedState(s.x * np.exp(1j * ms * angle), s.time)


@dataclass(frozen=True)
class AttractorEstimate:
    radius: float
    samples: list
    steady: np.ndarray
    q: float
    beta: float


def _steady(model, s) -> bool:
    f = vector_field(model, s).real()
    size = np.linalg.norm(s.real())
    return bool(np.linalg.norm(f) < 1e-10 * max(1.0, size**3))


def attractor(model: ReducedModel, n_samples: int = 64, seed: int = 0) -> AttractorEstimate:
    """Sample the bifurcated sphere ``N = β⁺/q``.

    Points come from a scrambled Halton sequence in the real chart, mapped
    through the normal quantile function and projected to the sphere.
    """
    beta = model.beta_plus()
    if not beta > 0:
        raise NoAttractorError(f"no bifurcated attractor: beta_plus={beta!r} <= 0")
    if not model.q > 0:
        raise NoAttractorError(f"no bifurcated attractor: q={model.q!r} <= 0")
    radius = sqrt(beta / model.q)
    dim = 2 * model.l_c + 1
    u = qmc.Halton(d=dim, scramble=True, seed=seed).random(n_samples)
    g = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    samples = [ReducedState.from_real(radius * p) for p in g]
    steady = np.array([_steady(model, s) for s in samples])
    return AttractorEstimate(radius, samples, steady, model.q, beta)


def reconstruct(
    model: ReducedModel,
    coeffs: CenterManifoldCoeffs | None,
    s: ReducedState,
    grid: SphereGrid,
    z=None,
) -> ShellField:
    """Physical fields ``Σ x_m Ψ⁺_m + Φ(x)`` on ``grid``.

    The result is complex-typed; for reality-constrained ``s`` its imaginary
    part is rounding noise.  ``coeffs=None`` keeps only the linear part.
    """
    if s.l_c != model.l_c or (coeffs is not None and coeffs.l_c != model.l_c):
        raise ValueError("inconsistent l_c between model, coefficients and state")
    params = model.params.with_lambda(model.lambda_c)
    x = s.full()
    n_z = grid.n_z if z is None else np.atleast_1d(z).size
    out = ShellField.zeros(grid, n_z)
    for m, xm in zip(range(-model.l_c, model.l_c + 1), x):
        if xm != 0:
            out.axpy(xm, mode_field(params, ModeIndex(Branch.PLUS, model.l_c, m, 1), grid, z))
    if coeffs is not None:
        for mode, y in coeffs.evaluate(x).items():
            if y != 0:
                out.axpy(y, mode_field(params, mode, grid, z))
    return out
