"""Center-manifold reduction onto the critical modes ``Ψ⁺_{l_c m 1}``.

All couplings are obtained by Galerkin projection: the quadratic
nonlinearity of pairs of sampled eigenfields is integrated against test
eigenfields on a :class:`~shell_benard.harmonics.SphereGrid`.  The Leray
projection is never formed; every test field is divergence-free and has
``w = 0`` at the walls, so it drops out of the inner products.

The center manifold is frozen at ``λ = λ_c`` and the reduced field is

    dx_m/dt = β⁺(λ) x_m + ⟨G(X, Φ(x)) + G(Φ(x), X), Ψ⁺_m⟩ / ‖Ψ⁺_m‖²,

whose cubic part must collapse to ``-q x_m I(x)`` with
``I(x) = Σ_m (-1)^m x_m x_{-m}``.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import pi, sqrt

import numpy as np

from .fields import inner, mode_field, nonlinear_form
from .harmonics import SphereGrid
from .spectrum import (
    Branch,
    DegenerateCriticalPoint,
    ModeIndex,
    PhysicalParams,
    critical_rayleigh,
    eigenvalue,
)

__all__ = [
    "StructuralError",
    "CenterManifoldCoeffs",
    "ReducedModel",
    "default_grid",
    "stable_modes",
    "GalerkinReduction",
    "cm_coefficients",
    "reduced_model",
    "invariant_quadratic",
    "closed_form_coefficients",
    "closed_form_table",
    "compare_tables",
]


class StructuralError(ArithmeticError):
    """The projected cubic field is not of the isotropic form ``-q x_m I(x)``."""


def _threads() -> int:
    value = os.environ.get("SHELL_BENARD_THREADS")
    if value:
        return max(1, int(value))
    return min(8, os.cpu_count() or 1)


def _map(fn, items):
    items = list(items)
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def default_grid(l_c: int, r: float, n_z: int = 17) -> SphereGrid:
    """Resolution rule ``L_max = 3 l_c + 2``, 17 vertical Gauss nodes."""
    return SphereGrid.for_degree(3 * l_c + 2, r, n_z)


def stable_modes(l_c: int, n_values=(0, 2)) -> list[ModeIndex]:
    """Stable modes that can be forced by products of two critical modes."""
    modes = [ModeIndex(Branch.THERMAL, 0, 0, n) for n in n_values if n >= 1]
    for l in range(1, 2 * l_c + 1):
        for m in range(-l, l + 1):
            for n in n_values:
                if n == 0:
                    modes.append(ModeIndex(Branch.TOROIDAL, l, m, 0))
                elif (l, n) != (l_c, 1):
                    modes.append(ModeIndex(Branch.PLUS, l, m, n))
                    modes.append(ModeIndex(Branch.MINUS, l, m, n))
    return modes


def invariant_quadratic(x, l_c: int):
    """``I(x) = Σ_m (-1)^m x_m x_{-m}``; ``x`` is indexed ``m = -l_c..l_c``."""
    x = np.asarray(x)
    ms = np.arange(-l_c, l_c + 1)
    return np.sum((-1.0) ** ms * x * x[::-1], axis=-1)


def _monomial_key(p: int, q: int) -> str:
    return f"x[{p}]*x[{q}]"


def _parse_monomial(key: str) -> tuple[int, int]:
    a, b = key.split("*")
    return int(a[2:-1]), int(b[2:-1])


def _parse_mode(key: str) -> ModeIndex:
    branch, rest = key.split("(")
    l, m, n = (int(v) for v in rest.rstrip(")").split(","))
    return ModeIndex(Branch(branch), l, m, n)


@dataclass
class CenterManifoldCoeffs:
    """Quadratic center-manifold amplitudes ``y_j(x) = Σ_{p≤q} c_{pq} x_p x_q``.

    ``forms`` maps each stable :class:`ModeIndex` to ``{(p, q): c}`` with
    ``p ≤ q``; absent pairs are zero.
    """

    l_c: int
    lambda_c: float
    forms: dict = field(default_factory=dict)

    def evaluate(self, x) -> dict:
        """``{mode: y(x)}`` for amplitudes ``x`` indexed ``m = -l_c..l_c``."""
        x = np.asarray(x)
        off = self.l_c
        return {
            mode: sum(c * x[p + off] * x[q + off] for (p, q), c in form.items())
            for mode, form in self.forms.items()
        }

    def nonzero(self, atol: float = 1e-10) -> "CenterManifoldCoeffs":
        """Copy without modes whose coefficients all fall below ``atol``."""
        forms = {}
        for mode, form in self.forms.items():
            kept = {k: c for k, c in form.items() if abs(c) > atol}
            if kept:
                forms[mode] = kept
        return CenterManifoldCoeffs(self.l_c, self.lambda_c, forms)

    def to_json(self, atol: float = 0.0) -> str:
        data = {
            str(mode): {
                _monomial_key(p, q): [float(np.real(c)), float(np.imag(c))]
                for (p, q), c in sorted(form.items())
                if abs(c) > atol
            }
            for mode, form in self.forms.items()
        }
        data = {k: v for k, v in data.items() if v}
        return json.dumps(
            {"l_c": self.l_c, "lambda_c": self.lambda_c, "coefficients": data},
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "CenterManifoldCoeffs":
        data = json.loads(text)
        forms = {
            _parse_mode(mode): {
                _parse_monomial(k): complex(re, im) for k, (re, im) in form.items()
            }
            for mode, form in data["coefficients"].items()
        }
        return cls(int(data["l_c"]), float(data["lambda_c"]), forms)


@dataclass(frozen=True)
class ReducedModel:
    """Cubic amplitude equations ``dx_m/dt = β⁺ x_m - q x_m I(x)``."""

    l_c: int
    params: PhysicalParams
    lambda_c: float
    q: float
    isotropy_residual: float = 0.0
    closed_form_q: float | None = None

    def beta_plus(self, lam: float | None = None) -> float:
        """Growth rate ``β⁺_{l_c,1}`` at ``lam`` (default: the model's λ)."""
        p = self.params if lam is None else self.params.with_lambda(lam)
        return eigenvalue(p, ModeIndex(Branch.PLUS, self.l_c, 0, 1)).beta

    def with_rates(self, beta: float, q: float | None = None) -> "ReducedModel":
        """Copy whose growth rate is pinned to ``beta`` (for experiments)."""
        return _PinnedModel(
            self.l_c, self.params, self.lambda_c,
            self.q if q is None else q, self.isotropy_residual,
            self.closed_form_q, beta,
        )

    @property
    def validation(self) -> str:
        if self.closed_form_q is None:
            return "unvalidated (no published closed form)"
        rel = abs(self.q - self.closed_form_q) / abs(self.closed_form_q)
        return "PASS" if rel <= 1e-6 else f"FAIL (relative error {rel:.3e})"


@dataclass(frozen=True)
class _PinnedModel(ReducedModel):
    pinned_beta: float = 0.0

    def beta_plus(self, lam: float | None = None) -> float:
        return self.pinned_beta


class GalerkinReduction:
    """Projection tables for one critical point.

    Parameters
    ----------
    params : PhysicalParams
        Physical parameters; ``lam`` is ignored (everything is frozen at
        ``λ_c``).
    l_c : int, optional
        Critical degree; must agree with the neutral-curve minimum.
    grid : SphereGrid, optional
        Quadrature grid; defaults to :func:`default_grid`.
    modes : list of ModeIndex, optional
        Stable modes to project on; defaults to :func:`stable_modes`.
    """

    def __init__(self, params: PhysicalParams, l_c=None, grid=None, modes=None):
        crit = critical_rayleigh(params.r, params.sigma0, params.sigma1)
        if crit.degenerate:
            raise DegenerateCriticalPoint(
                f"degenerate critical point at r={params.r!r}: l={crit.l_c} ties a neighbour"
            )
        if l_c is not None and l_c != crit.l_c:
            raise ValueError(f"requested l_c={l_c} but the neutral curve selects {crit.l_c}")
        self.l_c = l_c = crit.l_c
        self.critical = crit
        self.params = params.with_lambda(crit.lambda_c)
        self.grid = grid if grid is not None else default_grid(l_c, params.r)
        self.critical_modes = [ModeIndex(Branch.PLUS, l_c, m, 1) for m in range(-l_c, l_c + 1)]
        self.modes = list(modes) if modes is not None else stable_modes(l_c)

        p, g = self.params, self.grid
        self.betas = np.array([eigenvalue(p, i).beta for i in self.modes])
        if np.any(np.abs(self.betas) < 1e-10):
            bad = [str(i) for i, b in zip(self.modes, self.betas) if abs(b) < 1e-10]
            raise DegenerateCriticalPoint(f"stable modes with vanishing eigenvalue: {bad}")
        self._crit_fields = [mode_field(p, i, g) for i in self.critical_modes]
        self._crit_norms = np.array([inner(f, f, g).real for f in self._crit_fields])
        self._stable_norms = None
        self._forcing = None
        self._feedback = None

    @property
    def size(self) -> int:
        return 2 * self.l_c + 1

    def _stable_field(self, j):
        return mode_field(self.params, self.modes[j], self.grid)

    def forcing(self) -> np.ndarray:
        """``F[p, q, j] = ⟨G(Ψ⁺_p, Ψ⁺_q), Ψ_j⟩`` with ``G`` symmetrized."""
        if self._forcing is None:
            k, g = self.size, self.grid
            pairs = [(a, b) for a in range(k) for b in range(a, k)]
            forms = {
                ab: nonlinear_form(self._crit_fields[ab[0]], self._crit_fields[ab[1]], g)
                for ab in pairs
            }

            def column(j):
                s = self._stable_field(j)
                col = np.zeros((k, k), dtype=complex)
                for (a, b), gab in forms.items():
                    col[a, b] = col[b, a] = inner(gab, s, g)
                return col, inner(s, s, g).real

            cols = _map(column, range(len(self.modes)))
            self._forcing = np.stack([c for c, _ in cols], axis=-1)
            self._stable_norms = np.array([n for _, n in cols])
        return self._forcing

    @property
    def stable_norms(self) -> np.ndarray:
        self.forcing()
        return self._stable_norms

    def feedback(self) -> np.ndarray:
        """``K[p, j, m] = ⟨G(Ψ⁺_p, Ψ_j) + G(Ψ_j, Ψ⁺_p), Ψ⁺_m⟩``."""
        if self._feedback is None:
            k, g = self.size, self.grid
            active = np.flatnonzero(np.max(np.abs(self.forcing()), axis=(0, 1)) > 0)

            def block(j):
                s = self._stable_field(j)
                out = np.zeros((k, k), dtype=complex)
                if j not in active_set:
                    return out
                for a in range(k):
                    gas = nonlinear_form(self._crit_fields[a], s, g)
                    for m in range(k):
                        out[a, m] = 2.0 * inner(gas, self._crit_fields[m], g)
                return out

            # modes with no quadratic forcing cannot feed back at cubic order
            scale = np.max(np.abs(self.forcing()))
            active_set = set(
                int(j) for j in active
                if np.max(np.abs(self.forcing()[:, :, j])) > 1e-13 * scale
            )
            self._feedback = np.stack(_map(block, range(len(self.modes))), axis=1)
        return self._feedback

    def critical_self_forcing(self) -> np.ndarray:
        """``⟨G(Ψ⁺_p, Ψ⁺_q), Ψ⁺_m⟩``; vanishes by vertical parity."""
        k, g = self.size, self.grid
        out = np.zeros((k, k, k), dtype=complex)
        for a in range(k):
            for b in range(a, k):
                gab = nonlinear_form(self._crit_fields[a], self._crit_fields[b], g)
                for m in range(k):
                    out[a, b, m] = out[b, a, m] = inner(gab, self._crit_fields[m], g)
        return out

    def coefficients(self) -> CenterManifoldCoeffs:
        F = self.forcing()
        scale = -1.0 / (self.betas * self.stable_norms)
        k, off = self.size, self.l_c
        forms = {}
        for j, mode in enumerate(self.modes):
            form = {}
            for a in range(k):
                for b in range(a, k):
                    c = F[a, b, j] * scale[j] * (1.0 if a == b else 2.0)
                    form[(a - off, b - off)] = complex(c)
            forms[mode] = form
        return CenterManifoldCoeffs(self.l_c, self.critical.lambda_c, forms)

    def cubic_field(self, x) -> np.ndarray:
        """Cubic part of the reduced vector field at amplitudes ``x``."""
        x = np.asarray(x, dtype=complex)
        F, K = self.forcing(), self.feedback()
        y = -np.einsum("p,q,pqj->j", x, x, F) / (self.betas * self.stable_norms)
        return np.einsum("j,p,pjm->m", y, x, K) / self._crit_norms

    def fit_q(self, samples: int = 8, seed: int = 0) -> tuple[float, float]:
        """Least-squares ``q`` in ``cubic = -q x_m I(x)`` and the relative residual."""
        rng = np.random.default_rng(seed)
        num, den, res, tot = 0.0, 0.0, [], []
        xs = [random_reality_state(self.l_c, rng) for _ in range(samples)]
        fits = []
        for x in xs:
            f = self.cubic_field(x)
            basis = -x * invariant_quadratic(x, self.l_c)
            num += np.vdot(basis, f).real
            den += np.vdot(basis, basis).real
            fits.append((f, basis))
        q = num / den
        for f, basis in fits:
            res.append(np.linalg.norm(f - q * basis))
            tot.append(np.linalg.norm(f))
        return float(q), float(max(res) / max(tot))


def random_reality_state(l_c: int, rng) -> np.ndarray:
    """Random ``x`` with ``x_{-m} = (-1)^m conj(x_m)``, indexed ``m = -l_c..l_c``."""
    x = np.zeros(2 * l_c + 1, dtype=complex)
    x[l_c] = rng.normal()
    for m in range(1, l_c + 1):
        v = rng.normal() + 1j * rng.normal()
        x[l_c + m] = v
        x[l_c - m] = (-1) ** m * np.conj(v)
    return x


def cm_coefficients(params: PhysicalParams, l_c=None, grid=None) -> CenterManifoldCoeffs:
    """Quadratic center-manifold coefficients, frozen at ``λ_c``."""
    _check_lambda(params)
    return GalerkinReduction(params, l_c, grid).coefficients()


def _check_lambda(params: PhysicalParams) -> None:
    crit = critical_rayleigh(params.r, params.sigma0, params.sigma1)
    if params.lam > 1.1 * crit.lambda_c:
        raise ValueError(
            f"lambda={params.lam!r} is outside the reduction's range "
            f"[0, 1.1*lambda_c={1.1 * crit.lambda_c!r}]"
        )


def reduced_model(
    params: PhysicalParams,
    l_c=None,
    grid=None,
    isotropy_tol: float = 1e-8,
    reduction: GalerkinReduction | None = None,
) -> ReducedModel:
    """Galerkin-projected cubic amplitude equations.

    ``q`` is the least-squares isotropic fit of the cubic field.  For
    ``l_c ≥ 3`` the cubic field is not isotropic in general; the fit and its
    residual are still returned and ``validation`` flags the model.

    Raises
    ------
    StructuralError
        If ``l_c ∈ {1, 2}`` and the cubic field deviates from the isotropic
        form by more than ``isotropy_tol`` (relative).
    """
    red = reduction if reduction is not None else GalerkinReduction(params, l_c, grid)
    q, residual = red.fit_q()
    if red.l_c <= 2 and residual > isotropy_tol:
        raise StructuralError(
            f"cubic field is not isotropic: relative residual {residual:.3e}"
        )
    closed = None
    if not params.friction:
        try:
            closed = closed_form_coefficients(params.Pr, red.l_c)["q"]
        except (ValueError, KeyError):
            closed = None
    return ReducedModel(
        l_c=red.l_c,
        params=params,
        lambda_c=red.critical.lambda_c,
        q=q,
        isotropy_residual=residual,
        closed_form_q=closed,
    )


# ---------------------------------------------------------------------------
# published closed forms
# ---------------------------------------------------------------------------


def closed_form_coefficients(Pr: float, l_c: int) -> dict:
    """Printed closed-form constants for ``l_c = 1`` (any Pr) and ``l_c = 2``.

    ``q`` is included for ``l_c = 1`` at every Pr and for ``l_c = 2`` only at
    ``Pr = 1``.  ``y002`` is the printed prefactor of ``I(x)`` in the thermal
    coefficient.
    """
    s5 = pi**2.5
    if l_c == 1:
        A = sqrt(11.0) * sqrt(1331.0 - 2338.0 * Pr + 1331.0 * Pr**2)
        d1p = (3.0 * sqrt(3.0 / 10.0) * s5 * (121 - 121 * Pr + A) * (187 - 121 * Pr + A)
               / (1936.0 * (-1493 - 1331 * Pr**2 - 11 * A + Pr * (2500 + 11 * A))))
        d1m = (-3.0 * sqrt(3.0 / 10.0) * s5 * (-121 + 121 * Pr + A) * (-187 + 121 * Pr + A)
               / (1936.0 * (1493 + 1331 * Pr**2 - 11 * A + Pr * (-2500 + 11 * A))))
        q1 = (3.0 * pi**3 * (17787 + 355912 * Pr - 669713 * Pr**2 + 387787 * Pr**3)
              / (400000.0 * Pr * (353 - 625 * Pr + 353 * Pr**2)))
        return {
            "A": A,
            "d1+": d1p,
            "d1-": d1m,
            "beta22+": pi**2 / 44.0 * (-121 - 121 * Pr + A),
            "beta22-": -pi**2 / 44.0 * (121 + 121 * Pr + A),
            "y002": -sqrt(3.0) * pi**2 / 64.0,
            "q": q1,
        }
    if l_c == 2:
        B = sqrt(81.0 - 150.0 * Pr + 81.0 * Pr**2)
        C = sqrt(4913.0 - 8611.0 * Pr + 4913.0 * Pr**2)
        s17 = sqrt(17.0)
        c1p = (sqrt(5.0) * s5 * (9 - 9 * Pr + B) * (15 - 9 * Pr + B)
               / (672.0 * (-29 - 27 * Pr**2 - 3 * B + Pr * (52 + 3 * B))))
        c1m = (-sqrt(5.0) * s5 * (-9 + 9 * Pr + B) * (-15 + 9 * Pr + B)
               / (672.0 * (29 + 27 * Pr**2 - 3 * B + Pr * (-52 + 3 * B))))
        kp = 289 - 289 * Pr + s17 * C
        km = -289 + 289 * Pr + s17 * C
        c2p = (3.0 * sqrt(5.0 / 14.0) * s5 * (-1 - 153.0 / kp)
               / (136.0 * (1 + 20655.0 / kp**2)))
        c2m = (3.0 * sqrt(5.0 / 14.0) * s5 * (-1 + 153.0 / km)
               / (136.0 * (1 + 20655.0 / km**2)))
        c3p = (3.0 * s5 * (442 - 289 * Pr + s17 * C) * kp
               / (16184.0 * (-11041 - 9826 * Pr**2 - 34 * s17 * C + Pr * (18437 + 34 * s17 * C))))
        c3m = (-3.0 * s5 * (-442 + 289 * Pr + s17 * C) * km
               / (16184.0 * (11041 + 9826 * Pr**2 - 34 * s17 * C + Pr * (-18437 + 34 * s17 * C))))
        out = {
            "B": B, "C": C,
            "c1+": c1p, "c1-": c1m, "c2+": c2p, "c2-": c2m, "c3+": c3p, "c3-": c3m,
            "y002": -sqrt(3.0) * pi**4 / 16.0,
        }
        if Pr == 1.0:
            out["q"] = 2291405.0 * pi**3 / 214754176.0
        return out
    raise ValueError(f"no closed form for l_c={l_c}")


def _forms_lc1():
    r2, r32 = sqrt(2.0), sqrt(1.5)
    return {
        -2: {(-1, -1): 1.0},
        -1: {(-1, 0): r2},
        0: {(0, 0): r32, (-1, 1): r32},
        1: {(0, 1): r2},
        2: {(1, 1): 1.0},
    }


def _forms_lc2():
    s2, s3, s5, s6 = sqrt(2.0), sqrt(3.0), sqrt(5.0), sqrt(6.0)
    deg2 = {  # multiplied by c1
        -2: {(-1, -1): s6, (-2, 0): -4.0},
        -1: {(-1, 0): 2.0, (-2, 1): -2.0 * s6},
        0: {(0, 0): 2.0, (-1, 1): -2.0, (-2, 2): -4.0},
        1: {(0, 1): 2.0, (-1, 2): -2.0 * s6},
        2: {(1, 1): s6, (0, 2): -4.0},
    }
    deg4 = {  # (coefficient name, form)
        -4: ("c2", {(-2, -2): 1.0}),
        -3: ("c2", {(-2, -1): s2}),
        -2: ("c3", {(-1, -1): s5 * s2, (-2, 0): s5 * s3}),
        -1: ("c3", {(-1, 0): s5 * s6, (-2, 1): s5}),
        0: ("c3", {(0, 0): 3.0, (-1, 1): 4.0, (-2, 2): 1.0}),
        1: ("c3", {(0, 1): s5 * s6, (-1, 2): s5}),
        2: ("c3", {(1, 1): s5 * s2, (0, 2): s5 * s3}),
        3: ("c2", {(1, 2): s2}),
        4: ("c2", {(2, 2): 1.0}),
    }
    return deg2, deg4


def closed_form_table(Pr: float, l_c: int, r: float | None = None) -> CenterManifoldCoeffs:
    """Printed center-manifold coefficients as a :class:`CenterManifoldCoeffs`.

    Entries are ``y_j(x) = coefficient / (-β_j) × monomial form``, with the
    eigenvalues ``β_j`` taken from the spectrum at ``λ_c``.
    """
    c = closed_form_coefficients(Pr, l_c)
    if r is None:
        r = sqrt(2.0 * l_c * (l_c + 1.0)) / pi
    crit = critical_rayleigh(r)
    params = PhysicalParams(Pr=Pr, lam=crit.lambda_c, r=r)

    def beta(branch, l):
        return eigenvalue(params, ModeIndex(branch, l, 0, 2)).beta

    forms = {ModeIndex(Branch.THERMAL, 0, 0, 2): _thermal_form(l_c, c["y002"])}
    if l_c == 1:
        for sign, branch in (("+", Branch.PLUS), ("-", Branch.MINUS)):
            k = c["d1" + sign] / -beta(branch, 2)
            for M, form in _forms_lc1().items():
                forms[ModeIndex(branch, 2, M, 2)] = {pq: k * v for pq, v in form.items()}
    else:
        deg2, deg4 = _forms_lc2()
        for sign, branch in (("+", Branch.PLUS), ("-", Branch.MINUS)):
            k2 = c["c1" + sign] / -beta(branch, 2)
            for M, form in deg2.items():
                forms[ModeIndex(branch, 2, M, 2)] = {pq: k2 * v for pq, v in form.items()}
            b4 = -beta(branch, 4)
            for M, (name, form) in deg4.items():
                k4 = c[name + sign] / b4
                forms[ModeIndex(branch, 4, M, 2)] = {pq: k4 * v for pq, v in form.items()}
    return CenterManifoldCoeffs(l_c, crit.lambda_c, forms)


def _thermal_form(l_c, prefactor):
    form = {}
    for m in range(0, l_c + 1):
        # I(x) = x0² + 2 Σ_{m>0} (-1)^m x_{-m} x_m
        form[(-m, m)] = prefactor * (1.0 if m == 0 else 2.0 * (-1) ** m)
    return form


def compare_tables(
    computed: CenterManifoldCoeffs, reference: CenterManifoldCoeffs, skip=()
) -> dict:
    """Relative errors of ``computed`` against ``reference``, per mode.

    Modes in ``reference`` are compared coefficient-by-coefficient; modes only
    in ``computed`` must vanish and are reported by their largest magnitude.
    """
    out = {}
    for mode, ref in reference.forms.items():
        if mode in skip:
            continue
        got = computed.forms.get(mode, {})
        scale = max(abs(v) for v in ref.values())
        keys = set(ref) | {k for k, v in got.items() if abs(v) > 0}
        err = max(abs(got.get(k, 0.0) - ref.get(k, 0.0)) for k in keys)
        out[str(mode)] = err / scale
    extra = 0.0
    for mode, form in computed.forms.items():
        if mode not in reference.forms and mode not in skip:
            extra = max([extra] + [abs(v) for v in form.values()])
    out["unlisted_max_abs"] = extra
    return out
