"""Linear spectrum of the shell Boussinesq operator.

Eigenvalues are closed-form: every eigenmode separates into a spherical
harmonic ``Y_lm`` times a ``sin``/``cos`` profile in ``z``.  Three families
exist (toroidal, pure thermal, and the coupled ``plus``/``minus`` pair); with
turbulent friction ``(σ₀, σ₁)`` the coupled pair solves
``β² + Dβ + Pr·E = 0``.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from math import pi, sqrt

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .harmonics import SphereGrid, ylm_jet

__all__ = [
    "Branch",
    "PhysicalParams",
    "ModeIndex",
    "EigenPair",
    "CriticalPoint",
    "DegenerateCriticalPoint",
    "PESReport",
    "FrictionPattern",
    "alpha_sq",
    "gamma_sq",
    "eigenvalue",
    "eigenfunction",
    "critical_objective",
    "critical_rayleigh",
    "degenerate_aspect_ratio",
    "pes_check",
    "friction_ratio_for_pattern",
    "scan_spectrum",
    "write_spectrum_csv",
]


class Branch(str, enum.Enum):
    TOROIDAL = "toroidal"
    THERMAL = "thermal"
    PLUS = "plus"
    MINUS = "minus"


class DegenerateCriticalPoint(ArithmeticError):
    """The critical Rayleigh number is attained at two consecutive degrees."""


@dataclass(frozen=True)
class PhysicalParams:
    """Nondimensional control parameters.

    ``lam`` is ``√R``; ``r`` is the aspect ratio ``a/h``; ``sigma0`` and
    ``sigma1`` are the horizontal and vertical friction coefficients.
    """

    Pr: float = 1.0
    lam: float = 0.0
    r: float = 2.0 / pi
    sigma0: float = 0.0
    sigma1: float = 0.0

    def __post_init__(self):
        if not self.Pr > 0:
            raise ValueError(f"Prandtl number must be positive, got {self.Pr}")
        if not self.r > 0:
            raise ValueError(f"aspect ratio must be positive, got {self.r}")
        if self.lam < 0 or self.sigma0 < 0 or self.sigma1 < 0:
            raise ValueError("lambda and friction coefficients must be non-negative")

    @property
    def R(self) -> float:
        return self.lam**2

    @property
    def friction(self) -> bool:
        return (self.sigma0, self.sigma1) != (0.0, 0.0)

    def with_lambda(self, lam: float) -> "PhysicalParams":
        return PhysicalParams(self.Pr, lam, self.r, self.sigma0, self.sigma1)


@dataclass(frozen=True)
class ModeIndex:
    branch: Branch
    l: int
    m: int = 0
    n: int = 1

    def __post_init__(self):
        object.__setattr__(self, "branch", Branch(self.branch))
        b, l, m, n = self.branch, self.l, self.m, self.n
        ok = abs(m) <= l
        if b is Branch.TOROIDAL:
            ok = ok and n == 0 and l >= 1
        elif b is Branch.THERMAL:
            ok = ok and l == 0 and n >= 1
        else:
            ok = ok and l >= 1 and n >= 1
        if not ok:
            raise ValueError(f"invalid mode index {b.value}(l={l}, m={m}, n={n})")

    def __str__(self):
        return f"{self.branch.value}({self.l},{self.m},{self.n})"


@dataclass(frozen=True)
class EigenPair:
    index: ModeIndex
    beta: float
    alpha_sq: float
    gamma_sq: float
    b: float | None = None


def alpha_sq(l, r):
    """Horizontal wavenumber squared ``l(l+1)/r²``."""
    return l * (l + 1.0) / r**2


def gamma_sq(l, n, r):
    return n * n * pi**2 + alpha_sq(l, r)


def _coupled_roots(params: PhysicalParams, l, n):
    """``(β⁺, β⁻)`` of the coupled velocity-temperature pair (vectorized)."""
    Pr, lam = params.Pr, params.lam
    a2 = alpha_sq(l, params.r)
    g2 = n * n * pi**2 + a2
    s = params.sigma1 * a2 + params.sigma0 * n * n * pi**2
    D = g2 * (1.0 + Pr) + Pr * s / g2
    # discriminant written as a sum of squares so it never goes negative
    disc = (g2 * (1.0 - Pr) - Pr * s / g2) ** 2 + 4.0 * Pr * lam**2 * a2 / g2
    minus = -0.5 * (D + np.sqrt(disc))
    E = g2 * g2 - lam**2 * a2 / g2 + s
    # product of the roots is Pr·E; avoids cancellation in β⁺ near criticality
    plus = Pr * E / minus
    return plus, minus


def _coupled_coefficients(params: PhysicalParams, l, n):
    """``(D, E)`` with ``β² + Dβ + Pr·E = 0``."""
    a2 = alpha_sq(l, params.r)
    g2 = n * n * pi**2 + a2
    s = params.sigma1 * a2 + params.sigma0 * n * n * pi**2
    D = g2 * (1.0 + params.Pr) + params.Pr * s / g2
    E = g2 * g2 - params.lam**2 * a2 / g2 + s
    return D, E


def eigenvalue(params: PhysicalParams, idx: ModeIndex) -> EigenPair:
    """Closed-form eigenpair data for one mode."""
    l, n = idx.l, idx.n
    a2 = alpha_sq(l, params.r)
    g2 = n * n * pi**2 + a2
    if idx.branch is Branch.TOROIDAL:
        return EigenPair(idx, -params.Pr * (a2 + params.sigma0), a2, g2)
    if idx.branch is Branch.THERMAL:
        return EigenPair(idx, -(n * n) * pi**2, a2, g2)
    plus, minus = _coupled_roots(params, l, n)
    beta = float(plus if idx.branch is Branch.PLUS else minus)
    b = _temperature_amplitude(params, a2, g2, idx.branch is Branch.PLUS)
    return EigenPair(idx, beta, a2, g2, b)


def _temperature_amplitude(params, a2, g2, plus: bool):
    """``b = λα²/(β+γ²)`` without cancellation in ``β + γ²``.

    ``β± + γ² = (c ± √disc)/2`` with ``c = γ²(1-Pr) - Pr·s/γ²`` and
    ``disc = c² + 4Pr·λ²α²/γ²``.  One of the two cancels; it is recovered
    from the product ``-Pr·λ²α²/γ²``.  At ``λ = 0`` that root's eigenvector
    is purely thermal and ``b`` is reported as ``inf``.
    """
    Pr, lam = params.Pr, params.lam
    s = params.sigma1 * a2 + params.sigma0 * (g2 - a2)
    c = g2 * (1.0 - Pr) - Pr * s / g2
    sq = math.hypot(c, 2.0 * lam * math.sqrt(Pr * a2 / g2))
    if c == 0 and lam != 0:
        # β± + γ² = ±λ√(Pr α²/γ²) exactly
        return (1.0 if plus else -1.0) * math.sqrt(a2 * g2 / Pr)
    # the sum with matching signs is free of cancellation
    stable_is_plus = c >= 0
    if plus == stable_is_plus:
        d = 0.5 * (c + sq) if plus else 0.5 * (c - sq)
        return lam * a2 / d if lam != 0 else 0.0
    if lam == 0:
        return math.inf
    d_stable = 0.5 * (c - sq) if plus else 0.5 * (c + sq)
    return -g2 * d_stable / (Pr * lam)


def eigenfunction(params: PhysicalParams, idx: ModeIndex, grid: SphereGrid):
    """Sample the eigenmode ``(u, w, T)`` on the shell grid.

    Returns ``u`` of shape ``(2, n_z, n_theta, n_phi)`` and ``w``, ``T`` of
    shape ``(n_z, n_theta, n_phi)``.
    """
    from .fields import mode_field  # local: fields depends on this module

    f = mode_field(params, idx, grid)
    return f.u, f.w, f.T


# ---------------------------------------------------------------------------
# critical Rayleigh number
# ---------------------------------------------------------------------------


def critical_objective(l, r, sigma0=0.0, sigma1=0.0, n=1):
    """``λ`` at which ``β⁺_{ln}`` vanishes, ``sqrt(γ²(γ⁴ + σ₁α² + σ₀n²π²)/α²)``."""
    a2 = alpha_sq(np.asarray(l, dtype=float), r)
    g2 = n * n * pi**2 + a2
    return np.sqrt(g2 * (g2 * g2 + sigma1 * a2 + sigma0 * n * n * pi**2) / a2)


@dataclass(frozen=True)
class CriticalPoint:
    lambda_c: float
    l_c: int
    degenerate: bool
    r: float
    sigma0: float = 0.0
    sigma1: float = 0.0
    l_scan: int = 0
    objective: tuple = field(default=(), repr=False)

    @property
    def R_c(self) -> float:
        return self.lambda_c**2


def critical_rayleigh(
    r: float,
    sigma0: float = 0.0,
    sigma1: float = 0.0,
    l_scan: int | None = None,
    degeneracy_rtol: float = 1e-9,
) -> CriticalPoint:
    """Minimize the neutral curve over integer degrees ``l ≥ 1`` (``n = 1``).

    The objective is convex in ``α² = l(l+1)/r²``, so once it increases
    between two consecutive degrees it increases for every larger degree;
    the scan is extended until that happens.
    """
    if not r > 0:
        raise ValueError("aspect ratio must be positive")
    if l_scan is None:
        l_scan = 10 * math.ceil(r) + 20
    l_scan = max(int(l_scan), 2)
    while True:
        ls = np.arange(1, l_scan + 1)
        obj = critical_objective(ls, r, sigma0, sigma1)
        if obj[-1] > obj[-2]:
            break
        l_scan *= 2
    i = int(np.argmin(obj))
    l_c = i + 1
    degenerate = False
    for j in (i - 1, i + 1):
        if 0 <= j < obj.size and abs(obj[j] - obj[i]) <= degeneracy_rtol * obj[i]:
            degenerate = True
    return CriticalPoint(
        lambda_c=float(obj[i]),
        l_c=l_c,
        degenerate=degenerate,
        r=r,
        sigma0=sigma0,
        sigma1=sigma1,
        l_scan=l_scan,
        objective=tuple(float(v) for v in obj[: min(obj.size, 4 * l_c + 8)]),
    )


def degenerate_aspect_ratio(l: int, sigma0: float = 0.0, sigma1: float = 0.0) -> float:
    """Aspect ratio at which degrees ``l`` and ``l + 1`` share the minimum."""

    def gap(r):
        return critical_objective(l, r, sigma0, sigma1) - critical_objective(
            l + 1, r, sigma0, sigma1
        )

    # l is optimal for small r, l + 1 for larger r; bracket between their optima
    lo = sqrt(l * (l + 1.0) * 2.0) / pi * 0.5
    hi = sqrt((l + 1.0) * (l + 2.0) * 2.0) / pi * 2.0
    if sigma0 or sigma1:
        lo, hi = lo * 1e-3, hi * 1e6
    return brentq(gap, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


# ---------------------------------------------------------------------------
# principle of exchange of stability
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PESReport:
    lam: float
    critical: CriticalPoint
    beta_critical: float
    zero_modes: list
    multiplicity: int
    max_other: float
    argmax_other: ModeIndex
    tail_gamma_sq: float
    tail_certified: bool
    l_max: int
    n_max: int

    @property
    def holds(self) -> bool:
        return self.tail_certified and self.max_other < 0


def pes_check(
    params: PhysicalParams,
    l_max: int = 20,
    n_max: int = 10,
    zero_tol: float = 1e-10,
) -> PESReport:
    """Check the sign pattern of the spectrum at ``params.lam``.

    Every eigenvalue with ``l ≤ l_max`` and ``n ≤ n_max`` is evaluated.  The
    remaining modes are covered analytically: toroidal, thermal and ``minus``
    eigenvalues are negative in closed form, and ``β⁺`` has the sign of
    ``-E``, where ``E ≥ γ⁴ - λ²α²/γ² > γ⁴ - λ²`` because ``α² ≤ γ²``.  Outside
    the scanned box ``γ²`` exceeds ``tail_gamma_sq``, so ``λ < tail_gamma_sq``
    certifies the tail.
    """
    crit = critical_rayleigh(params.r, params.sigma0, params.sigma1)
    if crit.degenerate:
        raise DegenerateCriticalPoint(
            f"minimum of the neutral curve shared by l={crit.l_c} and a neighbour "
            f"(lambda_c={crit.lambda_c!r})"
        )
    if l_max < crit.l_c:
        raise ValueError("scan must include the critical degree")
    modes = []
    for l in range(1, l_max + 1):
        modes.append((ModeIndex(Branch.TOROIDAL, l, 0, 0), 2 * l + 1))
        for n in range(1, n_max + 1):
            modes.append((ModeIndex(Branch.PLUS, l, 0, n), 2 * l + 1))
            modes.append((ModeIndex(Branch.MINUS, l, 0, n), 2 * l + 1))
    for n in range(1, n_max + 1):
        modes.append((ModeIndex(Branch.THERMAL, 0, 0, n), 1))

    zero_modes = []
    multiplicity = 0
    max_other, argmax = -np.inf, None
    for idx, mult in modes:
        beta = eigenvalue(params, idx).beta
        if abs(beta) <= zero_tol:
            zero_modes.append((idx, beta, mult))
            multiplicity += mult
        elif beta > max_other:
            max_other, argmax = beta, idx
    tail = min(alpha_sq(l_max + 1, params.r), (n_max + 1) ** 2 * pi**2)
    beta_c = eigenvalue(params, ModeIndex(Branch.PLUS, crit.l_c, 0, 1)).beta
    return PESReport(
        lam=params.lam,
        critical=crit,
        beta_critical=beta_c,
        zero_modes=zero_modes,
        multiplicity=multiplicity,
        max_other=float(max_other),
        argmax_other=argmax,
        tail_gamma_sq=float(tail),
        tail_certified=bool(params.lam < tail),
        l_max=l_max,
        n_max=n_max,
    )


# ---------------------------------------------------------------------------
# turbulent friction and pattern selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FrictionPattern:
    ratio: float
    l_c: int
    aspect: float
    l_c_exact: int
    consistent: bool
    sigma0: float
    selecting_ratios: tuple[float, float]


def _selected_degree(r, ratio, sigma0):
    return critical_rayleigh(r, sigma0, sigma0 / ratio).l_c


def friction_ratio_for_pattern(
    a: float, h: float, l_c: int, sigma0: float = 1e4
) -> FrictionPattern:
    """Friction ratio ``σ₀/σ₁`` that selects pattern degree ``l_c``.

    ``ratio`` inverts the asymptotic law
    ``(h/a)² l_c(l_c+1) = (π²/2) (σ₀/σ₁)^{1/2}``.  The exact neutral-curve
    minimization is then run at that ratio (with the given ``sigma0``) and
    its degree reported as ``l_c_exact``; ``selecting_ratios`` is the
    interval of ratios for which the exact minimization returns ``l_c``.
    """
    if l_c < 1:
        raise ValueError("pattern degree must be at least 1")
    if not 0 < h < a:
        raise ValueError("require 0 < h < a")
    aspect = a / h
    x = alpha_sq(l_c, aspect)
    ratio = (2.0 * x / pi**2) ** 2
    exact = _selected_degree(aspect, ratio, sigma0)
    return FrictionPattern(
        ratio=ratio,
        l_c=l_c,
        aspect=aspect,
        l_c_exact=exact,
        consistent=exact == l_c,
        sigma0=sigma0,
        selecting_ratios=_selecting_interval(aspect, l_c, sigma0),
    )


def _selecting_interval(r, l_c, sigma0):
    """Ratios ``σ₀/σ₁`` for which ``l_c`` minimizes the friction neutral curve.

    The boundaries are where degree ``l_c`` ties with ``l_c ± 1``; the
    selected degree decreases monotonically as the ratio shrinks.
    """

    def tie(log_ratio, other):
        s1 = sigma0 / math.exp(log_ratio)
        return critical_objective(l_c, r, sigma0, s1) - critical_objective(
            other, r, sigma0, s1
        )

    def boundary(other):
        lo, hi = -80.0, 10.0
        try:
            return math.exp(brentq(tie, lo, hi, args=(other,), xtol=1e-13))
        except ValueError:
            return 0.0 if other < l_c else math.inf

    low = boundary(l_c - 1) if l_c > 1 else 0.0
    return (low, boundary(l_c + 1))


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------


def scan_spectrum(params: PhysicalParams, l_range, n_range, m_all: bool = False):
    """Eigenpairs over ``l ∈ l_range``, ``n ∈ n_range`` for every branch.

    With ``m_all`` every order ``|m| ≤ l`` gets its own row; otherwise only
    ``m = 0`` is listed (eigenvalues do not depend on ``m``).
    """
    rows = []
    l_range, n_range = list(l_range), list(n_range)
    for l in l_range:
        ms = range(-l, l + 1) if m_all else (0,)
        for m in ms:
            if l >= 1:
                rows.append(eigenvalue(params, ModeIndex(Branch.TOROIDAL, l, m, 0)))
            for n in n_range:
                if n < 1:
                    continue
                if l == 0:
                    rows.append(eigenvalue(params, ModeIndex(Branch.THERMAL, 0, 0, n)))
                else:
                    rows.append(eigenvalue(params, ModeIndex(Branch.PLUS, l, m, n)))
                    rows.append(eigenvalue(params, ModeIndex(Branch.MINUS, l, m, n)))
    return rows


def write_spectrum_csv(rows, stream) -> None:
    writer = csv.writer(stream, lineterminator="\r\n")
    writer.writerow(["branch", "l", "m", "n", "beta", "b"])
    for p in rows:
        i = p.index
        writer.writerow(
            [i.branch.value, i.l, i.m, i.n, f"{p.beta:.17g}",
             "" if p.b is None else f"{p.b:.17g}"]
        )
