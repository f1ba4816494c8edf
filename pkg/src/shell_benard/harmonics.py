"""Spherical harmonics on S²_r and quadrature on the shell S²_r × (0, 1).

Conventions
-----------
* ``Y_lm`` is orthonormal on the *unit* sphere and carries the Condon-Shortley
  phase, so ``Y_{l,-m} = (-1)^m conj(Y_lm)``.
* Integrals over S²_r include the metric factor ``r²``; the horizontal
  operators carry the ``1/r`` and ``1/(r sinθ)`` factors.
* Colatitude nodes are Gauss-Legendre in ``cosθ`` and never touch the poles,
  so ``1/sinθ`` and ``cotθ`` are evaluated directly.

Scalar fields are arrays of shape ``(..., n_theta, n_phi)``; tangent vector
fields stack the ``(e_θ, e_φ)`` components on a leading axis of length 2.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache
from math import factorial, pi, sqrt

import numpy as np

__all__ = [
    "ResolutionError",
    "SphereGrid",
    "HarmonicIndex",
    "eval_Ylm",
    "ylm_jet",
    "analyze",
    "synthesize",
    "grad_sphere",
    "curl_sphere",
    "div_sphere",
    "laplacian_sphere",
    "potential_jet",
    "advect",
    "wigner_3j",
    "gaunt",
    "quad_sphere",
    "quad_shell",
]


class ResolutionError(ValueError):
    """A requested degree is not resolved by the grid."""


@dataclass(frozen=True)
class HarmonicIndex:
    l: int
    m: int

    def __post_init__(self):
        if self.l < 0 or abs(self.m) > self.l:
            raise ValueError(f"invalid harmonic index (l={self.l}, m={self.m})")


@dataclass(frozen=True)
class SphereGrid:
    """Tensor-product quadrature grid on S²_r × (0, 1).

    Parameters
    ----------
    n_theta : int
        Number of Gauss-Legendre nodes in ``cosθ``.
    n_phi : int
        Number of equispaced longitudes.
    n_z : int
        Number of Gauss-Legendre nodes on ``(0, 1)``.
    r : float
        Sphere radius (aspect ratio ``a/h``).
    """

    n_theta: int
    n_phi: int
    n_z: int = 17
    r: float = 1.0

    def __post_init__(self):
        if self.n_theta < 1 or self.n_phi < 1 or self.n_z < 1:
            raise ValueError("grid sizes must be positive")
        if not self.r > 0:
            raise ValueError("sphere radius must be positive")

    @classmethod
    def for_degree(cls, l_max: int, r: float, n_z: int = 17) -> "SphereGrid":
        """Smallest grid on which products of two degree-``l_max`` fields integrate exactly."""
        return cls(n_theta=l_max + 1, n_phi=2 * l_max + 1, n_z=n_z, r=r)

    @property
    def l_max(self) -> int:
        return min(self.n_theta - 1, (self.n_phi - 1) // 2)

    @cached_property
    def _gl_theta(self):
        x, w = np.polynomial.legendre.leggauss(self.n_theta)
        # north to south
        return x[::-1].copy(), w[::-1].copy()

    @property
    def cos_theta(self) -> np.ndarray:
        return self._gl_theta[0]

    @cached_property
    def theta(self) -> np.ndarray:
        return np.arccos(self.cos_theta)

    @cached_property
    def sin_theta(self) -> np.ndarray:
        return np.sqrt(1.0 - self.cos_theta**2)

    @property
    def w_theta(self) -> np.ndarray:
        return self._gl_theta[1]

    @cached_property
    def phi(self) -> np.ndarray:
        return 2.0 * pi * np.arange(self.n_phi) / self.n_phi

    @property
    def w_phi(self) -> float:
        return 2.0 * pi / self.n_phi

    @cached_property
    def _gl_z(self):
        x, w = np.polynomial.legendre.leggauss(self.n_z)
        return 0.5 * (x + 1.0), 0.5 * w

    @property
    def z(self) -> np.ndarray:
        return self._gl_z[0]

    @property
    def w_z(self) -> np.ndarray:
        return self._gl_z[1]

    @cached_property
    def area_weights(self) -> np.ndarray:
        """Weights of shape (n_theta, n_phi) summing to 4πr²."""
        w = np.outer(self.w_theta, np.full(self.n_phi, self.w_phi))
        return self.r**2 * w

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_phi)

    @property
    def shell_shape(self) -> tuple[int, int, int]:
        return (self.n_z, self.n_theta, self.n_phi)

    def _check(self, l: int) -> None:
        if l > self.l_max:
            raise ResolutionError(
                f"degree {l} exceeds grid resolution l_max={self.l_max}"
            )


# ---------------------------------------------------------------------------
# associated Legendre functions
# ---------------------------------------------------------------------------


def _legendre_table(l_max: int, x: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Orthonormal P̄_l^m(x) for 0 ≤ m ≤ l ≤ l_max, with Condon-Shortley phase.

    ``Y_lm = P̄_l^m(cosθ) e^{imφ}``.  Sectoral seeds are built by a product
    recurrence so nothing overflows at high degree.
    """
    p = np.zeros((l_max + 1, l_max + 1, x.size))
    pmm = np.full(x.size, sqrt(1.0 / (4.0 * pi)))
    for m in range(l_max + 1):
        if m > 0:
            pmm = -sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * pmm
        p[m, m] = pmm
        if m + 1 <= l_max:
            p[m + 1, m] = sqrt(2.0 * m + 3.0) * x * pmm
        for l in range(m + 2, l_max + 1):
            a = sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            p[l, m] = a * (x * p[l - 1, m] - b * p[l - 2, m])
    return p


@lru_cache(maxsize=32)
def _tables(n_theta: int, l_max: int):
    """P̄, dP̄/dθ and d²P̄/dθ² on the Gauss nodes of an ``n_theta`` grid."""
    x, _ = np.polynomial.legendre.leggauss(n_theta)
    x = x[::-1].copy()
    s = np.sqrt(1.0 - x**2)
    p = _legendre_table(l_max, x, s)
    cot = x / s
    dp = np.zeros((l_max + 1, l_max + 1, x.size))
    d2p = np.zeros_like(dp)
    for l in range(l_max + 1):
        for m in range(l + 1):
            # ∂θ Y_lm = m cotθ Y_lm + sqrt((l-m)(l+m+1)) e^{-iφ} Y_{l,m+1}
            up = p[l, m + 1] if m + 1 <= l else 0.0
            dp[l, m] = m * cot * p[l, m] + sqrt((l - m) * (l + m + 1.0)) * up
            # Legendre's equation in θ
            d2p[l, m] = -cot * dp[l, m] + (m * m / s**2 - l * (l + 1.0)) * p[l, m]
    for arr in (p, dp, d2p):
        arr.setflags(write=False)
    return p, dp, d2p


def ylm_jet(l: int, m: int, grid: SphereGrid):
    """``(Y, ∂θY, ∂²θY)`` for ``Y_lm`` sampled on ``grid``; ``∂φ = i m``."""
    grid._check(l)
    p, dp, d2p = _tables(grid.n_theta, grid.l_max)
    am = abs(m)
    phase = np.exp(1j * am * grid.phi)
    out = [np.outer(t[l, am], phase) for t in (p, dp, d2p)]
    if m < 0:
        sign = (-1) ** am
        out = [sign * np.conj(f) for f in out]
    return tuple(out)


def eval_Ylm(idx: HarmonicIndex, grid: SphereGrid) -> np.ndarray:
    """Orthonormal spherical harmonic ``Y_lm`` sampled on ``grid``."""
    return ylm_jet(idx.l, idx.m, grid)[0]


def _indices(l_max: int, l_min: int = 0):
    return [(l, m) for l in range(l_min, l_max + 1) for m in range(-l, l + 1)]


def quad_sphere(f: np.ndarray, grid: SphereGrid, unit: bool = False):
    """Integral over S²_r (or the unit sphere if ``unit``) of the trailing two axes."""
    w = grid.area_weights
    if unit:
        w = w / grid.r**2
    return np.tensordot(f, w, axes=([-2, -1], [0, 1]))


def quad_shell(f: np.ndarray, grid: SphereGrid):
    """Integral over S²_r × (0, 1) of a field of shape ``(n_z, n_theta, n_phi)``."""
    f = np.asarray(f)
    if f.shape[-3:] != grid.shell_shape:
        raise ValueError(f"field shape {f.shape} does not match grid {grid.shell_shape}")
    return np.tensordot(quad_sphere(f, grid), grid.w_z, axes=([-1], [0]))


def analyze(f: np.ndarray, grid: SphereGrid, l_max: int | None = None) -> dict:
    """Harmonic coefficients ``{(l, m): c}`` of a band-limited scalar field."""
    l_max = grid.l_max if l_max is None else l_max
    return {
        (l, m): quad_sphere(f * np.conj(ylm_jet(l, m, grid)[0]), grid, unit=True)
        for l, m in _indices(l_max)
    }


def synthesize(coeffs: dict, grid: SphereGrid) -> np.ndarray:
    out = np.zeros(grid.shape, dtype=complex)
    for (l, m), c in coeffs.items():
        if c != 0:
            out += c * ylm_jet(l, m, grid)[0]
    return out


def grad_sphere(f: np.ndarray, grid: SphereGrid) -> np.ndarray:
    """Horizontal gradient ``(1/r) ∂θf e_θ + (1/(r sinθ)) ∂φf e_φ``."""
    return potential_jet(analyze(f, grid), {}, grid)["v"]


def curl_sphere(f: np.ndarray, grid: SphereGrid) -> np.ndarray:
    """Surface curl ``(1/(r sinθ)) ∂φf e_θ - (1/r) ∂θf e_φ``."""
    return potential_jet({}, analyze(f, grid), grid)["v"]


def _vector_potentials(v: np.ndarray, grid: SphereGrid):
    """Split a band-limited tangent field into ``∇A + curl B``."""
    a, b = {}, {}
    for l, m in _indices(grid.l_max, 1):
        jet = potential_jet({(l, m): 1.0}, {}, grid)["v"]
        # |∇Y_lm|² integrates to l(l+1) over S²_r with unit-sphere normalization
        norm = l * (l + 1.0)
        a[l, m] = quad_sphere(np.sum(v * np.conj(jet), axis=0), grid) / norm
        # curl Y = ∇Y rotated by -90°: (g_θ, g_φ) -> (g_φ, -g_θ)
        b[l, m] = quad_sphere(v[0] * np.conj(jet[1]) - v[1] * np.conj(jet[0]), grid) / norm
    return a, b


def div_sphere(v: np.ndarray, grid: SphereGrid) -> np.ndarray:
    """Horizontal divergence of a band-limited tangent field."""
    a, _ = _vector_potentials(v, grid)
    return synthesize(
        {(l, m): -l * (l + 1.0) / grid.r**2 * c for (l, m), c in a.items()}, grid
    )


def laplacian_sphere(f: np.ndarray, grid: SphereGrid) -> np.ndarray:
    return div_sphere(grad_sphere(f, grid), grid)


def potential_jet(a: dict, b: dict, grid: SphereGrid) -> dict:
    """Values and first derivatives of ``v = ∇A + curl B`` on S²_r.

    ``a`` and ``b`` map ``(l, m)`` to harmonic coefficients of the potentials.
    Returns a dict with ``v`` (shape ``(2, n_theta, n_phi)``) and the partial
    derivatives ``dth`` = ∂θ v, ``dph`` = ∂φ v of both components.
    """
    s = grid.sin_theta[:, None]
    c = grid.cos_theta[:, None]
    r = grid.r
    shape = grid.shape
    v = np.zeros((2,) + shape, dtype=complex)
    dth = np.zeros_like(v)
    dph = np.zeros_like(v)
    for (l, m), coef in a.items():
        if coef == 0:
            continue
        y, yt, ytt = (coef * f for f in ylm_jet(l, m, grid))
        im = 1j * m
        v[0] += yt / r
        v[1] += im * y / (r * s)
        dth[0] += ytt / r
        dph[0] += im * yt / r
        dth[1] += im * (yt / s - c * y / s**2) / r
        dph[1] += -(m * m) * y / (r * s)
    for (l, m), coef in b.items():
        if coef == 0:
            continue
        y, yt, ytt = (coef * f for f in ylm_jet(l, m, grid))
        im = 1j * m
        v[0] += im * y / (r * s)
        v[1] += -yt / r
        dth[0] += im * (yt / s - c * y / s**2) / r
        dph[0] += -(m * m) * y / (r * s)
        dth[1] += -ytt / r
        dph[1] += -im * yt / r
    return {"v": v, "dth": dth, "dph": dph}


def scalar_jet(a: dict, grid: SphereGrid) -> dict:
    """Values and ``∂θ``, ``∂φ`` of a scalar with harmonic coefficients ``a``."""
    f = np.zeros(grid.shape, dtype=complex)
    dth = np.zeros_like(f)
    dph = np.zeros_like(f)
    for (l, m), coef in a.items():
        if coef == 0:
            continue
        y, yt, _ = ylm_jet(l, m, grid)
        f += coef * y
        dth += coef * yt
        dph += 1j * m * coef * y
    return {"f": f, "dth": dth, "dph": dph}


def advect_scalar(u, f_dth, f_dph, grid: SphereGrid):
    """``∇_u f = (1/r)(u_θ ∂θf + u_φ ∂φf / sinθ)`` from precomputed derivatives."""
    s = grid.sin_theta[:, None]
    return (u[0] * f_dth + u[1] * f_dph / s) / grid.r


def advect_vector(u, v, v_dth, v_dph, grid: SphereGrid):
    """Covariant ``∇_u v`` on S²_r, including the ``cotθ`` connection terms."""
    s = grid.sin_theta[:, None]
    cot = grid.cos_theta[:, None] / s
    r = grid.r
    e_th = u[0] * v_dth[0] + u[1] * v_dph[0] / s - u[1] * v[1] * cot
    e_ph = u[0] * v_dth[1] + u[1] * v_dph[1] / s + u[1] * v[0] * cot
    return np.stack([e_th, e_ph]) / r


def advect(u: np.ndarray, v: np.ndarray, grid: SphereGrid) -> np.ndarray:
    """Advection ``∇_u v`` of a band-limited scalar or tangent field ``v``.

    The derivatives of ``v`` are obtained spectrally, so ``v`` must be
    resolved by ``grid``; ``u`` enters pointwise only.
    """
    u = np.asarray(u)
    v = np.asarray(v)
    if v.shape == grid.shape:
        jet = scalar_jet(analyze(v, grid), grid)
        return advect_scalar(u, jet["dth"], jet["dph"], grid)
    if v.shape == (2,) + grid.shape:
        a, b = _vector_potentials(v, grid)
        jet = potential_jet(a, b, grid)
        return advect_vector(u, jet["v"], jet["dth"], jet["dph"], grid)
    raise ValueError(f"field shape {v.shape} does not match grid {grid.shape}")


# ---------------------------------------------------------------------------
# Wigner 3-j symbols and Gaunt coefficients
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _wigner_3j_squared(j1, j2, j3, m1, m2, m3) -> tuple[int, Fraction]:
    """Sign and exact square of the 3-j symbol (Racah's formula)."""
    if m1 + m2 + m3 != 0 or not abs(j1 - j2) <= j3 <= j1 + j2:
        return 0, Fraction(0)
    if abs(m1) > j1 or abs(m2) > j2 or abs(m3) > j3:
        return 0, Fraction(0)
    f = factorial
    pref = Fraction(
        f(j1 + j2 - j3) * f(j1 - j2 + j3) * f(-j1 + j2 + j3),
        f(j1 + j2 + j3 + 1),
    ) * (f(j1 + m1) * f(j1 - m1) * f(j2 + m2) * f(j2 - m2) * f(j3 + m3) * f(j3 - m3))
    kmin = max(0, j2 - j3 - m1, j1 - j3 + m2)
    kmax = min(j1 + j2 - j3, j1 - m1, j2 + m2)
    total = Fraction(0)
    for k in range(kmin, kmax + 1):
        den = (
            f(k) * f(j3 - j2 + k + m1) * f(j3 - j1 + k - m2)
            * f(j1 + j2 - j3 - k) * f(j1 - k - m1) * f(j2 - k + m2)
        )
        total += Fraction((-1) ** k, den)
    if total == 0:
        return 0, Fraction(0)
    sign = (-1) ** ((j1 - j2 - m3) % 2) * (1 if total > 0 else -1)
    return sign, pref * total * total


def _sqrt_fraction(q: Fraction) -> float:
    # int / int true division is correctly rounded for arbitrarily large operands
    return sqrt(q.numerator / q.denominator)


def wigner_3j(j1: int, j2: int, j3: int, m1: int, m2: int, m3: int) -> float:
    """Wigner 3-j symbol for integer arguments, exact up to the final rounding."""
    sign, sq = _wigner_3j_squared(j1, j2, j3, m1, m2, m3)
    if sign == 0:
        return 0.0
    return sign * _sqrt_fraction(sq)


def gaunt(idx1: HarmonicIndex, idx2: HarmonicIndex, idx3: HarmonicIndex) -> float:
    """``∫ Y_{l1m1} Y_{l2m2} Y_{l3m3} dΩ`` over the unit sphere."""
    l1, l2, l3 = idx1.l, idx2.l, idx3.l
    m1, m2, m3 = idx1.m, idx2.m, idx3.m
    if m1 + m2 + m3 != 0 or (l1 + l2 + l3) % 2 or not abs(l1 - l2) <= l3 <= l1 + l2:
        return 0.0
    s0, q0 = _wigner_3j_squared(l1, l2, l3, 0, 0, 0)
    s1, q1 = _wigner_3j_squared(l1, l2, l3, m1, m2, m3)
    if s0 == 0 or s1 == 0:
        return 0.0
    q = Fraction((2 * l1 + 1) * (2 * l2 + 1) * (2 * l3 + 1)) * q0 * q1
    return s0 * s1 * _sqrt_fraction(q) / sqrt(4.0 * pi)
