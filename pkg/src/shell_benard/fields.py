"""Sampled shell fields ``(u, w, T)`` with their first derivatives.

A :class:`ShellField` stores values and ``∂θ``, ``∂φ``, ``∂z`` derivatives on
a :class:`~shell_benard.harmonics.SphereGrid`, which is all the quadratic
advection operator needs.  Eigenmodes are built from closed-form harmonic
jets so no numerical differentiation is involved.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import pi

import numpy as np

from .harmonics import (
    SphereGrid,
    advect_scalar,
    advect_vector,
    potential_jet,
    quad_shell,
    ylm_jet,
)
from .spectrum import Branch, ModeIndex, PhysicalParams, eigenvalue

__all__ = ["ShellField", "mode_field", "nonlinear_form", "inner", "divergence_3d"]


@dataclass
class ShellField:
    """Tangential velocity ``u`` (leading axis = e_θ, e_φ), vertical ``w``, temperature ``T``."""

    u: np.ndarray
    u_dth: np.ndarray
    u_dph: np.ndarray
    u_dz: np.ndarray
    w: np.ndarray
    w_dth: np.ndarray
    w_dph: np.ndarray
    w_dz: np.ndarray
    T: np.ndarray
    T_dth: np.ndarray
    T_dph: np.ndarray
    T_dz: np.ndarray

    @classmethod
    def zeros(cls, grid: SphereGrid, n_z: int | None = None) -> "ShellField":
        s = (grid.n_z if n_z is None else n_z,) + grid.shape
        v = lambda: np.zeros((2,) + s, dtype=complex)  # noqa: E731
        f = lambda: np.zeros(s, dtype=complex)  # noqa: E731
        return cls(v(), v(), v(), v(), f(), f(), f(), f(), f(), f(), f(), f())

    def _items(self):
        return [getattr(self, k) for k in self.__dataclass_fields__]

    def __add__(self, other: "ShellField") -> "ShellField":
        return ShellField(*(a + b for a, b in zip(self._items(), other._items())))

    def scale(self, c) -> "ShellField":
        return ShellField(*(c * a for a in self._items()))

    def conj(self) -> "ShellField":
        return ShellField(*(np.conj(a) for a in self._items()))

    def axpy(self, c, other: "ShellField") -> None:
        """In-place ``self += c * other``."""
        for a, b in zip(self._items(), other._items()):
            a += c * b


def _profiles(n: int, z: np.ndarray):
    k = n * pi
    return np.sin(k * z), np.cos(k * z), k


def mode_field(
    params: PhysicalParams, idx: ModeIndex, grid: SphereGrid, z=None
) -> ShellField:
    """Eigenmode ``Ψ`` sampled on ``grid`` (or at the heights ``z`` if given).

    toroidal: ``(curl Y_lm, 0, 0)``; thermal: ``(0, 0, sin nπz)``;
    plus/minus: ``(nπ cos(nπz) ∇Y_lm, α² Y_lm sin(nπz), b Y_lm sin(nπz))``.
    """
    z = grid.z if z is None else np.atleast_1d(np.asarray(z, dtype=float))
    out = ShellField.zeros(grid, z.size)
    shape = (z.size,) + grid.shape
    z = z[:, None, None]
    l, m, n = idx.l, idx.m, idx.n
    if idx.branch is Branch.THERMAL:
        sn, cs, k = _profiles(n, z)
        out.T = np.broadcast_to(sn, shape).astype(complex)
        out.T_dz = np.broadcast_to(k * cs, shape).astype(complex)
        return out
    if idx.branch is Branch.TOROIDAL:
        jet = potential_jet({}, {(l, m): 1.0}, grid)
        ones = np.ones((shape[0], 1, 1))
        out.u = jet["v"][:, None] * ones
        out.u_dth = jet["dth"][:, None] * ones
        out.u_dph = jet["dph"][:, None] * ones
        return out
    pair = eigenvalue(params, idx)
    a2, b = pair.alpha_sq, pair.b
    if not np.isfinite(b):
        raise ValueError(f"{idx} is purely thermal at lambda=0; w-normalized mode undefined")
    sn, cs, k = _profiles(n, z)
    jet = potential_jet({(l, m): 1.0}, {}, grid)
    hv, hv_t, hv_p = (jet[key][:, None] for key in ("v", "dth", "dph"))
    out.u = k * cs * hv
    out.u_dth = k * cs * hv_t
    out.u_dph = k * cs * hv_p
    out.u_dz = -k * k * sn * hv
    y, yt, _ = ylm_jet(l, m, grid)
    yp = 1j * m * y
    out.w = a2 * sn * y
    out.w_dth = a2 * sn * yt
    out.w_dph = a2 * sn * yp
    out.w_dz = a2 * k * cs * y
    out.T = b * sn * y
    out.T_dth = b * sn * yt
    out.T_dph = b * sn * yp
    out.T_dz = b * k * cs * y
    return out


def nonlinear_form(a: ShellField, b: ShellField, grid: SphereGrid, symmetric=True):
    """Quadratic Boussinesq nonlinearity ``G(a, b)`` before Leray projection.

    ``G(a, b) = -(∇_{u_a} u_b + w_a ∂z u_b, ∇_{u_a} w_b + w_a ∂z w_b,
    ∇_{u_a} T_b + w_a ∂z T_b)``, symmetrized over ``(a, b)`` by default.
    Returns ``(Gu, Gw, GT)``.  Only pair with divergence-free test fields
    that vanish in ``w`` at the walls; the projection is then transparent.
    """

    def one(p, q):
        gu = advect_vector(p.u, q.u, q.u_dth, q.u_dph, grid) + p.w * q.u_dz
        gw = advect_scalar(p.u, q.w_dth, q.w_dph, grid) + p.w * q.w_dz
        gt = advect_scalar(p.u, q.T_dth, q.T_dph, grid) + p.w * q.T_dz
        return -gu, -gw, -gt

    if not symmetric or a is b:
        return one(a, b)
    g1, g2 = one(a, b), one(b, a)
    return tuple(0.5 * (x + y) for x, y in zip(g1, g2))


def inner(f, psi: ShellField, grid: SphereGrid, velocity_weight: float = 1.0):
    """``⟨f, Ψ⟩ = velocity_weight·∫(u·ū_Ψ + w w̄_Ψ) + ∫ T T̄_Ψ`` over the shell.

    ``f`` is a ``ShellField`` or a ``(u, w, T)`` tuple.
    """
    if isinstance(f, ShellField):
        f = (f.u, f.w, f.T)
    u, w, T = f
    vel = np.sum(u * np.conj(psi.u), axis=0) + w * np.conj(psi.w)
    return velocity_weight * quad_shell(vel, grid) + quad_shell(T * np.conj(psi.T), grid)


def divergence_3d(f: ShellField, grid: SphereGrid) -> np.ndarray:
    """Pointwise ``div u + ∂w/∂z`` from the stored derivatives."""
    s = grid.sin_theta[:, None]
    c = grid.cos_theta[:, None]
    div_h = (s * f.u_dth[0] + c * f.u[0] + f.u_dph[1]) / (grid.r * s)
    return div_h + f.w_dz
