import io
from functools import lru_cache
from math import pi, sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shell_benard.dynamics import (
    NoAttractorError,
    ReducedState,
    attractor,
    integrate,
    jacobian,
    logistic_norm,
    reconstruct,
    rotate,
    vector_field,
)
from shell_benard.harmonics import SphereGrid, analyze
from shell_benard.reduction import GalerkinReduction, reduced_model
from shell_benard.spectrum import PhysicalParams, critical_rayleigh


@lru_cache(maxsize=None)
def setup(l_c):
    r = sqrt(2 * l_c * (l_c + 1)) / pi
    p = PhysicalParams(Pr=1.0, lam=critical_rayleigh(r).lambda_c, r=r)
    red = GalerkinReduction(p, l_c)
    return reduced_model(p, l_c, reduction=red), red


def model(l_c=1, beta=None):
    m, _ = setup(l_c)
    return m.with_rates(m.q if beta is None else beta)


def states(l_c, scale=1.0):
    return st.lists(st.floats(-scale, scale), min_size=2 * l_c + 1, max_size=2 * l_c + 1).map(
        lambda v: ReducedState.from_real(np.array(v))
    )


def test_state_validation():
    with pytest.raises(ValueError):
        ReducedState(np.array([1j, 0.0]))
    with pytest.raises(ValueError):
        ReducedState(np.array([1.0]))


@settings(max_examples=50, deadline=None)
@given(states(2))
def test_real_chart_round_trip(s):
    back = ReducedState.from_real(s.real())
    assert np.allclose(back.x, s.x, atol=1e-15)
    full = s.full()
    assert np.allclose(ReducedState.from_full(full).x, s.x)
    # y_m = (-1)^m y_{-m}, z_m = (-1)^{m+1} z_{-m}
    for m in (1, 2):
        xm, xn = full[2 + m], full[2 - m]
        assert np.isclose(sqrt(2) * xn.real, (-1) ** m * sqrt(2) * xm.real)
        assert np.isclose(sqrt(2) * xn.imag, (-1) ** (m + 1) * sqrt(2) * xm.imag)
    assert s.N == pytest.approx(float(s.real() @ s.real()), rel=1e-12, abs=1e-300)


def test_origin_is_steady():
    f = vector_field(model(), ReducedState(np.zeros(2)))
    assert np.abs(f.x).max() == 0


def test_l_c_mismatch():
    with pytest.raises(ValueError):
        vector_field(model(1), ReducedState(np.zeros(3)))


@settings(max_examples=40, deadline=None)
@given(states(2, 2.0))
def test_jacobian_matches_finite_differences(s):
    m = model(2, beta=0.3)
    v = s.real()
    J = jacobian(m, s)
    Jfd = np.empty_like(J)
    for k in range(v.size):
        h = 1e-6 * max(1.0, abs(v[k]))
        e = np.zeros_like(v)
        e[k] = h
        fp = vector_field(m, ReducedState.from_real(v + e)).real()
        fm = vector_field(m, ReducedState.from_real(v - e)).real()
        Jfd[:, k] = (fp - fm) / (2 * h)
    assert np.abs(J - Jfd).max() < 1e-6


@pytest.mark.parametrize("l_c", [1, 2])
def test_logistic_convergence(l_c):
    m = model(l_c, beta=0.4)
    s0 = ReducedState.from_real(0.05 * np.arange(1, 2 * l_c + 2))
    t = np.linspace(0, 20 / 0.4, 400)
    tr = integrate(m, s0, t[-1], t_eval=t)
    exact = logistic_norm(0.4, m.q, s0.N, t)
    assert np.abs(tr.N - exact).max() < 1e-6
    assert tr.N[-1] == pytest.approx(0.4 / m.q, rel=1e-6)


def test_radial_law_along_trajectory():
    m = model(2, beta=0.25)
    tr = integrate(m, ReducedState.from_real([0.1, -0.2, 0.05, 0.3, 0.01]), 30.0,
                   t_eval=np.linspace(0, 30, 3001))
    dN = np.gradient(tr.N, tr.t, edge_order=2)
    resid = dN - 2 * tr.N * (0.25 - m.q * tr.N)
    assert np.abs(resid[5:-5]).max() < 1e-6
    # direct evaluation of the field along the path
    for i in (0, 700, 2000):
        s = tr.state(i)
        f = vector_field(m, s).real()
        assert 2 * s.real() @ f == pytest.approx(2 * s.N * (0.25 - m.q * s.N), rel=1e-8, abs=1e-14)


def test_decay_below_threshold():
    m0, _ = setup(1)
    lam = 0.95 * m0.lambda_c
    beta = m0.beta_plus(lam)
    assert beta < 0
    m = m0.with_rates(beta)
    tr = integrate(m, ReducedState.from_real([0.5, -0.3, 0.2]), 20.0, t_eval=np.linspace(0, 20, 200))
    assert np.all(np.diff(tr.N) < 0)
    assert tr.N[-1] < 1e-3 * tr.N[0]
    assert np.all(np.linalg.eigvalsh(jacobian(m, ReducedState(np.zeros(2)))) < 0)


def test_sign_dichotomy():
    for beta in (-0.2, 0.2):
        m = model(1, beta=beta)
        eig = np.linalg.eigvalsh(jacobian(m, ReducedState(np.zeros(2))))
        tr = integrate(m, ReducedState.from_real([1e-3, 0, 0]), 60.0)
        assert (eig.max() < 0) == (tr.N[-1] < tr.N[0])


@settings(max_examples=10, deadline=None)
@given(st.floats(0, 2 * pi))
def test_rotation_equivariance(phi):
    m = model(2, beta=0.5)
    s0 = ReducedState.from_real([0.1, 0.02, -0.05, 0.07, 0.03])
    t = np.linspace(0, 10, 50)
    # step control is per component, so keep the truncation error well below the check
    a = integrate(m, s0, 10.0, t_eval=t, rtol=1e-11, atol=1e-14)
    b = integrate(m, rotate(s0, phi), 10.0, t_eval=t, rtol=1e-11, atol=1e-14)
    for i in range(0, 50, 7):
        assert np.abs(rotate(a.state(i), phi).x - b.state(i).x).max() < 1e-9


def test_attractor_unit_radius():
    m = model(1)  # β⁺ = q
    est = attractor(m, 32)
    assert est.radius == pytest.approx(1.0, rel=1e-15)
    assert est.radius**2 * est.q == pytest.approx(est.beta, rel=1e-12)
    assert all(s.N == pytest.approx(1.0, rel=1e-12) for s in est.samples)


@pytest.mark.parametrize("l_c", [1, 2])
def test_attractor_steady(l_c):
    est = attractor(model(l_c, beta=0.3), 64, seed=3)
    assert est.steady.all()
    for s in est.samples:
        assert np.linalg.norm(vector_field(model(l_c, beta=0.3), s).real()) < 1e-12


def test_attractor_samples_cover_sphere():
    est = attractor(model(2, beta=1.0), 512)
    pts = np.array([s.real() for s in est.samples]) / est.radius
    assert np.abs(pts.mean(axis=0)).max() < 0.1


def test_no_attractor_below_threshold():
    with pytest.raises(NoAttractorError):
        attractor(model(1, beta=-0.1))


def test_reconstruct_zero():
    m, red = setup(1)
    g = SphereGrid.for_degree(6, r=m.params.r)
    f = reconstruct(m, red.coefficients(), ReducedState(np.zeros(2)), g)
    assert max(np.abs(a).max() for a in (f.u, f.w, f.T)) == 0


@pytest.mark.parametrize("l_c", [1, 2])
def test_reconstruct_real_and_boundary(l_c):
    m, red = setup(l_c)
    g = SphereGrid.for_degree(3 * l_c + 2, r=m.params.r)
    s = attractor(m.with_rates(0.2), 4).samples[1]
    f = reconstruct(m, red.coefficients(), s, g)
    assert max(np.abs(a.imag).max() for a in (f.u, f.w, f.T)) < 1e-12
    walls = reconstruct(m, red.coefficients(), s, g, z=[0.0, 1.0])
    assert np.abs(walls.w).max() < 1e-12
    assert np.abs(walls.T).max() < 1e-12
    assert np.abs(walls.u_dz).max() < 1e-11


def test_reconstruct_spectral_content():
    # a zonal attractor point has its temperature dominated by Y_{l_c,0}
    m, red = setup(2)
    g = SphereGrid.for_degree(8, r=m.params.r, n_z=17)
    radius = sqrt(0.2 / m.q)
    s = ReducedState(np.array([radius, 0, 0], dtype=complex))
    f = reconstruct(m, red.coefficients(), s, g, z=[0.5])
    c = analyze(f.T[0], g)
    power = {lm: abs(v) ** 2 for lm, v in c.items()}
    assert max(power, key=power.get) == (2, 0)
    assert all(abs(v) < 1e-10 for (l, mm), v in c.items() if mm != 0)


def test_trajectory_csv():
    m = model(1, beta=0.2)
    tr = integrate(m, ReducedState.from_real([0.1, 0.0, 0.1]), 1.0, t_eval=[0.0, 0.5, 1.0])
    buf = io.StringIO(newline="")
    tr.write_csv(buf)
    lines = buf.getvalue().split("\r\n")
    assert lines[0] == "t,x0,y1,z1,N"
    assert len(lines) == 5
    row = [float(v) for v in lines[1].split(",")]
    assert row[-1] == pytest.approx(0.02)


def test_integrate_requires_positive_q():
    m, _ = setup(1)
    with pytest.raises(ValueError):
        integrate(m.with_rates(0.1, q=-1.0), ReducedState(np.ones(2)), 1.0)
