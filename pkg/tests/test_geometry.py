import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holonomy.algebra import commutator, dagger, gram_schmidt
from holonomy.errors import ContractError, OutsideChartError, QuadratureError
from holonomy.geometry import (ChartCoords, FrameTangent, OrbitTangent, ParametrizedSurface, chart_decode,
                               chart_encode, cone_surface, connection_eval, dA_closed_form, generator_for,
                               horizontal_project, kks_closed_form, kks_eval, orbit_tangent_from_matrix,
                               pullback_check, su2_from_z, surface_integral, tangent_to_orbit)
from holonomy.states import SpectralWeights, project, random_frame, random_orbit_loop
from holonomy.transport import bloch_cap, geometric_phases

from strategies import frames, seeds

W2 = SpectralWeights((0.7, 0.3))
E3 = np.eye(3, dtype=complex)[:, :2]


def _retract(psi, phi):
    return gram_schmidt(psi + phi)


def _tangent(h12=0.0, h=None, chi=None, n=3, k=2):
    if h is None:
        h = np.zeros((k, k), dtype=complex)
        h[0, 1], h[1, 0] = h12, np.conj(h12)
    return FrameTangent(h=h, chi=np.zeros((n, k)) if chi is None else chi)


def _weights_for(k):
    v = np.arange(k, 0, -1, dtype=float)
    return SpectralWeights(tuple(v / v.sum()))


# -- connection and horizontal projection ----------------------------------------


def test_connection_examples():
    psi = E3
    chi = np.zeros((3, 2), dtype=complex)
    chi[2] = [1.0, 2j]
    assert np.allclose(connection_eval(psi, FrameTangent(h=np.zeros((2, 2)), chi=chi)), 0)
    np.testing.assert_allclose(connection_eval(psi, _tangent(h=np.diag([2.0, 5.0]))), [2, 5])


@given(seeds)
def test_connection_matches_finite_difference(seed):
    rng = np.random.default_rng(seed)
    psi = random_frame(4, 2, rng)
    phi = FrameTangent.random(psi, rng)
    eps = 1e-6
    plus, minus = _retract(psi, eps * phi.matrix(psi)), _retract(psi, -eps * phi.matrix(psi))
    fd = np.real(-1j * np.einsum("ia,ia->a", np.conj(psi), (plus - minus) / (2 * eps)))
    assert np.max(np.abs(fd - connection_eval(psi, phi))) < 1e-6


def test_horizontal_projection():
    psi = E3
    horizontal = _tangent(h12=1 + 2j)
    out = horizontal_project(psi, horizontal)
    np.testing.assert_array_equal(out.h, horizontal.h)
    vertical = horizontal_project(psi, _tangent(h=np.eye(2)))
    assert np.max(np.abs(vertical.matrix(psi))) == 0


@given(frames(n=4, k=2), seeds)
def test_horizontal_split_is_exact(psi, seed):
    phi = FrameTangent.random(psi, np.random.default_rng(seed))
    hor = horizontal_project(psi, phi)
    vert = FrameTangent(h=np.diag(np.diag(phi.h)), chi=np.zeros_like(phi.chi))
    np.testing.assert_array_equal(hor.h + vert.h, phi.h)
    assert np.allclose(connection_eval(psi, hor), 0, atol=1e-14)


def test_tangent_contract_violation():
    with pytest.raises(ContractError):
        connection_eval(E3, FrameTangent(h=np.zeros((2, 2)), chi=np.ones((3, 2))))


# -- orbit tangents and generators --------------------------------------------------


def test_vertical_tangent_pushes_to_zero():
    t = tangent_to_orbit(E3, W2, _tangent(h=np.diag([0.4, -1.3])))
    assert np.max(np.abs(t.matrix())) == 0


def test_chi_only_tangent():
    rng = np.random.default_rng(3)
    chi = np.zeros((3, 2), dtype=complex)
    chi[2] = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    x = tangent_to_orbit(E3, W2, FrameTangent(h=np.zeros((2, 2)), chi=chi)).matrix()
    p1, p2 = E3[:, :1], E3[:, 1:]
    c1, c2 = chi[:, :1], chi[:, 1:]
    want = 0.7 * (p1 @ dagger(c1) + c1 @ dagger(p1)) + 0.3 * (p2 @ dagger(c2) + c2 @ dagger(p2))
    np.testing.assert_allclose(x, want, atol=1e-15)


@given(frames(n=4, k=2), seeds)
def test_orbit_tangent_matches_finite_difference(psi, seed):
    phi = FrameTangent.random(psi, np.random.default_rng(seed))
    eps = 1e-6
    fd = (project(_retract(psi, eps * phi.matrix(psi)), W2)
          - project(_retract(psi, -eps * phi.matrix(psi)), W2)) / (2 * eps)
    assert np.max(np.abs(fd - tangent_to_orbit(psi, W2, phi).matrix())) < 1e-6


def test_generator_examples():
    zero = tangent_to_orbit(E3, W2, _tangent())
    assert np.max(np.abs(generator_for(zero))) == 0
    t = tangent_to_orbit(E3, W2, _tangent(h12=1.0))
    k = generator_for(t)
    want = -(np.outer(E3[:, 0], E3[:, 1]) + np.outer(E3[:, 1], E3[:, 0]))
    np.testing.assert_allclose(k, want, atol=1e-15)
    rho = project(E3, W2)
    np.testing.assert_allclose(-1j * commutator(k, rho), t.matrix(), atol=1e-15)


@given(frames(), seeds)
def test_generator_reproduces_tangent(psi, seed):
    w = _weights_for(psi.shape[1])
    t = tangent_to_orbit(psi, w, FrameTangent.random(psi, np.random.default_rng(seed)))
    rho = project(psi, w)
    assert np.max(np.abs(-1j * commutator(generator_for(t), rho) - t.matrix())) < 1e-12


@given(frames(), seeds)
def test_orbit_coordinates_round_trip(psi, seed):
    w = _weights_for(psi.shape[1])
    t = tangent_to_orbit(psi, w, FrameTangent.random(psi, np.random.default_rng(seed)))
    back = orbit_tangent_from_matrix(psi, w, t.matrix())
    assert np.max(np.abs(back.h_full() - t.h_full())) < 1e-12
    assert np.max(np.abs(back.chi - t.chi)) < 1e-12


# -- symplectic form ------------------------------------------------------------------


def test_kks_closed_form_examples():
    t1 = tangent_to_orbit(E3, W2, _tangent(h12=1.0))
    t2 = tangent_to_orbit(E3, W2, _tangent(h12=1j))
    assert kks_closed_form(W2, t1, t2) == pytest.approx(-0.8, abs=1e-15)
    assert kks_closed_form(W2, t1, t1) == 0
    rho = project(E3, W2)
    assert kks_eval(rho, generator_for(t1), generator_for(t2)) == pytest.approx(-0.8, abs=1e-14)
    chi = np.zeros((3, 2))
    chi[2, 0] = 0.7
    real = tangent_to_orbit(E3, W2, _tangent(chi=chi))
    assert kks_closed_form(W2, real, real) == 0


def test_kks_eval_same_generator_vanishes(rng):
    psi = random_frame(3, 2, rng)
    t = tangent_to_orbit(psi, W2, FrameTangent.random(psi, rng))
    k = generator_for(t)
    assert kks_eval(project(psi, W2), k, k) == 0


def test_kks_closed_form_rejects_mismatched_frames(rng):
    a, b = random_frame(3, 2, rng), random_frame(3, 2, rng)
    ta = tangent_to_orbit(a, W2, FrameTangent.random(a, rng))
    tb = tangent_to_orbit(b, W2, FrameTangent.random(b, rng))
    with pytest.raises(ContractError):
        kks_closed_form(W2, ta, tb)


@given(seeds, st.integers(2, 5))
def test_kks_pure_state_reduction(seed, n):
    rng = np.random.default_rng(seed)
    psi = random_frame(n, 1, rng)
    w = SpectralWeights((1.0,))
    t1 = tangent_to_orbit(psi, w, FrameTangent.random(psi, rng))
    t2 = tangent_to_orbit(psi, w, FrameTangent.random(psi, rng))
    val = kks_eval(project(psi, w), generator_for(t1), generator_for(t2))
    assert abs(val - 2 * np.imag(np.vdot(t1.chi, t2.chi))) < 1e-12


@given(frames(), seeds)
def test_kks_antisymmetric_real_and_matches_closed_form(psi, seed):
    rng = np.random.default_rng(seed)
    w = _weights_for(psi.shape[1])
    rho = project(psi, w)
    t1 = tangent_to_orbit(psi, w, FrameTangent.random(psi, rng))
    t2 = tangent_to_orbit(psi, w, FrameTangent.random(psi, rng))
    k1, k2 = generator_for(t1), generator_for(t2)
    raw = -1j * np.trace(rho @ commutator(k1, k2))
    assert abs(raw.imag) < 1e-14
    assert kks_eval(rho, k1, k2) == -kks_eval(rho, k2, k1)
    assert abs(kks_eval(rho, k1, k2) - kks_closed_form(w, t1, t2)) < 1e-12


# -- dA and the pullback identity -------------------------------------------------------


def test_dA_examples():
    np.testing.assert_allclose(dA_closed_form(_tangent(h12=1.0), _tangent(h12=1j)), [-2.0, 2.0], atol=1e-15)
    t = _tangent(h12=0.3 - 0.2j)
    np.testing.assert_array_equal(dA_closed_form(t, t), [0.0, 0.0])


def test_pullback_examples(rng):
    psi = random_frame(3, 2, rng)
    t = FrameTangent.random(psi, rng)
    lhs, rhs = pullback_check(psi, W2, t, t)
    assert lhs == 0.0 and abs(rhs) < 1e-15
    vertical = FrameTangent(h=np.diag([0.5, -2.0]).astype(complex), chi=np.zeros((3, 2)))
    lhs, rhs = pullback_check(psi, W2, vertical, t)
    assert abs(lhs) < 1e-15 and abs(rhs) < 1e-15


@pytest.mark.parametrize("n", [3, 4, 5])
@given(seed=seeds)
def test_pullback_identity(n, seed):
    rng = np.random.default_rng(seed)
    psi = random_frame(n, 2, rng)
    lhs, rhs = pullback_check(psi, W2, FrameTangent.random(psi, rng), FrameTangent.random(psi, rng))
    assert abs(lhs - rhs) < 1e-10


def _loop_integral_A(frames):
    """Discrete line integral of each A^(a) around a closed sequence of frames."""
    ov = np.einsum("ina,ina->ia", np.conj(frames[:-1]), frames[1:])
    return np.sum(np.angle(ov), axis=0)


def test_dA_matches_small_loop_stokes(rng):
    psi = random_frame(4, 2, rng)
    t1, t2 = FrameTangent.random(psi, rng), FrameTangent.random(psi, rng)
    p1, p2 = t1.matrix(psi), t2.matrix(psi)

    def circulation(eps, m=40):
        t = np.linspace(0, 1, m, endpoint=False)
        corners = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]], dtype=float)
        pts = np.concatenate([a + np.outer(t, b - a) for a, b in zip(corners[:-1], corners[1:])] + [corners[-1:]])
        frames = np.array([_retract(psi, eps * (x * p1 + y * p2)) for x, y in pts])
        return _loop_integral_A(frames) / eps**2

    exact = dA_closed_form(t1, t2)
    e1 = np.max(np.abs(circulation(2e-3) - exact))
    e2 = np.max(np.abs(circulation(1e-3) - exact))
    assert e2 < 1e-2 * max(1.0, np.abs(exact).max())
    assert e2 < e1


# -- local chart --------------------------------------------------------------------------


def test_chart_at_reference(rng):
    psi0 = random_frame(4, 2, rng)
    c = chart_encode(psi0, psi0)
    assert abs(c.z) < 1e-15 and np.max(np.abs(c.chi0)) < 1e-15 and np.max(np.abs(c.alpha)) < 1e-15
    np.testing.assert_allclose(chart_decode(psi0, ChartCoords(0, np.zeros((4, 2)), [0, 0])), psi0, atol=1e-15)


def test_chart_pure_fiber_motion(rng):
    psi0 = random_frame(4, 2, rng)
    c = chart_encode(psi0, psi0 * np.exp(1j * np.array([0.4, 2.1])))
    assert abs(c.z) < 1e-14 and np.max(np.abs(c.chi0)) < 1e-14
    np.testing.assert_allclose(c.alpha, [0.4, 2.1], atol=1e-14)


def test_chart_decode_su2_block():
    psi0 = np.eye(3, dtype=complex)[:, :2]
    out = chart_decode(psi0, ChartCoords(0.6, np.zeros((3, 2)), [0, 0]))
    np.testing.assert_allclose(out, psi0 @ su2_from_z(0.6), atol=1e-15)
    assert su2_from_z(0.6)[0, 0] == pytest.approx(0.8)


def _chart_point(psi0, rng, scale=0.3):
    n = psi0.shape[0]
    chi = scale * (rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))) / np.sqrt(2 * n)
    chi -= psi0 @ (dagger(psi0) @ chi)
    z = scale * (rng.standard_normal() + 1j * rng.standard_normal()) / 2
    return ChartCoords(z, chi, rng.uniform(0, 2 * np.pi, 2))


@given(seeds, st.integers(3, 5))
def test_chart_round_trips(seed, n):
    rng = np.random.default_rng(seed)
    psi0 = random_frame(n, 2, rng)
    coords = _chart_point(psi0, rng)
    psi = chart_decode(psi0, coords)
    assert np.max(np.abs(dagger(psi) @ psi - np.eye(2))) < 1e-12
    back = chart_encode(psi0, psi)
    assert abs(back.z - coords.z) < 1e-10
    assert np.max(np.abs(back.chi0 - coords.chi0)) < 1e-10
    assert np.max(np.abs(np.angle(np.exp(1j * (back.alpha - coords.alpha))))) < 1e-10
    assert np.max(np.abs(chart_decode(psi0, back) - psi)) < 1e-10


def test_chart_rejects_outside_points():
    psi0 = np.eye(4, dtype=complex)[:, :2]
    with pytest.raises(OutsideChartError):
        chart_encode(psi0, np.eye(4, dtype=complex)[:, 2:])
    with pytest.raises(OutsideChartError):
        chart_encode(psi0, np.eye(4, dtype=complex)[:, [1, 0]])
    with pytest.raises(OutsideChartError):
        chart_decode(psi0, ChartCoords(1.0, np.zeros((4, 2)), [0, 0]))
    with pytest.raises(ContractError):
        chart_encode(np.eye(3)[:, :1], np.eye(3)[:, :1])


# -- surfaces ---------------------------------------------------------------------------------


def _constant_surface(rho, w):
    return ParametrizedSurface(weights=w, n=rho.shape[0],
                               map=lambda u, v: np.broadcast_to(rho, (len(u), len(v)) + rho.shape).copy())


def test_constant_surface_has_zero_area():
    assert surface_integral(_constant_surface(project(E3, W2), W2)) == 0


def test_bloch_cap_area():
    theta = np.pi / 3
    assert surface_integral(bloch_cap(theta)) == pytest.approx(np.pi * (1 - np.cos(theta)), abs=1e-6)


@pytest.mark.parametrize("n,weights,seed", [(3, (0.6, 0.4), 1), (4, (0.5, 0.3, 0.2), 2), (3, (1.0,), 3)])
def test_cone_surface_matches_transport(n, weights, seed):
    path = random_orbit_loop(weights, n, modes=3, seed=seed, steps=400)
    surf = cone_surface(path.meta["loop_generator"], path.rho[0], path.weights)
    assert abs(surface_integral(surf) + geometric_phases(path).weighted) < 1e-5


@pytest.fixture(scope="module")
def cone():
    path = random_orbit_loop((0.6, 0.4), 3, modes=2, seed=8, steps=100)
    return cone_surface(path.meta["loop_generator"], path.rho[0], path.weights)


def test_surface_additive(cone):
    whole = surface_integral(cone)
    parts = surface_integral(cone.restricted(0, 0.5)) + surface_integral(cone.restricted(0.5, 1))
    assert abs(whole - parts) < 1e-6


def test_surface_reparametrisation_and_flip(cone):
    whole = surface_integral(cone)
    squared = cone.reparametrized(lambda u: u**2, lambda v: v)
    assert abs(surface_integral(squared) - whole) < 1e-6
    assert abs(surface_integral(cone.flipped()) + whole) < 1e-6


def test_surface_edge_is_loop():
    path = random_orbit_loop((0.6, 0.4), 3, modes=2, seed=8, steps=20)
    surf = cone_surface(path.meta["loop_generator"], path.rho[0], path.weights)
    assert np.max(np.abs(surf.edge(path.s) - path.rho)) < 1e-13
    alt = cone_surface(path.meta["loop_generator"], path.rho[0], path.weights, boundary="u=1")
    assert np.max(np.abs(alt.edge(path.s) - path.rho)) < 1e-13
    assert abs(surface_integral(alt) - surface_integral(surf)) < 1e-6


def test_grid_surface_json_and_coarse_grid():
    data = json.loads((Path(__file__).parent / "fixtures" / "cone_n3_k2.json").read_text())
    surf = ParametrizedSurface.from_json(data)
    assert surf.grid.shape == (17, 9, 3, 3)
    with pytest.raises(QuadratureError):
        surface_integral(surf)
    from holonomy.paths import DiscretizedPath
    loop = DiscretizedPath.from_json(json.loads((Path(__file__).parent / "fixtures" / "loop_n3_k2.json").read_text()))
    assert abs(surface_integral(surf, quad_tol=1e-2) + geometric_phases(loop).weighted) < 1e-2
    again = ParametrizedSurface.from_json(json.loads(json.dumps(surf.to_json())))
    np.testing.assert_array_equal(again.grid, surf.grid)


def test_surface_contracts():
    with pytest.raises(ContractError):
        ParametrizedSurface(weights=W2, n=3)
    with pytest.raises(ContractError):
        ParametrizedSurface(weights=W2, n=3, grid=np.zeros((1, 4, 3, 3)))
    with pytest.raises(ContractError):
        ParametrizedSurface(weights=W2, n=3, map=lambda u, v: None, boundary="w=1")
    with pytest.raises(ContractError):
        _constant_surface(project(E3, W2), W2).reparametrized(np.sqrt, np.sqrt).to_json()
