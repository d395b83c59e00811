import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from holonomy.algebra import dagger
from holonomy.errors import ContractError, DegeneracyError, StepTooLargeError
from holonomy.geometry import ParametrizedSurface, cone_surface
from holonomy.paths import DiscretizedPath
from holonomy.states import SpectralWeights, project, random_frame, random_orbit_loop, spectral_frame
from holonomy.transport import (bloch_cap, bloch_circle, geometric_phases, hamiltonian_loop, holonomy_of_loop,
                                horizontal_lift, path_ordered_exp, verify_area_identity)

from strategies import seeds

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)


def _constant_loop(n=3, w=(0.7, 0.3), steps=10):
    frame = np.eye(n, len(w), dtype=complex)
    return DiscretizedPath.constant(project(frame, w), w, steps), frame


# -- horizontal lift --------------------------------------------------------------------


def test_lift_of_constant_path_is_constant():
    path, frame = _constant_loop()
    lift = horizontal_lift(path, frame)
    assert np.max(np.abs(lift.frames - frame)) < 1e-15


def test_lift_keeps_in_phase_frames():
    a = np.array([1, 0, 0], dtype=complex)
    b = np.array([np.cos(0.3), np.sin(0.3), 0], dtype=complex)
    c = np.array([np.cos(0.6), np.sin(0.6) * np.cos(0.2), np.sin(0.6) * np.sin(0.2)], dtype=complex)
    frames = np.stack([a, b, c])[:, :, None]
    path = DiscretizedPath.from_frames([0, 0.5, 1], frames, (1.0,))
    np.testing.assert_allclose(horizontal_lift(path, frames[0]).frames, frames, atol=1e-15)


def test_lift_is_horizontal_and_projects_back():
    path = random_orbit_loop((0.6, 0.4), 3, 3, seed=4, steps=300)
    lift = horizontal_lift(path, path.frames[0] * np.exp(1j * np.array([0.3, -1.0])))
    ov = np.einsum("sia,sia->sa", np.conj(lift.frames[:-1]), lift.frames[1:])
    assert np.max(np.abs(np.angle(ov))) < 1e-12
    from holonomy.states import project_batch
    assert np.max(np.abs(project_batch(lift.frames, path.weights) - path.rho)) < 1e-12


def test_lift_self_convergence_on_bloch_circle():
    theta = 1.1

    def holonomy(steps):
        path = bloch_circle(theta, steps=steps)
        lift = horizontal_lift(path, path.frames[0])
        return np.angle(np.vdot(lift.frames[0, :, 0], lift.frames[-1, :, 0]))

    assert abs(holonomy(10**4) - holonomy(10**5)) < 1e-5


def test_lift_rejects_wrong_initial_frame():
    path, frame = _constant_loop()
    with pytest.raises(ContractError):
        horizontal_lift(path, np.eye(3, 2)[:, [1, 0]])


# -- accumulated phases -------------------------------------------------------------------


def test_constant_loop_has_zero_phases():
    path, _ = _constant_loop()
    assert geometric_phases(path).per_level == (0.0, 0.0)


def test_bloch_hemisphere_pure():
    rep = geometric_phases(bloch_circle(np.pi / 2, steps=1000))
    assert rep.per_level[0] == pytest.approx(-np.pi, abs=1e-6)
    assert rep.converged


@pytest.mark.parametrize("theta", [np.pi / 2, np.pi / 3, 2.5])
def test_bloch_mixed_antipodal_levels(theta):
    rep = geometric_phases(bloch_circle(theta, (0.7, 0.3), steps=1000))
    c = np.cos(theta)
    np.testing.assert_allclose(rep.per_level, [-np.pi * (1 - c), -np.pi * (1 + c)], atol=2e-6)
    assert rep.weighted == pytest.approx(-np.pi * (1 - 0.4 * c), abs=2e-6)


def test_phases_are_accumulated_not_reduced():
    rep = geometric_phases(bloch_circle(3.0, steps=1000))
    assert rep.per_level[0] < -np.pi


def test_open_path_rejected():
    path = DiscretizedPath.from_frames([0, 1], np.eye(2)[None, :, :1].repeat(2, 0), (1.0,))
    with pytest.raises(ContractError):
        geometric_phases(path)


def test_large_step_is_rejected():
    path = bloch_circle(np.pi / 2, steps=2)
    with pytest.raises(StepTooLargeError):
        geometric_phases(path, refine=False)


def test_column_swap_detected():
    rho_a = np.diag([0.7, 0.3, 0]).astype(complex)
    s = np.linspace(0, 1, 5)
    theta = np.pi / 2 * s
    rho = []
    for t in theta:
        u = expm(-1j * t * np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]]))
        rho.append(u @ rho_a @ dagger(u))
    rho = np.array(rho)
    # the spectrum stays ordered, so the gauge frames follow continuously
    path = DiscretizedPath(s=s, rho=rho, weights=(0.7, 0.3))
    from holonomy.transport import gauge_frames
    gauge_frames(path)
    swapped = DiscretizedPath(s=[0, 1], rho=[np.diag([0.7, 0.3, 0]), np.diag([0.3, 0.7, 0])],
                              weights=(0.7, 0.3))
    with pytest.raises(Exception):
        gauge_frames(swapped)


@given(seeds, st.lists(st.floats(-np.pi, np.pi), min_size=2, max_size=2))
def test_gauge_invariance(seed, phases):
    path = random_orbit_loop((0.6, 0.4), 3, 2, seed=seed, steps=200)
    base = geometric_phases(path, refine=False).per_level
    dressed = DiscretizedPath(s=path.s, rho=path.rho, weights=path.weights, closed=True,
                              frames=path.frames * np.exp(1j * np.array(phases)))
    assert np.max(np.abs(np.subtract(geometric_phases(dressed, refine=False).per_level, base))) < 1e-12
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(-0.01, 0.01, (len(path.s), 2)).cumsum(axis=0)
    alpha[-1] = alpha[0]
    local = DiscretizedPath(s=path.s, rho=path.rho, weights=path.weights, closed=True,
                            frames=path.frames * np.exp(1j * alpha)[:, None, :])
    assert np.max(np.abs(np.subtract(geometric_phases(local, refine=False).per_level, base))) < 1e-12


def test_spectral_gauge_agrees_with_carried_frames():
    path = random_orbit_loop((0.6, 0.4), 3, 2, seed=9, steps=2000)
    bare = DiscretizedPath(s=path.s, rho=path.rho, weights=path.weights, closed=True)
    a = geometric_phases(path, refine=False).per_level
    b = geometric_phases(bare, refine=False).per_level
    diff = np.subtract(a, b)
    assert np.max(np.abs(diff - 2 * np.pi * np.round(diff / (2 * np.pi)))) < 1e-10


@given(seeds)
def test_reparametrisation_invariance(seed):
    path = random_orbit_loop((0.6, 0.4), 3, 2, seed=seed, steps=200)
    cubed = path.resample(np.linspace(0, 1, 201) ** 3)
    a, b = geometric_phases(path), geometric_phases(cubed)
    assert np.max(np.abs(np.subtract(a.per_level, b.per_level))) < 1e-6


@given(seeds)
def test_orientation_reversal(seed):
    path = random_orbit_loop((0.5, 0.3, 0.2), 4, 2, seed=seed, steps=200)
    a, b = geometric_phases(path), geometric_phases(path.reversed())
    assert np.max(np.abs(np.add(a.per_level, b.per_level))) < 1e-6


@given(seeds)
def test_concatenation_adds(seed):
    rng = np.random.default_rng(seed)
    psi0 = random_frame(3, 2, rng)
    c1 = random_orbit_loop((0.6, 0.4), 3, 2, frame0=psi0, rng=rng, steps=400)
    c2 = random_orbit_loop((0.6, 0.4), 3, 2, frame0=psi0, rng=rng, steps=400)
    w1 = geometric_phases(c1, refine=False).weighted
    w2 = geometric_phases(c2, refine=False).weighted
    assert abs(geometric_phases(c1.then(c2), refine=False).weighted - (w1 + w2)) < 1e-10


@given(seeds)
def test_full_rank_qubit_levels_cancel(seed):
    rep = geometric_phases(random_orbit_loop((0.7, 0.3), 2, 3, seed=seed, steps=200))
    assert abs(sum(rep.per_level)) < 1e-6


# -- area identity ------------------------------------------------------------------------------


def test_area_identity_constant():
    path, frame = _constant_loop()
    rho = path.rho[0]
    surf = ParametrizedSurface(weights=path.weights, n=3,
                               map=lambda u, v: np.broadcast_to(rho, (len(u), len(v), 3, 3)).copy())
    assert verify_area_identity(path, surf) == (0.0, 0.0, 0.0)


@pytest.mark.parametrize("n,w", [(3, (0.6, 0.4)), (3, (1.0,)), (2, (1.0,)), (4, (0.6, 0.4))])
def test_area_identity_cone(n, w):
    path = random_orbit_loop(w, n, 3, seed=n, steps=500)
    surf = cone_surface(path.meta["loop_generator"], path.rho[0], path.weights)
    lhs, rhs, residual = verify_area_identity(path, surf)
    assert residual < 1e-4


def test_area_identity_pure_cap():
    path = bloch_circle(np.pi / 3)
    lhs, rhs, residual = verify_area_identity(path, bloch_cap(np.pi / 3))
    assert lhs == pytest.approx(-np.pi / 2, abs=1e-6) and residual < 1e-5


def test_area_identity_rejects_unrelated_surface():
    path = bloch_circle(np.pi / 3)
    with pytest.raises(ContractError):
        verify_area_identity(path, bloch_cap(np.pi / 4))


# -- path-ordered exponential and holonomy ----------------------------------------------------


def test_poe_trivial_and_commuting():
    s = np.linspace(0, 1, 11)
    assert np.max(np.abs(path_ordered_exp((s, np.zeros((11, 2, 2)))) - np.eye(2))) == 0
    k = np.array([[0.3, 0.2 - 0.1j], [0.2 + 0.1j, -0.5]])
    out = path_ordered_exp([(t, k) for t in s])
    assert np.max(np.abs(out - expm(-1j * k))) < 1e-13


def test_poe_ordering():
    a, b = 0.7 * SX, 0.9 * SZ
    s = np.linspace(0, 2, 2001)
    mats = np.where((s < 1 - 1e-9)[:, None, None], a, b)
    out = path_ordered_exp((s, mats), method="product")
    want = expm(-1j * b) @ expm(-1j * a)
    assert np.max(np.abs(out - want)) < 1e-12
    assert np.max(np.abs(out - expm(-1j * (a + b)))) > 0.1


def _smooth_coefficient(s):
    return np.cos(3 * s)[:, None, None] * SX + (s**2)[:, None, None] * SZ


def test_poe_first_order_self_convergence():
    ref = path_ordered_exp((np.linspace(0, 1, 2**16 + 1), _smooth_coefficient(np.linspace(0, 1, 2**16 + 1))),
                           method="product")
    errs = []
    for n in (64, 128, 256):
        s = np.linspace(0, 1, n + 1)
        errs.append(np.max(np.abs(path_ordered_exp((s, _smooth_coefficient(s)), method="product") - ref)))
    assert errs[0] / errs[1] >= 1.9 and errs[1] / errs[2] >= 1.9


def test_poe_contracts():
    with pytest.raises(ContractError):
        path_ordered_exp([])
    with pytest.raises(ContractError):
        path_ordered_exp([(0, SX), (0, SX)])
    with pytest.raises(ContractError):
        path_ordered_exp([(0, SX), (1, SX)], method="magnus")


def test_holonomy_constant_is_identity():
    path, _ = _constant_loop()
    np.testing.assert_allclose(holonomy_of_loop(path), np.eye(2), atol=1e-15)


def test_holonomy_matches_phases_and_squares():
    path = random_orbit_loop((0.6, 0.4), 3, 2, seed=12, steps=4000)
    phases = np.array(geometric_phases(path).per_level)
    hol = holonomy_of_loop(path)
    assert np.max(np.abs(hol - np.diag(np.exp(1j * phases)))) < 1e-5
    assert np.max(np.abs(holonomy_of_loop(path.then(path)) - hol @ hol)) < 1e-5


def test_holonomy_custom_coefficient():
    path = bloch_circle(1.0, steps=1000)
    out = holonomy_of_loop(path, coefficient=lambda s: np.broadcast_to(SZ, (len(s), 2, 2)))
    assert np.max(np.abs(out - expm(-1j * SZ))) < 1e-12


# -- Hamiltonian loops ---------------------------------------------------------------------------


def test_hamiltonian_commuting_is_constant():
    rho0 = np.diag([0.6, 0.4, 0.0]).astype(complex)
    path = hamiltonian_loop(np.diag([1.0, 2.0, 3.0]), rho0, 2 * np.pi, steps=50)
    assert np.max(np.abs(path.rho - rho0)) < 1e-14
    assert np.allclose(geometric_phases(path).per_level, 0, atol=1e-12)


def test_hamiltonian_commensurate_loop_closes(rng):
    from holonomy.states import random_unitary
    v = random_unitary(3, rng)
    psi0 = v[:, :2]
    rho0 = project(psi0, (0.6, 0.4))
    h = random_unitary(3, rng) @ np.diag([1.0, 2.0, 3.0]) @ dagger(random_unitary(3, np.random.default_rng(1)))
    u = random_unitary(3, rng)
    h = u @ np.diag([1.0, 2.0, 3.0]) @ dagger(u)
    path = hamiltonian_loop(h, rho0, 2 * np.pi, steps=200)
    assert path.closed
    path.check_orbit()


def test_hamiltonian_block_loop_phase():
    h = np.pi * np.array([[1, 1, 0], [1, 1, 0], [0, 0, 2]], dtype=complex)
    a = 0.4
    frame = np.array([[np.cos(a), 0], [0, 1], [np.sin(a), 0]], dtype=complex)
    path = hamiltonian_loop(h, project(frame, (0.6, 0.4)), 1.0)
    # U(T) = 1, so the phase is minus the dynamical phase -T<psi_a|H|psi_a>, reduced mod 2 pi
    energy = np.real(np.einsum("ia,ij,ja->a", np.conj(frame), h, frame))
    got = np.array(geometric_phases(path).per_level)
    assert np.all(np.abs(got) <= np.pi + 1e-9)
    assert np.max(np.abs(np.angle(np.exp(1j * (got - energy))))) < 1e-6


def test_hamiltonian_frames_are_horizontal():
    h = np.pi * np.array([[1, 1, 0], [1, 1, 0], [0, 0, 2]], dtype=complex)
    path = hamiltonian_loop(h, np.diag([0.6, 0.4, 0.0]), 1.0, steps=400)
    ov = np.einsum("sia,sia->sa", np.conj(path.frames[:-1]), path.frames[1:])
    assert np.max(np.abs(np.angle(ov))) < 1e-12


def test_hamiltonian_non_cyclic_rejected():
    with pytest.raises(ContractError):
        hamiltonian_loop(np.pi * np.array([[0, 1], [1, 0]]) * 0.3, np.diag([1.0, 0.0]), 1.0)
