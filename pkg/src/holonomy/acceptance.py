"""Numerical acceptance checks shared by the test suite and ``holonomy selftest``.

Each check runs a batch of random or analytic instances, reports its worst
residual against a fixed threshold, and records its runtime against a
budget. ``reduced=True`` shrinks instance counts for the self-test; the
tolerances never change.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import algebra, geometry, npc, states, transport
from .errors import OutsideChartError
from .paths import DiscretizedPath

__all__ = ["CheckResult", "CHECKS", "run_checks", "bloch_oracle", "random_weights"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    criterion: int
    passed: bool
    value: float
    threshold: float
    comparison: str
    detail: str
    seconds: float
    budget: float

    @property
    def within_budget(self) -> bool:
        return self.seconds < self.budget

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (f"[{status}] {self.criterion:>2} {self.name:<16} value={self.value:.3e} "
                f"({self.comparison} {self.threshold:g}) {self.detail}  {self.seconds:.2f}s/{self.budget:g}s")


def random_weights(k: int, rng: np.random.Generator, gap: float = 0.05) -> states.SpectralWeights:
    """Strictly decreasing weights with consecutive gaps of at least ``gap``."""
    if k == 1:
        return states.SpectralWeights((1.0,))
    while True:
        w = np.sort(rng.dirichlet(np.ones(k)))[::-1]
        if np.all(-np.diff(w) > gap):
            w[-1] = 1.0 - w[:-1].sum()
            return states.SpectralWeights(tuple(w))


def _random_orbit_tangent(frame, weights, rng) -> geometry.OrbitTangent:
    return geometry.tangent_to_orbit(frame, weights, geometry.FrameTangent.random(frame, rng))


def _result(name, criterion, ok, value, threshold, comparison, detail, start, budget) -> CheckResult:
    return CheckResult(name=name, criterion=criterion, passed=bool(ok), value=float(value), threshold=threshold,
                       comparison=comparison, detail=detail, seconds=time.perf_counter() - start, budget=budget)


# 1 -----------------------------------------------------------------------------


def check_area_identity(reduced: bool = False) -> CheckResult:
    start = time.perf_counter()
    combos = [(2, 1), (3, 1), (3, 2), (4, 2)]
    count = 4 if reduced else 20
    worst = 0.0
    for i in range(count):
        n, k = combos[i % len(combos)]
        rng = np.random.default_rng(7000 + i)
        w = random_weights(k, rng)
        path = states.random_orbit_loop(w, n, modes=3, seed=7100 + i, steps=2000)
        surface = geometry.cone_surface(path.meta["loop_generator"], path.rho[0], w)
        _, _, res = transport.verify_area_identity(path, surface, phase_tol=1e-6, quad_tol=1e-6)
        worst = max(worst, res)
    return _result("area_identity", 1, worst < 1e-4, worst, 1e-4, "<", f"{count} loops", start, 30.0)


# 2 -----------------------------------------------------------------------------


def check_pullback(reduced: bool = False) -> CheckResult:
    start = time.perf_counter()
    per = 20 if reduced else 100
    rng = np.random.default_rng(2002)
    worst = 0.0
    for n, k in [(3, 2), (4, 2), (5, 2)]:
        for _ in range(per):
            w = random_weights(k, rng)
            psi = states.random_frame(n, k, rng)
            t1 = geometry.FrameTangent.random(psi, rng)
            t2 = geometry.FrameTangent.random(psi, rng)
            lhs, rhs = geometry.pullback_check(psi, w, t1, t2)
            rho = states.project(psi, w)
            k1 = geometry.generator_for(geometry.tangent_to_orbit(psi, w, t1))
            k2 = geometry.generator_for(geometry.tangent_to_orbit(psi, w, t2))
            worst = max(worst, abs(lhs - rhs), abs(lhs - geometry.kks_eval(rho, k1, k2)))
    return _result("pullback", 2, worst < 1e-10, worst, 1e-10, "<", f"{3 * per} pairs", start, 5.0)


# 3 -----------------------------------------------------------------------------


def check_kks_consistency(reduced: bool = False) -> CheckResult:
    start = time.perf_counter()
    count = 200 if reduced else 1000
    rng = np.random.default_rng(3003)
    worst = 0.0
    for i in range(count):
        n = 3 + i % 3
        w = random_weights(2, rng)
        psi = states.random_frame(n, 2, rng)
        t1, t2 = _random_orbit_tangent(psi, w, rng), _random_orbit_tangent(psi, w, rng)
        rho = states.project(psi, w)
        direct = geometry.kks_eval(rho, geometry.generator_for(t1), geometry.generator_for(t2))
        worst = max(worst, abs(direct - geometry.kks_closed_form(w, t1, t2)))
    return _result("kks_consistency", 3, worst < 1e-12, worst, 1e-12, "<", f"{count} pairs", start, 5.0)


# 4 -----------------------------------------------------------------------------


def bloch_oracle(theta: float, steps: int = 10**6) -> float:
    """Brute-force accumulated phase of the Bloch latitude circle.

    Builds ``(cos(theta/2), e^{2 pi i s} sin(theta/2))`` on a uniform grid,
    rotates every vector into phase with its predecessor and returns the
    accumulated phase, after checking it against the lifted endpoint.
    """
    s = np.linspace(0.0, 1.0, steps + 1)
    psi = np.stack([np.full(s.shape, np.cos(theta / 2), dtype=complex), np.exp(2j * np.pi * s) * np.sin(theta / 2)], -1)
    psi[-1] = psi[0]
    ov = np.sum(np.conj(psi[:-1]) * psi[1:], axis=-1)
    turn = np.cumprod(np.conj(ov) / np.abs(ov))
    endpoint = np.angle(np.vdot(psi[0], psi[-1] * turn[-1]))
    accumulated = -float(np.sum(np.angle(ov)))
    if abs(np.angle(np.exp(1j * (accumulated - endpoint)))) > 1e-8:
        raise AssertionError("oracle lift disagrees with its own accumulated phase")
    return accumulated


def check_bloch(reduced: bool = False) -> CheckResult:
    start = time.perf_counter()
    oracle_steps = 10**5 if reduced else 10**6
    lib_err = oracle_err = mixed_err = 0.0
    for theta in (np.pi / 6, np.pi / 3, np.pi / 2, 2 * np.pi / 3):
        oracle = bloch_oracle(theta, oracle_steps)
        lib = transport.geometric_phases(transport.bloch_circle(theta, (1.0,))).per_level[0]
        mixed = transport.geometric_phases(transport.bloch_circle(theta, (0.7, 0.3))).weighted
        lib_err = max(lib_err, abs(lib - oracle))
        oracle_err = max(oracle_err, abs(oracle + np.pi * (1 - np.cos(theta))))
        mixed_err = max(mixed_err, abs(mixed + np.pi * (1 - 0.4 * np.cos(theta))))
    ok = lib_err < 1e-5 and oracle_err < 1e-4 and mixed_err < 1e-4
    detail = f"oracle-vs-closed={oracle_err:.1e} mixed={mixed_err:.1e}"
    return _result("bloch_oracle", 4, ok, lib_err, 1e-5, "<", detail, start, 20.0)


# 5 -----------------------------------------------------------------------------


def _delta(a, b) -> float:
    return 1.0 if a == b else 0.0


def _J(n, j, k) -> np.ndarray:
    return np.array([[1j / np.sqrt(2) * (_delta(j, l) * _delta(k, m) - _delta(j, m) * _delta(k, l))
                      for m in range(n)] for l in range(n)])


def _Q(n, j, k) -> np.ndarray:
    return np.array([[1 / np.sqrt(2) * (_delta(j, l) * _delta(k, m) + _delta(j, m) * _delta(k, l))
                      for m in range(n)] for l in range(n)], dtype=complex)


def check_lie_algebra(reduced: bool = False) -> CheckResult:
    """Commutators and trace pairings of the J/Q generators, index by index."""
    start = time.perf_counter()
    worst = 0.0
    for n in (2, 3, 4, 5):
        idx = range(n)
        J = {(j, k): algebra.J_generator(n, j, k) for j in idx for k in idx}
        Q = {(j, k): algebra.Q_generator(n, j, k) for j in idx for k in idx}
        Jx = {key: _J(n, *key) for key in J}
        Qx = {key: _Q(n, *key) for key in Q}
        for j in idx:
            for k in idx:
                for l in idx:
                    for m in idx:
                        d = _delta
                        r = 1 / np.sqrt(2)
                        rhs_jj = r * (d(k, l) * Jx[j, m] - d(j, l) * Jx[k, m] + d(k, m) * Jx[l, j] - d(j, m) * Jx[l, k])
                        rhs_jq = r * (d(k, l) * Qx[j, m] - d(j, l) * Qx[k, m] + d(k, m) * Qx[j, l] - d(j, m) * Qx[k, l])
                        rhs_qq = r * (d(k, l) * Jx[m, j] + d(j, l) * Jx[m, k] + d(k, m) * Jx[l, j] + d(j, m) * Jx[l, k])
                        worst = max(
                            worst,
                            np.max(np.abs(-1j * algebra.commutator(J[j, k], J[l, m]) - rhs_jj)),
                            np.max(np.abs(-1j * algebra.commutator(J[j, k], Q[l, m]) - rhs_jq)),
                            np.max(np.abs(-1j * algebra.commutator(Q[j, k], Q[l, m]) - rhs_qq)),
                            abs(np.trace(J[j, k] @ J[l, m]) - (d(j, l) * d(k, m) - d(j, m) * d(k, l))),
                            abs(np.trace(J[j, k] @ Q[l, m])),
                            abs(np.trace(Q[j, k] @ Q[l, m]) - (d(j, l) * d(k, m) + d(j, m) * d(k, l))),
                        )
        basis = algebra.un_basis(n)
        worst = max(worst, np.max(np.abs(basis.trace_gram() - np.eye(n * n))))
    return _result("lie_algebra", 5, worst < 1e-14, worst, 1e-14, "<", "n=2..5", start, 2.0)


# 6 -----------------------------------------------------------------------------


def check_chart(reduced: bool = False) -> CheckResult:
    start = time.perf_counter()
    count = 40 if reduced else 200
    rng = np.random.default_rng(6006)
    worst = 0.0
    for i in range(count):
        n = 3 + i % 2
        ref = states.random_frame(n, 2, rng)
        psi = algebra.expm_skew(0.3 * states.random_hermitian(n, rng)) @ ref
        coords = geometry.chart_encode(ref, psi)
        back = geometry.chart_decode(ref, coords)
        again = geometry.chart_encode(ref, back)
        dalpha = np.angle(np.exp(1j * (again.alpha - coords.alpha)))
        worst = max(worst, np.max(np.abs(back - psi)), abs(again.z - coords.z),
                    np.max(np.abs(again.chi0 - coords.chi0)), np.max(np.abs(dalpha)))
    rejected = _chart_rejections()
    ok = worst < 1e-10 and all(rejected.values())
    detail = f"rejected {sum(rejected.values())}/{len(rejected)} out-of-domain inputs"
    return _result("chart_roundtrip", 6, ok, worst, 1e-10, "<", detail, start, 2.0)


def _chart_rejections() -> dict[str, bool]:
    eye = np.eye(4, dtype=complex)
    ref = eye[:, :2]
    cases = {
        "orthogonal_span": lambda: geometry.chart_encode(ref, eye[:, 2:]),
        "swapped_columns": lambda: geometry.chart_encode(ref, ref @ np.array([[0, 1], [-1, 0]], dtype=complex)),
        "z_outside": lambda: geometry.chart_decode(ref, geometry.ChartCoords(1.2, np.zeros((4, 2)), np.zeros(2))),
        "chi0_too_large": lambda: geometry.chart_decode(ref, geometry.ChartCoords(0.0, 1.1 * eye[:, 2:], np.zeros(2))),
    }
    out = {}
    for name, call in cases.items():
        try:
            call()
            out[name] = False
        except OutsideChartError:
            out[name] = True
    return out


# 7 -----------------------------------------------------------------------------


def _connection_along(psi0, k1, k2, e1, e2, which):
    """``A^(a)(d/d e_which)`` on ``Psi(e1, e2) = exp(-i e1 K1) exp(-i e2 K2) Psi0``."""
    u1, u2 = algebra.expm_skew(k1, e1), algebra.expm_skew(k2, e2)
    psi = u1 @ u2 @ psi0
    dpsi = -1j * k1 @ psi if which == 1 else u1 @ (-1j * k2) @ u2 @ psi0
    return geometry.connection_eval(psi, geometry.FrameTangent.from_matrix(psi, dpsi))


def _fd_dA(psi0, k1, k2, eps):
    d1 = (_connection_along(psi0, k1, k2, eps, 0, 2) - _connection_along(psi0, k1, k2, -eps, 0, 2)) / (2 * eps)
    d2 = (_connection_along(psi0, k1, k2, 0, eps, 1) - _connection_along(psi0, k1, k2, 0, -eps, 1)) / (2 * eps)
    return d1 - d2


def check_dA(reduced: bool = False) -> CheckResult:
    start = time.perf_counter()
    count = 10 if reduced else 50
    rng = np.random.default_rng(7007)
    eps = 0.02
    worst_ratio = np.inf
    for i in range(count):
        n = 3 + i % 3
        k = 2 if n == 3 or i % 2 else 3
        psi0 = states.random_frame(n, k, rng)
        k1, k2 = states.random_hermitian(n, rng), states.random_hermitian(n, rng)
        perp = np.eye(n) - psi0 @ algebra.dagger(psi0)
        t1 = geometry.FrameTangent(h=-algebra.dagger(psi0) @ k1 @ psi0, chi=-1j * perp @ k1 @ psi0)
        t2 = geometry.FrameTangent(h=-algebra.dagger(psi0) @ k2 @ psi0, chi=-1j * perp @ k2 @ psi0)
        exact = geometry.dA_closed_form(t1, t2)
        coarse = np.max(np.abs(_fd_dA(psi0, k1, k2, eps) - exact))
        fine = np.max(np.abs(_fd_dA(psi0, k1, k2, eps / 2) - exact))
        worst_ratio = min(worst_ratio, coarse / max(fine, 1e-300))
    return _result("dA_convergence", 7, worst_ratio >= 3.5, worst_ratio, 3.5, ">=", f"{count} configs", start, 5.0)


# 8 -----------------------------------------------------------------------------


def _block_geodesic(rng, steps=200) -> DiscretizedPath:
    """Rank-two curve in C^4 whose columns run along great circles in orthogonal planes."""
    s = np.linspace(0.0, 1.0, steps + 1)
    frames = np.zeros((steps + 1, 4, 2), dtype=complex)
    for a, (p, q) in enumerate(((0, 1), (2, 3))):
        angle = rng.uniform(0.2, 1.2)
        frames[:, p, a] = np.cos(angle * s)
        frames[:, q, a] = np.sin(angle * s) * np.exp(1j * rng.uniform(0, 2 * np.pi))
    # a global unitary keeps the planes orthogonal and the arcs geodesic
    return DiscretizedPath.from_frames(s, states.random_unitary(4, rng) @ frames, random_weights(2, rng))


def check_npc_suite(reduced: bool = False) -> CheckResult:
    start = time.perf_counter()
    rng = np.random.default_rng(8008)
    n_curves = 5 if reduced else 10
    curves = [npc.geodesic_path(states.random_frame(3 + i % 2, 1, rng), states.random_frame(3 + i % 2, 1, rng))
              for i in range(n_curves)]
    curves += [_block_geodesic(rng) for _ in range(n_curves // 2)]
    gp_worst = lift_worst = ref_worst = 0.0
    all_npc = True
    for c in curves:
        all_npc &= npc.classify_curve(c).classification == "NPC"
        gp_worst = max(gp_worst, abs(npc.gp_open_curve(c)))
        lift = npc.pancharatnam_lift(c)
        lift_worst = max(lift_worst, np.max(np.abs(npc.line_integral_A(lift))))
    # real positivity against the reference for generic class II curves too
    for i in range(n_curves):
        seg = npc.random_triangle(3 + i % 2, random_weights(2, rng), rng=rng, scale=0.3)[0]
        lift = npc.pancharatnam_lift(seg)
        ov = np.einsum("ia,sia->sa", np.conj(lift.frames[0]), lift.frames)
        ref_worst = max(ref_worst, np.max(np.abs(np.angle(ov))),
                        np.max(np.abs(states.project_batch(lift.frames, lift.weights) - seg.rho)))
    tri_worst = 0.0
    n_tri = 6 if reduced else 20
    for i in range(n_tri):
        n = 3 + i % 2
        tri = npc.random_triangle(n, random_weights(2, rng), rng=rng)
        tri_worst = max(tri_worst, npc.nonadditivity_check(*tri)[2])
    implication = True
    patches = [npc.real_span_patch(4, (0.6, 0.4), seed=s) for s in range(2 if reduced else 4)]
    patches += [npc.generic_patch(4, (0.6, 0.4), seed=s) for s in range(2 if reduced else 4)]
    point = np.diag([0.6, 0.4, 0, 0]).astype(complex)[None, None]
    reports = [npc.npm_check(p, samples=7) for p in patches] + [npc.npm_check(point, weights=(0.6, 0.4))]
    implication = all(r.isotropic or not r.npm for r in reports)
    ok = (all_npc and gp_worst < 1e-6 and lift_worst < 1e-6 and ref_worst < 1e-10 and tri_worst < 1e-5
          and implication)
    detail = (f"npc={all_npc} gp={gp_worst:.1e} intA={lift_worst:.1e} ref={ref_worst:.1e} "
              f"triangles={n_tri} npm=>iso={implication}")
    return _result("npc_suite", 8, ok, tri_worst, 1e-5, "<", detail, start, 30.0)


# 9 -----------------------------------------------------------------------------


def _smooth_coefficient(rng, n):
    a, b, c = (states.random_hermitian(n, rng) for _ in range(3))

    def coeff(s):
        s = np.asarray(s, dtype=float)[:, None, None]
        return a * np.cos(2 * np.pi * s) + b * np.sin(3 * s) + c * s
    return coeff


def check_holonomy(reduced: bool = False) -> CheckResult:
    start = time.perf_counter()
    rng = np.random.default_rng(9009)
    unit_worst = concat_worst = 0.0
    ratio = np.inf
    for _ in range(3 if reduced else 10):
        coeff = _smooth_coefficient(rng, 3)
        s = np.linspace(0.0, 2.0, 2001)
        m = coeff(s)
        u = transport.path_ordered_exp((s, m))
        unit_worst = max(unit_worst, np.max(np.abs(algebra.dagger(u) @ u - np.eye(3))))
        first = transport.path_ordered_exp((s[:1001], m[:1001]))
        second = transport.path_ordered_exp((s[1000:], m[1000:]))
        concat_worst = max(concat_worst, np.max(np.abs(second @ first - u)))
    for method in ("product", "midpoint"):
        coeff = _smooth_coefficient(rng, 3)
        ref_s = np.linspace(0.0, 1.0, 2**16 + 1)
        ref = transport.path_ordered_exp((ref_s, coeff(ref_s)), method)
        errs = []
        for steps in (64, 128):
            s = np.linspace(0.0, 1.0, steps + 1)
            errs.append(np.max(np.abs(transport.path_ordered_exp((s, coeff(s)), method) - ref)))
        ratio = min(ratio, errs[0] / errs[1])
    abel_worst = 0.0
    combos = [(2, 1), (3, 2), (4, 2)]
    for i in range(4 if reduced else 10):
        n, k = combos[i % 3]
        loop = states.random_orbit_loop(random_weights(k, rng), n, 3, seed=9100 + i, steps=2000)
        phases = np.array(transport.geometric_phases(loop).per_level)
        hol = transport.holonomy_of_loop(loop)
        diff = np.angle(np.diag(hol) * np.exp(-1j * phases))
        abel_worst = max(abel_worst, np.max(np.abs(diff)), np.max(np.abs(hol - np.diag(np.diag(hol)))))
    ok = unit_worst < 1e-12 and concat_worst < 1e-10 and ratio >= 1.9 and abel_worst < 1e-5
    detail = f"unitarity={unit_worst:.1e} concat={concat_worst:.1e} ratio={ratio:.2f}"
    return _result("holonomy", 9, ok, abel_worst, 1e-5, "<", detail, start, 10.0)


# 10 ----------------------------------------------------------------------------


def check_invariance(reduced: bool = False) -> CheckResult:
    start = time.perf_counter()
    count = 4 if reduced else 10
    combos = [(2, 1), (3, 1), (3, 2), (4, 2)]
    worst = {"gauge": 0.0, "reparam": 0.0, "orientation": 0.0, "concat": 0.0, "fiber": 0.0,
             "surface_flip": 0.0, "surface_reparam": 0.0}
    for i in range(count):
        n, k = combos[i % 4]
        rng = np.random.default_rng(10_000 + i)
        w = random_weights(k, rng)
        psi0 = states.random_frame(n, k, rng)
        loop = states.random_orbit_loop(w, n, 3, seed=10_100 + i, steps=2000, frame0=psi0)
        base = transport.geometric_phases(loop)
        ref = np.array(base.per_level)

        raw = transport.geometric_phases(loop, refine=False).per_level
        dressed = DiscretizedPath(s=loop.s, rho=loop.rho, weights=w, closed=True,
                                  frames=loop.frames * np.exp(1j * rng.uniform(0, 2 * np.pi, k)))
        worst["gauge"] = max(worst["gauge"], np.max(np.abs(
            np.array(transport.geometric_phases(dressed).per_level) - raw)))

        cubic = loop.resample(np.linspace(0.0, 1.0, 2001) ** 3)
        worst["reparam"] = max(worst["reparam"], np.max(np.abs(
            np.array(transport.geometric_phases(cubic).per_level) - ref)))

        back = transport.geometric_phases(loop.reversed())
        worst["orientation"] = max(worst["orientation"], np.max(np.abs(np.array(back.per_level) + ref)))

        other = states.random_orbit_loop(w, n, 3, seed=10_200 + i, steps=2000, frame0=psi0)
        a = transport.geometric_phases(loop, refine=False).weighted
        b = transport.geometric_phases(other, refine=False).weighted
        both = transport.geometric_phases(loop.then(other), refine=False).weighted
        worst["concat"] = max(worst["concat"], abs(both - a - b))

        phased = psi0 * np.exp(1j * rng.uniform(0, 2 * np.pi, k))
        worst["fiber"] = max(worst["fiber"], np.max(np.abs(states.project(phased, w) - states.project(psi0, w))))

        surface = geometry.cone_surface(loop.meta["loop_generator"], loop.rho[0], w)
        area = geometry.surface_integral(surface)
        worst["surface_flip"] = max(worst["surface_flip"], abs(geometry.surface_integral(surface.flipped()) + area))
        squared = surface.reparametrized(lambda u: u**2, lambda v: v)
        worst["surface_reparam"] = max(worst["surface_reparam"], abs(geometry.surface_integral(squared) - area))
    limits = {"gauge": 1e-12, "reparam": 1e-6, "orientation": 1e-6, "concat": 1e-6, "fiber": 1e-15,
              "surface_flip": 1e-6, "surface_reparam": 1e-6}
    ratio = max(worst[key] / limits[key] for key in limits)
    detail = " ".join(f"{key}={val:.1e}" for key, val in worst.items())
    return _result("invariance", 10, ratio < 1, ratio, 1.0, "< (worst/limit)", detail, start, 20.0)


CHECKS: dict[str, Callable[[bool], CheckResult]] = {
    "area_identity": check_area_identity,
    "pullback": check_pullback,
    "kks_consistency": check_kks_consistency,
    "bloch_oracle": check_bloch,
    "lie_algebra": check_lie_algebra,
    "chart_roundtrip": check_chart,
    "dA_convergence": check_dA,
    "npc_suite": check_npc_suite,
    "holonomy": check_holonomy,
    "invariance": check_invariance,
}


def run_checks(name_filter: str | None = None, reduced: bool = False) -> list[CheckResult]:
    names = [n for n in CHECKS if name_filter is None or name_filter in n]
    return [CHECKS[name](reduced) for name in names]
