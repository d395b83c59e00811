"""Bargmann invariants, null phase curves, Pancharatnam lifts and open-curve phases.

Every quantity here is computed per spectral level ``a``: the curve
``rho(s)`` is split into the rank-one projectors ``P_a(s) = psi_a psi_a^dag``
of its eigenvectors, and the checks apply to each family separately.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import dagger, unitary_log
from .errors import ClosureUnavailable, ContractError, LiftUndefinedError
from .geometry import ParametrizedSurface, omega_density
from .paths import DiscretizedPath
from .states import SpectralWeights, check_frame, project_batch, spectral_frames_batch
from .transport import gauge_frames, step_overlaps

__all__ = [
    "CurveClass",
    "NPMReport",
    "bargmann3",
    "classify_curve",
    "pancharatnam_lift",
    "line_integral_A",
    "open_curve_phases",
    "gp_open_curve",
    "nonadditivity_check",
    "npm_check",
    "geodesic_path",
    "unitary_segment",
    "npc_closure",
    "random_triangle",
    "real_span_patch",
    "generic_patch",
]

PROJECTOR_TOL = 1e-10
RE_TOL = 1e-10
IM_REL_TOL = 1e-8
MAX_TRIPLE_POINTS = 30


def bargmann3(p1, p2, p3) -> complex:
    """``Tr(P1 P2 P3)`` for three rank-one projectors."""
    mats = [np.asarray(p, dtype=complex) for p in (p1, p2, p3)]
    for i, p in enumerate(mats, 1):
        if p.ndim != 2 or p.shape[0] != p.shape[1] or p.shape != mats[0].shape:
            raise ContractError(f"P{i} must be a square matrix of the common size")
        if np.max(np.abs(p - dagger(p))) > PROJECTOR_TOL or np.max(np.abs(p @ p - p)) > PROJECTOR_TOL:
            raise ContractError(f"P{i} is not an orthogonal projector")
        if abs(np.trace(p).real - 1.0) > PROJECTOR_TOL:
            raise ContractError(f"P{i} does not have rank one")
    return complex(np.trace(mats[0] @ mats[1] @ mats[2]))


def _real_positive(z: np.ndarray, re_tol: float = RE_TOL) -> np.ndarray:
    re = np.real(z)
    return (re > re_tol) & (np.abs(np.imag(z)) / np.maximum(re, re_tol) < IM_REL_TOL)


def _subsample_index(count: int, limit: int = MAX_TRIPLE_POINTS) -> np.ndarray:
    return np.unique(np.round(np.linspace(0, count - 1, min(limit, count))).astype(int))


def _triple_products(frames: np.ndarray) -> np.ndarray:
    """``(u_i, u_j)(u_j, u_l)(u_l, u_i)`` per level; frames (m, n, k) -> (k, m, m, m)."""
    g = np.einsum("ina,jna->aij", np.conj(frames), frames)
    return g[:, :, :, None] * g[:, None, :, :] * np.swapaxes(g, 1, 2)[:, :, None, :]


@dataclass(frozen=True)
class CurveClass:
    """Classification of a sampled curve.

    ``classification`` is ``"NPC"``, ``"classII"``, ``"classI"`` or ``"invalid"``;
    ``witness`` describes the first failed condition (None for NPC).
    """

    classification: str
    witness: dict | None = None

    def to_json(self) -> dict:
        return {"class": self.classification, "witness": self.witness}


def classify_curve(path: DiscretizedPath, tol: float = RE_TOL) -> CurveClass:
    """Strongest of NPC > classII > classI that the sampled curve satisfies.

    classI: endpoint overlaps nonzero on every level. classII: every pair of
    samples has nonzero overlap. NPC: every triple of (at most 30 evenly
    subsampled) samples has a real positive Bargmann invariant.
    """
    u = gauge_frames(path)
    s = path.s
    end = np.abs(np.einsum("ia,ia->a", np.conj(u[0]), u[-1]))
    if np.any(end <= tol):
        a = int(np.argmax(end <= tol))
        return CurveClass("invalid", {"condition": "classI", "level": a, "s": [float(s[0]), float(s[-1])],
                                      "overlap": float(end[a])})
    gram = np.abs(np.einsum("ina,jna->aij", np.conj(u), u))
    bad = np.argwhere(gram <= tol)
    if bad.size:
        a, i, j = map(int, bad[0])
        return CurveClass("classI", {"condition": "classII", "level": a, "s": [float(s[i]), float(s[j])],
                                     "overlap": float(gram[a, i, j])})
    idx = _subsample_index(len(s))
    trip = _triple_products(u[idx])
    bad = np.argwhere(~_real_positive(trip, tol))
    if bad.size:
        a, i, j, l = map(int, bad[0])
        z = trip[a, i, j, l]
        return CurveClass("classII", {"condition": "NPC", "level": a,
                                      "s": [float(s[idx[i]]), float(s[idx[j]]), float(s[idx[l]])],
                                      "bargmann": [float(z.real), float(z.imag)]})
    return CurveClass("NPC")


def pancharatnam_lift(path: DiscretizedPath, reference=None, tol: float = 1e-8) -> DiscretizedPath:
    """Lift in which every column is in phase with the reference column.

    ``psi_a(s) = P_a(s) psi_a^0 / sqrt(Tr(P_a^0 P_a(s)))`` where ``P_a`` are
    the rank-one spectral projectors. ``reference`` defaults to the gauge
    frame at the first sample.
    """
    u = gauge_frames(path)
    if reference is None:
        psi0 = u[0]
    else:
        psi0 = check_frame(reference)
        if psi0.shape != u[0].shape:
            raise ContractError(f"reference has shape {psi0.shape}, expected {u[0].shape}")
        if np.any(np.abs(np.abs(np.einsum("ia,ia->a", np.conj(u[0]), psi0)) - 1.0) > 1e-8):
            raise ContractError("reference frame does not project onto the start of the path")
    ov = np.einsum("sia,ia->sa", np.conj(u), psi0)  # (u_a(s), psi_a^0)
    small = np.abs(ov) <= tol
    if np.any(small):
        i, a = map(int, np.argwhere(small)[0])
        raise LiftUndefinedError(f"Tr(P^0 P(s)) vanishes at s={path.s[i]:g} on level {a}", s=float(path.s[i]), level=a)
    lifted = u * (ov / np.abs(ov))[:, None, :]
    return DiscretizedPath(s=path.s.copy(), rho=path.rho.copy(), weights=path.weights, frames=lifted,
                           closed=path.closed, meta=dict(path.meta))


def line_integral_A(path: DiscretizedPath) -> np.ndarray:
    """``int A^(a)`` along the path's frames, as the sum of per-step overlap arguments."""
    if path.frames is None:
        raise ContractError("line_integral_A needs a path of frames (a lift)")
    if path.steps == 0:
        return np.zeros(path.k)
    return np.sum(np.angle(step_overlaps(path.frames)), axis=0)


def open_curve_phases(path: DiscretizedPath, tol: float = RE_TOL) -> np.ndarray:
    """Per-level ``arg(psi_a(s_1), psi_a(s_2)) - int A^(a)`` in the path's gauge."""
    u = gauge_frames(path)
    end = np.einsum("ia,ia->a", np.conj(u[0]), u[-1])
    if np.any(np.abs(end) <= tol):
        a = int(np.argmax(np.abs(end) <= tol))
        raise ContractError(f"curve is not class I: endpoint overlap vanishes on level {a}")
    lifted = DiscretizedPath(s=path.s, rho=path.rho, weights=path.weights, frames=u)
    return np.angle(end) - line_integral_A(lifted)


def gp_open_curve(path: DiscretizedPath, tol: float = RE_TOL) -> float:
    """Weighted geometric phase ``sum_a kappa_a [arg(psi_a(s1), psi_a(s2)) - int A^(a)]``.

    Independent of the lift; equal to the accumulated weighted phase when the
    path is closed.
    """
    return float(np.dot(path.weights.as_array(), open_curve_phases(path, tol)))


def _wrap(x):
    return np.angle(np.exp(1j * np.asarray(x)))


def nonadditivity_check(p1: DiscretizedPath, p2: DiscretizedPath, p3: DiscretizedPath, chain_tol: float = 1e-9):
    """Both sides of the triangle relation for open-curve phases.

    ``lhs`` is the phase of the closed loop p1 p2 p3; ``rhs`` is the sum of the
    three open-curve phases minus ``sum_a kappa_a arg Tr(P_a(1) P_a(2) P_a(3))``
    at the vertices. Each level of the rhs is shifted by the multiple of 2 pi
    that brings it closest to the lhs, since open-curve phases are only
    defined modulo 2 pi. Returns ``(lhs, rhs, residual)``.
    """
    for a, b, name in ((p1, p2, "p1 -> p2"), (p2, p3, "p2 -> p3"), (p3, p1, "p3 -> p1")):
        if a.weights != b.weights:
            raise ContractError("triangle sides lie on different orbits")
        if np.max(np.abs(a.rho[-1] - b.rho[0])) > chain_tol:
            raise ContractError(f"triangle does not chain at {name}")
    loop = p1.then(p2).then(p3)
    lhs_levels = open_curve_phases(loop)
    vertices = [gauge_frames(p)[0] for p in (p1, p2, p3)]
    bargmann = np.array([
        np.vdot(vertices[0][:, a], vertices[1][:, a]) * np.vdot(vertices[1][:, a], vertices[2][:, a])
        * np.vdot(vertices[2][:, a], vertices[0][:, a])
        for a in range(p1.k)
    ])
    rhs_levels = sum(open_curve_phases(p) for p in (p1, p2, p3)) - np.angle(bargmann)
    rhs_levels = lhs_levels - _wrap(lhs_levels - rhs_levels)
    kappa = p1.weights.as_array()
    lhs, rhs = float(kappa @ lhs_levels), float(kappa @ rhs_levels)
    return lhs, rhs, abs(lhs - rhs)


@dataclass(frozen=True)
class NPMReport:
    isotropic: bool
    npm: bool
    pancharatnam_exact: bool
    max_omega: float = 0.0
    witness: dict | None = field(default=None)

    def to_json(self) -> dict:
        return {"isotropic": self.isotropic, "npm": self.npm, "pancharatnam_exact": self.pancharatnam_exact,
                "max_omega": self.max_omega, "witness": self.witness}


def npm_check(patch, samples: int = 9, *, weights=None, iso_tol: float = 1e-8) -> NPMReport:
    """Isotropy, null-phase and exact-Pancharatnam tests for a two-parameter patch.

    ``patch`` is a :class:`ParametrizedSurface` (sampled on a ``samples`` x
    ``samples`` grid) or an array of density matrices of shape (nu, nv, n, n)
    together with ``weights``.
    """
    if isinstance(patch, ParametrizedSurface):
        weights = patch.weights
        t = np.linspace(0.0, 1.0, samples)
        grid = patch.evaluate(t, t)
    else:
        if weights is None:
            raise ContractError("npm_check needs weights for a raw grid")
        weights = SpectralWeights.coerce(weights)
        grid = np.asarray(patch, dtype=complex)
    if grid.ndim != 4:
        raise ContractError("patch grid must have shape (nu, nv, n, n)")
    nu, nv = grid.shape[:2]
    frames, _ = spectral_frames_batch(grid, weights.k)
    flat = frames.reshape(nu * nv, *frames.shape[2:])

    fid = np.einsum("pia,ia->pa", np.conj(flat), flat[0])
    if np.any(np.abs(fid) <= RE_TOL):
        p, a = map(int, np.argwhere(np.abs(fid) <= RE_TOL)[0])
        raise LiftUndefinedError(f"patch point {p} is orthogonal to the fiducial point on level {a}",
                                 s=float(p), level=a)

    max_omega = 0.0
    if nu > 1 and nv > 1:
        c = 0.25 * (grid[:-1, :-1] + grid[1:, :-1] + grid[:-1, 1:] + grid[1:, 1:])
        du = 0.5 * (grid[1:, :-1] + grid[1:, 1:] - grid[:-1, :-1] - grid[:-1, 1:]) * (nu - 1)
        dv = 0.5 * (grid[:-1, 1:] + grid[1:, 1:] - grid[:-1, :-1] - grid[1:, :-1]) * (nv - 1)
        max_omega = float(np.max(np.abs(omega_density(c, du, dv, weights))))
    isotropic = max_omega < iso_tol

    idx = _subsample_index(len(flat))
    trip = _triple_products(flat[idx])
    bad = np.argwhere(~_real_positive(trip))
    npm = bad.size == 0
    witness = None
    if not npm:
        a, i, j, l = map(int, bad[0])
        witness = {"condition": "NPM", "level": a, "points": [int(idx[i]), int(idx[j]), int(idx[l])]}

    lifted = flat * (fid / np.abs(fid))[:, None, :]
    gram = np.einsum("pia,qia->apq", np.conj(lifted[idx]), lifted[idx])
    exact = bool(np.all(_real_positive(gram)))
    return NPMReport(isotropic=bool(isotropic), npm=bool(npm), pancharatnam_exact=exact,
                     max_omega=max_omega, witness=witness)


# -- curve and patch fixtures ---------------------------------------------------


def geodesic_path(psi_a, psi_b, steps: int = 200) -> DiscretizedPath:
    """Great-circle arc between two non-orthogonal pure states (k = 1).

    The end vector is rephased so that its overlap with the start is real
    positive; the arc then stays in the real span of the two vectors.
    """
    a = np.asarray(psi_a, dtype=complex).reshape(-1)
    b = np.asarray(psi_b, dtype=complex).reshape(-1)
    a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
    ov = np.vdot(a, b)
    if abs(ov) <= RE_TOL:
        raise ContractError("geodesic endpoints are orthogonal")
    b = b * (abs(ov) / ov)
    angle = np.arccos(np.clip(abs(ov), -1.0, 1.0))
    perp = b - abs(ov) * a
    norm = np.linalg.norm(perp)
    perp = perp / norm if norm > 1e-15 else np.zeros_like(a)
    s = np.linspace(0.0, 1.0, steps + 1)
    frames = (np.cos(s * angle)[:, None] * a + np.sin(s * angle)[:, None] * perp)[:, :, None]
    return DiscretizedPath.from_frames(s, frames, (1.0,))


def unitary_segment(frame_a, frame_b, weights, steps: int = 200) -> DiscretizedPath:
    """Curve ``exp(-i t K) Psi_a``, t in [0, 1], ending exactly at ``Psi_b``.

    ``exp(-iK)`` is the unitary closest to the identity that maps the columns
    of the first frame onto those of the second (both completed to a basis).
    """
    weights = SpectralWeights.coerce(weights)
    pa, pb = check_frame(frame_a), check_frame(frame_b)
    ua, ub = _complete(pa), _complete(pb)
    # align the completions so the map is as small as possible on the complement
    k = pa.shape[1]
    if k < pa.shape[0]:
        m = dagger(ua[:, k:]) @ ub[:, k:]
        w, _, vh = np.linalg.svd(m)
        ub = np.concatenate([ub[:, :k], ub[:, k:] @ dagger(w @ vh)], axis=1)
    gen = unitary_log(ub @ dagger(ua))
    s = np.linspace(0.0, 1.0, steps + 1)
    lam, v = np.linalg.eigh(gen)

    def sampler(t):
        t = np.asarray(t, dtype=float)
        vt = (v * np.exp(-1j * t[..., None, None] * lam)) @ dagger(v)
        frames = vt @ pa
        return project_batch(frames, weights), frames

    rho, frames = sampler(s)
    frames[-1] = pb
    rho[-1] = project_batch(pb, weights)
    return DiscretizedPath(s=s, rho=rho, weights=weights, frames=frames, sampler=sampler)


def _complete(frame: np.ndarray) -> np.ndarray:
    n, k = frame.shape
    q, _ = np.linalg.qr(np.concatenate([frame, np.eye(n, dtype=complex)], axis=1))
    basis = q[:, :n]
    basis[:, :k] = frame
    rest = basis[:, k:] - frame @ (dagger(frame) @ basis[:, k:])
    basis[:, k:], _ = np.linalg.qr(rest)
    return basis


def npc_closure(path: DiscretizedPath, steps: int = 200) -> DiscretizedPath:
    """Close an open curve by per-level geodesics from its end back to its start.

    Only available when every level's endpoints are orthogonal to the other
    levels' endpoints, so that the column geodesics stay orthonormal;
    otherwise :class:`ClosureUnavailable` is raised. Returns the closed loop
    ``path`` followed by the closure.
    """
    u = gauge_frames(path)
    start, end = u[0], u[-1]
    k = path.k
    ends = np.concatenate([end, start], axis=1)
    cross = np.abs(dagger(ends) @ ends)
    same = np.zeros((2 * k, 2 * k), dtype=bool)
    for a in range(k):
        for i in (a, a + k):
            same[i, a] = same[i, a + k] = True
    if np.max(np.where(same, 0.0, cross)) > 1e-10:
        raise ClosureUnavailable("levels mix between the endpoints; no geodesic closure is available")
    cols = [geodesic_path(end[:, a], start[:, a], steps).frames[:, :, 0] for a in range(k)]
    frames = np.stack(cols, axis=-1)
    back = DiscretizedPath.from_frames(np.linspace(0.0, 1.0, steps + 1), frames, path.weights)
    if np.max(np.abs(back.rho[-1] - path.rho[0])) > 1e-9:
        raise ClosureUnavailable("geodesic closure does not return to the start")
    bare = DiscretizedPath(s=path.s, rho=path.rho, weights=path.weights, frames=u)
    return bare.then(back)


def random_triangle(n: int, weights, seed: int | None = None, *, scale: float = 0.4, steps: int = 200,
                    rng: np.random.Generator | None = None):
    """Three unitary segments through random nearby frames, forming a closed triangle."""
    from .algebra import expm_skew
    from .states import random_frame, random_hermitian

    weights = SpectralWeights.coerce(weights)
    rng = np.random.default_rng(seed) if rng is None else rng
    psi1 = random_frame(n, weights.k, rng)
    psi2 = expm_skew(scale * random_hermitian(n, rng)) @ psi1
    psi3 = expm_skew(scale * random_hermitian(n, rng)) @ psi1
    return (unitary_segment(psi1, psi2, weights, steps), unitary_segment(psi2, psi3, weights, steps),
            unitary_segment(psi3, psi1, weights, steps))


def real_span_patch(n: int, weights, seed: int | None = None, scale: float = 0.3) -> ParametrizedSurface:
    """Patch ``R(u,v) rho0 R(u,v)^T`` with real orthogonal ``R = exp(u A + v B)``.

    All frames are real, so every Bargmann invariant is real; for a small
    ``scale`` they are also positive.
    """
    from scipy.linalg import expm

    weights = SpectralWeights.coerce(weights)
    rng = np.random.default_rng(seed)
    gens = []
    for _ in range(2):
        m = rng.standard_normal((n, n))
        gens.append(scale * (m - m.T) / 2)
    rho0 = np.zeros((n, n), dtype=complex)
    rho0[np.arange(weights.k), np.arange(weights.k)] = weights.values

    def patch(u, v):
        out = np.empty((len(u), len(v), n, n), dtype=complex)
        for i, ui in enumerate(u):
            for j, vj in enumerate(v):
                r = expm(ui * gens[0] + vj * gens[1])
                out[i, j] = r @ rho0 @ r.T
        return out

    return ParametrizedSurface(weights=weights, n=n, map=patch, boundary=None, orientation=1)


def generic_patch(n: int, weights, seed: int | None = None, scale: float = 0.3) -> ParametrizedSurface:
    """Patch ``V rho0 V^dag`` with ``V = exp(i(u X1 + v X2))`` for random Hermitian X1, X2."""
    from .algebra import expm_skew
    from .states import random_frame, random_hermitian

    weights = SpectralWeights.coerce(weights)
    rng = np.random.default_rng(seed)
    psi0 = random_frame(n, weights.k, rng)
    x1, x2 = (scale * random_hermitian(n, rng) for _ in range(2))
    rho0 = project_batch(psi0, weights)

    def patch(u, v):
        out = np.empty((len(u), len(v), n, n), dtype=complex)
        for i, ui in enumerate(u):
            for j, vj in enumerate(v):
                w = expm_skew(ui * x1 + vj * x2, -1.0)
                out[i, j] = w @ rho0 @ dagger(w)
        return out

    return ParametrizedSurface(weights=weights, n=n, map=patch, boundary=None, orientation=1)
