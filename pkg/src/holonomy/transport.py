"""Horizontal lifts, accumulated per-level phases and path-ordered exponentials.

Phases are accumulated as sums of small per-step arguments and are never
reduced modulo 2 pi. The gauge in which they are accumulated is the frame
field carried by the path when present (e.g. ``V(s) Psi0`` for loops
generated by a unitary family), otherwise the phase-fixed spectral frames.
A gauge that is continuous and closes up reproduces the accumulated value;
the spectral gauge may jump by 2 pi at points where its phase convention
switches pivot, so without frames the result is only fixed modulo 2 pi.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .algebra import check_hermitian, dagger, expm_skew_batch
from .errors import ContractError, DegeneracyError, StepTooLargeError
from .geometry import ParametrizedSurface, surface_integral
from .paths import DiscretizedPath
from .states import SpectralWeights, check_frame, project, project_batch, spectral_frame, spectral_frames_batch

log = logging.getLogger(__name__)

__all__ = [
    "PhaseReport",
    "gauge_frames",
    "step_overlaps",
    "horizontal_lift",
    "geometric_phases",
    "verify_area_identity",
    "path_ordered_exp",
    "connection_coefficients",
    "holonomy_of_loop",
    "hamiltonian_loop",
    "bloch_circle",
    "bloch_cap",
]

MIN_OVERLAP = 0.1
PHASE_TOL = 1e-6
BOUNDARY_TOL = 1e-9
CYCLIC_TOL = 1e-10


@dataclass(frozen=True)
class PhaseReport:
    """Accumulated geometric phases of a closed loop, one per spectral level."""

    per_level: tuple[float, ...]
    weights: SpectralWeights
    steps: int
    dynamical_free: bool = True
    converged: bool = True
    change: float = 0.0
    weighted: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "per_level", tuple(float(p) for p in self.per_level))
        object.__setattr__(self, "weighted", float(np.dot(self.weights.as_array(), self.per_level)))

    def as_dict(self) -> dict:
        return {
            "per_level": list(self.per_level),
            "weights": list(self.weights.values),
            "weighted": self.weighted,
            "steps": self.steps,
            "dynamical_free": self.dynamical_free,
            "converged": self.converged,
            "change": self.change,
        }


def gauge_frames(path: DiscretizedPath) -> np.ndarray:
    """The frame field used for phase bookkeeping along ``path``.

    Carried frames are used as they are; otherwise the spectral frames are
    computed and checked for column swaps between consecutive samples.
    """
    if path.frames is not None:
        return path.frames
    frames, _ = spectral_frames_batch(path.rho, path.k)
    if path.steps:
        mod = np.abs(dagger(frames[:-1]) @ frames[1:])
        partner = np.argmax(mod, axis=-1)
        bad = np.nonzero(np.any(partner != np.arange(path.k), axis=-1))[0]
        if bad.size:
            raise DegeneracyError(f"eigenvector columns swap between samples {bad[0]} and {bad[0] + 1}")
    return frames


def step_overlaps(frames: np.ndarray) -> np.ndarray:
    """Per-level overlaps ``(u_a(s_i), u_a(s_{i+1}))``; shape (N, k).

    Raises :class:`StepTooLargeError` when one drops below 0.1 in modulus.
    """
    ov = np.einsum("sia,sia->sa", np.conj(frames[:-1]), frames[1:])
    small = np.abs(ov) < MIN_OVERLAP
    if np.any(small):
        i, a = map(int, np.argwhere(small)[0])
        raise StepTooLargeError(
            f"overlap {abs(ov[i, a]):.3g} between samples {i} and {i + 1} at level {a}; refine the path",
            index=i, level=a,
        )
    return ov


def _closure(frames: np.ndarray) -> np.ndarray:
    """Per-level ``arg(u_a(s_N), u_a(s_0))``."""
    return np.angle(np.einsum("ia,ia->a", np.conj(frames[-1]), frames[0]))


def horizontal_lift(path: DiscretizedPath, initial) -> DiscretizedPath:
    """Discrete horizontal lift starting at ``initial``.

    Each step takes the gauge frame at the next sample and rotates every
    column so that its overlap with the previous lifted column is real and
    positive.
    """
    psi0 = check_frame(initial)
    if psi0.shape != (path.n, path.k):
        raise ContractError(f"initial frame has shape {psi0.shape}, expected {(path.n, path.k)}")
    if np.max(np.abs(project(psi0, path.weights) - path.rho[0])) > 1e-10:
        raise ContractError("initial frame does not project onto the start of the path")
    u = gauge_frames(path)
    start = np.einsum("ia,ia->a", np.conj(u[0]), psi0)
    if np.any(np.abs(np.abs(start) - 1.0) > 1e-8):
        raise ContractError("initial frame differs from the path's frame by more than column phases")
    beta = np.zeros((path.steps + 1, path.k))
    if path.steps:
        beta[1:] = -np.cumsum(np.angle(step_overlaps(u)), axis=0)
    lifted = u * np.exp(1j * (beta + np.angle(start)))[:, None, :]
    return DiscretizedPath(s=path.s.copy(), rho=path.rho.copy(), weights=path.weights, frames=lifted,
                           closed=path.closed, meta=dict(path.meta))


def _accumulated(path: DiscretizedPath) -> np.ndarray:
    u = gauge_frames(path)
    if path.steps == 0:
        return np.zeros(path.k)
    return -(np.sum(np.angle(step_overlaps(u)), axis=0) + _closure(u))


def geometric_phases(
    path: DiscretizedPath,
    phase_tol: float = PHASE_TOL,
    *,
    refine: bool = True,
    max_steps: int = 2**18,
) -> PhaseReport:
    """Accumulated geometric phase ``phi^(a)`` of each level around a closed loop.

    ``phi^(a) = -[sum_i arg(u_a(s_i), u_a(s_{i+1})) + arg(u_a(s_N), u_a(s_0))]``
    in the path's gauge, which is the endpoint phase of the discrete
    horizontal lift. If the path has a sampler, steps are doubled until the
    per-level values change by less than ``phase_tol``.
    """
    if not path.closed:
        raise ContractError("geometric_phases needs a closed path")
    phases = _accumulated(path)
    steps, change, converged = path.steps, 0.0, True
    if refine and path.sampler is not None and path.steps:
        current = path
        converged = False
        while 2 * current.steps <= max_steps:
            current = current.refined(2)
            finer = _accumulated(current)
            change = float(np.max(np.abs(finer - phases)))
            phases, steps = finer, current.steps
            log.debug("geometric_phases steps=%d change=%.2e", steps, change)
            if change < phase_tol:
                converged = True
                break
        if not converged:
            log.warning("geometric_phases did not reach phase_tol=%g (last change %.2e)", phase_tol, change)
    return PhaseReport(per_level=tuple(phases), weights=path.weights, steps=steps, converged=converged, change=change)


def verify_area_identity(
    path: DiscretizedPath,
    surface: ParametrizedSurface,
    phase_tol: float = PHASE_TOL,
    quad_tol: float = 1e-6,
) -> tuple[float, float, float]:
    """Both sides of ``sum_a kappa_a phi^(a) = -(integral of Omega over S)``.

    Returns ``(weighted_phase, minus_area, residual)``.
    """
    if surface.boundary is None:
        raise ContractError("surface has no boundary edge to compare with the loop")
    if surface.weights != path.weights:
        raise ContractError("surface and path lie on different orbits")
    t = (path.s - path.s[0]) / (path.s[-1] - path.s[0]) if path.steps else np.zeros(1)
    mismatch = float(np.max(np.abs(surface.edge(t) - path.rho)))
    if mismatch > BOUNDARY_TOL:
        raise ContractError(f"surface boundary differs from the path by {mismatch:.2e}")
    report = geometric_phases(path, phase_tol)
    minus_area = -surface_integral(surface, quad_tol)
    return report.weighted, minus_area, abs(report.weighted - minus_area)


def path_ordered_exp(samples, method: str = "midpoint") -> np.ndarray:
    """Ordered product of step exponentials ``exp(-i M ds)``, later steps on the left.

    ``samples`` is a sequence of ``(s, M)`` pairs or a tuple of arrays
    ``(s, M)`` with M of shape (N+1, m, m). ``method="product"`` uses the
    coefficient at the start of each step, ``"midpoint"`` the average of its
    two end samples.
    """
    s, mats = _unpack_samples(samples)
    m = mats.shape[-1]
    if len(s) < 2:
        return np.eye(m, dtype=complex)
    if method == "product":
        step = mats[:-1]
    elif method == "midpoint":
        step = 0.5 * (mats[:-1] + mats[1:])
    else:
        raise ContractError(f"unknown method {method!r}; use 'product' or 'midpoint'")
    factors = expm_skew_batch(step, np.diff(s))
    return _ordered_product(factors)


def _unpack_samples(samples):
    if isinstance(samples, tuple) and len(samples) == 2 and np.ndim(samples[0]) == 1 and np.ndim(samples[1]) == 3:
        s, mats = samples
    else:
        samples = list(samples)
        if not samples:
            raise ContractError("path_ordered_exp needs at least one sample")
        s = [p[0] for p in samples]
        mats = [p[1] for p in samples]
    s = np.asarray(s, dtype=float)
    mats = check_hermitian(np.asarray(mats, dtype=complex), "coefficient")
    if np.any(np.diff(s) <= 0):
        raise ContractError("samples must be ordered by strictly increasing s")
    return s, mats


def _ordered_product(factors: np.ndarray) -> np.ndarray:
    # pairwise tree reduction keeps the left/right order and the rounding small
    while len(factors) > 1:
        if len(factors) % 2:
            factors = np.concatenate([factors, np.eye(factors.shape[-1])[None]])
        factors = factors[1::2] @ factors[0::2]
    return factors[0]


def connection_coefficients(path: DiscretizedPath, fd_step: float = 1e-6) -> np.ndarray:
    """``A^(a)(d/ds)`` of the gauge frames at each sample; shape (N+1, k).

    Uses central differences through the sampler when available, otherwise
    second-order differences of the samples.
    """
    if path.sampler is not None and path.frames is not None:
        _, up = path.sampler(path.s + fd_step)
        _, dn = path.sampler(path.s - fd_step)
        du = (up - dn) / (2 * fd_step)
        u = path.frames
    else:
        u = gauge_frames(path)
        du = np.gradient(u, path.s, axis=0, edge_order=2)
    return np.real(-1j * np.einsum("sia,sia->sa", np.conj(u), du))


def holonomy_of_loop(
    path: DiscretizedPath,
    coefficient: Callable[[np.ndarray], np.ndarray] | None = None,
    method: str = "midpoint",
) -> np.ndarray:
    """Holonomy element of a closed loop.

    With no ``coefficient`` this uses the U(1)^k connection ``diag(A^(a))`` in
    the path's gauge and returns ``diag(exp(i phi^(a)))``. A custom
    ``coefficient`` maps parameters to Hermitian matrices and the plain
    path-ordered exponential is returned.
    """
    if not path.closed:
        raise ContractError("holonomy_of_loop needs a closed path")
    if coefficient is not None:
        return path_ordered_exp((path.s, np.asarray(coefficient(path.s), dtype=complex)), method)
    if path.steps == 0:
        return np.eye(path.k, dtype=complex)
    a = connection_coefficients(path)
    mats = np.zeros((len(path.s), path.k, path.k), dtype=complex)
    idx = np.arange(path.k)
    mats[:, idx, idx] = a
    hol = path_ordered_exp((path.s, mats), method)
    return np.diag(np.exp(-1j * _closure(gauge_frames(path)))) @ hol


def hamiltonian_loop(h, rho0, T: float, steps: int = 2000, weights=None) -> DiscretizedPath:
    """Closed loop ``rho(s) = U(s) rho0 U(s)^dag`` with ``U(s) = exp(-i s T H)``, s in [0, 1].

    The path carries the horizontal frames ``U(s) psi_a exp(i s T E_a)`` with
    ``E_a = <psi_a|H|psi_a>`` (Psi0 the spectral frame of rho0). They do not
    close, so the phases come out as total minus dynamical phase, reduced to
    (-pi, pi]. The evolution must be cyclic: ``[exp(-i T H), rho0] = 0`` to 1e-10.
    """
    h = check_hermitian(h, "H")
    rho0 = np.asarray(rho0, dtype=complex)
    if weights is None:
        k = int(np.sum(np.linalg.eigvalsh(rho0) > 1e-10))
        psi0, weights = spectral_frame(rho0, k)
    else:
        weights = SpectralWeights.coerce(weights)
        psi0, _ = spectral_frame(rho0, weights.k)
    uT = expm_skew_batch(h, T)
    comm = float(np.linalg.norm(uT @ rho0 - rho0 @ uT))
    if comm > CYCLIC_TOL:
        raise ContractError(f"evolution is not cyclic: ||[U(T), rho0]|| = {comm:.2e}")

    # removing the dynamical phase s T <psi_a|H|psi_a> from U(s) psi_a makes each
    # column horizontal, so the closure term alone carries the phase
    energy = np.real(np.einsum("ia,ij,ja->a", np.conj(psi0), h, psi0))

    def sampler(s):
        s = np.asarray(s, dtype=float)
        frames = expm_skew_batch(np.broadcast_to(h, s.shape + h.shape), s * T) @ psi0
        frames = frames * np.exp(1j * T * s[..., None, None] * energy)
        return project_batch(frames, weights), frames

    path = DiscretizedPath.from_sampler(sampler, np.linspace(0.0, 1.0, steps + 1), weights, closed=True)
    path.meta.update({"generator": "hamiltonian_loop", "T": T})
    return path


def bloch_circle(theta: float, weights: Sequence[float] = (1.0,), steps: int = 2000) -> DiscretizedPath:
    """Latitude circle at polar angle theta on the Bloch sphere (n = 2).

    ``psi_1(s) = (cos(theta/2), e^{2 pi i s} sin(theta/2))``; for k = 2 the
    second level is the orthogonal, antipodal state. The gauge is
    ``diag(1, e^{2 pi i s}) Psi0``, which closes exactly at s = 1.
    """
    weights = SpectralWeights.coerce(weights)
    if weights.k > 2:
        raise ContractError("a Bloch circle supports k <= 2")
    c, sn = np.cos(theta / 2), np.sin(theta / 2)
    psi0 = np.array([[c, -sn], [sn, c]], dtype=complex)[:, : weights.k]

    def sampler(s):
        s = np.asarray(s, dtype=float)
        u = np.zeros(s.shape + (2, 2), dtype=complex)
        u[..., 0, 0] = 1.0
        u[..., 1, 1] = np.exp(2j * np.pi * s)
        frames = u @ psi0
        return project_batch(frames, weights), frames

    path = DiscretizedPath.from_sampler(sampler, np.linspace(0.0, 1.0, steps + 1), weights, closed=True)
    path.meta.update({"generator": "bloch_circle", "theta": theta})
    return path


def bloch_cap(theta: float, weights: Sequence[float] = (1.0,)) -> ParametrizedSurface:
    """Polar cap bounded by :func:`bloch_circle`: azimuth ``2 pi u``, polar angle ``v theta``.

    The loop is the ``v=1`` edge; ``v=0`` collapses to the pole and the edges
    ``u=0``, ``u=1`` coincide with opposite orientation.
    """
    weights = SpectralWeights.coerce(weights)

    def cap(u, v):
        half = 0.5 * theta * np.asarray(v, dtype=float)[None, :]
        ph = np.exp(2j * np.pi * np.asarray(u, dtype=float))[:, None]
        c, sn = np.cos(half) * np.ones_like(ph), np.sin(half) * ph
        frames = np.stack([np.stack([c, sn], -1), np.stack([-np.conj(sn), c], -1)], -1)[..., : weights.k]
        return project_batch(frames, weights)

    return ParametrizedSurface(weights=weights, n=2, map=cap, boundary="v=1")
