"""Frames, spectral weights and density matrices on a coadjoint orbit.

A *frame* is an ``n x k`` complex array with orthonormal columns. A density
matrix of rank k with non-degenerate nonzero spectrum ``kappa`` is the image
``Psi kappa Psi^dag`` of a frame; the per-column phases of the frame are the
fibre over it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import dagger, expm_skew_batch
from .errors import ContractError, DegeneracyError, NotOnOrbitError

__all__ = [
    "SpectralWeights",
    "check_frame",
    "check_density",
    "check_orbit_point",
    "fix_phases",
    "project",
    "project_batch",
    "spectral_frame",
    "spectral_frames_batch",
    "dims",
    "random_frame",
    "random_hermitian",
    "random_unitary",
    "random_orbit_loop",
    "FRAME_TOL",
    "ORBIT_TOL",
    "GAP_TOL",
]

FRAME_TOL = 1e-12
DENSITY_TOL = 1e-12
ORBIT_TOL = 1e-9
GAP_TOL = 1e-8
NULL_TOL = 1e-10


@dataclass(frozen=True)
class SpectralWeights:
    """Strictly decreasing positive weights summing to one (the orbit label)."""

    values: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in np.atleast_1d(np.asarray(self.values, dtype=float)))
        object.__setattr__(self, "values", vals)
        if not vals:
            raise ContractError("weights: need at least one value")
        if not all(np.isfinite(vals)):
            raise ContractError("weights: non-finite value")
        if len(vals) > 1 and not all(0.0 < v < 1.0 for v in vals):
            raise ContractError(f"weights: values must lie in (0, 1), got {vals}")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise ContractError(f"weights: must be strictly decreasing, got {vals}")
        if abs(sum(vals) - 1.0) > 1e-12:
            raise ContractError(f"weights: must sum to 1, got sum {sum(vals)!r}")

    @property
    def k(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.array(self.values)

    def matrix(self) -> np.ndarray:
        return np.diag(self.as_array()).astype(complex)

    @classmethod
    def coerce(cls, w) -> "SpectralWeights":
        return w if isinstance(w, cls) else cls(tuple(np.atleast_1d(w)))


def check_frame(frame, tol: float = FRAME_TOL) -> np.ndarray:
    """Validate an ``n x k`` frame (orthonormal columns, 1 <= k <= n)."""
    psi = np.asarray(frame, dtype=complex)
    if psi.ndim == 1:
        psi = psi[:, None]
    if psi.ndim != 2:
        raise ContractError(f"frame must be a 2-D array, got shape {psi.shape}")
    n, k = psi.shape
    if not 1 <= k <= n:
        raise ContractError(f"frame needs 1 <= k <= n, got n={n}, k={k}")
    if not np.all(np.isfinite(psi)):
        raise ContractError("frame has non-finite entries")
    err = np.max(np.abs(dagger(psi) @ psi - np.eye(k)))
    if err > tol:
        raise ContractError(f"frame columns not orthonormal (error {err:.2e})")
    return psi


def check_density(rho, tol: float = DENSITY_TOL) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ContractError(f"density matrix must be square, got {rho.shape}")
    if np.max(np.abs(rho - dagger(rho))) > tol:
        raise ContractError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > tol:
        raise ContractError("density matrix does not have unit trace")
    if np.linalg.eigvalsh(rho)[0] < -tol:
        raise ContractError("density matrix has a negative eigenvalue")
    return rho


def check_orbit_point(rho, weights, tol: float = ORBIT_TOL) -> np.ndarray:
    """Validate that ``rho`` has nonzero spectrum ``weights`` and rank k."""
    weights = SpectralWeights.coerce(weights)
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ContractError(f"density matrix must be square, got {rho.shape}")
    if np.max(np.abs(rho - dagger(rho))) > tol:
        raise NotOnOrbitError("density matrix is not Hermitian")
    ev = np.linalg.eigvalsh(rho)[::-1]
    want = np.zeros(rho.shape[0])
    want[: weights.k] = weights.values
    if np.max(np.abs(ev - want)) > tol:
        raise NotOnOrbitError(f"spectrum {np.round(ev, 12)} differs from weights {weights.values}")
    return rho


def fix_phases(frame: np.ndarray) -> np.ndarray:
    """Make the largest-modulus entry of every column real positive.

    Ties (within 1e-12) go to the lowest index. Works on batches: the last
    two axes are ``(n, k)``.
    """
    psi = np.asarray(frame, dtype=complex)
    mod = np.abs(psi)
    top = np.max(mod, axis=-2, keepdims=True)
    idx = np.argmax(mod >= top - 1e-12, axis=-2)[..., None, :]
    pivot = np.take_along_axis(psi, idx, axis=-2)
    return psi * (np.abs(pivot) / pivot)


def project(frame, weights) -> np.ndarray:
    """``Psi kappa Psi^dag``: the density matrix a frame represents."""
    weights = SpectralWeights.coerce(weights)
    psi = check_frame(frame)
    if psi.shape[1] != weights.k:
        raise ContractError(f"frame has k={psi.shape[1]} columns but {weights.k} weights")
    rho = (psi * weights.as_array()) @ dagger(psi)
    return 0.5 * (rho + dagger(rho))


def project_batch(frames: np.ndarray, weights) -> np.ndarray:
    w = SpectralWeights.coerce(weights).as_array()
    rho = (frames * w) @ dagger(frames)
    return 0.5 * (rho + dagger(rho))


def spectral_frames_batch(rhos: np.ndarray, k: int, check: bool = True):
    """Eigenframes of a stack of density matrices, ordered by decreasing eigenvalue.

    Returns ``(frames, eigenvalues)`` with frames of shape ``(..., n, k)``
    after :func:`fix_phases`, and all n eigenvalues in decreasing order.
    """
    rhos = np.asarray(rhos, dtype=complex)
    ev, vecs = np.linalg.eigh(0.5 * (rhos + dagger(rhos)))
    ev = ev[..., ::-1]
    vecs = vecs[..., ::-1]
    n = rhos.shape[-1]
    if not 1 <= k <= n:
        raise ContractError(f"rank k={k} invalid for dimension n={n}")
    if check:
        top = ev[..., :k]
        if np.any(top <= GAP_TOL):
            raise DegeneracyError("a leading eigenvalue is not positive")
        if k > 1 and np.any(np.diff(top, axis=-1) > -GAP_TOL):
            raise DegeneracyError("nonzero eigenvalues are degenerate (gap < 1e-8)")
        if k < n and np.any(np.abs(ev[..., k:]) > NULL_TOL):
            raise NotOnOrbitError(f"density matrix has rank greater than {k}")
    return fix_phases(vecs[..., :k]), ev


def spectral_frame(rho, k: int) -> tuple[np.ndarray, SpectralWeights]:
    """Canonical decomposition ``rho = sum_a kappa_a psi_a psi_a^dag``.

    Eigenvectors are sorted by decreasing eigenvalue and phase-fixed by
    :func:`fix_phases`.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ContractError(f"density matrix must be square, got {rho.shape}")
    frame, ev = spectral_frames_batch(rho, k)
    top = ev[:k]
    return frame, SpectralWeights(tuple(top / top.sum()))


def dims(n: int, k: int) -> tuple[int, int]:
    """Real dimensions of the frame space and of the orbit for rank k in C^n."""
    if not 1 <= k < n:
        raise ContractError(f"need 1 <= k < n, got n={n}, k={k}")
    return k * (2 * n - k), k * (2 * n - k - 1)


def random_hermitian(n: int, rng: np.random.Generator, traceless: bool = False) -> np.ndarray:
    g = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    h = 0.5 * (g + dagger(g))
    if traceless:
        h -= np.trace(h) / n * np.eye(n)
    return h


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR with the diagonal phase correction."""
    g = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    q, r = np.linalg.qr(g)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_frame(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    return random_unitary(n, rng)[:, :k]


def random_orbit_loop(
    weights,
    n: int,
    modes: int,
    seed: int | None = None,
    *,
    steps: int = 2000,
    amplitude: float = 0.6,
    frame0=None,
    rng: np.random.Generator | None = None,
):
    """Closed loop ``rho(s) = V(s) rho0 V(s)^dag`` with ``V(s) = exp(i X(s))``.

    ``X(s) = sum_m sin(pi m s) X_m`` for random traceless Hermitian ``X_m``
    scaled by ``amplitude / m``, so ``X(0) = X(1) = 0`` and the loop closes
    exactly. The returned path carries the gauge frames ``V(s) Psi0``, which
    contract to the base point along the cone ``exp(i v X(s))``.

    Randomness comes from ``numpy.random.default_rng(seed)`` (PCG64). The
    draw order is: base frame (unless given), then ``X_1 .. X_modes``.
    """
    from .paths import DiscretizedPath

    weights = SpectralWeights.coerce(weights)
    if modes < 1:
        raise ContractError("modes must be >= 1")
    if rng is None:
        rng = np.random.default_rng(seed)
    if frame0 is None:
        psi0 = random_frame(n, weights.k, rng)
    else:
        psi0 = check_frame(frame0)
    xs = np.array([amplitude / m * random_hermitian(n, rng, traceless=True) for m in range(1, modes + 1)])
    generator = LoopGenerator(xs)

    def sampler(s):
        v = generator.unitary(s)
        frames = v @ psi0
        return project_batch(frames, weights), frames

    path = DiscretizedPath.from_sampler(sampler, np.linspace(0.0, 1.0, steps + 1), weights, closed=True)
    path.meta.update({"generator": "random_orbit_loop", "modes": modes, "seed": seed, "amplitude": amplitude})
    path.meta["loop_generator"] = generator
    path.meta["frame0"] = psi0
    return path


@dataclass(frozen=True)
class LoopGenerator:
    """Hermitian generator ``X(s) = sum_m sin(pi m s) X_m`` of a closed loop."""

    modes: np.ndarray

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        m = np.arange(1, len(self.modes) + 1)
        env = np.sin(np.pi * s[..., None] * m)
        return np.einsum("...m,mij->...ij", env, self.modes)

    def unitary(self, s, scale=1.0) -> np.ndarray:
        """``exp(i * scale * X(s))`` (batched over s and scale)."""
        return expm_skew_batch(self(s), -np.asarray(scale, dtype=float) * np.ones(np.shape(s)))
