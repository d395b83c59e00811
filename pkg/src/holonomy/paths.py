"""Sampled curves on an orbit, optionally carrying a gauge (frames) and a sampler."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .algebra import dagger
from .errors import ContractError, NotOnOrbitError
from .states import ORBIT_TOL, SpectralWeights, project_batch

__all__ = ["DiscretizedPath", "CLOSURE_TOL"]

CLOSURE_TOL = 1e-10

Sampler = Callable[[np.ndarray], "tuple[np.ndarray, np.ndarray | None]"]


@dataclass
class DiscretizedPath:
    """Ordered samples ``rho(s_i)`` of a curve on the orbit fixed by ``weights``.

    Attributes
    ----------
    s : (N+1,) strictly increasing parameters.
    rho : (N+1, n, n) density matrices.
    weights : the orbit label.
    frames : optional (N+1, n, k) lift of the samples. When present it is the
        gauge in which phases are accumulated; it must project onto ``rho``.
    closed : whether ``rho(s_N) == rho(s_0)``.
    sampler : optional vectorised callable ``s -> (rho, frames | None)`` that
        lets algorithms refine the sampling.
    """

    s: np.ndarray
    rho: np.ndarray
    weights: SpectralWeights
    frames: np.ndarray | None = None
    closed: bool = False
    sampler: Sampler | None = field(default=None, repr=False, compare=False)
    meta: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.weights = SpectralWeights.coerce(self.weights)
        self.s = np.asarray(self.s, dtype=float)
        self.rho = np.asarray(self.rho, dtype=complex)
        if self.s.ndim != 1 or len(self.s) < 1:
            raise ContractError("path: s must be a non-empty 1-D array")
        if self.rho.shape[:1] != self.s.shape or self.rho.ndim != 3:
            raise ContractError(f"path: rho shape {self.rho.shape} does not match {len(self.s)} samples")
        if np.any(np.diff(self.s) <= 0):
            raise ContractError("path: s must be strictly increasing")
        if self.k > self.n:
            raise ContractError("path: more weights than the Hilbert space dimension")
        if self.frames is not None:
            self.frames = np.asarray(self.frames, dtype=complex)
            if self.frames.shape != (len(self.s), self.n, self.k):
                raise ContractError(f"path: frames shape {self.frames.shape} is not (N+1, n, k)")
        if self.closed and np.max(np.abs(self.rho[-1] - self.rho[0])) > CLOSURE_TOL:
            raise ContractError("path flagged closed but rho(s_N) != rho(s_0)")

    # -- construction -------------------------------------------------------

    @classmethod
    def from_sampler(cls, sampler: Sampler, s, weights, closed: bool = False) -> "DiscretizedPath":
        s = np.asarray(s, dtype=float)
        rho, frames = sampler(s)
        if closed:
            rho = rho.copy()
            rho[-1] = rho[0]
        return cls(s=s, rho=rho, weights=weights, frames=frames, closed=closed, sampler=sampler)

    @classmethod
    def from_frames(cls, s, frames, weights, closed: bool = False) -> "DiscretizedPath":
        frames = np.asarray(frames, dtype=complex)
        rho = project_batch(frames, weights)
        if closed:
            rho[-1] = rho[0]
        return cls(s=s, rho=rho, weights=weights, frames=frames, closed=closed)

    @classmethod
    def constant(cls, rho, weights, steps: int = 1, frame=None) -> "DiscretizedPath":
        s = np.linspace(0.0, 1.0, steps + 1)
        rho = np.broadcast_to(np.asarray(rho, dtype=complex), (steps + 1,) + np.shape(rho)).copy()
        frames = None
        if frame is not None:
            frame = np.asarray(frame, dtype=complex)
            frames = np.broadcast_to(frame, (steps + 1,) + frame.shape).copy()
        return cls(s=s, rho=rho, weights=weights, frames=frames, closed=True)

    # -- shape ----------------------------------------------------------------

    @property
    def n(self) -> int:
        return self.rho.shape[-1]

    @property
    def k(self) -> int:
        return self.weights.k

    @property
    def steps(self) -> int:
        return len(self.s) - 1

    def __len__(self) -> int:
        return len(self.s)

    # -- transformations ------------------------------------------------------

    def check_orbit(self, tol: float = ORBIT_TOL) -> None:
        """Raise :class:`NotOnOrbitError` if any sample leaves the orbit."""
        ev = np.linalg.eigvalsh(0.5 * (self.rho + dagger(self.rho)))[:, ::-1]
        want = np.zeros(self.n)
        want[: self.k] = self.weights.values
        bad = np.max(np.abs(ev - want), axis=1)
        if np.any(bad > tol):
            i = int(np.argmax(bad))
            raise NotOnOrbitError(f"sample {i} (s={self.s[i]:g}) is off the orbit by {bad[i]:.2e}")

    def resample(self, s) -> "DiscretizedPath":
        if self.sampler is None:
            raise ContractError("path has no sampler; cannot resample")
        out = DiscretizedPath.from_sampler(self.sampler, s, self.weights, closed=self.closed)
        out.meta = dict(self.meta)
        return out

    def refined(self, factor: int = 2) -> "DiscretizedPath":
        """Same curve with each step split into ``factor`` pieces (needs a sampler)."""
        fine = np.interp(np.linspace(0, self.steps, factor * self.steps + 1), np.arange(self.steps + 1), self.s)
        return self.resample(fine)

    def subsample(self, stride: int) -> "DiscretizedPath":
        idx = np.arange(0, len(self.s), stride)
        if idx[-1] != len(self.s) - 1:
            idx = np.append(idx, len(self.s) - 1)
        return DiscretizedPath(
            s=self.s[idx], rho=self.rho[idx], weights=self.weights,
            frames=None if self.frames is None else self.frames[idx],
            closed=self.closed, sampler=self.sampler, meta=dict(self.meta),
        )

    def reversed(self) -> "DiscretizedPath":
        s = self.s[0] + self.s[-1] - self.s[::-1]
        sampler = None
        if self.sampler is not None:
            a, b, inner = self.s[0], self.s[-1], self.sampler

            def sampler(t):
                return inner(a + b - np.asarray(t, dtype=float))
        return DiscretizedPath(
            s=s, rho=self.rho[::-1].copy(), weights=self.weights,
            frames=None if self.frames is None else self.frames[::-1].copy(),
            closed=self.closed, sampler=sampler, meta=dict(self.meta),
        )

    def then(self, other: "DiscretizedPath") -> "DiscretizedPath":
        """Concatenate; ``other`` must start where this path ends."""
        if other.weights != self.weights or other.n != self.n:
            raise ContractError("cannot concatenate paths on different orbits")
        if np.max(np.abs(other.rho[0] - self.rho[-1])) > 1e-9:
            raise ContractError("paths do not chain: end of first != start of second")
        shift = self.s[-1] - other.s[0]
        s = np.concatenate([self.s, other.s[1:] + shift])
        rho = np.concatenate([self.rho, other.rho[1:]])
        frames = None
        if self.frames is not None and other.frames is not None:
            frames = np.concatenate([self.frames, other.frames[1:]])
        closed = bool(np.max(np.abs(rho[-1] - rho[0])) <= 1e-9)
        if closed:
            rho[-1] = rho[0]
        return DiscretizedPath(s=s, rho=rho, weights=self.weights, frames=frames, closed=closed)

    # -- serialisation --------------------------------------------------------

    def to_json(self) -> dict:
        from .io import matrix_to_json

        samples = []
        for i, s in enumerate(self.s):
            item = {"s": float(s), "rho": matrix_to_json(self.rho[i])}
            if self.frames is not None:
                item["frame"] = matrix_to_json(self.frames[i])
            samples.append(item)
        return {
            "n": self.n,
            "k": self.k,
            "weights": list(self.weights.values),
            "closed": self.closed,
            "samples": samples,
        }

    @classmethod
    def from_json(cls, data: dict) -> "DiscretizedPath":
        from .io import matrix_from_json

        try:
            n, k = int(data["n"]), int(data["k"])
            weights = SpectralWeights(tuple(data["weights"]))
            samples = data["samples"]
        except KeyError as exc:
            raise ContractError(f"path JSON is missing field {exc.args[0]!r}") from None
        if weights.k != k:
            raise ContractError("path JSON: len(weights) != k")
        s = np.array([float(it["s"]) for it in samples])
        rho = np.array([matrix_from_json(it["rho"], (n, n)) for it in samples])
        frames = None
        if samples and all("frame" in it for it in samples):
            frames = np.array([matrix_from_json(it["frame"], (n, k)) for it in samples])
        closed = bool(data.get("closed", np.max(np.abs(rho[-1] - rho[0])) <= CLOSURE_TOL))
        if closed:
            rho[-1] = rho[0]
        return cls(s=s, rho=rho, weights=weights, frames=frames, closed=closed)
