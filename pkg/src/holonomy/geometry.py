"""Connection one-forms, the KKS two-form, local charts and surface quadrature.

Conventions
-----------
A tangent vector to the frame space at ``Psi`` is ``Phi = i Psi h + chi``
with ``h`` Hermitian (k x k) and ``chi`` orthogonal to the columns of Psi.
Its image on the orbit is
``X = i Psi [h, kappa] Psi^dag + Psi kappa chi^dag + chi kappa Psi^dag``,
which only sees the off-diagonal part of h. Two-forms are evaluated with
``(a ^ b)(X, Y) = a(X) b(Y) - a(Y) b(X)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .algebra import check_hermitian, dagger, polar_decompose
from .errors import ContractError, OutsideChartError, QuadratureError
from .states import SpectralWeights, check_frame, project_batch, spectral_frames_batch

log = logging.getLogger(__name__)

__all__ = [
    "FrameTangent",
    "OrbitTangent",
    "ChartCoords",
    "ParametrizedSurface",
    "connection_eval",
    "horizontal_project",
    "tangent_to_orbit",
    "orbit_tangent_from_matrix",
    "generator_for",
    "kks_eval",
    "kks_closed_form",
    "dA_closed_form",
    "pullback_check",
    "su2_from_z",
    "chart_encode",
    "chart_decode",
    "cone_surface",
    "surface_integral",
    "omega_density",
]

TANGENT_TOL = 1e-12


@dataclass(frozen=True)
class FrameTangent:
    """Tangent ``Phi = i Psi h + chi`` at a frame Psi (h Hermitian, Psi^dag chi = 0)."""

    h: np.ndarray
    chi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "h", np.asarray(self.h, dtype=complex))
        object.__setattr__(self, "chi", np.asarray(self.chi, dtype=complex))

    def matrix(self, frame) -> np.ndarray:
        return 1j * np.asarray(frame) @ self.h + self.chi

    def check(self, frame, tol: float = TANGENT_TOL) -> None:
        psi = np.asarray(frame)
        if self.h.shape != (psi.shape[1],) * 2 or self.chi.shape != psi.shape:
            raise ContractError("tangent shapes do not match the frame")
        if np.max(np.abs(self.h - dagger(self.h))) > tol:
            raise ContractError("tangent h is not Hermitian")
        if np.max(np.abs(dagger(psi) @ self.chi), initial=0.0) > tol * max(1.0, np.abs(self.chi).max(initial=0.0)):
            raise ContractError("tangent chi is not orthogonal to the frame")

    @classmethod
    def from_matrix(cls, frame, phi, tol: float = 1e-10) -> "FrameTangent":
        """Split a tangent matrix Phi; it must keep the columns orthonormal to first order."""
        psi = np.asarray(frame, dtype=complex)
        phi = np.asarray(phi, dtype=complex)
        g = dagger(psi) @ phi
        if np.max(np.abs(g + dagger(g))) > tol * max(1.0, np.abs(phi).max()):
            raise ContractError("Phi is not tangent: Psi^dag Phi is not anti-Hermitian")
        h = -1j * g
        return cls(h=0.5 * (h + dagger(h)), chi=phi - psi @ g)

    @classmethod
    def random(cls, frame, rng: np.random.Generator, scale: float = 1.0) -> "FrameTangent":
        psi = np.asarray(frame)
        n, k = psi.shape
        a = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
        c = rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))
        c -= psi @ (dagger(psi) @ c)
        return cls(h=scale * 0.5 * (a + dagger(a)), chi=scale * c)


@dataclass(frozen=True)
class OrbitTangent:
    """Tangent to the orbit at ``Psi kappa Psi^dag``, in frame coordinates.

    ``h_offdiag`` is strictly upper triangular (k x k); ``chi`` is n x k and
    orthogonal to the frame.
    """

    h_offdiag: np.ndarray
    chi: np.ndarray
    frame: np.ndarray = field(repr=False)
    weights: SpectralWeights

    def h_full(self) -> np.ndarray:
        u = np.triu(np.asarray(self.h_offdiag, dtype=complex), 1)
        return u + dagger(u)

    def matrix(self) -> np.ndarray:
        """The Hermitian, traceless tangent matrix X."""
        psi, kap = self.frame, self.weights.matrix()
        h = self.h_full()
        x = 1j * psi @ (h @ kap - kap @ h) @ dagger(psi) + psi @ kap @ dagger(self.chi) + self.chi @ kap @ dagger(psi)
        return 0.5 * (x + dagger(x))


def _check_tangent(frame, phi: FrameTangent) -> np.ndarray:
    psi = check_frame(frame)
    phi.check(psi)
    return psi


def connection_eval(frame, phi: FrameTangent) -> np.ndarray:
    """Values ``A^(a)(Phi) = -i (psi_a, phi_a)`` of the k connection one-forms."""
    psi = _check_tangent(frame, phi)
    m = phi.matrix(psi)
    vals = -1j * np.einsum("ia,ia->a", np.conj(psi), m)
    return np.real(vals)


def horizontal_project(frame, phi: FrameTangent) -> FrameTangent:
    """Drop the vertical (diagonal-h) part of a tangent."""
    _check_tangent(frame, phi)
    h = phi.h.copy()
    np.fill_diagonal(h, 0.0)
    return FrameTangent(h=h, chi=phi.chi.copy())


def tangent_to_orbit(frame, weights, phi: FrameTangent) -> OrbitTangent:
    """Push a frame tangent forward to the orbit."""
    weights = SpectralWeights.coerce(weights)
    psi = _check_tangent(frame, phi)
    if psi.shape[1] != weights.k:
        raise ContractError("frame and weights disagree on k")
    return OrbitTangent(h_offdiag=np.triu(phi.h, 1), chi=phi.chi.copy(), frame=psi, weights=weights)


def orbit_tangent_from_matrix(frame, weights, x) -> OrbitTangent:
    """Inverse of :meth:`OrbitTangent.matrix`: read (h_offdiag, chi) off a tangent X."""
    weights = SpectralWeights.coerce(weights)
    psi = check_frame(frame)
    h, chi = _orbit_coords(psi[None], np.asarray(x, dtype=complex)[None], weights.as_array())
    return OrbitTangent(h_offdiag=np.triu(h[0], 1), chi=chi[0], frame=psi, weights=weights)


def _orbit_coords(psi: np.ndarray, x: np.ndarray, kappa: np.ndarray):
    """Batched lift of tangents X at frames Psi to (h, chi) with zero diagonal h."""
    g = dagger(psi) @ x @ psi
    gap = kappa[None, :] - kappa[:, None]  # kappa_b - kappa_a
    k = len(kappa)
    off = ~np.eye(k, dtype=bool)
    h = np.zeros_like(g)
    h[..., off] = g[..., off] / (1j * gap[off])
    xpsi = x @ psi
    chi = (xpsi - psi @ (dagger(psi) @ xpsi)) / kappa
    return h, chi


def generator_for(t: OrbitTangent) -> np.ndarray:
    """Hermitian K with ``-i [K, rho] = X`` for the tangent's base point."""
    psi = t.frame
    k = 1j * (t.chi @ dagger(psi) - psi @ dagger(t.chi)) - psi @ t.h_full() @ dagger(psi)
    return 0.5 * (k + dagger(k))


def kks_eval(rho, k1, k2) -> float:
    """``Omega_rho(X1, X2) = -i Tr(rho [K1, K2])`` from generators."""
    k1 = check_hermitian(k1, "K1")
    k2 = check_hermitian(k2, "K2")
    val = -1j * np.trace(np.asarray(rho) @ (k1 @ k2 - k2 @ k1))
    return float(np.real(val))


def _omega_closed(kappa, h1, c1, h2, c2):
    """Closed form of Omega in (h, chi) coordinates; batched over leading axes."""
    kappa = np.asarray(kappa)
    dk = kappa[:, None] - kappa[None, :]  # kappa_a - kappa_b
    upper = np.triu(np.ones_like(dk, dtype=bool), 1)
    hh = h1 * np.swapaxes(h2, -1, -2) - np.swapaxes(h1, -1, -2) * h2  # h'_ab h''_ba - h'_ba h''_ab
    term_h = -1j * np.sum(np.where(upper, dk * hh, 0.0), axis=(-1, -2))
    g12 = np.sum(np.conj(c1) * c2, axis=-2)  # (chi'_a, chi''_a)
    g21 = np.sum(np.conj(c2) * c1, axis=-2)
    term_c = -1j * np.sum(kappa * (g12 - g21), axis=-1)
    return np.real(term_h + term_c)


def kks_closed_form(weights, t1: OrbitTangent, t2: OrbitTangent) -> float:
    """Omega evaluated from the (h_offdiag, chi) data of two tangents at one point."""
    weights = SpectralWeights.coerce(weights)
    if t1.weights != weights or t2.weights != weights:
        raise ContractError("tangents live on a different orbit")
    if t1.frame.shape != t2.frame.shape or np.max(np.abs(t1.frame - t2.frame)) > 1e-12:
        raise ContractError("tangents are attached to different base frames")
    return float(_omega_closed(weights.as_array(), t1.h_full(), t1.chi, t2.h_full(), t2.chi))


def dA_closed_form(t1: FrameTangent, t2: FrameTangent) -> np.ndarray:
    """``dA^(a)(Phi', Phi'')`` for a = 1..k, in the frame coordinates of the base point.

    The diagonal of h drops out; the off-diagonal terms enter with opposite
    signs in the components they couple.
    """
    h1, h2 = t1.h, t2.h
    hh = h1 * h2.T - h2 * h1.T  # h'_ab h''_ba - h''_ab h'_ba
    term_h = -1j * np.sum(hh, axis=1)
    term_c = -1j * (np.sum(np.conj(t1.chi) * t2.chi, axis=0) - np.sum(np.conj(t2.chi) * t1.chi, axis=0))
    return np.real(term_h + term_c)


def pullback_check(frame, weights, t1: FrameTangent, t2: FrameTangent) -> tuple[float, float]:
    """Both sides of ``sum_a kappa_a dA^(a) = pi^* Omega`` on two frame tangents.

    The left side uses :func:`dA_closed_form`; the right side pushes the
    tangents forward to matrices X on the orbit, reads their orbit
    coordinates back off and applies :func:`kks_closed_form`.
    """
    weights = SpectralWeights.coerce(weights)
    psi = check_frame(frame)
    lhs = float(np.dot(weights.as_array(), dA_closed_form(t1, t2)))
    x1 = tangent_to_orbit(psi, weights, t1).matrix()
    x2 = tangent_to_orbit(psi, weights, t2).matrix()
    o1 = orbit_tangent_from_matrix(psi, weights, x1)
    o2 = orbit_tangent_from_matrix(psi, weights, x2)
    rhs = kks_closed_form(weights, o1, o2)
    return lhs, rhs


# -- local chart around a reference frame (rank two) ---------------------------


@dataclass(frozen=True)
class ChartCoords:
    """Chart coordinates: ``Psi = (Psi0 U(z) (1 - chi0^dag chi0)^(1/2) + chi0) diag(e^{i alpha})``."""

    z: complex
    chi0: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "z", complex(self.z))
        object.__setattr__(self, "chi0", np.asarray(self.chi0, dtype=complex))
        object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float))


def su2_from_z(z: complex) -> np.ndarray:
    """The SU(2) element with real positive diagonal and upper-right entry z."""
    c = np.sqrt(1.0 - abs(z) ** 2)
    return np.array([[c, z], [-np.conj(z), c]], dtype=complex)


def _sqrt_one_minus(g: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(np.eye(len(g)) - g)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ dagger(v)


def _require_rank_two(psi: np.ndarray) -> None:
    if psi.shape[1] != 2:
        raise ContractError("the local chart is defined for rank-two frames only")


def chart_encode(reference, psi, tol: float = 1e-12) -> ChartCoords:
    """Chart coordinates of ``psi`` around ``reference``.

    Raises :class:`OutsideChartError` instead of re-centering when psi is
    outside the chart domain.
    """
    psi0 = check_frame(reference)
    psi = check_frame(psi)
    _require_rank_two(psi0)
    if psi.shape != psi0.shape:
        raise ContractError("frames have different shapes")
    s = dagger(psi0) @ psi
    chi_p = psi - psi0 @ s
    if np.linalg.eigvalsh(dagger(chi_p) @ chi_p)[-1] >= 1.0 - tol:
        raise OutsideChartError("chi0^dag chi0 has an eigenvalue >= 1")
    w, _ = polar_decompose(s)
    diag = np.diag(w)
    if np.min(np.abs(diag)) <= tol:
        raise OutsideChartError("unitary polar factor has a vanishing diagonal entry")
    alpha = np.angle(diag)
    phase = np.exp(1j * alpha)
    u = w / phase[None, :]
    z = u[0, 1]
    if abs(z) >= 1.0 - tol:
        raise OutsideChartError("|z| >= 1")
    return ChartCoords(z=z, chi0=chi_p / phase[None, :], alpha=np.mod(alpha, 2 * np.pi))


def chart_decode(reference, coords: ChartCoords, tol: float = 1e-10) -> np.ndarray:
    psi0 = check_frame(reference)
    _require_rank_two(psi0)
    chi0 = coords.chi0
    if chi0.shape != psi0.shape:
        raise ContractError("chi0 must have the shape of the reference frame")
    if abs(coords.z) >= 1.0:
        raise OutsideChartError("|z| >= 1")
    if np.max(np.abs(dagger(psi0) @ chi0)) > tol:
        raise OutsideChartError("chi0 is not orthogonal to the reference frame")
    g = dagger(chi0) @ chi0
    if np.linalg.eigvalsh(g)[-1] >= 1.0:
        raise OutsideChartError("chi0^dag chi0 has an eigenvalue >= 1")
    psi = psi0 @ su2_from_z(coords.z) @ _sqrt_one_minus(g) + chi0
    return psi * np.exp(1j * coords.alpha)[None, :]


# -- surfaces and symplectic area ------------------------------------------------

_ORIENTATION = {"u=0": -1, "u=1": +1, "v=0": +1, "v=1": -1}

SurfaceMap = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class ParametrizedSurface:
    """A map ``[0,1]^2 -> orbit`` given as a callable or as a dense grid.

    ``map(u, v)`` takes two 1-D arrays and returns the tensor-product grid of
    density matrices, shape ``(len(u), len(v), n, n)``. ``grid`` holds samples
    at the nodes ``(i/(nu-1), j/(nv-1))`` instead.

    ``boundary`` names the edge that carries the loop, traversed with the free
    parameter increasing. The other edges are expected to be degenerate or to
    cancel. The resulting ``orientation`` (+1/-1 relative to du^dv) makes
    :func:`surface_integral` return the integral over S with dS = loop.
    """

    weights: SpectralWeights
    n: int
    map: SurfaceMap | None = field(default=None, repr=False)
    grid: np.ndarray | None = field(default=None, repr=False)
    boundary: str | None = "v=1"
    orientation: int | None = None

    def __post_init__(self):
        self.weights = SpectralWeights.coerce(self.weights)
        if (self.map is None) == (self.grid is None):
            raise ContractError("surface needs exactly one of map or grid")
        if self.grid is not None:
            self.grid = np.asarray(self.grid, dtype=complex)
            if self.grid.ndim != 4 or self.grid.shape[-2:] != (self.n, self.n):
                raise ContractError("surface grid must have shape (nu, nv, n, n)")
            if min(self.grid.shape[:2]) < 2:
                raise ContractError("surface grid needs at least 2 nodes per direction")
        if self.orientation is None:
            if self.boundary not in _ORIENTATION:
                raise ContractError(f"unknown boundary edge {self.boundary!r}")
            self.orientation = _ORIENTATION[self.boundary]

    def evaluate(self, u, v) -> np.ndarray:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if self.map is not None:
            return self.map(u, v)
        return _bilinear(self.grid, u, v)

    def edge(self, t) -> np.ndarray:
        """Density matrices along the loop edge at parameters ``t`` in [0, 1]."""
        t = np.asarray(t, dtype=float)
        side, val = self.boundary.split("=")
        if side == "u":
            return self.evaluate([float(val)], t)[0]
        return self.evaluate(t, [float(val)])[:, 0]

    def restricted(self, u0=0.0, u1=1.0, v0=0.0, v1=1.0) -> "ParametrizedSurface":
        """The sub-rectangle ``[u0,u1] x [v0,v1]`` rescaled to the unit square."""
        return self.reparametrized(lambda u: u0 + (u1 - u0) * u, lambda v: v0 + (v1 - v0) * v,
                                   sign=int(np.sign((u1 - u0) * (v1 - v0))))

    def reparametrized(self, fu, fv, sign: int = 1) -> "ParametrizedSurface":
        """Compose with ``(u, v) -> (fu(u), fv(v))``; ``sign`` is the sign of the Jacobian."""
        inner = self.evaluate

        def mapped(u, v):
            return inner(fu(np.asarray(u)), fv(np.asarray(v)))

        return replace(self, map=mapped, grid=None, boundary=None, orientation=self.orientation)

    def flipped(self) -> "ParametrizedSurface":
        """Same image with the opposite orientation (its loop runs backwards).

        The parameter running along the loop edge is reversed; the
        orientation sign is kept, so the oriented integral changes sign.
        """
        inner = self.evaluate
        if self.boundary is not None and self.boundary.startswith("u"):
            def mapped(u, v):
                return inner(u, 1.0 - np.asarray(v))
        else:
            def mapped(u, v):
                return inner(1.0 - np.asarray(u), v)

        return replace(self, map=mapped, grid=None)

    def to_grid(self, nu: int, nv: int) -> "ParametrizedSurface":
        g = self.evaluate(np.linspace(0, 1, nu), np.linspace(0, 1, nv))
        return ParametrizedSurface(weights=self.weights, n=self.n, grid=g, boundary=self.boundary,
                                   orientation=self.orientation)

    def to_json(self) -> dict:
        from .io import matrix_to_json

        if self.grid is None:
            raise ContractError("only grid surfaces serialise; call to_grid first")
        nu, nv = self.grid.shape[:2]
        return {
            "n": self.n,
            "k": self.weights.k,
            "weights": list(self.weights.values),
            "nu": nu,
            "nv": nv,
            "boundary": self.boundary,
            "rho": [matrix_to_json(self.grid[i, j]) for i in range(nu) for j in range(nv)],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ParametrizedSurface":
        from .io import matrix_from_json

        try:
            n, nu, nv = int(data["n"]), int(data["nu"]), int(data["nv"])
            weights = SpectralWeights(tuple(data["weights"]))
            rho = data["rho"]
        except KeyError as exc:
            raise ContractError(f"surface JSON is missing field {exc.args[0]!r}") from None
        if len(rho) != nu * nv:
            raise ContractError(f"surface JSON: expected nu*nv={nu * nv} matrices, got {len(rho)}")
        grid = np.array([matrix_from_json(m, (n, n)) for m in rho]).reshape(nu, nv, n, n)
        return cls(weights=weights, n=n, grid=grid, boundary=data.get("boundary", "v=1"))


def _bilinear(grid: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    nu, nv = grid.shape[:2]
    x = np.clip(u, 0, 1) * (nu - 1)
    y = np.clip(v, 0, 1) * (nv - 1)
    i = np.minimum(np.floor(x).astype(int), nu - 2)
    j = np.minimum(np.floor(y).astype(int), nv - 2)
    fx = (x - i)[:, None, None, None]
    fy = (y - j)[None, :, None, None]
    g00 = grid[i][:, j]
    g10 = grid[i + 1][:, j]
    g01 = grid[i][:, j + 1]
    g11 = grid[i + 1][:, j + 1]
    return (1 - fx) * (1 - fy) * g00 + fx * (1 - fy) * g10 + (1 - fx) * fy * g01 + fx * fy * g11


def cone_surface(generator, rho0, weights, boundary: str = "v=1") -> ParametrizedSurface:
    """Cone ``rho(u, v) = exp(i v X(u)) rho0 exp(-i v X(u))`` over a loop.

    ``generator`` is a vectorised callable ``u -> X(u)`` of Hermitian matrices
    with ``X(0) = X(1) = 0`` (e.g. the one behind :func:`random_orbit_loop`).
    The loop sits on the ``v=1`` edge.
    """
    weights = SpectralWeights.coerce(weights)
    rho0 = np.asarray(rho0, dtype=complex)

    def cone(u, v):
        lam, w = np.linalg.eigh(generator(np.asarray(u, dtype=float)))
        ph = np.exp(1j * np.asarray(v, dtype=float)[None, :, None] * lam[:, None, :])
        w = w[:, None]
        vmat = (w * ph[..., None, :]) @ dagger(w)
        rho = vmat @ rho0 @ dagger(vmat)
        return 0.5 * (rho + dagger(rho))

    if boundary == "u=1":
        inner = cone
        cone = lambda u, v: np.swapaxes(inner(v, u), 0, 1)  # noqa: E731
    return ParametrizedSurface(weights=weights, n=rho0.shape[0], map=cone, boundary=boundary)


def omega_density(rho, du, dv, weights) -> np.ndarray:
    """Pointwise ``Omega(d_u rho, d_v rho)`` for stacks of points and tangents."""
    weights = SpectralWeights.coerce(weights)
    kappa = weights.as_array()
    frames, _ = spectral_frames_batch(rho, weights.k, check=False)
    h1, c1 = _orbit_coords(frames, du, kappa)
    h2, c2 = _orbit_coords(frames, dv, kappa)
    return _omega_closed(kappa, h1, c1, h2, c2)


def _midpoint_map(surface: ParametrizedSurface, n: int, fd_step: float, chunk: int) -> float:
    centers = (np.arange(n) + 0.5) / n
    kappa = surface.weights
    total = 0.0
    for start in range(0, n, chunk):
        u = centers[start:start + chunk]
        rho = surface.evaluate(u, centers)
        du = (surface.evaluate(u + fd_step, centers) - surface.evaluate(u - fd_step, centers)) / (2 * fd_step)
        dv = (surface.evaluate(u, centers + fd_step) - surface.evaluate(u, centers - fd_step)) / (2 * fd_step)
        total += float(np.sum(omega_density(rho, du, dv, kappa)))
    return total / n**2


def _midpoint_grid(grid: np.ndarray, weights, stride: int) -> float:
    g = grid[::stride, ::stride]
    nu, nv = g.shape[:2]
    hu, hv = 1.0 / (nu - 1), 1.0 / (nv - 1)
    c = 0.25 * (g[:-1, :-1] + g[1:, :-1] + g[:-1, 1:] + g[1:, 1:])
    du = 0.5 * (g[1:, :-1] + g[1:, 1:] - g[:-1, :-1] - g[:-1, 1:]) / hu
    dv = 0.5 * (g[:-1, 1:] + g[1:, 1:] - g[:-1, :-1] - g[1:, :-1]) / hv
    return float(np.sum(omega_density(c, du, dv, weights))) * hu * hv


def surface_integral(
    surface: ParametrizedSurface,
    quad_tol: float = 1e-6,
    *,
    start: int = 8,
    max_cells: int = 1024,
    fd_step: float = 1e-5,
    extrapolate: bool = True,
    chunk: int = 64,
) -> float:
    """Oriented symplectic area of a surface.

    Composite midpoint rule on an N x N grid with N doubling from ``start``.
    Tangents come from central differences; each is lifted to orbit
    coordinates in the spectral frame at the cell centre, where the closed
    form of Omega is applied. With ``extrapolate`` the Cauchy test runs on
    Richardson-corrected estimates ``(4 I_N - I_{N/2}) / 3``.

    Raises
    ------
    QuadratureError
        If successive estimates still differ by more than ``quad_tol`` at
        ``max_cells`` per side (for grids: at native resolution).
    """
    sign = surface.orientation
    if surface.grid is not None:
        nu, nv = surface.grid.shape[:2]
        strides = [1]
        while (nu - 1) % (2 * strides[-1]) == 0 and (nv - 1) % (2 * strides[-1]) == 0 \
                and (nu - 1) // (2 * strides[-1]) >= 1 and (nv - 1) // (2 * strides[-1]) >= 1:
            strides.append(2 * strides[-1])
        raw = [_midpoint_grid(surface.grid, surface.weights, st) for st in reversed(strides)]
        if len(raw) == 1:
            return sign * raw[0]
        best, prev = _best_pair(raw, extrapolate)
        if abs(best - prev) > quad_tol:
            raise QuadratureError(f"grid too coarse: estimates differ by {abs(best - prev):.2e}",
                                  (sign * prev, sign * best))
        return sign * best
    raw = []
    n = start
    while True:
        raw.append(_midpoint_map(surface, n, fd_step, chunk))
        if len(raw) >= (3 if extrapolate else 2):
            best, prev = _best_pair(raw, extrapolate)
            log.debug("surface_integral N=%d estimate=%.12g delta=%.2e", n, best, abs(best - prev))
            if abs(best - prev) < quad_tol:
                return sign * best
        if 2 * n > max_cells:
            best, prev = _best_pair(raw, extrapolate) if len(raw) > 1 else (raw[-1], np.nan)
            raise QuadratureError(f"no convergence at {n}x{n} cells", (sign * prev, sign * best))
        n *= 2


def _best_pair(raw: list[float], extrapolate: bool) -> tuple[float, float]:
    if not extrapolate or len(raw) < 3:
        return raw[-1], raw[-2]
    rich = [(4 * b - a) / 3 for a, b in zip(raw, raw[1:])]
    return rich[-1], rich[-2]
