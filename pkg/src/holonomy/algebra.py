"""Dense complex linear algebra and the u(n) generator toolkit.

Everything here works on plain ``numpy`` arrays in double precision. Small
dimensions (n <= ~50) are assumed, so eigendecomposition is used wherever a
matrix function is needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DegenerateInputError, OutsideChartError

__all__ = [
    "dagger",
    "commutator",
    "is_hermitian",
    "check_hermitian",
    "gram_schmidt",
    "polar_decompose",
    "expm_skew",
    "expm_skew_batch",
    "unitary_log",
    "J_generator",
    "Q_generator",
    "HermitianBasis",
    "un_basis",
]

HERMITIAN_TOL = 1e-12
RANK_TOL = 1e-10
SINGULAR_TOL = 1e-10


def dagger(a: np.ndarray) -> np.ndarray:
    """Conjugate transpose over the last two axes (batch friendly)."""
    return np.conj(np.swapaxes(a, -1, -2))


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    return bool(np.max(np.abs(a - dagger(a)), initial=0.0) <= tol * scale)


def check_hermitian(a, name: str = "matrix", tol: float = HERMITIAN_TOL) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ContractError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{name} has non-finite entries")
    if not is_hermitian(a, tol):
        raise ContractError(f"{name} is not Hermitian to {tol:g}")
    return a


def gram_schmidt(columns) -> np.ndarray:
    """Orthonormalise the columns of an n x k block (or a list of n-vectors).

    Classical Gram-Schmidt applied twice, which is enough to reach
    ``|Psi^dag Psi - I| < 1e-12`` for well-conditioned inputs. No phase is
    introduced: each output column keeps the phase of its input's component
    orthogonal to the earlier columns.
    """
    if isinstance(columns, (list, tuple)):
        a = np.column_stack([np.asarray(c, dtype=complex) for c in columns])
    else:
        a = np.array(columns, dtype=complex)
    if a.ndim == 1:
        a = a[:, None]
    if not np.all(np.isfinite(a)):
        raise ContractError("columns have non-finite entries")
    n, k = a.shape
    if k > n:
        raise DegenerateInputError(f"{k} vectors cannot be independent in C^{n}")
    gram = dagger(a) @ a
    if np.linalg.eigvalsh(gram)[0] < RANK_TOL:
        raise DegenerateInputError("columns are linearly dependent (Gram eigenvalue < 1e-10)")
    q = np.zeros_like(a)
    for j in range(k):
        v = a[:, j].copy()
        for _ in range(2):
            v -= q[:, :j] @ (dagger(q[:, :j]) @ v)
        q[:, j] = v / np.linalg.norm(v)
    return q


def polar_decompose(s) -> tuple[np.ndarray, np.ndarray]:
    """Polar decomposition ``S = W P`` with W unitary and P = sqrt(S^dag S).

    Raises
    ------
    OutsideChartError
        If S is (numerically) singular. In the chart construction this means
        an eigenvalue of ``chi0^dag chi0`` reached 1.
    """
    s = np.asarray(s, dtype=complex)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ContractError(f"polar_decompose needs a square matrix, got {s.shape}")
    if np.linalg.svd(s, compute_uv=False)[-1] <= SINGULAR_TOL:
        raise OutsideChartError("matrix is singular; polar factor undefined")
    w2, v = np.linalg.eigh(dagger(s) @ s)
    root = np.sqrt(w2)
    p = (v * root) @ dagger(v)
    w = s @ ((v / root) @ dagger(v))
    return w, 0.5 * (p + dagger(p))


def expm_skew(k, t: float = 1.0) -> np.ndarray:
    """``exp(-i t K)`` for Hermitian K via its eigendecomposition."""
    k = check_hermitian(k, "K")
    lam, v = np.linalg.eigh(0.5 * (k + dagger(k)))
    return (v * np.exp(-1j * t * lam)) @ dagger(v)


def expm_skew_batch(ks: np.ndarray, ts) -> np.ndarray:
    """Batched ``exp(-i t K)`` over leading axes; no hermiticity check."""
    ks = np.asarray(ks, dtype=complex)
    lam, v = np.linalg.eigh(0.5 * (ks + dagger(ks)))
    ts = np.asarray(ts, dtype=float)[..., None]
    return (v * np.exp(-1j * ts * lam)[..., None, :]) @ dagger(v)


def unitary_log(u) -> np.ndarray:
    """Hermitian K with ``exp(-iK) = U``, eigenphases taken in (-pi, pi].

    Uses the Schur form, which is diagonal for normal matrices and keeps the
    eigenvectors orthonormal even for clustered eigenphases.
    """
    from scipy.linalg import schur

    u = np.asarray(u, dtype=complex)
    t, z = schur(u, output="complex")
    phases = np.angle(np.diag(t))
    k = (z * (-phases)) @ dagger(z)
    return 0.5 * (k + dagger(k))


def _unit(n: int, j: int, k: int) -> np.ndarray:
    e = np.zeros((n, n), dtype=complex)
    e[j, k] = 1.0
    return e


def J_generator(n: int, j: int, k: int) -> np.ndarray:
    """Antisymmetric imaginary generator ``(J_jk)_lm = i/sqrt2 (d_jl d_km - d_jm d_kl)``.

    Indices are zero-based. ``J_jj`` is the zero matrix.
    """
    return 1j / np.sqrt(2.0) * (_unit(n, j, k) - _unit(n, k, j))


def Q_generator(n: int, j: int, k: int) -> np.ndarray:
    """Symmetric real generator ``(Q_jk)_lm = 1/sqrt2 (d_jl d_km + d_jm d_kl)``.

    Indices are zero-based. For ``j == k`` this has ``sqrt2`` on the diagonal,
    so it is not trace-normalised; use :func:`un_basis` for the orthonormal
    diagonal generators.
    """
    return (_unit(n, j, k) + _unit(n, k, j)) / np.sqrt(2.0)


@dataclass(frozen=True)
class HermitianBasis:
    """Trace-orthonormal basis of the Lie algebra of U(n).

    Ordering: ``Q_1..Q_n`` (unit diagonal entries), then ``J_jk`` for j<k in
    lexicographic order, then ``Q_jk`` likewise. Labels are one-based.
    """

    n: int
    generators: np.ndarray = field(repr=False)
    labels: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, label: str) -> np.ndarray:
        return self.generators[self.labels.index(label)]

    def trace_gram(self) -> np.ndarray:
        g = self.generators
        return np.real(np.einsum("aij,bji->ab", g, g))

    def coefficients(self, x) -> np.ndarray:
        """Real coordinates of a Hermitian matrix in this basis."""
        x = check_hermitian(x, "X")
        return np.real(np.einsum("aij,ji->a", self.generators, x))

    def compose(self, coeffs) -> np.ndarray:
        return np.einsum("a,aij->ij", np.asarray(coeffs, dtype=float), self.generators)


def un_basis(n: int) -> HermitianBasis:
    if n < 1:
        raise ContractError("dimension must be >= 1")
    gens, labels = [], []
    for j in range(n):
        gens.append(_unit(n, j, j))
        labels.append(f"Q_{j + 1}")
    pairs = [(j, k) for j in range(n) for k in range(j + 1, n)]
    for j, k in pairs:
        gens.append(J_generator(n, j, k))
        labels.append(f"J_{j + 1}{k + 1}")
    for j, k in pairs:
        gens.append(Q_generator(n, j, k))
        labels.append(f"Q_{j + 1}{k + 1}")
    return HermitianBasis(n=n, generators=np.array(gens), labels=tuple(labels))
