"""Dense Hermitian-operator and density-matrix primitives.

Everything downstream runs through the spectral decomposition cached on
:class:`HermitianOperator`: matrix functions, dephasing projectors, Gibbs
weights, perturbation coefficients.  Storage is dense; the intended scale
is Hilbert-space dimension up to ~1024 (ten qubits of density matrix).
"""

from __future__ import annotations

import numpy as np

HERMITICITY_ATOL = 1e-12
PROJECTOR_ATOL = 1e-10
TRACE_ATOL = 1e-10
PSD_ATOL = 1e-10
# exp() overflows just above exp(709); refuse earlier with a clear error
EXP_ARG_LIMIT = 700.0

__all__ = [
    "HermitianOperator",
    "DensityMatrix",
    "spectral_decompose",
    "matrix_exp_hermitian",
    "matrix_exp_unitary",
    "trace_norm",
    "trace_distance",
    "operator_norm",
    "tensor_product",
    "embed_local",
]


def _as_matrix(a) -> np.ndarray:
    """Accept HermitianOperator, DensityMatrix, or array-like."""
    if isinstance(a, (HermitianOperator, DensityMatrix)):
        return a.matrix
    return np.asarray(a, dtype=complex)


class HermitianOperator:
    """Dense complex Hermitian matrix with a cached spectral decomposition.

    Eigenvalues closer than ``degeneracy_tol`` are merged into a single
    eigenspace, so spectral formulas downstream never divide by a
    near-vanishing gap.  The default tolerance is 1e-8 times the spectral
    range.

    Instances are immutable after construction and safe to share between
    concurrent workers.
    """

    def __init__(self, matrix, degeneracy_tol: float | None = None, validate: bool = True):
        mat = np.asarray(matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {mat.shape}")
        if validate and mat.size:
            dev = float(np.abs(mat - mat.conj().T).max())
            if dev > HERMITICITY_ATOL:
                raise ValueError(f"matrix is not Hermitian: max |A - A^H| = {dev:.3e}")
        mat = 0.5 * (mat + mat.conj().T)
        mat.flags.writeable = False
        self._matrix = mat
        self._degeneracy_tol = degeneracy_tol
        self._spectrum: tuple | None = None

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def dim(self) -> int:
        return self._matrix.shape[0]

    @property
    def degeneracy_tol(self) -> float:
        """Resolved tolerance used to merge eigenvalues into eigenspaces."""
        self._ensure_spectrum()
        return self._resolved_tol

    def _ensure_spectrum(self) -> None:
        if self._spectrum is not None:
            return
        w, v = np.linalg.eigh(self._matrix)
        tol = self._degeneracy_tol
        if tol is None:
            spread = float(w[-1] - w[0]) if w.size else 0.0
            tol = 1e-8 * spread if spread > 0 else 1e-12
        groups: list[np.ndarray] = []
        start = 0
        for i in range(1, w.size):
            if w[i] - w[i - 1] > tol:
                groups.append(np.arange(start, i))
                start = i
        if w.size:
            groups.append(np.arange(start, w.size))
        eigenvalues = np.array([float(w[g].mean()) for g in groups])
        col_group = np.empty(w.size, dtype=int)
        for gi, g in enumerate(groups):
            col_group[g] = gi
        self._resolved_tol = float(tol)
        self._spectrum = (eigenvalues, v, col_group, groups)

    @property
    def eigenvalues(self) -> np.ndarray:
        """Distinct eigenvalues after degeneracy merging, ascending."""
        self._ensure_spectrum()
        return self._spectrum[0]

    @property
    def projectors(self) -> list[np.ndarray]:
        """Orthogonal projectors onto the merged eigenspaces."""
        self._ensure_spectrum()
        _, v, _, groups = self._spectrum
        return [v[:, g] @ v[:, g].conj().T for g in groups]

    def eigenbasis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (V, column_energies, column_groups).

        V's columns are an orthonormal eigenbasis; ``column_energies`` holds
        the merged-group representative energy of each column and
        ``column_groups`` its group index.  This is the vectorized view of
        the projector decomposition.
        """
        self._ensure_spectrum()
        evals, v, col_group, _ = self._spectrum
        return v, evals[col_group], col_group

    def apply_spectral(self, f) -> np.ndarray:
        """Evaluate sum_k f(E_k) P_k without forming the projectors."""
        v, col_e, _ = self.eigenbasis()
        return (v * f(col_e)) @ v.conj().T

    def operator_norm(self) -> float:
        return float(np.abs(self.eigenvalues).max()) if self.dim else 0.0

    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues[0])

    def __repr__(self) -> str:
        return f"HermitianOperator(dim={self.dim})"


class DensityMatrix:
    """Positive-semidefinite, unit-trace complex matrix.

    Validation enforces Hermiticity to 1e-12 elementwise, unit trace to
    1e-10, and minimum eigenvalue >= -1e-10.
    """

    def __init__(self, matrix, validate: bool = True):
        mat = np.asarray(matrix, dtype=complex)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {mat.shape}")
        if validate:
            dev = float(np.abs(mat - mat.conj().T).max())
            if dev > HERMITICITY_ATOL:
                raise ValueError(f"density matrix not Hermitian: deviation {dev:.3e}")
            tr = complex(np.trace(mat))
            if abs(tr - 1.0) > TRACE_ATOL:
                raise ValueError(f"density matrix trace {tr} != 1")
            wmin = float(np.linalg.eigvalsh(0.5 * (mat + mat.conj().T)).min())
            if wmin < -PSD_ATOL:
                raise ValueError(f"density matrix has negative eigenvalue {wmin:.3e}")
        mat = 0.5 * (mat + mat.conj().T)
        mat.flags.writeable = False
        self._matrix = mat

    @classmethod
    def from_unnormalized(cls, matrix, validate: bool = True) -> "DensityMatrix":
        mat = np.asarray(matrix, dtype=complex)
        tr = np.trace(mat).real
        if tr <= 0:
            raise ValueError(f"cannot normalize matrix with trace {tr}")
        return cls(mat / tr, validate=validate)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def dim(self) -> int:
        return self._matrix.shape[0]

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self._matrix)

    def __repr__(self) -> str:
        return f"DensityMatrix(dim={self.dim})"


def spectral_decompose(a, degeneracy_tol: float | None = None) -> list[tuple[float, np.ndarray]]:
    """Decompose a Hermitian matrix into (eigenvalue, projector) pairs.

    Eigenvalues within ``degeneracy_tol`` of each other (chained over
    consecutive gaps) are merged into a single projector.  Raises if the
    input is not Hermitian.
    """
    if isinstance(a, HermitianOperator) and degeneracy_tol is None:
        op = a
    else:
        op = HermitianOperator(_as_matrix(a), degeneracy_tol=degeneracy_tol)
    return list(zip(op.eigenvalues.tolist(), op.projectors))


def matrix_exp_hermitian(a, scalar: float) -> HermitianOperator:
    """Return sum_k exp(scalar * E_k) P_k through the spectral decomposition.

    Raises a range error when any exponent exceeds the float overflow
    threshold instead of silently producing inf.
    """
    op = a if isinstance(a, HermitianOperator) else HermitianOperator(_as_matrix(a))
    args = scalar * op.eigenvalues
    if args.size and float(args.max()) > EXP_ARG_LIMIT:
        raise ValueError(
            f"exponent {float(args.max()):.1f} exceeds safe range {EXP_ARG_LIMIT}; "
            "shift the spectrum before exponentiating"
        )
    return HermitianOperator(op.apply_spectral(lambda e: np.exp(scalar * e)), validate=False)


def matrix_exp_unitary(a, scalar: float) -> np.ndarray:
    """Return the unitary sum_k exp(i * scalar * E_k) P_k."""
    op = a if isinstance(a, HermitianOperator) else HermitianOperator(_as_matrix(a))
    return op.apply_spectral(lambda e: np.exp(1j * scalar * e))


def trace_norm(a) -> float:
    """Sum of singular values of a square complex matrix."""
    mat = _as_matrix(a)
    if not np.all(np.isfinite(mat)):
        raise ValueError("trace norm of a matrix with non-finite entries")
    return float(np.linalg.svd(mat, compute_uv=False).sum())


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of the difference of two states."""
    return 0.5 * trace_norm(_as_matrix(rho) - _as_matrix(sigma))


def operator_norm(a) -> float:
    """Largest singular value (spectral norm)."""
    mat = _as_matrix(a)
    if mat.size == 0:
        return 0.0
    return float(np.linalg.svd(mat, compute_uv=False).max())


def tensor_product(a, b):
    """Kronecker product; preserves HermitianOperator/DensityMatrix types."""
    mat = np.kron(_as_matrix(a), _as_matrix(b))
    if isinstance(a, HermitianOperator) and isinstance(b, HermitianOperator):
        return HermitianOperator(mat, validate=False)
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        return DensityMatrix(mat, validate=False)
    return mat


def embed_local(term, site_range: tuple[int, int], chain_dims) -> HermitianOperator:
    """Embed a local term acting on contiguous sites into the full chain.

    ``site_range`` is inclusive (first, last); site 0 is the leftmost
    Kronecker factor.  All other sites are padded with identities, which
    preserves the local spectrum (with multiplicity) and hence the
    operator norm.
    """
    dims = [int(d) for d in chain_dims]
    first, last = site_range
    if not (0 <= first <= last < len(dims)):
        raise ValueError(f"site range {site_range} out of bounds for {len(dims)} sites")
    mat = _as_matrix(term)
    local_dim = int(np.prod(dims[first : last + 1]))
    if mat.shape != (local_dim, local_dim):
        raise ValueError(
            f"term of shape {mat.shape} does not match sites {site_range} "
            f"with dimension {local_dim}"
        )
    left_dim = int(np.prod(dims[:first])) if first > 0 else 1
    right_dim = int(np.prod(dims[last + 1 :])) if last + 1 < len(dims) else 1
    full = np.kron(np.kron(np.eye(left_dim), mat), np.eye(right_dim))
    return HermitianOperator(full, validate=False)
