"""1D local Hamiltonians as on-site terms plus nearest-neighbor links.

A :class:`ChainModel` describes an open chain of N sites with local
dimension d.  The merge recursion consumes exactly two objects built here:
block Hamiltonians (site terms plus interior links of a contiguous block)
and the boundary link term joining two blocks, shifted to be positive
semidefinite.  Constant shifts cancel in Gibbs-state normalization, so the
shift changes nothing about the target state while making the link usable
by the conjugation channel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import HermitianOperator, embed_local, tensor_product

__all__ = [
    "ChainModel",
    "build_block_hamiltonian",
    "link_term",
    "shift_psd",
    "transverse_field_ising",
    "heisenberg",
    "random_chain",
    "PAULI_X",
    "PAULI_Y",
    "PAULI_Z",
]

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _check_hermitian(name: str, mat: np.ndarray) -> np.ndarray:
    mat = np.asarray(mat, dtype=complex)
    if np.abs(mat - mat.conj().T).max() > 1e-12:
        raise ValueError(f"{name} is not Hermitian")
    return mat


@dataclass(frozen=True)
class ChainModel:
    """Open chain of ``n_sites`` sites with local dimension ``local_dim``.

    ``site_terms[i]`` is the d x d term on site i; ``link_terms[i]`` is the
    d^2 x d^2 term coupling sites (i, i+1).  The merge recursion requires
    ``n_sites`` to be a power of two; single sites (N = 1) are allowed.
    """

    name: str
    n_sites: int
    local_dim: int
    site_terms: tuple
    link_terms: tuple
    couplings: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError("n_sites must be >= 1")
        if self.local_dim < 2:
            raise ValueError("local_dim must be >= 2")
        if len(self.site_terms) != self.n_sites:
            raise ValueError("need one site term per site")
        if len(self.link_terms) != max(self.n_sites - 1, 0):
            raise ValueError("need one link term per nearest-neighbor pair")
        d = self.local_dim
        for i, t in enumerate(self.site_terms):
            t = _check_hermitian(f"site term {i}", t)
            if t.shape != (d, d):
                raise ValueError(f"site term {i} has shape {t.shape}, expected {(d, d)}")
        for i, t in enumerate(self.link_terms):
            t = _check_hermitian(f"link term {i}", t)
            if t.shape != (d * d, d * d):
                raise ValueError(f"link term {i} has shape {t.shape}, expected {(d * d, d * d)}")

    @property
    def hilbert_dim(self) -> int:
        return self.local_dim**self.n_sites

    @property
    def link_norm_bound(self) -> float:
        """Max operator norm of the PSD-shifted link terms.

        This is the coupling-strength bound entering every success
        probability, step size, and cost formula.
        """
        best = 0.0
        for t in self.link_terms:
            w = np.linalg.eigvalsh(np.asarray(t, dtype=complex))
            best = max(best, float(w[-1] - w[0]))
        return best

    def site_dims(self, first: int, last: int) -> list[int]:
        return [self.local_dim] * (last - first + 1)


def build_block_hamiltonian(model: ChainModel, first_site: int, last_site: int) -> HermitianOperator:
    """Sum of embedded site terms and interior link terms of a block.

    Links crossing the block boundary are excluded; they are exactly what
    the merge step adds later.
    """
    if not (0 <= first_site <= last_site < model.n_sites):
        raise ValueError(f"invalid block [{first_site}, {last_site}] for N={model.n_sites}")
    dims = model.site_dims(first_site, last_site)
    total = np.zeros((int(np.prod(dims)), int(np.prod(dims))), dtype=complex)
    for s in range(first_site, last_site + 1):
        local = s - first_site
        total += embed_local(model.site_terms[s], (local, local), dims).matrix
    for link in range(first_site, last_site):
        local = link - first_site
        total += embed_local(model.link_terms[link], (local, local + 1), dims).matrix
    return HermitianOperator(total, validate=False)


def link_term(
    model: ChainModel,
    left_block_end: int,
    first_site: int | None = None,
    last_site: int | None = None,
) -> HermitianOperator:
    """Boundary term between sites (left_block_end, left_block_end+1),
    embedded in the merged block [first_site, last_site].

    Defaults embed in the whole chain.
    """
    if first_site is None:
        first_site = 0
    if last_site is None:
        last_site = model.n_sites - 1
    if not (first_site <= left_block_end < last_site):
        raise ValueError(
            f"link at {left_block_end} is not interior to block [{first_site}, {last_site}]"
        )
    if not (0 <= left_block_end < model.n_sites - 1):
        raise ValueError(f"no link at boundary index {left_block_end}")
    dims = model.site_dims(first_site, last_site)
    local = left_block_end - first_site
    return embed_local(model.link_terms[left_block_end], (local, local + 1), dims)


def shift_psd(h) -> tuple[HermitianOperator, float]:
    """Shift a Hermitian term to be positive semidefinite.

    Returns (h - E_min * I, E_min).  Gibbs states of H + h and
    H + (h - E_min I) coincide because constant shifts cancel in the
    normalization.
    """
    op = h if isinstance(h, HermitianOperator) else HermitianOperator(h)
    shift = op.min_eigenvalue()
    if shift == 0.0:
        return op, 0.0
    shifted = op.matrix - shift * np.eye(op.dim)
    return HermitianOperator(shifted, validate=False), shift


def transverse_field_ising(
    n_sites: int, coupling: float = 1.0, field: float = 1.0
) -> ChainModel:
    """H = -J sum Z_i Z_{i+1} - g sum X_i on an open chain of qubits."""
    site = -field * PAULI_X
    link = -coupling * tensor_product(PAULI_Z, PAULI_Z)
    return ChainModel(
        name="ising",
        n_sites=n_sites,
        local_dim=2,
        site_terms=tuple(site.copy() for _ in range(n_sites)),
        link_terms=tuple(np.array(link) for _ in range(max(n_sites - 1, 0))),
        couplings={"coupling": coupling, "field": field},
    )


def heisenberg(n_sites: int, coupling: float = 1.0) -> ChainModel:
    """Isotropic H = J sum (X X + Y Y + Z Z) on neighboring qubits."""
    link = coupling * (
        np.kron(PAULI_X, PAULI_X) + np.kron(PAULI_Y, PAULI_Y) + np.kron(PAULI_Z, PAULI_Z)
    )
    zero = np.zeros((2, 2), dtype=complex)
    return ChainModel(
        name="heisenberg",
        n_sites=n_sites,
        local_dim=2,
        site_terms=tuple(zero.copy() for _ in range(n_sites)),
        link_terms=tuple(link.copy() for _ in range(max(n_sites - 1, 0))),
        couplings={"coupling": coupling},
    )


def _random_hermitian(rng: np.random.Generator, dim: int, scale: float) -> np.ndarray:
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * 0.5 * (a + a.conj().T) / np.sqrt(dim)


def random_chain(
    n_sites: int,
    local_dim: int = 2,
    seed: int = 0,
    site_scale: float = 1.0,
    link_scale: float = 1.0,
) -> ChainModel:
    """Seeded random nearest-neighbor chain (GUE-style local terms)."""
    rng = np.random.default_rng(seed)
    d = local_dim
    sites = tuple(_random_hermitian(rng, d, site_scale) for _ in range(n_sites))
    links = tuple(_random_hermitian(rng, d * d, link_scale) for _ in range(max(n_sites - 1, 0)))
    return ChainModel(
        name="random",
        n_sites=n_sites,
        local_dim=d,
        site_terms=sites,
        link_terms=links,
        couplings={"seed": seed, "site_scale": site_scale, "link_scale": link_scale},
    )


BUILTIN_MODELS = {
    "ising": transverse_field_ising,
    "heisenberg": heisenberg,
    "random": random_chain,
}
