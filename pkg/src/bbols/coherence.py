"""Exact incoherence measures of a block matrix and the block ERC constant."""
from dataclasses import dataclass

import numpy as np

from .block_model import BlockMatrix

# Gram rows are formed this many columns at a time so that n x n never lives in memory.
_CHUNK_COLUMNS = 1024
SPECTRAL_TOL = 1e-12


@dataclass(frozen=True)
class CoherenceProfile:
    mu: float
    mu_B: float
    nu: float
    d: int


@dataclass(frozen=True)
class ErcValue:
    gamma: float

    @property
    def satisfied(self):
        return self.gamma < 1.0


def _as_array(D):
    return D.entries if isinstance(D, BlockMatrix) else np.asarray(D, dtype=float)


def _block_spectral_norms(blocks):
    """Largest singular value of every trailing ``d x d`` matrix in ``blocks``."""
    d = blocks.shape[-1]
    if d == 1:
        return np.abs(blocks[..., 0, 0])
    # eigvalsh on M^T M is markedly faster than a batched SVD for tiny blocks.
    gram = np.einsum("...ki,...kj->...ij", blocks, blocks)
    top = np.linalg.eigvalsh(gram)[..., -1]
    return np.sqrt(np.clip(top, 0.0, None))


def _scan(A, d, want_block):
    m, n = A.shape
    if n % d:
        raise ValueError(f"block length {d} does not divide n={n}")
    chunk = max(d, (_CHUNK_COLUMNS // d) * d)
    mu = nu = mu_B = 0.0
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        # the Gram matrix is symmetric: pair this chunk only with itself and later columns
        G = A[:, start:stop].T @ A[:, start:]
        width = G.shape[1]
        rows = np.arange(stop - start)
        absG = np.abs(G)
        absG[rows, rows] = 0.0
        absG[np.tril_indices(stop - start, -1, width)] = 0.0
        if n > 1:
            mu = max(mu, float(absG.max()))
        if d > 1:
            same_block = (rows[:, None] // d) == (np.arange(width)[None, :] // d)
            nu = max(nu, float(absG[same_block].max()))
        if want_block and n > d:
            nb_chunk = (stop - start) // d
            blocks = G.reshape(nb_chunk, d, width // d, d).transpose(0, 2, 1, 3)
            norms = _block_spectral_norms(blocks)
            norms[np.tril_indices(nb_chunk, 0, width // d)] = 0.0
            mu_B = max(mu_B, float(norms.max()) / d)
    return mu, nu, mu_B


def mutual_coherence(D):
    """Largest absolute inner product between two distinct columns."""
    A = _as_array(D)
    return _scan(A, 1, False)[0]


def block_coherence(D, d=None):
    """Largest spectral norm of a cross-block Gram matrix ``D[i]^T D[j]``, over d."""
    A = _as_array(D)
    d = D.d if d is None else d
    return _scan(A, d, True)[2]


def sub_coherence(D, d=None):
    """Largest absolute inner product between distinct columns of one block.

    Zero when ``d == 1``.
    """
    A = _as_array(D)
    d = D.d if d is None else d
    return _scan(A, d, False)[1]


def coherence_profile(D, d=None):
    """All three coherence measures from a single pass over the Gram matrix."""
    A = _as_array(D)
    d = D.d if d is None else d
    mu, nu, mu_B = _scan(A, d, True)
    return CoherenceProfile(mu=mu, mu_B=mu_B, nu=nu, d=d)


def erc_gamma(D, d, true_blocks, selected_blocks=()):
    """Block ERC constant of the residual support after ``selected_blocks``.

    Forms the projected, column-normalized remaining-support matrix ``A`` and
    off-support matrix ``B``, then returns ``max_j sum_i rho((A^+ B)[i, j])``
    over the ``d x d`` block partition. With no selection the projector is the
    identity and the normalizers are 1.

    Raises:
        ValueError: if the selected submatrix is rank deficient or not a
            subset of ``true_blocks``.
    """
    A_full = _as_array(D)
    m, n = A_full.shape
    n_blocks = n // d
    true_blocks = sorted(int(j) for j in true_blocks)
    selected = sorted(int(j) for j in selected_blocks)
    if not set(selected) <= set(true_blocks):
        raise ValueError("selected blocks must be a subset of the true support")

    def cols(blocks):
        blocks = np.asarray(blocks, dtype=int)
        return (blocks[:, None] * d + np.arange(d)).ravel()

    remaining = [j for j in true_blocks if j not in selected]
    off_support = [j for j in range(n_blocks) if j not in set(true_blocks)]
    if not remaining or not off_support:
        return ErcValue(0.0)

    if selected:
        Ds = A_full[:, cols(selected)]
        if np.linalg.matrix_rank(Ds) < Ds.shape[1]:
            raise ValueError("selected submatrix is rank deficient")
        Q, _ = np.linalg.qr(Ds)

        def project(X):
            return X - Q @ (Q.T @ X)
    else:
        def project(X):
            return X

    def normalize(X):
        norms = np.linalg.norm(X, axis=0)
        scale = np.zeros_like(norms)
        ok = norms > SPECTRAL_TOL
        scale[ok] = 1.0 / norms[ok]
        return X * scale

    A = normalize(project(A_full[:, cols(remaining)]))
    B = normalize(project(A_full[:, cols(off_support)]))
    M = np.linalg.pinv(A) @ B
    blocks = M.reshape(len(remaining), d, len(off_support), d).transpose(0, 2, 1, 3)
    rho = _block_spectral_norms(blocks)
    return ErcValue(float(rho.sum(axis=0).max()))
