"""Block-structured measurement matrices, block-sparse spectra and noise.

Block indices are 0-based throughout: block ``j`` of a matrix with block
length ``d`` owns columns ``j*d .. j*d + d - 1``.
"""
from dataclasses import dataclass, field

import numpy as np

UNIT_NORM_TOL = 1e-10
SIGNAL_DISTS = ("gauss01", "gauss1_001")


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class BlockMatrix:
    """An ``m x n`` measurement matrix split into ``n // d`` column blocks.

    Columns must have unit l2 norm. Use :meth:`normalized` to build one from
    arbitrary data.
    """

    entries: np.ndarray
    d: int

    def __post_init__(self):
        A = np.asarray(self.entries, dtype=float)
        if A.ndim != 2:
            raise ValueError("measurement matrix must be 2-D")
        if self.d < 1 or A.shape[1] % self.d:
            raise ValueError(f"block length {self.d} does not divide n={A.shape[1]}")
        norms = np.linalg.norm(A, axis=0)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise ValueError("columns must have unit l2 norm")
        A.setflags(write=False)
        object.__setattr__(self, "entries", A)

    @classmethod
    def normalized(cls, A, d):
        A = np.asarray(A, dtype=float)
        norms = np.linalg.norm(A, axis=0)
        if np.any(norms == 0):
            raise ValueError("cannot normalize a zero column")
        return cls(A / norms, d)

    @property
    def m(self):
        return self.entries.shape[0]

    @property
    def n(self):
        return self.entries.shape[1]

    @property
    def n_blocks(self):
        return self.n // self.d

    def block(self, j):
        return self.entries[:, j * self.d:(j + 1) * self.d]

    def columns(self, blocks):
        """Column indices covered by ``blocks``, in block order."""
        blocks = np.asarray(list(blocks), dtype=int)
        return (blocks[:, None] * self.d + np.arange(self.d)).ravel()


@dataclass(frozen=True)
class BlockSparseSignal:
    entries: np.ndarray
    d: int
    support_blocks: tuple = field(default=())

    def __post_init__(self):
        x = np.asarray(self.entries, dtype=float)
        if x.ndim != 1 or x.size % self.d:
            raise ValueError("signal length must be a multiple of d")
        n_blocks = x.size // self.d
        support = tuple(sorted(int(j) for j in self.support_blocks))
        if len(set(support)) != len(support):
            raise ValueError("duplicate support block")
        if support and (support[0] < 0 or support[-1] >= n_blocks):
            raise ValueError("support block out of range")
        mask = np.ones(n_blocks, dtype=bool)
        mask[list(support)] = False
        if np.any(x.reshape(n_blocks, self.d)[mask] != 0):
            raise ValueError("nonzero entries outside the support blocks")
        object.__setattr__(self, "entries", x)
        object.__setattr__(self, "support_blocks", support)

    @property
    def k(self):
        return len(self.support_blocks)

    @property
    def n_blocks(self):
        return self.entries.size // self.d


@dataclass(frozen=True)
class NoiseSpec:
    """Either an absolute noise level ``sigma`` or a target ``snr_db``."""

    sigma: float | None = None
    snr_db: float | None = None

    def __post_init__(self):
        if (self.sigma is None) == (self.snr_db is None):
            raise ValueError("give exactly one of sigma and snr_db")
        if self.sigma is not None and self.sigma <= 0:
            raise ValueError("sigma must be positive")


def gen_gaussian_block_orthogonal(m, n, d, seed=None):
    """I.i.d. N(0, 1/m) matrix with every block orthonormalized (nu = 0).

    Each ``m x d`` block is replaced by the Q factor of its thin QR
    decomposition, sign-corrected so that diag(R) > 0.
    """
    if d < 1 or n % d:
        raise ValueError(f"block length {d} does not divide n={n}")
    if d > m:
        raise ValueError(f"block length {d} exceeds m={m}; a block cannot be orthonormalized")
    rng = _rng(seed)
    G = rng.standard_normal((m, n)) / np.sqrt(m)
    blocks = G.reshape(m, n // d, d).transpose(1, 0, 2)
    Q, R = np.linalg.qr(blocks)
    signs = np.sign(np.diagonal(R, axis1=1, axis2=2))
    signs[signs == 0] = 1.0
    Q = Q * signs[:, None, :]
    D = Q.transpose(1, 0, 2).reshape(m, n)
    # QR already yields unit columns; renormalize to clear rounding.
    return BlockMatrix(D / np.linalg.norm(D, axis=0), d)


def gen_hybrid(m, n, d, G=5.0, seed=None):
    """Hybrid matrix with columns ``a_i (h_i + g_i * 1)``.

    ``h_i`` is standard Gaussian, ``g_i ~ U[0, G]`` and ``a_i`` normalizes the
    column. The shared offset drives the mutual coherence towards 1.
    """
    if G <= 0:
        raise ValueError("G must be positive")
    if d < 1 or n % d:
        raise ValueError(f"block length {d} does not divide n={n}")
    rng = _rng(seed)
    H = rng.standard_normal((m, n))
    g = rng.uniform(0.0, G, size=n)
    return BlockMatrix.normalized(H + g[None, :], d)


def gen_signal(n, d, k, dist="gauss01", seed=None):
    """Random block-sparse spectrum with ``k`` active blocks.

    Args:
        n: signal length.
        d: block length.
        k: number of nonzero blocks, drawn uniformly without replacement.
        dist: ``"gauss01"`` for N(0, 1) entries or ``"gauss1_001"`` for
            N(1, 0.01) entries (standard deviation 0.1).
        seed: anything accepted by ``numpy.random.default_rng``.
    """
    if n % d:
        raise ValueError(f"block length {d} does not divide n={n}")
    n_blocks = n // d
    if not 0 <= k <= n_blocks:
        raise ValueError(f"block sparsity {k} outside [0, {n_blocks}]")
    if dist not in SIGNAL_DISTS:
        raise ValueError(f"unknown signal distribution {dist!r}")
    rng = _rng(seed)
    support = rng.choice(n_blocks, size=k, replace=False)
    if dist == "gauss01":
        values = rng.standard_normal((k, d))
    else:
        values = rng.normal(1.0, 0.1, size=(k, d))
    x = np.zeros((n_blocks, d))
    x[support] = values
    return BlockSparseSignal(x.ravel(), d, tuple(support))


def calibrate_noise(D, x, snr_db, seed=None):
    """Draw white Gaussian noise so that ``||Dx||^2 / (m sigma^2)`` hits ``snr_db``.

    Calibration uses the realized ``||Dx||``, so the SNR is exact per draw.
    ``snr_db = inf`` gives the noiseless case.

    Returns:
        ``(noise, sigma)``
    """
    A = D.entries if isinstance(D, BlockMatrix) else np.asarray(D, dtype=float)
    xv = x.entries if isinstance(x, BlockSparseSignal) else np.asarray(x, dtype=float)
    m = A.shape[0]
    if np.isposinf(snr_db):
        return np.zeros(m), 0.0
    signal_norm = np.linalg.norm(A @ xv)
    if signal_norm == 0:
        raise ValueError("cannot calibrate noise against a zero signal")
    sigma = signal_norm / np.sqrt(m * 10.0 ** (snr_db / 10.0))
    return sigma * _rng(seed).standard_normal(m), float(sigma)


def is_success(x_hat, x_true, rel_tol=1e-2):
    """Relative l2 recovery test; for a zero ``x_true`` the tolerance is absolute."""
    x_hat = np.asarray(x_hat, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    if x_hat.shape != x_true.shape:
        raise ValueError("length mismatch")
    ref = np.linalg.norm(x_true)
    err = np.linalg.norm(x_hat - x_true)
    return bool(err <= rel_tol * (ref if ref > 0 else 1.0))
