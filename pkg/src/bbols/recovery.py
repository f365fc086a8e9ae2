"""Greedy block-sparse solvers (OMP, OLS, BOMP, BOLS) with pluggable stopping rules.

The scalar algorithms are the block algorithms run with block length 1 on
the same matrix, so ``selected_blocks`` holds column indices for them.
"""
from dataclasses import dataclass, field

import numpy as np

from .block_model import BlockMatrix

ALGORITHMS = ("omp", "ols", "bomp", "bols")
RULE_KINDS = ("fixed_iterations", "residual_norm", "blind_block", "blind_scalar")
STOP_REASONS = ("blind_rule", "fixed_count", "residual", "cap")
# residual below this fraction of ||y|| is treated as exact fit
ZERO_RESIDUAL = 1e-12
# a candidate whose projected block Gram has an eigenvalue below this adds nothing
DEGENERATE_EIG = 1e-10


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class StoppingRule:
    """When to stop iterating.

    Build with the classmethods; ``max_iterations`` is a hard cap applied on
    top of every rule (default ``floor(m / d)``).
    """

    kind: str
    iterations: int | None = None
    tol: float | None = None
    xi: float | None = None
    coherence: float | None = None
    d: int = 1
    max_iterations: int | None = None

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown stopping rule {self.kind!r}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")

    @classmethod
    def fixed_iterations(cls, T, max_iterations=None):
        if T < 0:
            raise ValueError("iteration count must be nonnegative")
        return cls("fixed_iterations", iterations=int(T), max_iterations=max_iterations)

    @classmethod
    def residual_norm(cls, tol, max_iterations=None):
        return cls("residual_norm", tol=float(tol), max_iterations=max_iterations)

    @classmethod
    def blind_block(cls, xi, mu_B, d, max_iterations=None):
        """Stop once ``||D^T r||_{2,inf} / ||r||_2 <= sqrt(d) xi mu_B``."""
        return cls("blind_block", xi=float(xi), coherence=float(mu_B), d=int(d),
                   max_iterations=max_iterations)

    @classmethod
    def blind_scalar(cls, xi, mu, max_iterations=None):
        """Block-length-one form of the blind test: ``||D^T r||_inf / ||r||_2 <= xi mu``."""
        return cls("blind_scalar", xi=float(xi), coherence=float(mu), d=1,
                   max_iterations=max_iterations)

    @property
    def is_blind(self):
        return self.kind in ("blind_block", "blind_scalar")

    @property
    def threshold(self):
        if not self.is_blind:
            return None
        return np.sqrt(self.d) * self.xi * self.coherence


@dataclass
class RecoveryResult:
    x_hat: np.ndarray
    selected_blocks: list
    residual_trace: list
    blind_stat_trace: list
    stop_reason: str
    d: int
    rank_deficient: bool = False

    @property
    def iterations(self):
        return len(self.selected_blocks)

    def support_columns(self):
        cols = np.asarray(self.selected_blocks, dtype=int)
        return (cols[:, None] * self.d + np.arange(self.d)).ravel()


def l2inf_norm(v, d):
    """Largest l2 norm over consecutive length-``d`` blocks of ``v``."""
    v = np.asarray(v, dtype=float)
    if v.size % d:
        raise ValueError(f"length {v.size} not divisible by {d}")
    if v.size == 0:
        return 0.0
    return float(np.sqrt((v.reshape(-1, d) ** 2).sum(axis=1)).max())


def blind_statistic(D, r, d):
    """``||D^T r||_{2,inf} / ||r||_2``; scale invariant in ``r``."""
    A = D.entries if isinstance(D, BlockMatrix) else np.asarray(D, dtype=float)
    r = np.asarray(r, dtype=float)
    rn = np.linalg.norm(r)
    if rn == 0:
        raise ValueError("blind statistic undefined for a zero residual")
    return l2inf_norm(A.T @ r, d) / rn


class _Projector:
    """Orthonormal basis of the selected columns plus the dictionary projected off it.

    Adding a block updates ``U = P_perp D`` with one rank-``d`` correction
    instead of refactoring the selected submatrix.
    """

    def __init__(self, A, d):
        self.A = A
        self.d = d
        self.Q = np.zeros((A.shape[0], 0))
        self.U = A.copy()

    def add(self, j):
        W = self.U[:, j * self.d:(j + 1) * self.d]
        # one extra Gram-Schmidt pass against accumulated rounding
        W = W - self.Q @ (self.Q.T @ W)
        q, _ = np.linalg.qr(W)
        self.U -= q @ (q.T @ self.U)
        self.Q = np.hstack([self.Q, q])

    def ols_gain(self, r):
        """Residual energy removed by appending each block, 0 for degenerate blocks."""
        d = self.d
        nb = self.A.shape[1] // d
        c = (self.U.T @ r).reshape(nb, d)
        if d == 1:
            g = (self.U**2).sum(axis=0)
            ok = g > DEGENERATE_EIG
            gain = np.zeros(nb)
            gain[ok] = c[ok, 0] ** 2 / g[ok]
            return gain
        Ub = self.U.reshape(self.U.shape[0], nb, d)
        G = np.einsum("mbi,mbj->bij", Ub, Ub)
        w, V = np.linalg.eigh(G)
        ok = w[:, 0] > DEGENERATE_EIG
        proj = np.einsum("bij,bi->bj", V, c)
        gain = np.zeros(nb)
        gain[ok] = (proj[ok] ** 2 / w[ok]).sum(axis=1)
        return gain


def _check_step(D, d, S_t):
    nb = D.shape[1] // d
    S_t = [int(j) for j in S_t]
    if len(S_t) >= nb:
        raise SelectionError("no unselected block left")
    if (len(S_t) + 1) * d > D.shape[0]:
        raise SelectionError("selected columns would exceed m")
    return S_t


def _pick(scores, selected):
    scores = scores.copy()
    scores[list(selected)] = -np.inf
    return int(np.argmax(scores))


def bols_step(D, y, S_t, d=None):
    """Unselected block whose addition leaves the smallest projected residual.

    Ties go to the smallest block index.
    """
    A = D.entries if isinstance(D, BlockMatrix) else np.asarray(D, dtype=float)
    d = (D.d if isinstance(D, BlockMatrix) else 1) if d is None else d
    S_t = _check_step(A, d, S_t)
    proj = _Projector(A, d)
    for j in S_t:
        proj.add(j)
    y = np.asarray(y, dtype=float)
    r = y - proj.Q @ (proj.Q.T @ y)
    gain = proj.ols_gain(r)
    gain[S_t] = 0.0
    if not np.any(gain > 0) and np.linalg.norm(r) > 0:
        raise SelectionError("every candidate block is degenerate")
    return _pick(gain, S_t)


def bomp_step(D, r_t, S_t=(), d=None):
    """Unselected block with the largest correlation energy ``||D[j]^T r||_2``."""
    A = D.entries if isinstance(D, BlockMatrix) else np.asarray(D, dtype=float)
    d = (D.d if isinstance(D, BlockMatrix) else 1) if d is None else d
    S_t = _check_step(A, d, S_t)
    corr = np.asarray(A.T @ np.asarray(r_t, dtype=float)).reshape(-1, d)
    return _pick((corr**2).sum(axis=1), S_t)


def recover(D, y, algorithm="bols", rule=None):
    """Run one greedy solver until ``rule`` fires.

    Each iteration checks the stopping test first, then selects a block,
    re-solves least squares on the enlarged support and updates the residual.

    Args:
        D: ``BlockMatrix``. Block algorithms use its block length; ``omp`` and
            ``ols`` treat every column as its own block.
        y: measurement vector of length ``m``.
        algorithm: one of ``omp``, ``ols``, ``bomp``, ``bols``.
        rule: ``StoppingRule``; defaults to running until the cap.

    Returns:
        RecoveryResult
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    A = D.entries
    m, n = A.shape
    d = D.d if algorithm in ("bomp", "bols") else 1
    if rule is None:
        rule = StoppingRule.residual_norm(0.0)
    if rule.kind == "blind_block" and rule.d != d:
        raise ValueError(f"blind_block rule for d={rule.d} used with block length {d}")
    n_blocks = n // d
    cap = min(rule.max_iterations or m // d, m // d, n_blocks)
    stat_d = rule.d if rule.is_blind else d

    y = np.asarray(y, dtype=float)
    x_hat = np.zeros(n)
    y_norm = float(np.linalg.norm(y))
    if y_norm == 0:
        return RecoveryResult(x_hat, [], [0.0], [], "residual", d)

    proj = _Projector(A, d) if algorithm in ("ols", "bols") else None
    selected = []
    r = y.copy()
    residual_trace = [y_norm]
    stat_trace = []
    rank_deficient = False
    while True:
        r_norm = residual_trace[-1]
        if r_norm <= ZERO_RESIDUAL * y_norm:
            reason = "residual"
            break
        stat = blind_statistic(A, r, stat_d)
        stat_trace.append(stat)
        t = len(selected)
        if rule.kind == "fixed_iterations" and t >= rule.iterations:
            reason = "fixed_count"
            break
        if rule.kind == "residual_norm" and r_norm <= rule.tol:
            reason = "residual"
            break
        if rule.is_blind and stat <= rule.threshold:
            reason = "blind_rule"
            break
        if t >= cap:
            reason = "cap"
            break

        if proj is not None:
            gain = proj.ols_gain(r)
            gain[selected] = 0.0
            if not np.any(gain > 0):
                reason = "residual"
                break
            j = _pick(gain, selected)
            proj.add(j)
        else:
            corr = (A.T @ r).reshape(n_blocks, d)
            j = _pick((corr**2).sum(axis=1), selected)
        selected.append(j)

        cols = (np.asarray(selected)[:, None] * d + np.arange(d)).ravel()
        coef, _, rank, _ = np.linalg.lstsq(A[:, cols], y, rcond=None)
        rank_deficient = rank < cols.size
        x_hat = np.zeros(n)
        x_hat[cols] = coef
        r = y - A[:, cols] @ coef
        residual_trace.append(float(np.linalg.norm(r)))

    return RecoveryResult(x_hat, selected, residual_trace, stat_trace, reason, d, rank_deficient)
