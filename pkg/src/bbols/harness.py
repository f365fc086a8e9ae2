"""Monte Carlo recovery sweeps, theory-curve tables and spectrum occupancy."""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from . import bounds as bd
from .block_model import (SIGNAL_DISTS, calibrate_noise, gen_gaussian_block_orthogonal,
                          gen_hybrid, gen_signal, is_success)
from .coherence import coherence_profile
from .io import ConfigError, parse_grid
from .recovery import StoppingRule, recover

log = logging.getLogger(__name__)

# label -> (solver, rule family)
ALGORITHMS = {
    "OLS-CSS": ("ols", "fixed"),
    "BOLS-CSS": ("bols", "fixed"),
    "OMP-CSS": ("omp", "fixed"),
    "BOMP-CSS": ("bomp", "fixed"),
    "B-OMP-CSS": ("omp", "blind"),
    "B-BOLS-CSS": ("bols", "blind"),
}
MATRIX_KINDS = ("gaussian_block_orth", "hybrid")
SUCCESS_METRICS = ("support", "l2")
OCCUPANCY_ENERGY = 1e-8


def canonical_algorithm(name):
    key = name.strip().upper()
    if not key.endswith("-CSS"):
        key += "-CSS"
    if key not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHMS)}")
    return key


@dataclass
class ExperimentConfig:
    """One recovery-probability curve.

    Exactly one of ``k_grid`` / ``snr_grid`` is swept; the other axis is held
    at ``k`` or ``snr_db``.
    """

    matrix_kind: str = "gaussian_block_orth"
    m: int = 128
    n: int = 512
    d: int = 4
    k_grid: tuple = ()
    snr_grid: tuple = ()
    k: int = 4
    snr_db: float = 20.0
    signal_dist: str = "gauss01"
    algorithms: tuple = tuple(ALGORITHMS)
    trials: int = 1000
    master_seed: int = 0
    success_rel_tol: float = 1e-2
    success_metric: str = "support"
    p_target: float = 0.95
    xi: float | None = None
    G: float = 5.0
    fixed_matrix: bool = False
    workers: int = 1

    def __post_init__(self):
        self.k_grid = tuple(int(k) for k in self.k_grid)
        self.snr_grid = tuple(float(s) for s in self.snr_grid)
        self.algorithms = tuple(canonical_algorithm(a) for a in self.algorithms)
        if self.matrix_kind not in MATRIX_KINDS:
            raise ConfigError(f"matrix_kind must be one of {MATRIX_KINDS}")
        if self.signal_dist not in SIGNAL_DISTS:
            raise ConfigError(f"signal_dist must be one of {SIGNAL_DISTS}")
        if self.success_metric not in SUCCESS_METRICS:
            raise ConfigError(f"success_metric must be one of {SUCCESS_METRICS}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.d < 1 or self.n % self.d:
            raise ConfigError(f"d={self.d} does not divide n={self.n}")
        if bool(self.k_grid) == bool(self.snr_grid):
            raise ConfigError("give exactly one of k_grid and snr_grid")
        if not self.algorithms:
            raise ConfigError("no algorithms configured")
        if any(k < 0 or k > self.n // self.d for k in self.k_grid + (self.k,)):
            raise ConfigError("block sparsity out of range")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    @property
    def sweep(self):
        return "k" if self.k_grid else "snr"

    @property
    def grid(self):
        return self.k_grid or self.snr_grid

    @classmethod
    def from_mapping(cls, raw):
        """Build from string values, e.g. a parsed flat config file."""
        known = {f.name.lower(): f.name for f in fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            if key.strip().lower() not in known:
                raise ConfigError(f"unknown config key {key!r}")
            key = known[key.strip().lower()]
            value = value.strip()
            try:
                if key == "k_grid":
                    kwargs[key] = parse_grid(value, int)
                elif key == "snr_grid":
                    kwargs[key] = parse_grid(value, float)
                elif key == "algorithms":
                    kwargs[key] = [a for a in value.split(",") if a.strip()]
                elif key in ("m", "n", "d", "k", "trials", "master_seed", "workers"):
                    kwargs[key] = int(value)
                elif key == "fixed_matrix":
                    kwargs[key] = value.lower() in ("1", "true", "yes", "on")
                elif key == "xi":
                    kwargs[key] = None if value.lower() in ("", "none") else float(value)
                elif key in ("snr_db", "success_rel_tol", "p_target", "G"):
                    kwargs[key] = float(value)
                else:
                    kwargs[key] = value
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {value!r}") from exc
        return cls(**kwargs)


@dataclass
class CurvePoint:
    """Aggregated outcomes of every algorithm at one abscissa.

    Per-label dicts hold counts and sums only, so aggregation is order independent.
    """

    abscissa: float
    trials: int = 0
    successes: dict = field(default_factory=dict)
    l2_successes: dict = field(default_factory=dict)
    support_successes: dict = field(default_factory=dict)
    iterations: dict = field(default_factory=dict)
    exact_stops: dict = field(default_factory=dict)
    xi_fallbacks: int = 0

    def success_prob(self, label):
        return self.successes.get(label, 0) / self.trials

    def stderr(self, label):
        p = self.success_prob(label)
        return math.sqrt(p * (1.0 - p) / self.trials)

    def mean_iters(self, label):
        return self.iterations.get(label, 0) / self.trials

    def exact_stop_prob(self, label):
        return self.exact_stops.get(label, 0) / self.trials

    def merge(self, other):
        self.trials += other.trials
        self.xi_fallbacks += other.xi_fallbacks
        for name in ("successes", "l2_successes", "support_successes", "iterations", "exact_stops"):
            mine, theirs = getattr(self, name), getattr(other, name)
            for key, val in theirs.items():
                mine[key] = mine.get(key, 0) + val


SWEEP_COLUMNS = ["abscissa", "algorithm", "success_prob", "stderr", "mean_iters",
                 "support_prob", "l2_prob", "exact_stop_prob"]


def sweep_rows(points, algorithms):
    for pt in points:
        for label in algorithms:
            yield [pt.abscissa, label, pt.success_prob(label), pt.stderr(label), pt.mean_iters(label),
                   pt.support_successes.get(label, 0) / pt.trials,
                   pt.l2_successes.get(label, 0) / pt.trials, pt.exact_stop_prob(label)]


def _make_matrix(config, seed):
    if config.matrix_kind == "gaussian_block_orth":
        return gen_gaussian_block_orthogonal(config.m, config.n, config.d, seed)
    return gen_hybrid(config.m, config.n, config.d, config.G, seed)


def blind_xi(p_target, m, n, mu, mu_B, d, variant="radius"):
    """Blind-rule scale from a target detection probability for one matrix.

    Raises:
        RegimeError: the probability bound cannot reach ``p_target`` here.
    """
    C = bd.erc_sparsity_bound_C(mu, mu_B, d)
    e = bd.eta(m, C)
    return bd.xi_from_probability(p_target, m, n, mu_B, e, C, variant)


def blind_rules(D, p_target, xi_fallback=None):
    """Stopping rules for B-BOLS (block statistic) and B-OMP (its d = 1 form).

    Returns:
        ``({label: StoppingRule}, used_fallback)``
    """
    prof = coherence_profile(D)
    used_fallback = False
    rules = {}
    for label, d, mu_B in (("B-BOLS-CSS", D.d, prof.mu_B), ("B-OMP-CSS", 1, prof.mu)):
        try:
            xi = blind_xi(p_target, D.m, D.n, prof.mu, mu_B, d)
        except bd.RegimeError as exc:
            if xi_fallback is None:
                raise
            log.info("%s: probability bound unusable (%s); using xi=%g", label, exc, xi_fallback)
            xi, used_fallback = xi_fallback, True
        if d == 1:
            rules[label] = StoppingRule.blind_scalar(xi, mu_B)
        else:
            rules[label] = StoppingRule.blind_block(xi, mu_B, d)
    return rules, used_fallback


def _trial(config, point_index, abscissa, trial_index, fixed_D=None):
    ss = np.random.SeedSequence([config.master_seed, point_index, trial_index])
    s_mat, s_sig, s_noise = ss.spawn(3)
    D = fixed_D if fixed_D is not None else _make_matrix(config, s_mat)
    k = int(abscissa) if config.sweep == "k" else config.k
    snr_db = config.snr_db if config.sweep == "k" else float(abscissa)
    x = gen_signal(config.n, config.d, k, config.signal_dist, s_sig)
    if k == 0:
        noise = np.zeros(config.m)
    else:
        noise, _ = calibrate_noise(D, x, snr_db, s_noise)
    y = D.entries @ x.entries + noise

    labels = config.algorithms
    rules, fallback = {}, False
    # a zero measurement stops every solver before any rule is consulted
    if np.any(y) and any(ALGORITHMS[lab][1] == "blind" for lab in labels):
        rules, fallback = blind_rules(D, config.p_target, config.xi)
    true_cols = set(D.columns(x.support_blocks).tolist())

    out = CurvePoint(abscissa, trials=1, xi_fallbacks=int(fallback))
    for label in labels:
        solver, family = ALGORITHMS[label]
        scalar = solver in ("omp", "ols")
        target = k * config.d if scalar else k
        if family == "blind" and rules:
            rule = rules[label]
        else:
            rule = StoppingRule.fixed_iterations(target)
        res = recover(D, y, solver, rule)
        picked = set(res.selected_blocks)
        support_ok = picked == (true_cols if scalar else set(x.support_blocks))
        l2_ok = is_success(res.x_hat, x.entries, config.success_rel_tol)
        ok = support_ok if config.success_metric == "support" else l2_ok
        out.successes[label] = int(ok)
        out.support_successes[label] = int(support_ok)
        out.l2_successes[label] = int(l2_ok)
        out.iterations[label] = res.iterations
        out.exact_stops[label] = int(res.iterations == target)
    return out


def _run_chunk(config, point_index, abscissa, trial_indices, fixed_D):
    acc = CurvePoint(abscissa)
    for t in trial_indices:
        acc.merge(_trial(config, point_index, abscissa, t, fixed_D))
    return acc


def run_sweep(config):
    """Success-probability curve over the configured grid.

    Every trial draws its matrix (unless ``fixed_matrix``), spectrum and noise
    from a stream seeded by ``(master_seed, point_index, trial_index)`` and runs
    all algorithms on the same data, so serial and parallel runs agree exactly.

    Returns:
        list of CurvePoint, one per grid value.
    """
    fixed_D = None
    if config.fixed_matrix:
        fixed_D = _make_matrix(config, np.random.SeedSequence([config.master_seed]))
    points = [CurvePoint(a) for a in config.grid]
    jobs = []
    for i, a in enumerate(config.grid):
        n_chunks = max(1, min(config.trials, 4 * config.workers))
        for chunk in np.array_split(np.arange(config.trials), n_chunks):
            if chunk.size:
                jobs.append((i, a, chunk.tolist()))
    if config.workers == 1:
        results = [_run_chunk(config, i, a, chunk, fixed_D) for i, a, chunk in jobs]
    else:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_run_chunk, config, i, a, chunk, fixed_D) for i, a, chunk in jobs]
            results = [f.result() for f in futures]
    for (i, _, _), part in zip(jobs, results):
        points[i].merge(part)
    for pt in points:
        if pt.xi_fallbacks:
            log.warning("abscissa %g: explicit xi used in %d/%d trials (probability bound unusable)",
                        pt.abscissa, pt.xi_fallbacks, pt.trials)
    return points


# -- figure presets for sweeps ----------------------------------------------

_K_SWEEP = dict(snr_db=20.0, algorithms=tuple(ALGORITHMS))
_SNR_GRID = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0)
SWEEP_PRESETS = {
    "fig5": dict(m=128, n=512, d=4, k_grid=tuple(range(1, 11)), **_K_SWEEP),
    "fig6": dict(m=256, n=512, d=8, k_grid=tuple(range(1, 11)), **_K_SWEEP),
    "fig7": dict(m=128, n=512, d=4, k=4, snr_grid=_SNR_GRID),
    "fig8": dict(m=256, n=512, d=8, k=4, snr_grid=_SNR_GRID),
    "fig9": dict(matrix_kind="hybrid", m=128, n=512, d=4, k=4, snr_grid=_SNR_GRID),
    "fig10": dict(matrix_kind="hybrid", m=128, n=512, d=4, k=4, snr_grid=_SNR_GRID,
                  signal_dist="gauss1_001"),
    "fig11": dict(matrix_kind="hybrid", m=256, n=512, d=8, k=4, snr_grid=_SNR_GRID),
    "fig12": dict(matrix_kind="hybrid", m=256, n=512, d=8, k=4, snr_grid=_SNR_GRID,
                  signal_dist="gauss1_001"),
}


def sweep_preset(name, **overrides):
    if name not in SWEEP_PRESETS:
        raise ConfigError(f"unknown sweep preset {name!r}")
    return ExperimentConfig(**{**SWEEP_PRESETS[name], **overrides})


# -- theory curves ------------------------------------------------------------

def _nan_on_regime(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except bd.RegimeError:
        return math.nan


def _pair(fn, *args):
    try:
        return fn(*args)
    except bd.RegimeError:
        return math.nan, math.nan


BOUND_PRESETS = ("fig1a", "fig1b", "fig2", "fig3", "fig4")


def _eig_rows(mu_values, k_values, d):
    cols = ["mu", "k", "d", "mu_B", "block_lo", "block_hi", "full_sparsity_lo", "full_sparsity_hi",
            "existing_lo", "existing_hi"]
    rows = []
    for mu in mu_values:
        for k in k_values:
            mu_B = mu / d
            rows.append([mu, k, d, mu_B,
                         *_pair(bd.eigen_bounds_block, k, d, mu_B),
                         *_pair(bd.eigen_bounds_corollary, k * d, d, mu_B),
                         *_pair(bd.eigen_bounds_existing, k * d, mu)])
    return cols, rows


def run_bound_curves(preset, grid=None):
    """Tabulate the closed-form bounds for one figure preset.

    Args:
        preset: ``fig1a`` (eigenvalue bounds vs mu), ``fig1b`` (vs k),
            ``fig2`` (projection-norm bounds versus mu and versus k), ``fig3``
            (reconstructible block sparsity vs mu) or ``fig4`` (SNR_min vs
            target probability).
        grid: optional overrides of the preset's axes (``mu``, ``k``, ``d``,
            ``p``; ``k_a`` and ``mu_b`` fix the second axis of the two fig2
            panels).

    Returns:
        ``(columns, rows)``; invalid points are NaN.
    """
    grid = dict(grid or {})
    if preset == "fig1a":
        return _eig_rows(grid.get("mu", np.round(np.linspace(0.01, 0.1, 46), 10)),
                         grid.get("k", [4]), grid.get("d", 2))
    if preset == "fig1b":
        return _eig_rows(grid.get("mu", [0.05]), grid.get("k", range(2, 9)), grid.get("d", 2))
    if preset == "fig2":
        # two panels in the style of fig1: versus mu at fixed k, versus k at fixed mu
        d = grid.get("d", 2)
        cols = ["panel", "mu", "k", "d", "mu_B", "B_factor", "projection_bound", "existing_bound_1",
                "existing_bound_2"]
        points = [("a", mu, k) for k in grid.get("k_a", [4])
                  for mu in grid.get("mu", np.round(np.linspace(0.01, 0.1, 46), 10))]
        points += [("b", mu, k) for mu in grid.get("mu_b", [0.05]) for k in grid.get("k", range(2, 9))]
        rows = []
        for panel, mu, k in points:
            mu_B = mu / d
            B, lb = _pair(bd.projection_bound_B, k, d, mu, mu_B)
            rows.append([panel, mu, k, d, mu_B, B, lb,
                         _nan_on_regime(bd.existing_projection_bound_1, k, d, mu),
                         _nan_on_regime(bd.existing_projection_bound_2, k, d, mu)])
        return cols, rows
    if preset == "fig3":
        cols = ["mu", "d", "mu_B", "C_sparsity", "cubic_root_check"]
        rows = []
        for d in grid.get("d", (2, 4)):
            for mu in grid.get("mu", np.linspace(0.02, 0.1, 50)):
                mu_B = mu / d
                rows.append([mu, d, mu_B, bd.erc_sparsity_bound_C(mu, mu_B, d),
                             bd.cubic_sparsity_limit(mu, mu_B, d)])
        return cols, rows
    if preset == "fig4":
        cols = ["m", "n", "k", "d", "mu", "mu_B", "p_target", "C_sparsity", "eta", "xi",
                "snr_min_radius", "snr_min_radius_db", "snr_min_projected",
                "snr_min_projected_db"]
        n, k, d = grid.get("n", 8192), grid.get("k", 2), grid.get("d", 2)
        rows = []
        for m, mu in grid.get("m_mu", ((1024, 0.135), (2048, 0.109))):
            mu_B = mu / d
            for p in grid.get("p", parse_grid("0.9:0.01:0.99")):
                rep = bd.bounds_report(m, n, k, d, mu, mu_B, p_target=p)
                rad, proj = rep.snr_min_radius, rep.snr_min_projected
                rows.append([m, n, k, d, mu, mu_B, p, rep.C_sparsity, rep.eta, rep.xi,
                             rad, 10 * math.log10(rad) if rad > 0 else math.nan,
                             proj, 10 * math.log10(proj) if proj > 0 else math.nan])
        return cols, rows
    raise ConfigError(f"unknown bounds preset {preset!r}; choose from {', '.join(BOUND_PRESETS)}")


# -- occupancy ----------------------------------------------------------------

@dataclass(frozen=True)
class OccupancyReport:
    occupied: np.ndarray  # bool per block

    @property
    def free_blocks(self):
        """Bands a secondary user may access."""
        return np.flatnonzero(~self.occupied).tolist()

    @property
    def occupied_blocks(self):
        return np.flatnonzero(self.occupied).tolist()


def occupancy_from_recovery(result, n_blocks):
    """Mark a band occupied when it was selected and carries non-negligible energy.

    Works for scalar results too: a selected column marks its enclosing band.
    """
    x = np.asarray(result.x_hat, dtype=float)
    if x.size % n_blocks:
        raise ValueError("signal length not divisible by the block count")
    band = x.size // n_blocks
    energy = np.sqrt((x.reshape(n_blocks, band) ** 2).sum(axis=1))
    cols = result.support_columns()
    chosen = np.zeros(n_blocks, dtype=bool)
    chosen[np.unique(cols // band)] = True
    occupied = chosen & (energy > OCCUPANCY_ENERGY * np.linalg.norm(x))
    return OccupancyReport(occupied)
