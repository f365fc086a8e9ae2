"""Closed-form recovery bounds for block OLS under the mutual incoherence property.

Every function raises :class:`RegimeError` when its hypotheses fail (a
denominator or radicand leaves its valid range) instead of returning a
meaningless number. :func:`bounds_report` collects all of them for one
parameter point and records which ones were invalid.

Logarithms are natural. ``k`` is the block sparsity, ``K = k d`` the full
sparsity.
"""
import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy.optimize import brentq

log = logging.getLogger(__name__)

SPARSITY_CAP = 1e6
VARIANTS = ("radius", "projected")


class RegimeError(ValueError):
    """A bound was requested outside the parameter region where it is defined."""


def _require(cond, msg):
    if not cond:
        raise RegimeError(msg)


def _noise_radius(m):
    """``sqrt(m + 2 sqrt(m log m))``, the high-probability bound on ||eps|| / sigma."""
    return math.sqrt(m + 2.0 * math.sqrt(m * math.log(m)))


# -- eigenvalue intervals ---------------------------------------------------

def eigen_bounds_block(k, d, mu_B):
    """Interval for the eigenvalues of ``D0^T D0`` on ``k`` blocks (nu = 0)."""
    _require(k >= 1, "k must be at least 1")
    spread = (k - 1) * d * mu_B
    _require(spread < 1, f"(k-1) d mu_B = {spread:.6g} >= 1")
    return 1.0 - spread, 1.0 + spread


def eigen_bounds_corollary(K, d, mu_B):
    """Same interval parametrized by the full sparsity ``K = k d``."""
    _require(K >= d, "K must be at least d")
    spread = (K - d) * mu_B
    _require(spread < 1, f"(K-d) mu_B = {spread:.6g} >= 1")
    return 1.0 - spread, 1.0 + spread


def eigen_bounds_existing(K, mu):
    """Classical coherence-only interval ``1 -/+ (K-1) mu``."""
    _require(K >= 1, "K must be at least 1")
    spread = (K - 1) * mu
    _require(spread < 1, f"(K-1) mu = {spread:.6g} >= 1")
    return 1.0 - spread, 1.0 + spread


# -- projection norm lower bounds -------------------------------------------

def projection_bound_B(k, d, mu, mu_B):
    """Factor ``B`` and the lower bound ``sqrt(1/B)`` on ``||P_perp D_i||``.

    Returns:
        ``(B, sqrt(1 / B))``
    """
    _require((k - 1) * d * mu_B < 1, "(k-1) d mu_B >= 1")
    gap = 1.0 - (k - 1) * d * mu
    _require(gap > 0, "(k-1) d mu >= 1")
    frac = k * d * mu**2 * (1.0 + (k - 1) * d * mu_B) / gap**2
    _require(frac < 1, f"projection fraction {frac:.6g} >= 1")
    B = 1.0 / (1.0 - frac)
    return B, math.sqrt(1.0 / B)


def existing_projection_bound_1(k, d, mu):
    """``sqrt(1 - k d mu)``."""
    val = 1.0 - k * d * mu
    _require(val >= 0, "k d mu > 1")
    return math.sqrt(val)


def existing_projection_bound_2(k, d, mu):
    gap = 1.0 - (k - 1) * d * mu
    _require(gap > 0, "(k-1) d mu >= 1")
    ratio = math.sqrt(1.0 + (k * d - 1) * mu) * math.sqrt(k * d * mu**2) / gap
    _require(ratio <= 1, "ratio exceeds 1")
    return math.sqrt(1.0 - ratio**2)


def projection_bounds_existing(k, d, mu):
    return existing_projection_bound_1(k, d, mu), existing_projection_bound_2(k, d, mu)


# -- reconstructible sparsity (cubic) ---------------------------------------

def cubic_coefficients(mu, mu_B, d):
    """``(alpha, beta, omega, delta)`` of the cubic whose negativity certifies the ERC."""
    a = -d**3 * mu_B**2 * mu**2 + 3 * d**3 * mu_B * mu**2
    b = (d**3 * mu_B**2 * mu**2 + d**2 * mu_B * mu**2 - 7 * d**3 * mu_B * mu**2
         - 6 * d**2 * mu_B * mu - 2 * d**2 * mu**2)
    w = (5 * d**3 * mu_B * mu**2 - 2 * d**2 * mu_B * mu**2 + 8 * d**2 * mu_B * mu
         + 4 * d**2 * mu**2 + 2 * d * mu**2 + 3 * d * mu_B + 4 * d * mu)
    dl = -d**3 * mu_B * mu**2 - 2 * d**2 * mu_B * mu - 2 * d**2 * mu**2 - d * mu_B - 4 * d * mu - 2
    return a, b, w, dl


def _capped(value):
    return math.inf if value > SPARSITY_CAP else value


def cubic_sparsity_limit(mu, mu_B, d):
    """Largest ``k`` with the cubic negative on ``(0, k)``: its smallest positive root.

    Computed from polynomial companion eigenvalues; used as the cross-check for
    :func:`erc_sparsity_bound_C`. ``inf`` if the cubic never turns nonnegative.
    """
    coeffs = np.trim_zeros(np.array(cubic_coefficients(mu, mu_B, d), dtype=float), "f")
    if coeffs.size <= 1:
        return math.inf
    roots = np.roots(coeffs)
    scale = max(1.0, float(np.max(np.abs(roots)))) if roots.size else 1.0
    real = roots[np.abs(roots.imag) <= 1e-9 * scale].real
    real = real[real > 0]
    return _capped(float(real.min())) if real.size else math.inf


def erc_sparsity_bound_C(mu, mu_B, d):
    """Block sparsity below which the ERC holds, via the radical (Cardano) form.

    When the discriminant is negative the three roots are real and the radical
    form only cancels to a real value through complex cube roots; the smallest
    positive root is then taken from the trigonometric form. Values above
    ``SPARSITY_CAP`` are returned as ``inf``.
    """
    _require(mu >= 0 and mu_B >= 0 and d >= 1, "coherences must be nonnegative")
    a, b, w, dl = cubic_coefficients(mu, mu_B, d)
    if a == 0 or abs(a) < 1e-300:
        # lower-degree inequality (mu or mu_B is zero)
        return cubic_sparsity_limit(mu, mu_B, d)
    Q = (27 * a**2 * dl - 9 * a * b * w + 2 * b**3) / (27 * a**3)
    P = (3 * a * w - b**2) / (3 * a**2)
    disc = (Q / 2) ** 2 + (P / 3) ** 3
    shift = b / (3 * a)
    if disc >= 0:
        sq = math.sqrt(disc)
        value = float(np.cbrt(-Q / 2 + sq) + np.cbrt(-Q / 2 - sq)) - shift
    else:
        r = 2.0 * math.sqrt(-P / 3)
        phi = math.acos(max(-1.0, min(1.0, (3 * Q / (2 * P)) * math.sqrt(-3 / P))))
        ks = [r * math.cos(phi / 3 - 2 * math.pi * j / 3) - shift for j in range(3)]
        ks = [x for x in ks if x > 0]
        value = min(ks) if ks else math.inf
    # the radical form cancels badly near a zero discriminant; Newton polish restores the digits
    for _ in range(3):
        if not math.isfinite(value):
            break
        f = ((a * value + b) * value + w) * value + dl
        df = (3 * a * value + 2 * b) * value + w
        if df == 0:
            break
        value -= f / df
    check = cubic_sparsity_limit(mu, mu_B, d)
    if math.isfinite(check) and abs(value - check) > 1e-9 * max(1.0, check):
        log.warning("radical-form sparsity bound %.12g disagrees with root finder %.12g",
                    value, check)
    return _capped(value)


# -- ERC constant and noisy selection ---------------------------------------

def gamma_bound(k, d, mu_B, B_factor):
    """Upper bound on the ERC constant; below 1 means the ERC is certified."""
    _require((k - 1) * d * mu_B < 1, "(k-1) d mu_B >= 1")
    den = 2.0 - (k - B_factor) * d * mu_B
    _require(den > 0, "gamma bound denominator <= 0")
    return 2.0 * B_factor * k * d * mu_B / den


def _selection_denominator(k, d, mu_B, B_factor):
    first = 1.0 - (k - 1) * d * mu_B
    second = 2.0 - (k - B_factor) * d * mu_B - 2.0 * B_factor * k * d * mu_B
    _require(first > 0 and second > 0, "selection-threshold denominator <= 0")
    return first * second


def selection_threshold(k, t, d, mu_B, B_factor, m, sigma, per_block=False):
    """Minimum ``||x_remaining||_2`` for BOLS to pick a correct block at step ``t + 1``.

    With ``per_block=True`` the ``sqrt(k - t)`` factor is dropped, giving the
    per-block amplitude that guarantees every step.
    """
    _require(0 <= t < k, "need 0 <= t < k")
    den = _selection_denominator(k, d, mu_B, B_factor)
    lead = 2.0 if per_block else 2.0 * math.sqrt(k - t)
    num = lead * (2.0 - (k - B_factor) * d * mu_B) * math.sqrt(d) * sigma * _noise_radius(m)
    return num / den


def eta(m, C_sparsity):
    """Lower scale for ``||P_perp eps|| / sigma`` after support recovery."""
    r = m - C_sparsity
    _require(r > 1, f"m - C = {r:.6g} <= 1")
    return math.sqrt(4 * r - 2) - math.sqrt(r + 2 * math.sqrt(r * math.log(r)))


def snr_min_bound(k, d, mu_B, B_factor, m, xi, variant="radius", eta_value=None):
    """Linear lower bound on the minimum component SNR for blind BOLS recovery.

    Args:
        variant: ``"radius"`` bounds the noise by its norm radius in the selection
            branch; ``"projected"`` uses ``xi mu_B eta`` and requires
            ``eta_value``.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    radius = _noise_radius(m)
    sel_den = _selection_denominator(k, d, mu_B, B_factor)
    lead = 2.0 * (2.0 - (k - B_factor) * d * mu_B) * math.sqrt(d)
    if variant == "radius":
        branch1 = (lead * radius) ** 2 / (m * sel_den**2)
    else:
        if eta_value is None:
            raise ValueError("the projected variant needs eta_value")
        branch1 = (lead * xi * mu_B * eta_value) ** 2 / (m * sel_den**2)
    stop_den = 1.0 - (k - 1) * d * mu_B - math.sqrt(k * d) * xi * mu_B * (1.0 + (k - 1) * d * mu_B)
    _require(stop_den > 0, "stopping-branch denominator <= 0")
    branch2 = (math.sqrt(d) * xi * mu_B * radius) ** 2 / (m * stop_den**2)
    return max(branch1, branch2)


# -- detection probability and the blind-rule scale -------------------------

def _log_tail(n, z):
    return math.log(n) - 0.5 * math.log(2 * math.pi) - math.log(z) - 0.5 * z * z


def _ceiling(m, C, variant):
    if variant == "radius":
        return 1.0 - C / m - 1.0 / (m - C)
    return 1.0 - 1.0 / m - 1.0 / (m - C)


def _tail_weight(n, C, variant):
    return n if variant == "radius" else C * n


def success_probability(m, n, mu_B, xi, eta_value, C_sparsity, variant="radius"):
    """Lower bound on the probability that blind BOLS recovers the support.

    May be negative where the bound is vacuous; returned as is.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    _require(xi > 0 and mu_B > 0 and eta_value > 0, "xi, mu_B and eta must be positive")
    _require(m - C_sparsity > 0, "m <= C")
    z = xi * mu_B * eta_value
    tail = math.exp(_log_tail(_tail_weight(n, C_sparsity, variant), z))
    return _ceiling(m, C_sparsity, variant) - tail


def probability_ceiling(m, C_sparsity, variant="radius"):
    """Supremum of :func:`success_probability` as ``xi -> inf``."""
    return _ceiling(m, C_sparsity, variant)


def xi_from_probability(P_target, m, n, mu_B, eta_value, C_sparsity, variant="radius"):
    """Smallest ``xi`` whose success-probability bound reaches ``P_target``.

    Raises:
        RegimeError: ``P_target`` is at or above the achievable ceiling.
    """
    _require(0 < P_target < 1, "P_target must lie in (0, 1)")
    _require(mu_B > 0 and eta_value > 0, "mu_B and eta must be positive")
    ceiling = _ceiling(m, C_sparsity, variant)
    _require(P_target < ceiling,
             f"P_target {P_target} unreachable; achievable ceiling is {ceiling:.12g}")
    log_budget = math.log(ceiling - P_target)
    weight = _tail_weight(n, C_sparsity, variant)
    scale = mu_B * eta_value

    def gap(z):
        return _log_tail(weight, z) - log_budget

    lo, hi = 1e-12, 1.0
    # the tail term is strictly decreasing in z
    if gap(lo) < 0:
        return lo / scale
    while gap(hi) > 0:
        hi *= 2.0
    z = brentq(gap, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    xi = z / scale
    while success_probability(m, n, mu_B, xi, eta_value, C_sparsity, variant) < P_target:
        xi = np.nextafter(xi, math.inf)
    return float(xi)


def blind_threshold(xi, mu_B, d):
    """Right-hand side ``sqrt(d) xi mu_B`` of the blind stopping test."""
    return math.sqrt(d) * xi * mu_B


# -- all bounds at one parameter point --------------------------------------

@dataclass
class BoundsReport:
    m: int
    n: int
    k: int
    d: int
    mu: float
    mu_B: float
    p_target: float = math.nan
    lambda_lo: float = math.nan
    lambda_hi: float = math.nan
    existing_lambda_lo: float = math.nan
    existing_lambda_hi: float = math.nan
    B_factor: float = math.nan
    projection_bound: float = math.nan
    existing_bound_1: float = math.nan
    existing_bound_2: float = math.nan
    C_sparsity: float = math.nan
    gamma_bound: float = math.nan
    eta: float = math.nan
    xi: float = math.nan
    p_xi: float = math.nan
    snr_min_radius: float = math.nan
    snr_min_projected: float = math.nan
    invalid: list = field(default_factory=list)

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls) if f.name != "invalid"]

    def row(self):
        return [getattr(self, c) for c in self.columns()]


def bounds_report(m, n, k, d, mu, mu_B, p_target=None, xi=None, variant="radius"):
    """Evaluate every bound at one point; invalid ones stay NaN and are listed in ``invalid``.

    ``xi`` wins over ``p_target`` when both are given.
    """
    rep = BoundsReport(m=m, n=n, k=k, d=d, mu=mu, mu_B=mu_B,
                       p_target=math.nan if p_target is None else p_target)

    def attempt(names, fn):
        try:
            out = fn()
        except RegimeError as exc:
            rep.invalid.append(f"{names[0]}: {exc}")
            return None
        if len(names) == 1:
            out = (out,)
        for name, val in zip(names, out):
            setattr(rep, name, float(val))
        return out

    attempt(("lambda_lo", "lambda_hi"), lambda: eigen_bounds_block(k, d, mu_B))
    attempt(("existing_lambda_lo", "existing_lambda_hi"), lambda: eigen_bounds_existing(k * d, mu))
    attempt(("B_factor", "projection_bound"), lambda: projection_bound_B(k, d, mu, mu_B))
    attempt(("existing_bound_1",), lambda: existing_projection_bound_1(k, d, mu))
    attempt(("existing_bound_2",), lambda: existing_projection_bound_2(k, d, mu))
    attempt(("C_sparsity",), lambda: erc_sparsity_bound_C(mu, mu_B, d))
    B = rep.B_factor
    if not math.isnan(B):
        attempt(("gamma_bound",), lambda: gamma_bound(k, d, mu_B, B))
    if not math.isnan(rep.C_sparsity):
        attempt(("eta",), lambda: eta(m, rep.C_sparsity))
    if xi is not None:
        rep.xi = float(xi)
    elif p_target is not None and not math.isnan(rep.eta):
        attempt(("xi",), lambda: xi_from_probability(p_target, m, n, mu_B, rep.eta,
                                                     rep.C_sparsity, variant))
    if not math.isnan(rep.xi) and not math.isnan(rep.eta):
        attempt(("p_xi",), lambda: success_probability(m, n, mu_B, rep.xi, rep.eta,
                                                       rep.C_sparsity, variant))
    if not math.isnan(rep.xi) and not math.isnan(B):
        attempt(("snr_min_radius",), lambda: snr_min_bound(k, d, mu_B, B, m, rep.xi, "radius"))
        if not math.isnan(rep.eta):
            attempt(("snr_min_projected",),
                    lambda: snr_min_bound(k, d, mu_B, B, m, rep.xi, "projected", rep.eta))
    return rep
