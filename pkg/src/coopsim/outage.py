"""Outage analysis for relay subnetworks under Rayleigh fading.

Capacity of an active relay subset is approximated by the minimum over all
2^k cuts of

    I_cut = max( log2(1 + h_sd^2),
                 max_{i in omega} log2(1 + h_i^2)
                 + max_{j in subset \\ omega} log2(1 + g_j^2) )

with the max over an empty index set defined as 0. Outage at rate R is
Pr{capacity < R}. The analytic upper bound factors the direct-link term out
of each cut probability and evaluates

    P_omega = Pr{ log2(1+X) + log2(1+Y) < R }
            = integral_0^{2^R-1} f_X(x) * F_Y(2^R/(1+x) - 1) dx

by adaptive quadrature, where X is the max of the omega-side h_i^2 and Y the
max of the complement-side g_j^2, both maxima of independent exponentials.
A vectorized Monte-Carlo estimator serves as the bound's tightness oracle,
and exhaustive subset search gives the outage-optimal k-relay subnetwork.
"""
import itertools
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from .rng import named_rng
from .topology import sample_channel_batch


class IndexOutOfSubsetError(ValueError):
    """Cut contains relay indices outside the active subset."""


class QuadratureFailure(ArithmeticError):
    """Adaptive quadrature did not reach tolerance within its budget."""


DEFAULT_REL_TOL = 1e-8
DEFAULT_MC_SAMPLES = 100_000


@dataclass(frozen=True)
class Cut:
    """Relay indices grouped with the source side of a network bipartition."""
    omega: frozenset

    def __init__(self, omega=()):
        object.__setattr__(self, "omega", frozenset(int(i) for i in omega))


@dataclass(frozen=True)
class OutageQuery:
    rate: float
    subset: tuple = ()
    quadrature_rel_tol: float = DEFAULT_REL_TOL
    mc_samples: int = DEFAULT_MC_SAMPLES

    def __post_init__(self):
        object.__setattr__(self, "subset", tuple(int(i) for i in self.subset))
        if not self.rate > 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        if len(set(self.subset)) != len(self.subset):
            raise ValueError("subset indices must be distinct")
        if any(i < 1 for i in self.subset):
            raise ValueError("relay indices are 1-based")
        if not self.quadrature_rel_tol > 0:
            raise ValueError("quadrature_rel_tol must be positive")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be positive")


def _c(x):
    """Link capacity log2(1 + x) in bits/s/Hz."""
    return math.log2(1.0 + x)


def cut_value(c, cut, subset):
    """Information across one cut for a single realization.

    Relays in cut.omega contribute their source-side capacity, relays of
    the subset outside omega their destination-side capacity; empty maxima
    are 0, so an inactive or null side drops out exactly.
    """
    subset = tuple(subset)
    if not cut.omega <= set(subset):
        raise IndexOutOfSubsetError(
            f"cut {sorted(cut.omega)} not within subset {sorted(subset)}")
    src_side = max((_c(c.h2[i - 1]) for i in cut.omega), default=0.0)
    dst_side = max((_c(c.g2[j - 1]) for j in subset if j not in cut.omega), default=0.0)
    return max(_c(c.h_sd2), src_side + dst_side)


def approx_capacity(c, subset):
    """Cut-set capacity approximation: min of cut_value over all 2^k cuts."""
    subset = tuple(subset)
    best = math.inf
    for size in range(len(subset) + 1):
        for omega in itertools.combinations(subset, size):
            best = min(best, cut_value(c, Cut(omega), subset))
    return best if subset else _c(c.h_sd2)


def _capacity_batch(h_sd2, h2, g2, subset):
    """Vectorized approx_capacity over n realizations (arrays from
    sample_channel_batch). Returns the (n,) capacity array."""
    csd = np.log2(1.0 + h_sd2)
    idx = [i - 1 for i in subset]
    if not idx:
        return csd
    a = np.log2(1.0 + h2[:, idx])
    b = np.log2(1.0 + g2[:, idx])
    k = len(idx)
    cap = np.full(h_sd2.shape, np.inf)
    for mask in range(1 << k):
        src = [p for p in range(k) if mask >> p & 1]
        dst = [p for p in range(k) if not mask >> p & 1]
        rel = np.zeros(h_sd2.shape)
        if src:
            rel += a[:, src].max(axis=1)
        if dst:
            rel += b[:, dst].max(axis=1)
        np.minimum(cap, np.maximum(csd, rel), out=cap)
    return cap


def direct_outage(lambda_sd, rate):
    """Closed form 1 - exp(-lambda * (2^R - 1)) for the direct link."""
    if not (lambda_sd > 0 and rate > 0):
        raise ValueError("lambda_sd and rate must be positive")
    return -math.expm1(-lambda_sd * (2.0 ** rate - 1.0))


def _max_cdf(lams, x):
    """CDF of the max of independent exponentials at x."""
    if x <= 0.0:
        return 0.0
    p = 1.0
    for lam in lams:
        p *= -math.expm1(-lam * x)
    return p


def _max_pdf(lams, x):
    """Density of the max of independent exponentials (product rule)."""
    if x < 0.0:
        return 0.0
    total = 0.0
    for i, li in enumerate(lams):
        term = li * math.exp(-li * x)
        for k, lk in enumerate(lams):
            if k != i:
                term *= -math.expm1(-lk * x)
        total += term
    return total


@lru_cache(maxsize=400_000)
def _p_omega(lams_src, lams_dst, rate, rel_tol):
    """Pr{log2(1+X) + log2(1+Y) < R} for X = max Exp(lams_src), Y = max
    Exp(lams_dst); degenerate sides reduce to a single CDF evaluation.

    Interior breakpoints at the exponential scales keep the adaptive rule
    from overlooking a boundary-concentrated density at large lambda.
    """
    tau = 2.0 ** rate - 1.0
    if tau <= 0.0:
        return 0.0
    if not lams_src and not lams_dst:
        return 1.0
    if not lams_src:
        return _max_cdf(lams_dst, tau)
    if not lams_dst:
        return _max_cdf(lams_src, tau)

    # P <= min(F_X(tau), F_Y(tau)); skip degenerate quadrature on negligible mass
    ceiling = min(_max_cdf(lams_src, tau), _max_cdf(lams_dst, tau))
    if ceiling < 1e-14:
        return ceiling

    two_r = 2.0 ** rate

    def integrand(x):
        return _max_pdf(lams_src, x) * _max_cdf(lams_dst, two_r / (1.0 + x) - 1.0)

    points = {tau * s for s in (1e-9, 1e-6, 1e-3, 1e-2, 0.1, 0.5)}
    points |= {1.0 / lam for lam in lams_src + lams_dst}
    points = sorted(p for p in points if 0.0 < p < tau)
    with warnings.catch_warnings():
        # the abserr check below replaces QUADPACK's roundoff warning
        warnings.simplefilter("ignore", IntegrationWarning)
        value, abserr = quad(integrand, 0.0, tau, points=points,
                             epsabs=0.0, epsrel=rel_tol, limit=500)
    if not math.isfinite(value) or abserr > 10.0 * rel_tol * max(abs(value), 1e-300):
        raise QuadratureFailure(
            f"P_omega quadrature reached error {abserr:.3e} for value {value:.3e} "
            f"(rel_tol {rel_tol:.1e})")
    return min(max(value, 0.0), 1.0)


def _cut_rates(t, cut, subset):
    lams_src = tuple(sorted(t.lambda_sr[i - 1] for i in cut.omega))
    lams_dst = tuple(sorted(t.lambda_rd[j - 1] for j in subset if j not in cut.omega))
    return lams_src, lams_dst


def _check_subset(t, subset):
    if any(i > t.n_relays for i in subset):
        raise ValueError(
            f"subset {subset} has indices beyond the {t.n_relays}-relay topology")


def cut_outage_analytic(t, q, cut):
    """P_omega for one cut of the query's subset, by adaptive quadrature."""
    _check_subset(t, q.subset)
    if not cut.omega <= set(q.subset):
        raise IndexOutOfSubsetError(
            f"cut {sorted(cut.omega)} not within subset {sorted(q.subset)}")
    lams_src, lams_dst = _cut_rates(t, cut, q.subset)
    return _p_omega(lams_src, lams_dst, float(q.rate), float(q.quadrature_rel_tol))


def p_omega_by_term_expansion(lams_src, lams_dst, rate, rel_tol=DEFAULT_REL_TOL):
    """Cross-check evaluation of P_omega as a signed sum of elementary
    integrals exp(-alpha*x - beta*(2^R/(1+x) - 1)).

    Expands both the density of X and the CDF of Y into exponential terms;
    valid only for distinct rate parameters (the expansion cancels badly
    for repeated values, which is why the direct quadrature above is the
    production path).
    """
    tau = 2.0 ** rate - 1.0
    if tau <= 0.0:
        return 0.0
    if not lams_src:
        return _max_cdf(lams_dst, tau)
    if not lams_dst:
        return _max_cdf(lams_src, tau)
    two_r = 2.0 ** rate

    def elementary(alpha, beta):
        f = lambda x: math.exp(-alpha * x - beta * (two_r / (1.0 + x) - 1.0))
        val, _ = quad(f, 0.0, tau, epsabs=0.0, epsrel=rel_tol, limit=200)
        return val

    total = 0.0
    src = list(lams_src)
    dst = list(lams_dst)
    for i, li in enumerate(src):
        rest = [l for k, l in enumerate(src) if k != i]
        for r_bits in range(1 << len(rest)):
            u = [rest[p] for p in range(len(rest)) if r_bits >> p & 1]
            sign_u = -1.0 if len(u) % 2 else 1.0
            alpha = li + sum(u)
            for t_bits in range(1 << len(dst)):
                tset = [dst[p] for p in range(len(dst)) if t_bits >> p & 1]
                sign_t = -1.0 if len(tset) % 2 else 1.0
                total += li * sign_u * sign_t * elementary(alpha, sum(tset))
    return total


def outage_upper_bound(t, q):
    """Union bound over all 2^k cuts, clamped to [0, 1]:
    direct_outage * sum_omega P_omega."""
    subset = q.subset
    total = 0.0
    for size in range(len(subset) + 1):
        for omega in itertools.combinations(subset, size):
            total += cut_outage_analytic(t, q, Cut(omega))
    return min(1.0, direct_outage(t.lambda_sd, q.rate) * total)


def outage_monte_carlo(t, q, rng):
    """Empirical outage over q.mc_samples independent realizations.

    Returns (estimate, binomial standard error).
    """
    if q.mc_samples < 100:
        raise ValueError(f"mc_samples must be >= 100, got {q.mc_samples}")
    _check_subset(t, q.subset)
    n = int(q.mc_samples)
    h_sd2, h2, g2 = sample_channel_batch(t, rng, n)
    cap = _capacity_batch(h_sd2, h2, g2, q.subset)
    p = float(np.count_nonzero(cap < q.rate)) / n
    return p, math.sqrt(p * (1.0 - p) / n)


def best_subnetwork(t, k, rate, method="analytic", rel_tol=DEFAULT_REL_TOL,
                    mc_samples=DEFAULT_MC_SAMPLES, rng=None):
    """Exhaustive search for the outage-optimal k-relay subset.

    Subsets are scanned in lexicographic order and ties keep the earliest,
    i.e. the lexicographically smallest subset. With method="montecarlo"
    one batch of draws is shared by every subset (common random numbers),
    which preserves the capacity monotonicity of nested subsets in the
    empirical estimates.
    """
    if not 0 <= k <= t.n_relays:
        raise ValueError(f"k must be in [0, {t.n_relays}], got {k}")
    if method not in ("analytic", "montecarlo"):
        raise ValueError(f"unknown method {method!r}")
    if method == "montecarlo":
        n = int(mc_samples)
        draw_rng = rng if rng is not None else named_rng(0, "best_subnetwork")
        h_sd2, h2, g2 = sample_channel_batch(t, draw_rng, n)

    best_subset, best_value = None, math.inf
    for subset in itertools.combinations(range(1, t.n_relays + 1), k):
        if method == "analytic":
            q = OutageQuery(rate=rate, subset=subset, quadrature_rel_tol=rel_tol)
            value = outage_upper_bound(t, q)
        else:
            cap = _capacity_batch(h_sd2, h2, g2, subset)
            value = float(np.count_nonzero(cap < rate)) / n
        if value < best_value:
            best_subset, best_value = subset, value
    return best_subset, best_value


def _snr_scale(snr_linear, k, normalization):
    if normalization == "per_node":
        return snr_linear
    if normalization == "total_power":
        # total budget split evenly over the k+1 transmitting nodes
        return snr_linear / (k + 1)
    raise ValueError(f"unknown normalization {normalization!r}")


def outage_sweep(template, k_values, rate, snr_grid_db, normalization="per_node",
                 method="analytic", rel_tol=DEFAULT_REL_TOL,
                 mc_samples=DEFAULT_MC_SAMPLES, seed=0):
    """Best-subnetwork outage across an SNR grid.

    The template topology holds the relative link gains; each grid point
    scales every mean link SNR by the reference SNR (per_node) or by
    reference/(k+1) (total_power). Rows come out as dicts with keys
    snr_db, k, subset, outage, method.
    """
    grid = [float(s) for s in snr_grid_db]
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("snr_grid_db must be nonempty and strictly ascending")
    rows = []
    for gi, snr_db in enumerate(grid):
        snr_linear = 10.0 ** (snr_db / 10.0)
        for k in k_values:
            scaled = template.scaled(_snr_scale(snr_linear, k, normalization))
            subset, value = best_subnetwork(
                scaled, k, rate, method=method, rel_tol=rel_tol,
                mc_samples=mc_samples,
                rng=named_rng(seed, "sweep", gi) if method == "montecarlo" else None)
            rows.append({
                "snr_db": snr_db,
                "k": k,
                "subset": subset,
                "outage": value,
                "method": method,
            })
    return rows


def required_snr_db(template, k, rate, target, normalization="per_node",
                    lo_db=-20.0, hi_db=60.0, iterations=40,
                    rel_tol=DEFAULT_REL_TOL):
    """Reference SNR (dB) at which the best k-relay analytic outage bound
    crosses the target, found by bisection (the bound is monotone
    decreasing in SNR)."""

    def level(snr_db):
        scaled = template.scaled(_snr_scale(10.0 ** (snr_db / 10.0), k, normalization))
        _, value = best_subnetwork(scaled, k, rate, method="analytic", rel_tol=rel_tol)
        return value

    if level(lo_db) < target:
        raise ValueError(f"target {target} already met at lo_db={lo_db}")
    if level(hi_db) > target:
        raise ValueError(f"target {target} not reached at hi_db={hi_db}")
    lo, hi = lo_db, hi_db
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if level(mid) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
