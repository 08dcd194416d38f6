"""Incidence-based species-richness estimators of maximum reachability.

Twelve estimators map frequency counts (t, f_1..f_t) to a point estimate of
the total number of coverage elements, with a two-sided confidence interval.
Chao-type intervals use the classical asymptotic-variance log-transform
construction; everything else (and any degenerate case) falls back to a
nonparametric bootstrap over sampling units.  Degenerate inputs never raise:
every estimator returns a status of ok, degenerate-fallback, or failed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .incidence import FrequencyCounts, IncidenceMatrix, frequency_counts, resample_units

ALL_METHODS = (
    "chao2",
    "chao2_bc",
    "ichao2",
    "jk1",
    "jk2",
    "ice",
    "ice1",
    "zelterman",
    "bootstrap",
    "chao_bunge",
    "unpmle",
    "pnpmle",
)

#: Methods with a classical analytic variance used for the default CI.
ANALYTIC_CI_METHODS = ("chao2", "chao2_bc")


@dataclass(frozen=True)
class EstimateWithCI:
    method: str
    point: float
    ci_low: float
    ci_high: float
    level: float
    status: str  # 'ok' | 'degenerate-fallback' | 'failed'
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class EMConfig:
    grid_size: int = 40
    max_support: int = 20
    tol: float = 1e-9
    max_iter: int = 5000
    penalty: float = 1.0  # pseudo-count shrinkage of the unobserved class
    prune_weight: float = 1e-6
    merge_tol: float = 1e-3


def _failed(method, level, reason):
    return EstimateWithCI(method, float("nan"), float("nan"), float("nan"), level, "failed", {"reason": reason})


# ---------------------------------------------------------------------------
# Point estimators (pure functions of FrequencyCounts).
# Each returns (point, status, diagnostics).
# ---------------------------------------------------------------------------

def _chao2(c: FrequencyCounts):
    t, s, f1, f2 = c.t, c.s_obs, c.fk(1), c.fk(2)
    a = (t - 1) / t
    if f1 == 0:
        return float(s), "ok", {"form": "no-singletons"}
    if f2 > 0:
        return s + a * f1 * f1 / (2 * f2), "ok", {"form": "classic"}
    return s + a * f1 * (f1 - 1) / 2.0, "ok", {"form": "f2-zero"}


def _chao2_bc(c: FrequencyCounts):
    t, s, f1, f2 = c.t, c.s_obs, c.fk(1), c.fk(2)
    a = (t - 1) / t
    return s + a * f1 * (f1 - 1) / (2.0 * (f2 + 1)), "ok", {}


def _ichao2(c: FrequencyCounts):
    t = c.t
    if t < 4:
        return None, "failed", {"reason": "iChao2 requires t >= 4"}
    base, _, _ = _chao2(c)
    f1, f2, f3, f4 = c.fk(1), c.fk(2), c.fk(3), c.fk(4)
    diagnostics = {}
    if f4 == 0:
        f4 = 1
        diagnostics["f4_substituted"] = True
    if f3 == 0:
        return base, "ok", diagnostics
    extra = ((t - 3) / (4.0 * t)) * (f3 / f4) * max(
        f1 - ((t - 3) / (2.0 * (t - 1))) * f2 * f3 / f4, 0.0
    )
    return base + extra, "ok", diagnostics


def _jk1(c: FrequencyCounts):
    t = c.t
    return c.s_obs + c.fk(1) * (t - 1) / t, "ok", {}


def _jk2(c: FrequencyCounts):
    t = c.t
    if t < 2:
        return None, "failed", {"reason": "JK2 requires t >= 2"}
    return (
        c.s_obs
        + c.fk(1) * (2 * t - 3) / t
        - c.fk(2) * (t - 2) ** 2 / (t * (t - 1)),
        "ok",
        {},
    )


def _ice(c: FrequencyCounts, bias_corrected_cv=False, cutoff=10, t_star=None):
    t = c.t
    t_star = t if t_star is None else t_star
    f = c.f
    s_inf = sum(fk for k, fk in f.items() if k <= cutoff)
    s_freq = c.s_obs - s_inf
    u = sum(k * fk for k, fk in f.items() if k <= cutoff)
    f1 = c.fk(1)
    if s_inf == 0 or u == 0:
        return float(c.s_obs), "degenerate-fallback", {"reason": "no infrequent elements"}
    cov = 1.0 - f1 / u
    if cov <= 0.0:
        # All infrequent elements are singletons: standard practice is Chao2.
        point, _, _ = _chao2(c)
        return point, "degenerate-fallback", {"reason": "zero sample coverage, chao2 fallback"}
    sum_kk1 = sum(k * (k - 1) * fk for k, fk in f.items() if k <= cutoff)
    if t_star > 1:
        gamma2 = max(
            (s_inf / cov) * (t_star / (t_star - 1.0)) * sum_kk1 / (u * u) - 1.0, 0.0
        )
    else:
        gamma2 = 0.0
    diagnostics = {"coverage": cov, "cv2": gamma2, "t_star": t_star}
    if bias_corrected_cv:
        if u > 1 and t_star > 1:
            gamma2 = max(
                gamma2
                * (1.0 + (f1 / cov) * (t_star / (t_star - 1.0)) * sum_kk1 / (u * (u - 1.0))),
                0.0,
            )
        diagnostics["cv2_corrected"] = gamma2
    point = s_freq + s_inf / cov + (f1 / cov) * gamma2
    return point, "ok", diagnostics


def _zelterman(c: FrequencyCounts):
    f1, f2 = c.fk(1), c.fk(2)
    if f1 == 0 or f2 == 0:
        return None, "failed", {"reason": "lambda undefined (f1 or f2 is zero)"}
    lam = 2.0 * f2 / f1
    return c.s_obs / (1.0 - math.exp(-lam)), "ok", {"lambda": lam}


def _bootstrap_point(c: FrequencyCounts):
    t = c.t
    extra = sum((1.0 - yi / t) ** t for yi in c.y)
    return c.s_obs + extra, "ok", {}


def _chao_bunge(c: FrequencyCounts):
    f = c.f
    f1 = c.fk(1)
    denom = sum(k * fk for k, fk in f.items())
    if denom == 0:
        return None, "failed", {"reason": "no incidences"}
    if f1 == 0:
        return float(sum(fk for k, fk in f.items() if k >= 2)), "ok", {"theta": 0.0}
    theta = f1 * sum(k * k * fk for k, fk in f.items()) / (denom * denom)
    if theta >= 1.0:
        return None, "failed", {"reason": f"theta {theta:.4f} >= 1"}
    point = sum(fk for k, fk in f.items() if k >= 2) / (1.0 - theta)
    if point < c.s_obs:
        return float(c.s_obs), "degenerate-fallback", {"theta": theta, "clamped": True}
    return point, "ok", {"theta": theta}


def _log_binom_pmf(t, ks, pis):
    """log Binomial(t, pi) pmf matrix over observed frequencies ks x support pis."""
    ks = np.asarray(ks, dtype=float)[:, None]
    pis = np.asarray(pis, dtype=float)[None, :]
    logc = np.array([math.lgamma(t + 1) - math.lgamma(k + 1) - math.lgamma(t - k + 1) for k in ks[:, 0]])[:, None]
    return logc + ks * np.log(pis) + (t - ks) * np.log1p(-pis)


def _npmle(c: FrequencyCounts, penalized: bool, cfg: EMConfig):
    """Zero-truncated binomial mixture fitted by EM over a support grid.

    The unobserved zero class is handled by data augmentation; the
    penalized variant shrinks the augmented zero count, which bounds the
    estimate away from the f0 blow-up of the raw mixture likelihood.
    """
    t = c.t
    n = c.s_obs
    if n == 0:
        return None, "failed", {"reason": "no observed elements"}
    ks = sorted(c.f)
    fks = np.array([c.f[k] for k in ks], dtype=float)
    # Support floor: detection probabilities below 1/(2t) are not
    # identifiable from t units, and without a floor the unpenalized
    # mixture likelihood drifts mass toward pi -> 0 (unbounded estimate).
    pi_floor = 1.0 / (2.0 * t)
    grid = np.linspace(pi_floor, 1.0 - 1e-12, cfg.grid_size)
    pis = np.clip(grid, pi_floor, 1.0 - 1e-10)
    w = np.full(len(pis), 1.0 / len(pis))
    lam = cfg.penalty if penalized else 0.0

    ll_prev = -np.inf
    converged = False
    iters = 0
    for iters in range(1, cfg.max_iter + 1):
        logpmf = _log_binom_pmf(t, ks, pis)  # |ks| x |support|
        pmf = np.exp(logpmf)
        z0 = np.exp(t * np.log1p(-pis))  # (1-pi)^t
        mix = pmf @ w
        p0 = float(z0 @ w)
        p0 = min(p0, 1.0 - 1e-12)
        n0 = max(n - lam, 0.0) * p0 / (1.0 - p0)

        resp = pmf * w[None, :]
        resp /= resp.sum(axis=1, keepdims=True)
        if p0 > 0:
            resp0 = z0 * w
            resp0 /= resp0.sum()
        else:
            resp0 = np.zeros_like(w)

        cls_mass = fks @ resp + n0 * resp0
        cls_inc = (fks * np.array(ks, dtype=float)) @ resp
        total = n + n0
        w = cls_mass / total
        with np.errstate(invalid="ignore", divide="ignore"):
            new_pis = np.where(cls_mass > 0, cls_inc / (t * cls_mass), pis)
        pis = np.clip(new_pis, pi_floor, 1.0 - 1e-10)

        ll = float(fks @ np.log(mix)) - n * math.log(1.0 - p0)
        if abs(ll - ll_prev) < cfg.tol:
            converged = True
            break
        ll_prev = ll

    if not converged:
        return None, "failed", {
            "reason": "EM did not converge",
            "iterations": iters,
            "ll_delta": abs(ll - ll_prev),
        }

    # Prune negligible weights and merge near-identical support points.
    keep = w > cfg.prune_weight
    w, pis = w[keep], pis[keep]
    w /= w.sum()
    order = np.argsort(pis)
    w, pis = w[order], pis[order]
    merged_w, merged_p = [], []
    for wi, pi in zip(w, pis):
        if merged_p and pi - merged_p[-1] < cfg.merge_tol:
            tot = merged_w[-1] + wi
            merged_p[-1] = (merged_p[-1] * merged_w[-1] + pi * wi) / tot
            merged_w[-1] = tot
        else:
            merged_p.append(pi)
            merged_w.append(wi)
    w = np.array(merged_w)
    pis = np.array(merged_p)
    if len(w) > cfg.max_support:
        top = np.argsort(w)[-cfg.max_support:]
        w, pis = w[np.sort(top)], pis[np.sort(top)]
        w /= w.sum()

    p0 = float(np.exp(t * np.log1p(-pis)) @ w)
    p0 = min(p0, 1.0 - 1e-12)
    point = n / (1.0 - p0)
    return point, "ok", {
        "iterations": iters,
        "log_likelihood": ll,
        "support_points": len(w),
        "support": [(float(p), float(wi)) for p, wi in zip(pis, w)],
        "p0": p0,
        "penalized": penalized,
    }


def point_estimate(counts: FrequencyCounts, method: str, *, cutoff: int = 10,
                   t_star: int = None, em_config: EMConfig = None):
    """Dispatch to one of the twelve estimators; returns (point, status, diagnostics)."""
    if method not in ALL_METHODS:
        raise ValueError(f"unknown estimator {method!r}")
    if counts.t < 2:
        return None, "failed", {"reason": "need at least 2 sampling units"}
    em_config = em_config or EMConfig()
    if method == "chao2":
        return _chao2(counts)
    if method == "chao2_bc":
        return _chao2_bc(counts)
    if method == "ichao2":
        return _ichao2(counts)
    if method == "jk1":
        return _jk1(counts)
    if method == "jk2":
        return _jk2(counts)
    if method == "ice":
        return _ice(counts, False, cutoff, t_star)
    if method == "ice1":
        return _ice(counts, True, cutoff, t_star)
    if method == "zelterman":
        return _zelterman(counts)
    if method == "bootstrap":
        return _bootstrap_point(counts)
    if method == "chao_bunge":
        return _chao_bunge(counts)
    if method == "unpmle":
        return _npmle(counts, False, em_config)
    return _npmle(counts, True, em_config)


# ---------------------------------------------------------------------------
# Confidence intervals
# ---------------------------------------------------------------------------

def _chao_type_variance(c: FrequencyCounts, method: str):
    """Classical asymptotic variance for Chao2 / Chao2_bc; None when undefined."""
    t, f1, f2 = c.t, c.fk(1), c.fk(2)
    a = (t - 1) / t
    if method == "chao2":
        if f1 == 0:
            return None
        if f2 > 0:
            r = f1 / f2
            return f2 * (0.5 * a * r ** 2 + a ** 2 * r ** 3 + 0.25 * a ** 2 * r ** 4)
        point, _, _ = _chao2(c)
        if point <= 0:
            return None
        return (
            0.5 * a * f1 * (f1 - 1)
            + 0.25 * a ** 2 * f1 * (2 * f1 - 1) ** 2
            - 0.25 * a ** 2 * f1 ** 4 / point
        )
    if method == "chao2_bc":
        return (
            0.5 * a * f1 * (f1 - 1) / (f2 + 1)
            + 0.25 * a ** 2 * f1 * (2 * f1 - 1) ** 2 / (f2 + 1) ** 2
            + 0.25 * a ** 2 * f1 ** 2 * f2 * (f1 - 1) ** 2 / (f2 + 1) ** 4
        )
    return None


def _log_transform_ci(point, s_obs, var, level):
    """Chao's log-transform interval for S >= S_obs.

    Its lower bound strictly exceeds S_obs whenever the estimate does, so
    it systematically misses the true value in near-complete samples; kept
    as an option, but the default analytic CI is the truncated normal one.
    """
    excess = point - s_obs
    if excess <= 0 or var <= 0:
        return float(s_obs), float(point)
    z = ndtri(0.5 + level / 2.0)
    r = math.exp(z * math.sqrt(math.log(1.0 + var / excess ** 2)))
    return s_obs + excess / r, s_obs + excess * r


def _normal_ci(point, s_obs, var, level):
    """Symmetric normal interval truncated below at S_obs.

    Unlike the log-transform form, the lower bound can sit at S_obs, so the
    interval keeps nominal coverage when the sample is nearly complete
    (true S = S_obs happens with sizable probability in that regime).
    """
    if var <= 0:
        return float(min(point, s_obs)), float(point)
    z = ndtri(0.5 + level / 2.0)
    sd = math.sqrt(var)
    return max(float(s_obs), point - z * sd), point + z * sd


#: Faster EM settings for the inner loop of bootstrap resampling.
BOOT_EM_CONFIG = EMConfig(grid_size=20, tol=1e-7, max_iter=1000)


def bootstrap_ci(matrix: IncidenceMatrix, method: str, level: float, seed: int = 0,
                 b: int = 500, point: float = None, **opts):
    """Percentile interval from resampling sampling-unit columns with replacement."""
    rng = np.random.default_rng(seed)
    t = matrix.t
    if method in ("unpmle", "pnpmle") and opts.get("em_config") is None:
        opts = dict(opts, em_config=BOOT_EM_CONFIG)
    # Dense 0/1 matrix once; per-resample Y and f_k are then pure numpy.
    dense = np.zeros((len(matrix.element_ids), t), dtype=np.uint8)
    for row, i in enumerate(matrix.element_ids):
        dense[row, list(matrix.rows[i])] = 1
    values = []
    memo = {}  # identical resampled counts recur often on saturated data
    for _ in range(b):
        idx = rng.integers(0, t, size=t)
        y = dense[:, idx].sum(axis=1)
        y = y[y > 0]
        counts = np.bincount(y)
        f = {int(k): int(counts[k]) for k in np.flatnonzero(counts)}
        key = tuple(sorted(f.items()))
        if key not in memo:
            rc = FrequencyCounts(t=t, f=f, s_obs=int(len(y)), y=tuple(int(v) for v in np.sort(y)))
            memo[key] = point_estimate(rc, method, **opts)
        p, status, _ = memo[key]
        if status != "failed" and p is not None and math.isfinite(p):
            values.append(p)
    if not values:
        return float("nan"), float("nan"), 0
    if len(set(values)) == 1:
        v = values[0] if point is None else point
        return float(v), float(v), len(values)
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(values, [alpha, 1.0 - alpha])
    return float(lo), float(hi), len(values)


def estimate(matrix: IncidenceMatrix, method: str, level: float = 0.90, *,
             seed: int = 0, boot_b: int = 500, cutoff: int = 10,
             exact_t_star: bool = False, em_config: EMConfig = None,
             analytic_ci: str = "normal") -> EstimateWithCI:
    """Point estimate plus CI for one method on an incidence matrix."""
    counts = frequency_counts(matrix)
    t_star = None
    if exact_t_star:
        infreq = {i for i in matrix.element_ids if len(matrix.rows[i]) <= cutoff}
        t_star = sum(1 for unit in matrix.units() if unit & infreq)
    opts = dict(cutoff=cutoff, t_star=t_star, em_config=em_config)
    point, status, diagnostics = point_estimate(counts, method, **opts)
    if status == "failed":
        return _failed(method, level, diagnostics.get("reason", "failed"))
    diagnostics = dict(diagnostics)
    if level <= 0.0:
        diagnostics["ci"] = "point"
        return EstimateWithCI(method, point, point, point, level, status, diagnostics)
    var = _chao_type_variance(counts, method) if method in ANALYTIC_CI_METHODS else None
    if var is not None:
        if analytic_ci == "log":
            lo, hi = _log_transform_ci(point, counts.s_obs, var, level)
            diagnostics["ci"] = "analytic-log-transform"
        else:
            lo, hi = _normal_ci(point, counts.s_obs, var, level)
            diagnostics["ci"] = "analytic-normal-truncated"
        diagnostics["variance"] = var
    else:
        lo, hi, n_ok = bootstrap_ci(matrix, method, level, seed, boot_b, point, **opts)
        diagnostics["ci"] = "unit-bootstrap-percentile"
        diagnostics["bootstrap_resamples"] = n_ok
    lo = min(lo, point)
    hi = max(hi, point)
    return EstimateWithCI(method, point, lo, hi, level, status, diagnostics)


def estimate_all(matrix: IncidenceMatrix, methods=ALL_METHODS, level: float = 0.90, **kw):
    return [estimate(matrix, m, level, **kw) for m in methods]
