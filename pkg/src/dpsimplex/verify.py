"""Monte-Carlo verification of the sparsification error bounds.

Seven suites check, on built-in test functions with hand-derived constants,
that averaging iid vertex draws approximates function values and gradients at
the advertised rates. Each suite reports the measured statistic, the analytic
bound, and a 3-sigma Monte-Carlo allowance; a suite passes when
``measured <= bound + slack``. Failing is a report outcome, not an exception.

Test functions and their constants on the simplex (gradients w.r.t. the
1-norm, so Lipschitz constants are sup-norm bounds):

* quadratic  F(x) = sum x_j^2:    L0 = 2, L1 = 2, L2 = 0
* cubic      F(x) = sum x_j^3:    L0 = 3, L1 = 6 (|3a^2-3b^2| <= 6|a-b| for
  a, b in [0,1]), L2 = 6 (each partial 3x_j^2 has gradient 6x_j e_j)
* hinge-quadratic F(x) = sum max(x_j - c, 0)^2: L0 = 2, L1 = 2, and no finite
  L2 (the partials' gradients jump at x_j = c), exercising the first-order-only
  bounds with genuinely nonzero bias
* squared linear family F_j(x) = <c_j, x>^2 with |c_j|_inf <= 1: L0 = 2, L1 = 2
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream

DEFAULT_REPS = 100_000
MIN_REPS = 10_000

SUITE_NAMES = (
    "value_bias",
    "grad_bias_second_order",
    "grad_bias_first_order",
    "value_tail",
    "max_error_moment",
    "grad_error_moment_second_order",
    "grad_error_moment_first_order",
)


@dataclass(frozen=True)
class SuiteReport:
    suite: str
    measured: float
    bound: float
    slack: float
    passed: bool
    reps: int
    warning: str | None = None
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "suite": self.suite,
            "measured": self.measured,
            "bound": self.bound,
            "slack": self.slack,
            "passed": self.passed,
            "reps": self.reps,
            "warning": self.warning,
            "details": self.details,
        }


# ---- test functions (vectorized over rows) --------------------------------


def _quad_value(p):
    return np.sum(p * p, axis=-1)


def _quad_grad(p):
    return 2.0 * p


def _cubic_value(p):
    return np.sum(p**3, axis=-1)


def _cubic_grad(p):
    return 3.0 * p * p


def _hinge_grad(p, c):
    return 2.0 * np.maximum(p - c, 0.0)


# ---- sampling machinery ----------------------------------------------------


def _fixed_sequence(d: int, T: int, rng: RngStream) -> np.ndarray:
    """A fixed sequence of interior simplex points shared by all reps."""
    return rng.gen.dirichlet(np.ones(d), size=T)


def _sparsified_means(xs: np.ndarray, reps: int, rng: RngStream) -> np.ndarray:
    """For each rep draw one vertex per sequence element and average.

    Returns an array of shape (reps, d): row r is the empirical mean of T iid
    one-hot draws, one from each distribution in ``xs``.
    """
    T, d = xs.shape
    out = np.zeros((reps, d))
    rows = np.arange(reps)
    cdfs = np.cumsum(xs, axis=1)
    for t in range(T):
        u = rng.gen.random(reps)
        idx = np.minimum(np.searchsorted(cdfs[t], u, side="left"), d - 1)
        np.add.at(out, (rows, idx), 1.0 / T)
    return out


def _mean_sigma(per_rep: np.ndarray) -> float:
    return float(per_rep.std(ddof=1)) / math.sqrt(per_rep.shape[0])


# ---- suites ----------------------------------------------------------------


def _suite_value_bias(reps, rng, d=50, T=64):
    L1 = 2.0
    xs = _fixed_sequence(d, T, rng.child("seq"))
    abar = _sparsified_means(xs, reps, rng.child("draws"))
    xbar = xs.mean(axis=0)
    stat = _quad_value(abar) - _quad_value(xbar)
    measured = abs(float(stat.mean()))
    bound = 2.0 * L1 / T
    sigma = _mean_sigma(stat)
    return measured, bound, sigma, {"d": d, "T": T, "L1": L1, "mean": float(stat.mean())}


def _suite_grad_bias_second_order(reps, rng, d=50, K=64):
    L2 = 6.0
    x = rng.child("point").gen.dirichlet(np.ones(d))
    abar = _sparsified_means(np.tile(x, (K, 1)), reps, rng.child("draws"))
    diffs = _cubic_grad(abar) - _cubic_grad(x)
    bias = diffs.mean(axis=0)
    measured = float(np.abs(bias).max())
    bound = 2.0 * L2 / K
    sigma = float(diffs.std(axis=0, ddof=1).max()) / math.sqrt(reps)
    return measured, bound, sigma, {"d": d, "K": K, "L2": L2}


def _suite_grad_bias_first_order(reps, rng, d=50, K=64):
    L1 = 2.0
    c = 1.0 / d  # kink sits where coordinates concentrate, so the bias is real
    x = rng.child("point").gen.dirichlet(np.ones(d))
    abar = _sparsified_means(np.tile(x, (K, 1)), reps, rng.child("draws"))
    diffs = _hinge_grad(abar, c) - _hinge_grad(x, c)
    bias = diffs.mean(axis=0)
    measured = float(np.abs(bias).max())
    bound = 4.0 * L1 / math.sqrt(K)
    sigma = float(diffs.std(axis=0, ddof=1).max()) / math.sqrt(reps)
    return measured, bound, sigma, {"d": d, "K": K, "L1": L1, "kink": c}


def _suite_value_tail(reps, rng, d=50, T=64):
    L0, L1, D = 2.0, 2.0, 2.0
    xs = _fixed_sequence(d, T, rng.child("seq"))
    abar = _sparsified_means(xs, reps, rng.child("draws"))
    xbar = xs.mean(axis=0)
    dev = _quad_value(abar) - _quad_value(xbar)
    lam2 = 1.0 / T  # sum of squared uniform averaging weights
    details = {}
    rows = []
    for beta in (1.0, 2.0):
        threshold = 0.5 * L1 * D * D * lam2 + beta * math.sqrt(2.0) * L0 * D * math.sqrt(lam2)
        freq = float((dev >= threshold).mean())
        bound = math.exp(-beta * beta)
        sigma = math.sqrt(bound * (1.0 - bound) / reps)
        details[f"beta={beta:g}"] = {"freq": freq, "bound": bound, "sigma": sigma}
        rows.append((freq - bound, freq, bound, sigma))
    _, freq, bound, sigma = max(rows)
    return freq, bound, sigma, details


def _suite_max_error_moment(reps, rng, d=50, T=64, M=16):
    L0, L1, D = 2.0, 2.0, 2.0
    cs = (rng.child("family").gen.integers(0, 2, size=(M, d)) * 2 - 1).astype(float)
    xs = _fixed_sequence(d, T, rng.child("seq"))
    abar = _sparsified_means(xs, reps, rng.child("draws"))
    xbar = xs.mean(axis=0)
    fa = (abar @ cs.T) ** 2
    fx = (xbar @ cs.T) ** 2
    stat = np.max(np.abs(fa - fx) ** 2, axis=1)
    measured = float(stat.mean())
    lam2 = 1.0 / T
    bound = 0.5 * L1**2 * D**4 * lam2**2 + 2.0 * L0**2 * D**2 * (4.0 + math.log(M)) * lam2
    sigma = _mean_sigma(stat)
    return measured, bound, sigma, {"d": d, "T": T, "M": M}


def _suite_grad_error_moment_second_order(reps, rng, d=50, T=64):
    L1, L2 = 6.0, 6.0
    xs = _fixed_sequence(d, T, rng.child("seq"))
    abar = _sparsified_means(xs, reps, rng.child("draws"))
    xbar = xs.mean(axis=0)
    stat = np.max(np.abs(_cubic_grad(abar) - _cubic_grad(xbar)), axis=1) ** 2
    measured = float(stat.mean())
    bound = 8.0 * L2**2 / T**2 + 8.0 * L1**2 * (4.0 + math.log(d)) / T
    sigma = _mean_sigma(stat)
    return measured, bound, sigma, {"d": d, "T": T, "L1": L1, "L2": L2}


def _suite_grad_error_moment_first_order(reps, rng, d=50, T=64):
    L0, L1 = 2.0, 2.0
    xs = _fixed_sequence(d, T, rng.child("seq"))
    abar = _sparsified_means(xs, reps, rng.child("draws"))
    xbar = xs.mean(axis=0)
    stat = np.max(np.abs(_quad_grad(abar) - _quad_grad(xbar)), axis=1) ** 2
    measured = float(stat.mean())
    logd = 4.0 + math.log(d)
    bound = 8.0 * math.sqrt(2.0) * L1**2 / (T**1.5 * math.sqrt(logd)) + 8.0 * math.sqrt(
        2.0
    ) * (L0**2 + L1**2) * math.sqrt(logd) / math.sqrt(T)
    sigma = _mean_sigma(stat)
    return measured, bound, sigma, {"d": d, "T": T, "L0": L0, "L1": L1}


_SUITES = {
    "value_bias": _suite_value_bias,
    "grad_bias_second_order": _suite_grad_bias_second_order,
    "grad_bias_first_order": _suite_grad_bias_first_order,
    "value_tail": _suite_value_tail,
    "max_error_moment": _suite_max_error_moment,
    "grad_error_moment_second_order": _suite_grad_error_moment_second_order,
    "grad_error_moment_first_order": _suite_grad_error_moment_first_order,
}


def verify_maurey_suite(
    name: str, reps: int, rng: RngStream, sigma_mult: float = 3.0
) -> SuiteReport:
    """Run one sparsification verification suite; unknown names raise ValueError.

    ``sigma_mult`` scales the Monte-Carlo allowance added to the analytic
    bound (3 sigma by default).
    """
    if name not in _SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {SUITE_NAMES}")
    if reps < 2:
        raise ValueError("need at least 2 repetitions")
    measured, bound, sigma, details = _SUITES[name](reps, rng.child(name))
    slack = sigma_mult * sigma
    warning = None
    if reps < MIN_REPS:
        warning = f"only {reps} reps; results below the recommended minimum of {MIN_REPS}"
    return SuiteReport(
        suite=name,
        measured=measured,
        bound=bound,
        slack=slack,
        passed=bool(measured <= bound + slack),
        reps=reps,
        warning=warning,
        details=details,
    )


def run_all_suites(
    reps: int, rng: RngStream, sigma_mult: float = 3.0
) -> list[SuiteReport]:
    return [verify_maurey_suite(name, reps, rng, sigma_mult) for name in SUITE_NAMES]
