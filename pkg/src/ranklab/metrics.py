"""Exact (non-differentiable) evaluation metrics and the logistic refit.

Conventions, also stamped into every report this package writes:
  * SRCC assigns average (fractional) ranks to tied values.
  * KRCC is the tau-a form: tied pairs contribute zero, no tie correction.
  * PLCC is reported after mapping predictions through a fitted
    four-parameter logistic curve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

METRIC_CONVENTIONS = {
    "srcc": "average ranks for ties",
    "krcc": "tau-a, tied pairs contribute zero",
    "plcc": "after four-parameter logistic refit",
}


class DegenerateInputError(ValueError):
    """A score vector without the variance the operation requires."""


def _validated(y, yhat=None, min_n=2):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] < min_n:
        raise ValueError(f"need a vector of at least {min_n} scores")
    if not np.all(np.isfinite(y)):
        raise ValueError("scores must be finite")
    if yhat is None:
        return y
    yhat = np.asarray(yhat, dtype=np.float64)
    if yhat.shape != y.shape:
        raise ValueError(f"score vectors differ in length: {y.shape} vs {yhat.shape}")
    if not np.all(np.isfinite(yhat)):
        raise ValueError("scores must be finite")
    return y, yhat


def pearson(y, yhat) -> float:
    """Covariance over the product of standard deviations (population form)."""
    y, yhat = _validated(y, yhat)
    a = y - y.mean()
    b = yhat - yhat.mean()
    aa = a @ a
    bb = b @ b
    if aa == 0.0 or bb == 0.0:
        raise DegenerateInputError("pearson of a constant score vector")
    return float((a @ b) / np.sqrt(aa * bb))


def rank_desc(y) -> np.ndarray:
    """Descending ranks: 1 + the number of strictly larger entries.

    The largest value gets rank 1; tied values share the minimum rank.
    """
    y = _validated(y, min_n=1)
    return 1 + np.sum(y[None, :] > y[:, None], axis=1)


def rank_average(y) -> np.ndarray:
    """Ascending average ranks in [1, n]; ties share the mean of their block."""
    y = _validated(y, min_n=1)
    order = np.argsort(y, kind="stable")
    ranks = np.empty(len(y))
    i = 0
    while i < len(y):
        j = i
        while j + 1 < len(y) and y[order[j + 1]] == y[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(y, yhat) -> float:
    """Pearson correlation of the average-rank vectors."""
    y, yhat = _validated(y, yhat)
    try:
        return pearson(rank_average(y), rank_average(yhat))
    except DegenerateInputError:
        raise DegenerateInputError("spearman rank variance is zero") from None


def kendall(y, yhat) -> float:
    """Tau-a: normalized sum over pairs of the product of difference signs."""
    y, yhat = _validated(y, yhat)
    n = len(y)
    sy = np.sign(y[:, None] - y[None, :])
    sp = np.sign(yhat[:, None] - yhat[None, :])
    iu = np.triu_indices(n, k=1)
    concordance = float(np.sum(sy[iu] * sp[iu]))
    return 2.0 * concordance / (n * (n - 1))


@dataclass(frozen=True)
class FourPLParams:
    """Parameters of y = (eta1 - eta2) / (1 + exp(-(x - eta3)/eta4)) + eta2."""

    eta1: float
    eta2: float
    eta3: float
    eta4: float
    converged: bool = True

    def __call__(self, x) -> np.ndarray:
        return four_pl(np.asarray(x, dtype=np.float64), self.eta1, self.eta2, self.eta3, self.eta4)


def four_pl(x, eta1, eta2, eta3, eta4) -> np.ndarray:
    return (eta1 - eta2) * expit((x - eta3) / eta4) + eta2


def _four_pl_jacobian(x, eta):
    eta1, eta2, eta3, eta4 = eta
    z = (x - eta3) / eta4
    s = expit(z)
    ds = s * (1.0 - s)
    scale = eta1 - eta2
    return np.column_stack(
        [s, 1.0 - s, -scale * ds / eta4, -scale * ds * z / eta4]
    )


MAX_4PL_ITERATIONS = 500
STEP_NORM_TOLERANCE = 1e-10


def fit_4pl(yhat, y) -> FourPLParams:
    """Least-squares logistic refit of predictions onto the score scale.

    Damped Gauss-Newton: the damping factor starts at 1e-3, shrinks by 10
    after an accepted step and grows by 10 after a rejected one. Stops when
    the step norm falls below 1e-10; after 500 iterations the best
    parameters so far are returned with converged=False.
    """
    y, yhat = _validated(y, yhat, min_n=5)
    if np.ptp(yhat) == 0.0:
        raise DegenerateInputError("cannot fit a logistic curve to constant predictions")

    eta = np.array([np.max(y), np.min(y), np.median(yhat), np.std(yhat) / 4.0])
    if eta[3] == 0.0:  # unreachable given the variance check, kept as a guard
        eta[3] = 1.0

    def sse(e):
        r = y - four_pl(yhat, *e)
        return float(r @ r)

    best = eta.copy()
    best_sse = sse(eta)
    damping = 1e-3
    converged = False
    for _ in range(MAX_4PL_ITERATIONS):
        jac = _four_pl_jacobian(yhat, eta)
        residual = y - four_pl(yhat, *eta)
        lhs = jac.T @ jac + damping * np.eye(4)
        rhs = jac.T @ residual
        try:
            step = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError:
            damping *= 10.0
            continue
        if np.linalg.norm(step) < STEP_NORM_TOLERANCE:
            converged = True
            break
        candidate = eta + step
        if candidate[3] == 0.0 or not np.all(np.isfinite(candidate)):
            damping *= 10.0
            continue
        if sse(candidate) < best_sse:
            eta = candidate
            best = candidate.copy()
            best_sse = sse(candidate)
            damping = max(damping / 10.0, 1e-12)
        else:
            damping *= 10.0
    return FourPLParams(*best, converged=converged)


def plcc_after_fit(yhat, y) -> float:
    """Pearson correlation between refitted predictions and true scores."""
    params = fit_4pl(yhat, y)
    return pearson(params(np.asarray(yhat, dtype=np.float64)), y)


def two_afc(q: float, p: float) -> float:
    """Forced-choice agreement q*p + (1-q)*(1-p) between two preference rates."""
    if not 0.0 <= q <= 1.0 or not 0.0 <= p <= 1.0:
        raise ValueError("preference probabilities must lie in [0, 1]")
    return q * p + (1.0 - q) * (1.0 - p)
