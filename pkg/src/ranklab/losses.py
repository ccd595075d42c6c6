"""Differentiable training objectives for score ranking.

The pairwise part classifies which item of a pair has the higher true
score, through a logistic model of the predicted score difference. The
listwise part penalizes the distance of a (smoothed) correlation
coefficient from 1 over the whole mini-batch:

    p(i beats j) = 1 / (1 + exp(-(yhat_i - yhat_j) / T))
    loss = mean pairwise cross-entropy + lam * (R_r + R_rho + R_tau)
    R = |1 - corr|^p

Spearman and Kendall are made differentiable by replacing the rank
indicator with a sigmoid and the pair sign with a tanh, both sharpened by
the shared temperature T. Only the predicted side is smoothed; the ground
truth side enters as exact ranks and signs, which are constants anyway.
The sigmoid argument is oriented so that the small-T limit recovers the
exact descending rank.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Value, gather, dot, lift, segment_sum
from .metrics import DegenerateInputError, rank_desc

LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class LossConfig:
    """Shared temperature, regularizer weight and per-term switches."""

    temperature: float = 0.01
    lam: float = 1.0
    p_norm: float = 1.0
    enable_r: bool = True
    enable_rho: bool = True
    enable_tau: bool = True
    pair_reduction: str = "mean"  # or "sum"

    def validate(self) -> None:
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.p_norm < 1:
            raise ValueError("p_norm must be at least 1")
        if self.pair_reduction not in ("mean", "sum"):
            raise ValueError("pair_reduction must be 'mean' or 'sum'")


def bt_probability(yhat_i: Value, yhat_j: Value, temperature: float) -> Value:
    """Probability that item i beats item j, from the score difference."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return ((yhat_i - yhat_j) / temperature).sigmoid()


def pairwise_bce(yhat_i: Value, yhat_j: Value, y_i: float, y_j: float,
                 temperature: float) -> Value:
    """Cross-entropy of the pairwise preference; zero when the true scores tie."""
    if y_i == y_j:
        return lift(0.0)
    p = bt_probability(yhat_i, yhat_j, temperature)
    if y_i > y_j:
        return -p.clamp_min(LOG_CLAMP).log()
    return -(1.0 - p).clamp_min(LOG_CLAMP).log()


@lru_cache(maxsize=32)
def _all_ordered_pairs(n: int):
    i = np.repeat(np.arange(n), n)
    j = np.tile(np.arange(n), n)
    return i, j


def smooth_rank(values: Value, temperature: float) -> Value:
    """Differentiable descending ranks.

    rank_i = 1 + sum_{j != i} sigmoid((v_j - v_i) / T); the self term
    sigmoid(0) = 1/2 is folded into the constant, so the ranks always sum
    to n(n+1)/2.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    n = values.payload.shape[0]
    if n < 2:
        raise ValueError("smooth_rank needs at least 2 values")
    i, j = _all_ordered_pairs(n)
    diffs = (gather(values, j) - gather(values, i)) / temperature
    return segment_sum(diffs.sigmoid(), i, n) + 0.5


def _pearson_of(vec: Value, const: np.ndarray) -> Value:
    """Pearson correlation between a tape vector and a constant vector."""
    const = np.asarray(const, dtype=np.float64)
    b = const - const.mean()
    bb = float(b @ b)
    if bb == 0.0:
        raise DegenerateInputError("constant reference side in correlation")
    a = vec - vec.mean()
    aa = dot(a, a)
    if float(aa.payload) == 0.0:
        raise DegenerateInputError("constant predicted side in correlation")
    return dot(a, lift(b)) / (aa * bb) ** 0.5


def pearson_corr(y, yhat: Value) -> Value:
    """Differentiable Pearson coefficient against constant true scores."""
    return _pearson_of(yhat, y)


def smooth_spearman(y, yhat: Value, temperature: float) -> Value:
    """Pearson correlation of exact true ranks with smoothed predicted ranks."""
    return _pearson_of(smooth_rank(yhat, temperature), rank_desc(y))


def smooth_sign(diff: Value, temperature: float) -> Value:
    """tanh-softened sign of a difference."""
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    return (diff / temperature).tanh()


def smooth_kendall(y, yhat: Value, temperature: float) -> Value:
    """Tau with exact true-side signs and tanh-softened predicted-side signs."""
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    if n < 2:
        raise ValueError("smooth_kendall needs at least 2 values")
    i, j = np.triu_indices(n, k=1)
    signs = np.sign(y[i] - y[j])
    diffs = gather(yhat, i) - gather(yhat, j)
    return dot(smooth_sign(diffs, temperature), lift(signs)) * (2.0 / (n * (n - 1)))


def regularizer(corr: Value, p_norm: float) -> Value:
    """Penalty |1 - corr|^p driving a correlation coefficient toward 1."""
    if p_norm < 1:
        raise ValueError("p_norm must be at least 1")
    gap = (1.0 - corr).abs()
    if p_norm == 1.0:
        return gap
    return gap ** p_norm


@dataclass(frozen=True)
class LossTerms:
    """The combined loss plus its components, all still on the tape."""

    total: Value
    pair: Value
    reg_r: Value | None
    reg_rho: Value | None
    reg_tau: Value | None

    def component_floats(self) -> dict:
        out = {"loss": float(self.total.payload), "pair_loss": float(self.pair.payload)}
        for name, term in (("reg_r", self.reg_r), ("reg_rho", self.reg_rho),
                           ("reg_tau", self.reg_tau)):
            out[name] = float(term.payload) if term is not None else float("nan")
        return out


def loss_terms(predictions: Value, mos, pairs, cfg: LossConfig) -> LossTerms:
    """Build the combined objective over one mini-batch.

    `predictions` is a tape vector of batch scores, `mos` the matching true
    scores, `pairs` the index pairs selected by a formation strategy.
    A regularizer whose correlation is undefined (all predictions equal)
    contributes its maximum penalty 1 as a constant, so the remaining terms
    can still move the model.
    """
    cfg.validate()
    mos = np.asarray(mos, dtype=np.float64)
    n = predictions.payload.shape[0]
    if n < 2 or mos.shape != (n,):
        raise ValueError("need at least 2 predictions with matching true scores")
    index_pairs = pairs.pairs if hasattr(pairs, "pairs") else pairs
    if len(index_pairs) == 0:
        raise ValueError("need at least one pair")

    i = np.fromiter((p[0] for p in index_pairs), dtype=np.intp, count=len(index_pairs))
    j = np.fromiter((p[1] for p in index_pairs), dtype=np.intp, count=len(index_pairs))
    p = bt_probability(gather(predictions, i), gather(predictions, j), cfg.temperature)
    win = (mos[i] > mos[j]).astype(np.float64)
    lose = (mos[i] < mos[j]).astype(np.float64)
    log_p = p.clamp_min(LOG_CLAMP).log()
    log_not_p = (1.0 - p).clamp_min(LOG_CLAMP).log()
    bce_sum = -(dot(log_p, lift(win)) + dot(log_not_p, lift(lose)))
    pair_loss = bce_sum / len(index_pairs) if cfg.pair_reduction == "mean" else bce_sum

    total = pair_loss
    reg_r = reg_rho = reg_tau = None
    if cfg.lam > 0:
        if cfg.enable_r:
            reg_r = _regularizer_or_max(pearson_corr, mos, predictions, cfg, smooth=False)
        if cfg.enable_rho:
            reg_rho = _regularizer_or_max(smooth_spearman, mos, predictions, cfg, smooth=True)
        if cfg.enable_tau:
            reg_tau = _regularizer_or_max(smooth_kendall, mos, predictions, cfg, smooth=True)
        enabled = [term for term in (reg_r, reg_rho, reg_tau) if term is not None]
        if enabled:
            reg_sum = enabled[0]
            for term in enabled[1:]:
                reg_sum = reg_sum + term
            total = total + cfg.lam * reg_sum
    return LossTerms(total, pair_loss, reg_r, reg_rho, reg_tau)


def _regularizer_or_max(corr_fn, mos, predictions, cfg, smooth):
    try:
        corr = corr_fn(mos, predictions, cfg.temperature) if smooth else corr_fn(mos, predictions)
    except DegenerateInputError:
        return lift(1.0)  # maximum penalty, no gradient for this term
    return regularizer(corr, cfg.p_norm)


def total_loss(predictions: Value, mos, pairs, cfg: LossConfig) -> Value:
    """Mean pairwise cross-entropy plus weighted enabled regularizers."""
    return loss_terms(predictions, mos, pairs, cfg).total


GRADCHECK_TOLERANCE = 1e-4
GRADCHECK_POINTS = 100
GRADCHECK_BATCH = 8
GRADCHECK_TEMPERATURE = 0.5
GRADCHECK_STEP = 1e-6


def gradient_check_suite(seed: int = 2024, n_points: int = GRADCHECK_POINTS) -> dict:
    """Max relative error of each objective's tape gradient against central
    finite differences, at `n_points` random batches of size 8 and T = 0.5."""
    rng = np.random.default_rng(seed)
    n = GRADCHECK_BATCH
    temperature = GRADCHECK_TEMPERATURE
    results = {}

    def scalar_at(vec, k):
        return gather(vec, [k]).sum()

    def check(name, make_fn):
        worst = 0.0
        for _ in range(n_points):
            y = rng.normal(size=n)
            point = rng.normal(size=n)
            fn = make_fn(y)
            worst = max(worst, ad.grad_check(fn, point, step=GRADCHECK_STEP))
        results[name] = worst

    check("pairwise_bce", lambda y: lambda v: pairwise_bce(
        scalar_at(v, 0), scalar_at(v, 1), y[0], y[1], temperature))
    check("smooth_spearman", lambda y: lambda v: smooth_spearman(y, v, temperature))
    check("smooth_kendall", lambda y: lambda v: smooth_kendall(y, v, temperature))
    check("pearson_regularizer", lambda y: lambda v: regularizer(pearson_corr(y, v), 1.0))

    all_pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    cfg = LossConfig(temperature=temperature, lam=1.0, p_norm=1.0)
    check("total_loss", lambda y: lambda v: total_loss(v, y, all_pairs, cfg))
    return results
