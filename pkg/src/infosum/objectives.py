"""Composite training objective: NLL, transport penalty, and entity entropy terms.

The transport penalty couples encoder and decoder top-layer states through a
bilinear row-softmax plan and charges the plan with pairwise L2 costs. The
entity terms read predictive entropies along each entity token span: a
front-loaded accumulation of adjacent entropy differences plus a plain mean
entropy regularizer. Single-token entities are skipped by the accumulation
term entirely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from infosum.autograd import Tensor, entropy_from_logits, pairwise_l2
from infosum.corpus import TrainingExample, TokenEntitySpan
from infosum.model import ForwardStates

NEG_INF = -1e9


@dataclass
class LossBundle:
    mle: Tensor
    ot: Tensor
    anig: Tensor
    je: Tensor
    alpha_ot: float
    alpha_anig: float
    alpha_je: float
    total: Tensor

    def values(self) -> dict[str, float]:
        return {
            "mle": self.mle.item(),
            "ot": self.ot.item(),
            "anig": self.anig.item(),
            "je": self.je.item(),
            "total": self.total.item(),
        }


def mle_loss(dec_logits: Tensor, targets: list[int], mask=None) -> Tensor:
    """Mean negative log-likelihood of targets over unmasked positions."""
    logp = dec_logits.log_softmax().pick(targets)
    if mask is None:
        return -logp.mean()
    mask = np.asarray(mask, dtype=float)
    count = mask.sum()
    if count == 0:
        return Tensor(np.asarray(0.0, dtype=dec_logits.data.dtype))
    return -(logp * Tensor(mask.astype(logp.data.dtype))).sum() * (1.0 / count)


def ot_cost(h_x: Tensor, h_y: Tensor) -> Tensor:
    """l x m matrix of Euclidean distances between state rows."""
    return pairwise_l2(h_x, h_y)


def ot_plan(h_x: Tensor, h_y: Tensor, coupling_w: Tensor, summary_mask=None) -> Tensor:
    """Row-stochastic coupling from bilinear scores h_x . W . h_y.

    Masked (pad) summary positions receive exactly zero probability; a fully
    masked row is an error because the softmax would be undefined.
    """
    scores = (h_x @ coupling_w) @ h_y.transpose()
    if summary_mask is not None:
        summary_mask = np.asarray(summary_mask, dtype=float)
        if summary_mask.sum() == 0:
            raise ValueError("all summary positions masked")
        scores = scores + np.where(summary_mask > 0, 0.0, NEG_INF)[None, :]
    plan = scores.softmax()
    if summary_mask is not None:
        # clamp residual exp(NEG_INF) mass to exactly zero
        plan = plan * Tensor(summary_mask[None, :].astype(plan.data.dtype))
    return plan


def ot_loss(plan: Tensor, cost: Tensor, summary_mask=None) -> Tensor:
    """Average transported cost; gradients flow through both plan and cost."""
    l, m = plan.shape
    if summary_mask is not None:
        m = int(np.asarray(summary_mask).sum())
        grid = np.broadcast_to(np.asarray(summary_mask, dtype=float)[None, :], plan.shape)
        total = (plan * cost * Tensor(grid.astype(plan.data.dtype))).sum()
    else:
        total = (plan * cost).sum()
    return total * (1.0 / (l * m))


def entropy_series(logits: Tensor) -> Tensor:
    """Per-position predictive entropies (nats) along one entity span."""
    return entropy_from_logits(logits)


def anig_loss(series: Tensor) -> Tensor:
    """Accumulated negative information gain over an entity's entropy series.

    The inner gain from position 2..j telescopes to H_j - H_1; accumulating
    it for every prefix weights early positions hardest. Length-1 series
    cost nothing and receive no gradient.
    """
    n = series.shape[0]
    if n < 2:
        return Tensor(np.asarray(0.0, dtype=series.data.dtype))
    # coefficient of H_j in -(1/n) * sum_{i=2..n} sum_{j=2..i} (H_j - H_1)
    coeff = np.zeros(n)
    for j in range(2, n + 1):
        coeff[j - 1] -= (n - j + 1) / n
        coeff[0] += (n - j + 1) / n
    return (series * Tensor(coeff.astype(series.data.dtype))).sum()


def anig_double_sum(series: np.ndarray) -> float:
    """Literal double-sum form of the accumulation; the independent oracle
    for the telescoped coefficients used by anig_loss."""
    h = np.asarray(series, dtype=np.float64)
    n = h.size
    if n < 2:
        return 0.0
    total = 0.0
    for i in range(2, n + 1):
        for j in range(2, i + 1):
            gain = sum(h[k - 1] - h[k - 2] for k in range(2, j + 1))
            total += gain
    return -total / n


def je_loss(series: Tensor) -> Tensor:
    """Mean conditional entropy of the span (joint entropy / length)."""
    return series.mean()


def total_loss(
    mle: Tensor,
    ot: Tensor,
    anig: Tensor,
    je: Tensor,
    alpha_ot: float = 1.0,
    alpha_anig: float = 1.0,
    alpha_je: float = 1.0,
) -> LossBundle:
    total = mle + ot * alpha_ot + anig * alpha_anig + je * alpha_je
    return LossBundle(mle, ot, anig, je, alpha_ot, alpha_anig, alpha_je, total)


# -- per-example assembly -------------------------------------------------------


def _entity_entropy_serieses(states: ForwardStates, example: TrainingExample) -> list[Tensor]:
    """Entropy series for every entity span, source side then summary side."""
    out = []
    for span in example.source_entities:
        logits = states.src_logits.take_rows(range(span.token_start, span.token_end))
        out.append(entropy_series(logits))
    for span in example.summary_entities:
        logits = states.dec_logits.take_rows(range(span.token_start, span.token_end))
        out.append(entropy_series(logits))
    return out


def _mean(parts: list[Tensor], dtype) -> Tensor:
    if not parts:
        return Tensor(np.asarray(0.0, dtype=dtype))
    acc = parts[0]
    for p in parts[1:]:
        acc = acc + p
    return acc * (1.0 / len(parts))


def example_loss(
    states: ForwardStates,
    example: TrainingExample,
    coupling_w: Tensor,
    alpha_ot: float = 1.0,
    alpha_anig: float = 1.0,
    alpha_je: float = 1.0,
) -> LossBundle:
    """Assemble the full objective for one teacher-forced example.

    Both entity terms average over all entity spans with the same
    denominator; length-1 spans contribute zero to the accumulation term but
    still count toward its mean, so the two terms weight every span equally.
    Examples without entities contribute zero to both.
    """
    dtype = states.dec_logits.data.dtype
    mle = mle_loss(states.dec_logits, example.summary)

    plan = ot_plan(states.h_x, states.h_y, coupling_w)
    cost = ot_cost(states.h_x, states.h_y)
    ot = ot_loss(plan, cost)

    serieses = _entity_entropy_serieses(states, example)
    anig_parts = [anig_loss(s) for s in serieses]
    je_parts = [je_loss(s) for s in serieses]
    anig = _mean(anig_parts, dtype)
    je = _mean(je_parts, dtype)

    return total_loss(mle, ot, anig, je, alpha_ot, alpha_anig, alpha_je)
