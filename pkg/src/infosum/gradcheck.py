"""Seeded end-to-end gradient checks for every loss term.

Builds a tiny model and a synthetic example (two entity spans per side, one
of them single-token), then compares backward() against the central
finite-difference oracle for each term of the composite objective. Checks
run in float64; training itself runs in float32.
"""

from __future__ import annotations

import numpy as np

from infosum.autograd import GradReport, grad_check_multi
from infosum.corpus import TokenEntitySpan, TrainingExample
from infosum.model import ModelConfig, forward, init_params
from infosum.objectives import example_loss

LOSS_TERMS = ("mle", "ot", "anig", "je", "total")


def gradcheck_fixture(seed: int = 0):
    """A d=8, V=37 model and a 12x7 example with mixed-length entity spans."""
    config = ModelConfig(
        vocab_size=37,
        d_model=8,
        layers=1,
        heads=2,
        ff_width=16,
        dropout=0.0,
        max_source=16,
        max_summary=16,
        seed=seed,
    )
    rng = np.random.default_rng(seed + 1)
    source = rng.integers(4, config.vocab_size, size=12).tolist()
    summary = rng.integers(4, config.vocab_size, size=6).tolist() + [2]  # eos
    teacher = [1] + summary[:-1]  # bos
    example = TrainingExample(
        source=source,
        summary=summary,
        teacher_inputs=teacher,
        source_entities=[
            TokenEntitySpan(2, 5, "source"),
            TokenEntitySpan(8, 9, "source"),  # single token
        ],
        summary_entities=[
            TokenEntitySpan(1, 4, "summary"),
            TokenEntitySpan(5, 6, "summary"),  # single token
        ],
    )
    params = init_params(config)
    arrays = {}
    for name, tensor in params.items():
        arr = tensor.data.astype(np.float64)
        # the 0.02-scale training init leaves attention gradients near 1e-8
        # at d=8, where central differences are pure roundoff; check at a
        # better-conditioned random point instead
        if name.endswith((".wq", ".wk", ".wv", ".wo", ".w1", ".w2")) or name in (
            "tok_emb",
            "dec_head.w",
            "src_head.w",
        ):
            arr = rng.normal(0.0, 0.4, size=arr.shape)
        elif name.endswith((".bq", ".bv", ".bo", ".b1", ".b2")) or name in (
            "dec_head.b",
            "src_head.b",
        ):
            arr = rng.normal(0.0, 0.2, size=arr.shape)
        elif name == "ot_w":
            arr = arr + rng.normal(0.0, 0.05, size=arr.shape)
        arrays[name] = arr
    return example, config, arrays


def term_loss_fn(term: str, example: TrainingExample, config: ModelConfig):
    if term not in LOSS_TERMS:
        raise ValueError(f"unknown loss term {term!r}")

    def f(tensors):
        states = forward(example, tensors, config, train_mode=False)
        bundle = example_loss(states, example, tensors["ot_w"])
        return getattr(bundle, term if term != "total" else "total")

    return f


def run_gradcheck(seed: int = 0, step: float = 1e-4, tol: float = 1e-4) -> dict[str, GradReport]:
    """GradReport per loss term on the seeded fixture.

    All five terms come from the same forward bundle, so the numeric side
    evaluates one probe per coordinate and serves every term from it.
    """
    example, config, arrays = gradcheck_fixture(seed)

    def bundle(tensors):
        states = forward(example, tensors, config, train_mode=False)
        losses = example_loss(states, example, tensors["ot_w"])
        return {term: getattr(losses, term) for term in LOSS_TERMS}

    reports = grad_check_multi(bundle, arrays, step=step, tol=tol)
    return {term: reports[term] for term in LOSS_TERMS}
