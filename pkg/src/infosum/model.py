"""Miniature transformer encoder-decoder with teacher forcing and beam search.

Pre-norm layers, sinusoidal (non-trainable) positions, and two independent
logits heads: the decoder head scores summary tokens, and a separately
stored clone of it scores source tokens wherever source-side entity
probabilities are needed. A shared d x d coupling weight, initialized to
all-ones, feeds the bilinear transport scores.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, asdict, replace

import numpy as np

from infosum.autograd import Tensor
from infosum.corpus import TrainingExample

CHECKPOINT_FORMAT_VERSION = 1

NEG_INF = -1e9


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    layers: int = 2  # per side
    heads: int = 4
    ff_width: int = 128
    dropout: float = 0.1
    max_source: int = 128
    max_summary: int = 48
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ValueError("d_model must be divisible by heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.vocab_size < 5:
            raise ValueError("vocab too small")


@dataclass(frozen=True)
class BeamSettings:
    max_length: int
    min_length: int
    beams: int
    length_penalty: float

    def __post_init__(self):
        if self.min_length > self.max_length or self.beams < 1 or self.length_penalty < 0:
            raise ValueError(f"invalid beam settings {self}")


INFERENCE_PROFILES = {
    "cnndm": BeamSettings(max_length=142, min_length=56, beams=4, length_penalty=2.0),
    "xsum": BeamSettings(max_length=62, min_length=11, beams=6, length_penalty=1.0),
}


@dataclass
class ForwardStates:
    """One teacher-forced pass: top-layer states and both logits heads."""

    h_x: Tensor  # l x d encoder states
    h_y: Tensor  # m x d decoder states
    dec_logits: Tensor  # m x V
    src_logits: Tensor  # l x V, from the cloned source head


# -- parameters ---------------------------------------------------------------


def init_params(config: ModelConfig) -> dict[str, Tensor]:
    """Seeded initialization: normal(0, 0.02) weights, zero biases, unit norms.

    The coupling weight starts at all-ones; the source logits head is drawn
    independently of the decoder head and never shares storage with it.
    """
    rng = np.random.default_rng(config.seed)
    d, ff, v = config.d_model, config.ff_width, config.vocab_size
    params: dict[str, Tensor] = {}

    def w(name, *shape):
        params[name] = Tensor(
            rng.normal(0.0, 0.02, size=shape), requires_grad=True, dtype=np.float32
        )

    def zeros(name, *shape):
        params[name] = Tensor(np.zeros(shape), requires_grad=True, dtype=np.float32)

    def ones(name, *shape):
        params[name] = Tensor(np.ones(shape), requires_grad=True, dtype=np.float32)

    w("tok_emb", v, d)

    def attn_block(prefix):
        # no key bias: softmax is invariant to it, so it would never train
        for part in ("q", "k", "v", "o"):
            w(f"{prefix}.w{part}", d, d)
            if part != "k":
                zeros(f"{prefix}.b{part}", d)

    def ln_block(prefix):
        ones(f"{prefix}.g", d)
        zeros(f"{prefix}.b", d)

    def ff_block(prefix):
        w(f"{prefix}.w1", d, ff)
        zeros(f"{prefix}.b1", ff)
        w(f"{prefix}.w2", ff, d)
        zeros(f"{prefix}.b2", d)

    for i in range(config.layers):
        ln_block(f"enc.{i}.ln1")
        attn_block(f"enc.{i}.attn")
        ln_block(f"enc.{i}.ln2")
        ff_block(f"enc.{i}.ff")
    ln_block("enc.final_ln")

    for i in range(config.layers):
        ln_block(f"dec.{i}.ln1")
        attn_block(f"dec.{i}.self")
        ln_block(f"dec.{i}.ln2")
        attn_block(f"dec.{i}.cross")
        ln_block(f"dec.{i}.ln3")
        ff_block(f"dec.{i}.ff")
    ln_block("dec.final_ln")

    w("dec_head.w", d, v)
    zeros("dec_head.b", v)
    w("src_head.w", d, v)
    zeros("src_head.b", v)

    ones("ot_w", d, d)
    return params


def sinusoidal_positions(length: int, d: int) -> np.ndarray:
    pos = np.arange(length)[:, None].astype(np.float64)
    dim = np.arange(d // 2)[None, :].astype(np.float64)
    angles = pos / np.power(10000.0, 2.0 * dim / d)
    enc = np.zeros((length, d))
    enc[:, 0::2] = np.sin(angles)
    enc[:, 1::2] = np.cos(angles)
    return enc


# -- forward pass -----------------------------------------------------------


def _attention(x_q: Tensor, x_kv: Tensor, params, prefix, heads, mask=None) -> Tensor:
    tq, d = x_q.shape
    tk = x_kv.shape[0]
    dh = d // heads
    q = (x_q @ params[f"{prefix}.wq"] + params[f"{prefix}.bq"]).reshape(tq, heads, dh).transpose(1, 0, 2)
    k = (x_kv @ params[f"{prefix}.wk"]).reshape(tk, heads, dh).transpose(1, 0, 2)
    v = (x_kv @ params[f"{prefix}.wv"] + params[f"{prefix}.bv"]).reshape(tk, heads, dh).transpose(1, 0, 2)
    scores = (q @ k.transpose(0, 2, 1)) * (1.0 / np.sqrt(dh))
    if mask is not None:
        scores = scores + mask  # additive, NEG_INF at disallowed pairs
    att = scores.softmax()
    ctx = (att @ v).transpose(1, 0, 2).reshape(tq, d)
    return ctx @ params[f"{prefix}.wo"] + params[f"{prefix}.bo"]


def _feed_forward(x: Tensor, params, prefix, dropout_mask=None) -> Tensor:
    a = (x @ params[f"{prefix}.w1"] + params[f"{prefix}.b1"]).gelu()
    if dropout_mask is not None:
        a = a * Tensor(dropout_mask.astype(a.data.dtype))
    return a @ params[f"{prefix}.w2"] + params[f"{prefix}.b2"]


def _layer_norm(x: Tensor, params, prefix) -> Tensor:
    return x.layer_norm(params[f"{prefix}.g"], params[f"{prefix}.b"])


def _dropout_mask(rng, shape, rate):
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def _embed(ids: list[int], params, dtype) -> Tensor:
    emb = params["tok_emb"].take_rows(ids)
    pos = sinusoidal_positions(len(ids), emb.shape[1]).astype(dtype)
    return emb + Tensor(pos)


def _encode(source: list[int], params, config: ModelConfig, rng=None) -> Tensor:
    x = _embed(source, params, params["tok_emb"].dtype)
    for i in range(config.layers):
        h = _layer_norm(x, params, f"enc.{i}.ln1")
        x = x + _attention(h, h, params, f"enc.{i}.attn", config.heads)
        mask = None
        if rng is not None and config.dropout > 0:
            mask = _dropout_mask(rng, (len(source), config.ff_width), config.dropout)
        x = x + _feed_forward(_layer_norm(x, params, f"enc.{i}.ln2"), params, f"enc.{i}.ff", mask)
    return _layer_norm(x, params, "enc.final_ln")


def _decode_states(teacher: list[int], memory: Tensor, params, config: ModelConfig, rng=None) -> Tensor:
    m = len(teacher)
    causal = np.where(np.triu(np.ones((m, m)), k=1) > 0, NEG_INF, 0.0)[None, :, :]
    y = _embed(teacher, params, params["tok_emb"].dtype)
    for i in range(config.layers):
        h = _layer_norm(y, params, f"dec.{i}.ln1")
        y = y + _attention(h, h, params, f"dec.{i}.self", config.heads, mask=causal)
        h = _layer_norm(y, params, f"dec.{i}.ln2")
        y = y + _attention(h, memory, params, f"dec.{i}.cross", config.heads)
        mask = None
        if rng is not None and config.dropout > 0:
            mask = _dropout_mask(rng, (m, config.ff_width), config.dropout)
        y = y + _feed_forward(_layer_norm(y, params, f"dec.{i}.ln3"), params, f"dec.{i}.ff", mask)
    return _layer_norm(y, params, "dec.final_ln")


def forward(
    example: TrainingExample,
    params: dict[str, Tensor],
    config: ModelConfig,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> ForwardStates:
    """Teacher-forced full pass over one example.

    Dropout fires only when train_mode is set and an rng is supplied, so
    evaluation passes are bit-deterministic.
    """
    if len(example.source) > config.max_source or len(example.summary) > config.max_summary:
        raise ValueError("example exceeds configured lengths")
    drop_rng = rng if (train_mode and config.dropout > 0) else None
    h_x = _encode(example.source, params, config, rng=drop_rng)
    h_y = _decode_states(example.teacher_inputs, h_x, params, config, rng=drop_rng)
    dec_logits = h_y @ params["dec_head.w"] + params["dec_head.b"]
    src_logits = h_x @ params["src_head.w"] + params["src_head.b"]
    return ForwardStates(h_x=h_x, h_y=h_y, dec_logits=dec_logits, src_logits=src_logits)


# -- inference ---------------------------------------------------------------


def _step_logprobs(prefix: list[int], memory: Tensor, params, config) -> np.ndarray:
    h = _decode_states(prefix, memory, params, config)
    logits = h.take_rows([len(prefix) - 1]) @ params["dec_head.w"] + params["dec_head.b"]
    return logits.log_softmax().data[0]


def beam_search(
    source: list[int],
    params: dict[str, Tensor],
    config: ModelConfig,
    settings: BeamSettings,
    bos_id: int,
    eos_id: int,
) -> list[int]:
    """Length-normalized beam search; beams=1 with penalty 0 is exactly greedy.

    The eos token is masked out until min_length tokens are generated; at
    max_length every live hypothesis is finalized as-is. Finished hypotheses
    compare on (sum of token log-probs) / length**penalty.
    """
    memory = _encode(source, params, config)
    live: list[tuple[list[int], float]] = [([], 0.0)]
    finished: list[tuple[list[int], float]] = []

    def normalized(tokens, score):
        n = max(len(tokens), 1)
        return score / (n**settings.length_penalty)

    for _ in range(settings.max_length):
        candidates = []  # (score, token, hyp_idx)
        for idx, (tokens, score) in enumerate(live):
            lp = _step_logprobs([bos_id] + tokens, memory, params, config).copy()
            if len(tokens) < settings.min_length:
                lp[eos_id] = NEG_INF
            order = np.argsort(-lp, kind="stable")[: 2 * settings.beams]
            for tok in order:
                candidates.append((score + float(lp[tok]), int(tok), idx))
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        next_live = []
        for rank, (score, tok, idx) in enumerate(candidates):
            if tok == eos_id:
                # only an eos inside the top `beams` candidates may finish a
                # hypothesis; lower-ranked eos continuations are discarded so
                # they cannot cut the search short
                if rank < settings.beams and len(finished) < settings.beams:
                    finished.append((live[idx][0], normalized(live[idx][0], score)))
            elif len(next_live) < settings.beams:
                next_live.append((live[idx][0] + [tok], score))
        live = next_live
        if len(finished) >= settings.beams or not live:
            break
    for tokens, score in live:
        if len(tokens) >= settings.min_length or not finished:
            finished.append((tokens, normalized(tokens, score)))
    finished.sort(key=lambda h: -h[1])
    return finished[0][0]


def greedy_decode(source, params, config, bos_id, eos_id, max_length, min_length=1):
    """Argmax decoding; used for validation and as the beam=1 reference."""
    memory = _encode(source, params, config)
    tokens: list[int] = []
    while len(tokens) < max_length:
        lp = _step_logprobs([bos_id] + tokens, memory, params, config).copy()
        if len(tokens) < min_length:
            lp[eos_id] = NEG_INF
        tok = int(np.argmax(lp))
        if tok == eos_id:
            break
        tokens.append(tok)
    return tokens


# -- checkpointing ------------------------------------------------------------


def save_checkpoint(path, params: dict[str, Tensor], config: ModelConfig) -> None:
    """Byte-stable JSON checkpoint: config echo plus raw little-endian tensors."""
    tensors = {}
    for name in sorted(params):
        arr = np.ascontiguousarray(params[name].data.astype("<f4"))
        tensors[name] = {
            "shape": list(arr.shape),
            "data": base64.b64encode(arr.tobytes()).decode("ascii"),
        }
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": asdict(config),
        "tensors": tensors,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_checkpoint(path) -> tuple[dict[str, Tensor], ModelConfig]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ValueError("unsupported checkpoint format")
    config = ModelConfig(**payload["config"])
    params = {}
    for name, entry in payload["tensors"].items():
        arr = np.frombuffer(base64.b64decode(entry["data"]), dtype="<f4").reshape(entry["shape"])
        params[name] = Tensor(arr.copy(), requires_grad=True, dtype=np.float32)
    return params, config
