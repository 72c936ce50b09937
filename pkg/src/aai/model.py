"""A small seeded decoder-only transformer over bytes.

Pre-norm blocks (attention, then a GELU feed-forward), learned absolute
positions, untied output projection. Everything runs in float64 NumPy.

The prefill pass takes a HeadMaskPlan and replaces the causal mask of each
selected head by the composed intervention mask. Decoding reuses the prefill
key/value cache, so intervened prompt states stay as they were and later steps
see only new query rows.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import numpy as np

from .attention import NEG_INF, attend, masked_softmax, scaled_dot_product
from .errors import ConfigError, LengthError
from .masks import HeadMaskPlan, compose_final, median_of_scores
from .rules import annotate_rules, pairs_for_query
from .trace import AttentionTrace, token_surface

EOS = 256
PAD = 257
NUM_SPECIALS = 2
LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int = 2
    num_heads: int = 4
    model_dim: int = 64
    head_dim: int = 16
    vocab_size: int = 256 + NUM_SPECIALS
    max_seq: int = 2048
    seed: int = 0
    init_scale: float = 1.0

    def __post_init__(self):
        for name in ("num_layers", "num_heads", "model_dim", "head_dim", "max_seq"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.model_dim != self.num_heads * self.head_dim:
            raise ConfigError(
                f"model_dim ({self.model_dim}) must equal num_heads * head_dim "
                f"({self.num_heads} * {self.head_dim})"
            )
        if self.vocab_size < 256 + NUM_SPECIALS:
            raise ConfigError(f"vocab_size must cover 256 bytes + {NUM_SPECIALS} specials")


def _frozen(arr):
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def layer_norm(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * gain + bias


def gelu(x):
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


class ToyDecoder:
    """Parameters plus forward passes. Parameters are read-only arrays."""

    def __init__(self, config: ModelConfig, params: Dict[str, np.ndarray]):
        self.config = config
        self.params = {k: _frozen(v) for k, v in params.items()}

    def layer(self, i: int) -> Dict[str, np.ndarray]:
        prefix = f"layer{i}."
        return {k[len(prefix):]: v for k, v in self.params.items() if k.startswith(prefix)}

    def checksum(self) -> str:
        h = hashlib.sha256(json.dumps(asdict(self.config), sort_keys=True).encode())
        for name in sorted(self.params):
            h.update(name.encode())
            h.update(self.params[name].tobytes())
        return h.hexdigest()

    def save(self, path) -> None:
        # an open handle stops numpy from appending ".npz" to the name
        with open(path, "wb") as fh:
            np.savez(fh, __config__=np.array(json.dumps(asdict(self.config))), **self.params)

    @classmethod
    def load(cls, path) -> "ToyDecoder":
        with np.load(path) as data:
            config = ModelConfig(**json.loads(str(data["__config__"])))
            params = {k: data[k] for k in data.files if k != "__config__"}
        return cls(config, params)


def init_model(cfg: ModelConfig) -> ToyDecoder:
    rng = np.random.default_rng(cfg.seed)
    D, V, F = cfg.model_dim, cfg.vocab_size, 4 * cfg.model_dim
    s = cfg.init_scale
    params = {
        "embed": rng.normal(0.0, 1.0, (V, D)),
        "pos": rng.normal(0.0, 0.5, (cfg.max_seq, D)),
    }
    for i in range(cfg.num_layers):
        p = f"layer{i}."
        params[p + "ln1_g"] = np.ones(D)
        params[p + "ln1_b"] = np.zeros(D)
        for name in ("wq", "wk", "wv", "wo"):
            params[p + name] = rng.normal(0.0, s / math.sqrt(D), (D, D))
        params[p + "ln2_g"] = np.ones(D)
        params[p + "ln2_b"] = np.zeros(D)
        params[p + "w1"] = rng.normal(0.0, 1.0 / math.sqrt(D), (D, F))
        params[p + "b1"] = np.zeros(F)
        params[p + "w2"] = rng.normal(0.0, 1.0 / math.sqrt(F), (F, D))
        params[p + "b2"] = np.zeros(D)
    params["lnf_g"] = np.ones(D)
    params["lnf_b"] = np.zeros(D)
    params["unembed"] = rng.normal(0.0, 1.0 / math.sqrt(D), (D, V))
    return ToyDecoder(cfg, params)


@dataclass
class KVCache:
    keys: List[np.ndarray]
    values: List[np.ndarray]
    length: int
    # per-head prefill score medians, kept for decode-phase masking
    reweight: Dict[tuple, float] = field(default_factory=dict)


@dataclass
class PrefillResult:
    logits: np.ndarray
    hidden: np.ndarray
    trace: Optional[AttentionTrace]
    cache: KVCache


def _check_tokens(model, tokens):
    tokens = [int(t) for t in tokens]
    if not tokens:
        raise LengthError("cannot run a forward pass on an empty sequence")
    if len(tokens) > model.config.max_seq:
        raise LengthError(f"{len(tokens)} tokens exceed max_seq={model.config.max_seq}")
    bad = [t for t in tokens if not 0 <= t < model.config.vocab_size]
    if bad:
        raise LengthError(f"token id {bad[0]} outside vocabulary")
    return tokens


def prefill(model: ToyDecoder, tokens, plan: Optional[HeadMaskPlan] = None, capture: bool = True) -> PrefillResult:
    """Forward pass over a prompt.

    Every (layer, head) gets ``compose_final`` of its own scores, so heads
    outside the plan see the plain causal mask. The trace holds post-mask
    weights and pre-mask scores.
    """
    plan = plan or HeadMaskPlan.baseline()
    cfg = model.config
    tokens = _check_tokens(model, tokens)
    L, hd = len(tokens), cfg.head_dim
    P = model.params
    x = P["embed"][tokens] + P["pos"][:L]

    weights, scores = {}, {}
    keys, values = [], []
    reweight = {}
    for li in range(cfg.num_layers):
        W = model.layer(li)
        h = layer_norm(x, W["ln1_g"], W["ln1_b"])
        q, k, v = h @ W["wq"], h @ W["wk"], h @ W["wv"]
        keys.append(k)
        values.append(v)
        mixed = np.empty_like(q)
        for hi in range(cfg.num_heads):
            cols = slice(hi * hd, (hi + 1) * hd)
            S = scaled_dot_product(q[:, cols], k[:, cols], hd)
            M = compose_final(S, plan, li, hi, L)
            A = masked_softmax(S, M)
            mixed[:, cols] = attend(A, v[:, cols])
            if capture:
                weights[(li, hi)] = A
                scores[(li, hi)] = S
            if not plan.prefill_only and plan.is_selected(li, hi):
                reweight[(li, hi)] = (
                    plan.params.coefficient * median_of_scores(S, plan.params.median_scope)
                    + plan.params.bias
                )
        x = x + mixed @ W["wo"]
        h2 = layer_norm(x, W["ln2_g"], W["ln2_b"])
        x = x + gelu(h2 @ W["w1"] + W["b1"]) @ W["w2"] + W["b2"]

    logits = layer_norm(x, P["lnf_g"], P["lnf_b"]) @ P["unembed"]
    trace = None
    if capture:
        trace = AttentionTrace(
            cfg.num_layers, cfg.num_heads, L, [token_surface(t) for t in tokens], weights, scores
        )
    return PrefillResult(logits, x, trace, KVCache(keys, values, L, reweight))


def _decode_step(model, token, cache: KVCache, row_masks=None):
    """One cached step for the token at position ``cache.length``."""
    cfg = model.config
    P = model.params
    t, hd = cache.length, cfg.head_dim
    if t >= cfg.max_seq:
        raise LengthError(f"sequence would exceed max_seq={cfg.max_seq}")
    x = P["embed"][[token]] + P["pos"][[t]]
    for li in range(cfg.num_layers):
        W = model.layer(li)
        h = layer_norm(x, W["ln1_g"], W["ln1_b"])
        q, k, v = h @ W["wq"], h @ W["wk"], h @ W["wv"]
        K = cache.keys[li] = np.vstack([cache.keys[li], k])
        Vv = cache.values[li] = np.vstack([cache.values[li], v])
        mixed = np.empty_like(q)
        for hi in range(cfg.num_heads):
            cols = slice(hi * hd, (hi + 1) * hd)
            S = scaled_dot_product(q[:, cols], K[:, cols], hd)
            M = None if row_masks is None else row_masks.get((li, hi))
            A = masked_softmax(S, M)
            mixed[:, cols] = attend(A, Vv[:, cols])
        x = x + mixed @ W["wo"]
        h2 = layer_norm(x, W["ln2_g"], W["ln2_b"])
        x = x + gelu(h2 @ W["w1"] + W["b1"]) @ W["w2"] + W["b2"]
    cache.length = t + 1
    return (layer_norm(x, P["lnf_g"], P["lnf_b"]) @ P["unembed"])[0]


def _decode_row_masks(plan: HeadMaskPlan, cache: KVCache, ids: List[int]):
    """Mask rows for the newest query when intervention continues past prefill."""
    text = bytes(t for t in ids if t < 256).decode("utf-8", errors="replace")
    if len(text.encode("utf-8")) != len(ids):
        return None  # specials or invalid bytes break the byte/position alignment
    i = len(ids) - 1
    ref_keys, noref_keys = pairs_for_query(annotate_rules(text), i)
    if not ref_keys and not noref_keys:
        return None
    masks = {}
    for key, boost in cache.reweight.items():
        row = np.zeros((1, len(ids)))
        row[0, list(ref_keys)] = boost
        row[0, list(noref_keys)] = NEG_INF
        masks[key] = row
    return masks


def greedy_decode(
    model: ToyDecoder,
    prompt_tokens,
    plan: Optional[HeadMaskPlan] = None,
    max_new: int = 32,
    stop: Iterable[int] = (EOS,),
) -> List[int]:
    """Greedy generation; ties go to the lowest token id.

    The plan is applied during prefill. With ``plan.prefill_only`` false the
    ref/noref rows of newly generated identifier mentions are also masked,
    using each selected head's prefill score median. Stop tokens end
    generation and are not returned.
    """
    plan = plan or HeadMaskPlan.baseline()
    prompt_tokens = list(prompt_tokens)
    if max_new < 0:
        raise LengthError("max_new must be >= 0")
    if len(prompt_tokens) + max_new > model.config.max_seq:
        raise LengthError(
            f"prompt ({len(prompt_tokens)}) + max_new ({max_new}) exceeds max_seq={model.config.max_seq}"
        )
    if max_new == 0:
        return []
    stop = frozenset(stop)
    result = prefill(model, prompt_tokens, plan, capture=False)
    ids = list(prompt_tokens)
    out: List[int] = []
    logits = result.logits[-1]
    for step in range(max_new):
        token = int(np.argmax(logits))
        if token in stop:
            break
        out.append(token)
        ids.append(token)
        if step == max_new - 1:
            break
        row_masks = None if plan.prefill_only else _decode_row_masks(plan, result.cache, ids)
        logits = _decode_step(model, token, result.cache, row_masks)
    return out


def decode_bytes(ids) -> str:
    return bytes(t for t in ids if t < 256).decode("utf-8", errors="replace")
