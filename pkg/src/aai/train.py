"""Next-byte training of the toy decoder with PyTorch (optional extra).

The torch module mirrors the NumPy forward pass parameter for parameter, so a
trained model exports to a plain ToyDecoder and everything downstream
(prefill, interventions, traces) runs without torch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .errors import ConfigError
from .model import EOS, LN_EPS, ModelConfig, ToyDecoder, init_model

try:
    import torch
    from torch import nn
except ImportError:  # pragma: no cover - exercised only without the extra
    torch = None
    nn = None


def _require_torch():
    if torch is None:
        raise ConfigError("training needs PyTorch; install the 'train' extra")


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 200
    batch_size: int = 8
    context: int = 256
    learning_rate: float = 3e-3
    seed: int = 0


def _layer_norm(x, g, b):
    mu = x.mean(dim=-1, keepdim=True)
    var = ((x - mu) ** 2).mean(dim=-1, keepdim=True)
    return (x - mu) / torch.sqrt(var + LN_EPS) * g + b


def _gelu(x):
    return 0.5 * x * (1.0 + torch.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


class TorchDecoder(nn.Module if nn is not None else object):
    def __init__(self, model: ToyDecoder):
        _require_torch()
        super().__init__()
        self.config = model.config
        self.weights = nn.ParameterDict(
            {name.replace(".", "__"): nn.Parameter(torch.tensor(np.array(arr), dtype=torch.float64))
             for name, arr in model.params.items()}
        )

    def p(self, name):
        return self.weights[name.replace(".", "__")]

    def forward(self, tokens):
        """Logits for a (batch, length) tensor of token ids."""
        cfg = self.config
        B, L = tokens.shape
        hd = cfg.head_dim
        x = self.p("embed")[tokens] + self.p("pos")[:L]
        causal = torch.triu(torch.full((L, L), float("-inf"), dtype=torch.float64), diagonal=1)
        for i in range(cfg.num_layers):
            P = lambda n: self.p(f"layer{i}.{n}")  # noqa: E731
            h = _layer_norm(x, P("ln1_g"), P("ln1_b"))
            q = (h @ P("wq")).view(B, L, cfg.num_heads, hd).transpose(1, 2)
            k = (h @ P("wk")).view(B, L, cfg.num_heads, hd).transpose(1, 2)
            v = (h @ P("wv")).view(B, L, cfg.num_heads, hd).transpose(1, 2)
            A = torch.softmax(q @ k.transpose(-1, -2) / math.sqrt(hd) + causal, dim=-1)
            mixed = (A @ v).transpose(1, 2).reshape(B, L, cfg.model_dim)
            x = x + mixed @ P("wo")
            h2 = _layer_norm(x, P("ln2_g"), P("ln2_b"))
            x = x + _gelu(h2 @ P("w1") + P("b1")) @ P("w2") + P("b2")
        return _layer_norm(x, self.p("lnf_g"), self.p("lnf_b")) @ self.p("unembed")

    def export(self) -> ToyDecoder:
        params = {name.replace("__", "."): t.detach().cpu().numpy().copy() for name, t in self.weights.items()}
        return ToyDecoder(self.config, params)


def encode_corpus(texts: Iterable[str]) -> np.ndarray:
    """Concatenate UTF-8 bytes of each text followed by EOS."""
    ids: List[int] = []
    for text in texts:
        ids.extend(text.encode("utf-8"))
        ids.append(EOS)
    return np.array(ids, dtype=np.int64)


def train(
    texts: Sequence[str],
    model_config: ModelConfig = ModelConfig(),
    config: TrainConfig = TrainConfig(),
    log=None,
    start: Optional[ToyDecoder] = None,
) -> ToyDecoder:
    """Adam on the next-byte cross-entropy over random windows of the corpus."""
    _require_torch()
    if start is not None:
        model_config = start.config
    corpus = encode_corpus(texts)
    window = min(config.context, model_config.max_seq)
    if len(corpus) < window + 1:
        raise ConfigError(f"corpus has {len(corpus)} tokens, need more than the {window}-token window")
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    net = TorchDecoder(start or init_model(model_config))
    opt = torch.optim.Adam(net.parameters(), lr=config.learning_rate)
    data = torch.from_numpy(corpus)
    for step in range(config.steps):
        offsets = rng.integers(0, len(corpus) - window, size=config.batch_size)
        batch = torch.stack([data[o : o + window + 1] for o in offsets])
        logits = net(batch[:, :-1])
        loss = nn.functional.cross_entropy(logits.reshape(-1, logits.shape[-1]), batch[:, 1:].reshape(-1))
        opt.zero_grad()
        loss.backward()
        opt.step()
        if log is not None:
            log(step, loss.item())
    return net.export()
