"""Deterministic toy decoder whose attention reads K/V through a cache.

The model is a small pre-norm transformer built entirely from one seeded
random stream, so two processes with the same config produce bit-identical
weights. Architecture, fixed:

* token embedding (vocab x d_model), fan-in scaled; LM head tied to it
* sinusoidal positions, scaled by d_model**-0.5 to match embedding magnitude
* per layer: parameter-free RMSNorm -> multi-head attention -> residual add,
  RMSNorm -> ReLU MLP (d -> 4d -> d) -> residual add
* final RMSNorm before the tied head

Weight draw order from a single SplitMix64(seed) stream: embedding first,
then per layer Wq, Wk, Wv, Wo, W1, W2, each row-major, scaled fan_in**-0.5.
Changing this order changes every downstream regression anchor, so treat it
as frozen.

Generation runs the quantized-cache model in lockstep with a Passthrough16
baseline on the same weights. Prompt rows are processed as one causal
float32 pass (quantization applies to cached reads, so the prefill pass
itself is exact); its K/V rows then enter the caches and every decode step
appends one row and attends over the materialized cache, self-inclusively.
Divergence is summarized as the exact generated prefix, the mean KL of the
baseline's next-token distribution against the quantized run's (nats), and
the mean cosine between the two runs' post-projection attention outputs
over decode steps and layers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax

from .cache import CacheMode, KVCache
from .errors import ConfigError, StateError
from .rng import SplitMix64
from .schemes import SchemeConfig, SchemeKind
from .tensor import Tensor2D

__all__ = [
    "ToyModelConfig",
    "ToyModel",
    "DivergenceReport",
    "build_model",
    "attend",
    "generate",
]

_NORM_EPS = 1e-6


@dataclass(frozen=True)
class ToyModelConfig:
    n_layers: int = 2
    d_model: int = 64
    n_heads: int = 4
    vocab: int = 256
    max_seq: int = 256
    seed: int = 42

    def __post_init__(self):
        for name in ("n_layers", "d_model", "n_heads", "vocab", "max_seq"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}"
            )

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads


@dataclass(frozen=True)
class LayerWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    w2: np.ndarray


@dataclass(frozen=True)
class ToyModel:
    cfg: ToyModelConfig
    emb: np.ndarray
    layers: tuple[LayerWeights, ...]
    pos: np.ndarray


@dataclass(frozen=True)
class DivergenceReport:
    """How far a quantized-cache run drifted from its FP16 baseline."""

    exact_prefix_len: int
    mean_logit_kl: float
    attn_output_cosine: float
    tokens_generated: int


def _draw(rng: SplitMix64, fan_in: int, fan_out: int) -> np.ndarray:
    w = rng.gaussian(fan_in * fan_out).reshape(fan_in, fan_out)
    return (w * fan_in**-0.5).astype(np.float32)


def _sinusoid_positions(max_seq: int, d: int) -> np.ndarray:
    pos = np.arange(max_seq, dtype=np.float64)[:, None]
    idx = np.arange(d, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, 2.0 * (idx // 2) / d)
    table = np.where(idx % 2 == 0, np.sin(angle), np.cos(angle))
    return (table * d**-0.5).astype(np.float32)


def build_model(cfg: ToyModelConfig) -> ToyModel:
    """Materialize all weights from the config's seed. Pure and deterministic."""
    rng = SplitMix64(cfg.seed)
    d = cfg.d_model
    emb = (rng.gaussian(cfg.vocab * d).reshape(cfg.vocab, d) * d**-0.5).astype(np.float32)
    layers = []
    for _ in range(cfg.n_layers):
        layers.append(
            LayerWeights(
                wq=_draw(rng, d, d),
                wk=_draw(rng, d, d),
                wv=_draw(rng, d, d),
                wo=_draw(rng, d, d),
                w1=_draw(rng, d, 4 * d),
                w2=_draw(rng, 4 * d, d),
            )
        )
    return ToyModel(cfg=cfg, emb=emb, layers=tuple(layers), pos=_sinusoid_positions(cfg.max_seq, d))


def _rmsnorm(x: np.ndarray) -> np.ndarray:
    ms = np.mean(np.square(x), axis=-1, keepdims=True)
    return (x / np.sqrt(ms + _NORM_EPS)).astype(np.float32)


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=-1, keepdims=True)).astype(np.float32)


def attend(t_q: np.ndarray, cache: KVCache, n_heads: int) -> np.ndarray:
    """Multi-head attention of one query row over the cache's materialized K/V.

    Per head: scores = q_h K_h^T / sqrt(d_head), softmax, probs V_h; heads
    concatenated. No output projection here; callers apply their own.
    """
    if cache.n_tokens == 0:
        raise StateError("attention over an empty cache")
    q = np.asarray(t_q, dtype=np.float32).reshape(-1)
    if q.size != cache.d_model:
        raise ConfigError(f"query row has {q.size} features, cache holds {cache.d_model}")
    if n_heads < 1 or q.size % n_heads != 0:
        raise ConfigError(f"d_model={q.size} is not divisible by n_heads={n_heads}")
    d_head = q.size // n_heads
    K, V = cache.materialize()
    k = K.data.reshape(-1, n_heads, d_head)
    v = V.data.reshape(-1, n_heads, d_head)
    out = np.empty((n_heads, d_head), dtype=np.float32)
    scale = np.float32(1.0 / np.sqrt(d_head))
    for h in range(n_heads):
        scores = (k[:, h, :] @ q[h * d_head : (h + 1) * d_head]) * scale
        probs = _softmax_rows(scores[None, :])[0]
        out[h] = probs @ v[:, h, :]
    return out.reshape(-1)


def _causal_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, n_heads: int) -> np.ndarray:
    """Full causal self-attention over N rows, float32, used by the prefill pass."""
    n, d = q.shape
    d_head = d // n_heads
    mask = np.triu(np.full((n, n), -np.inf, dtype=np.float32), k=1)
    out = np.empty((n, d), dtype=np.float32)
    scale = np.float32(1.0 / np.sqrt(d_head))
    for h in range(n_heads):
        sl = slice(h * d_head, (h + 1) * d_head)
        scores = q[:, sl] @ k[:, sl].T * scale + mask
        probs = _softmax_rows(scores)
        out[:, sl] = probs @ v[:, sl]
    return out


class _Run:
    """One model instance decoding with its own set of per-layer caches."""

    def __init__(
        self,
        model: ToyModel,
        scheme: SchemeConfig,
        mode: CacheMode,
        prefill_exempt: bool,
    ):
        self.model = model
        self.caches = [
            KVCache(scheme, model.cfg.d_model, mode=mode, prefill_exempt=prefill_exempt)
            for _ in range(model.cfg.n_layers)
        ]
        self.tokens: list[int] = []
        # post-Wo attention outputs of the most recent decode forward, one per layer
        self.last_attn: list[np.ndarray] = []

    def prefill(self, prompt: list[int]) -> np.ndarray:
        """Causal pass over the prompt; fills caches; returns last-row logits."""
        m = self.model
        x = m.emb[prompt] + m.pos[: len(prompt)]
        for lw, cache in zip(m.layers, self.caches):
            xn = _rmsnorm(x)
            q, k, v = xn @ lw.wq, xn @ lw.wk, xn @ lw.wv
            attn = _causal_attention(q, k, v, m.cfg.n_heads)
            x = x + attn @ lw.wo
            cache.prefill(Tensor2D(k), Tensor2D(v))
            xn2 = _rmsnorm(x)
            x = x + np.maximum(xn2 @ lw.w1, 0.0) @ lw.w2
        return _rmsnorm(x[-1]) @ m.emb.T

    def step(self, token: int, position: int) -> np.ndarray:
        """Append one token, attending through the caches; returns its logits."""
        m = self.model
        x = m.emb[token] + m.pos[position]
        self.last_attn = []
        for lw, cache in zip(m.layers, self.caches):
            xn = _rmsnorm(x)
            q, k, v = xn @ lw.wq, xn @ lw.wk, xn @ lw.wv
            cache.append(k, v)
            attn = attend(q, cache, m.cfg.n_heads) @ lw.wo
            self.last_attn.append(attn)
            x = x + attn
            xn2 = _rmsnorm(x)
            x = x + np.maximum(xn2 @ lw.w1, 0.0) @ lw.w2
        return _rmsnorm(x) @ m.emb.T


def _kl_nats(base_logits: np.ndarray, quant_logits: np.ndarray) -> float:
    lp = log_softmax(base_logits.astype(np.float64))
    lq = log_softmax(quant_logits.astype(np.float64))
    return float(np.sum(np.exp(lp) * (lp - lq)))


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if np.array_equal(x, y):
        return 1.0
    nx, ny = float(np.linalg.norm(x)), float(np.linalg.norm(y))
    if nx == 0.0 or ny == 0.0:
        return 0.0
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))


def generate(
    model: ToyModel,
    prompt_tokens: list[int],
    n_new: int,
    scheme: SchemeConfig,
    mode: CacheMode = CacheMode.SIMULATION,
    teacher_forced: bool = False,
    prefill_exempt: bool = False,
) -> tuple[list[int], DivergenceReport]:
    """Greedy decode under ``scheme``, in lockstep with an FP16 baseline.

    The baseline run uses Passthrough16 caches on the same weights and code
    path, so criterion-level identity (scheme == passthrough implies zero
    divergence) holds bit-for-bit. With ``teacher_forced`` the quantized run
    feeds the baseline's tokens, isolating cache error from token drift.
    """
    cfg = model.cfg
    if not prompt_tokens:
        raise ConfigError("prompt must contain at least one token")
    if any(t < 0 or t >= cfg.vocab for t in prompt_tokens):
        raise ConfigError(f"prompt tokens must be in [0, {cfg.vocab})")
    if n_new < 0:
        raise ConfigError(f"n_new must be >= 0, got {n_new}")
    if len(prompt_tokens) + n_new > cfg.max_seq:
        raise ConfigError(
            f"prompt ({len(prompt_tokens)}) + n_new ({n_new}) exceeds max_seq={cfg.max_seq}"
        )
    baseline_cfg = SchemeConfig(SchemeKind.PASSTHROUGH16)
    base = _Run(model, baseline_cfg, mode, prefill_exempt)
    quant = _Run(model, scheme, mode, prefill_exempt)

    if n_new == 0:
        return [], DivergenceReport(0, 0.0, 1.0, 0)

    base_logits = base.prefill(list(prompt_tokens))
    quant_logits = quant.prefill(list(prompt_tokens))
    kls = [_kl_nats(base_logits, quant_logits)]
    cosines: list[float] = []
    n_p = len(prompt_tokens)

    for t in range(n_new):
        base.tokens.append(int(np.argmax(base_logits)))
        quant.tokens.append(int(np.argmax(quant_logits)))
        if t == n_new - 1:
            break
        feed = base.tokens[-1] if teacher_forced else quant.tokens[-1]
        base_logits = base.step(base.tokens[-1], n_p + t)
        quant_logits = quant.step(feed, n_p + t)
        kls.append(_kl_nats(base_logits, quant_logits))
        cosines.extend(
            _cosine(a, b) for a, b in zip(base.last_attn, quant.last_attn)
        )

    prefix = 0
    for a, b in zip(base.tokens, quant.tokens):
        if a != b:
            break
        prefix += 1
    report = DivergenceReport(
        exact_prefix_len=prefix,
        mean_logit_kl=float(np.mean(kls)) if kls else 0.0,
        attn_output_cosine=float(np.mean(cosines)) if cosines else 1.0,
        tokens_generated=n_new,
    )
    return quant.tokens, report
