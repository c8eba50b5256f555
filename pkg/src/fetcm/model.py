"""Filter-enhanced transformer click model.

Two branches share one embedding layer for query, url, click-context and rank:

* attractiveness: the four field embeddings of a document form a 4-token
  sequence -> learnable frequency-domain filter blocks -> transformer blocks ->
  concatenation of the four output tokens -> linear + sigmoid.
* examination: per document, the rank embedding and the click-context embedding
  of the previous document (a 2-token sequence) -> filter blocks -> flattened ->
  session-level GRU -> linear + sigmoid.

A combination function merges the two probabilities into a click probability.
Click context never includes the click being predicted: the symbol fed for a
document is the click of the document before it (``NO_PREVIOUS`` at the start).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .clicklog import Batch, Session, Vocabulary, make_batch
from .tensor import Tensor

COMBINATIONS = ("mul", "exp_mul", "sigmoid_log", "linear", "nonlinear")
ATTR_TOKENS = 4  # q, d, c, p
EXAM_TOKENS = 2  # p, c
CLICK_SYMBOLS = 3
MLP_HIDDEN = 16


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    embedding_size: int = 64
    hidden_size: int = 64
    heads: int = 8
    transformer_blocks: int = 1
    filter_blocks_attr: int = 1
    filter_blocks_exam: int = 1
    dropout: float = 0.5
    combination: str = "exp_mul"
    p_max: int = 10
    prob_clamp: float = 1e-6
    enable_filter_attr: bool = True
    enable_filter_exam: bool = True
    recurrent_cell: str = "gru"
    layer_norm_eps: float = 1e-12

    def validate(self) -> None:
        if self.embedding_size < 1 or self.hidden_size < 1 or self.heads < 1:
            raise ConfigError("sizes and heads must be positive")
        if self.hidden_size % self.heads or self.embedding_size % self.heads:
            raise ConfigError(f"hidden_size {self.hidden_size} and embedding_size {self.embedding_size} "
                              f"must be divisible by heads {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if not 0.0 < self.prob_clamp < 0.5:
            raise ConfigError(f"prob_clamp must lie in (0, 0.5), got {self.prob_clamp}")
        if self.combination not in COMBINATIONS:
            raise ConfigError(f"unknown combination {self.combination!r}; choose from {COMBINATIONS}")
        if self.recurrent_cell != "gru":
            # TODO(lstm-exam-branch): LSTM/transformer examination variants for the ablation table
            raise ConfigError(f"recurrent_cell {self.recurrent_cell!r} is not implemented (only 'gru')")
        if min(self.transformer_blocks, self.filter_blocks_attr, self.filter_blocks_exam) < 0:
            raise ConfigError("block counts must be non-negative")
        if self.p_max < 1:
            raise ConfigError("p_max must be >= 1")

    @property
    def ffn_size(self) -> int:
        return 4 * self.hidden_size


@dataclass
class ForwardOutput:
    attraction: Tensor
    examination: Tensor
    click: Tensor
    mask: np.ndarray


# -- initialisation ---------------------------------------------------------

def _xavier(rng, fan_in, fan_out, shape=None):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def init_params(config: ModelConfig, n_queries: int, n_urls: int, seed: int = 0) -> dict[str, Tensor]:
    """Fresh parameter set; insertion order is the canonical manifest order."""
    config.validate()
    rng = np.random.default_rng(seed)
    l, h, ff = config.embedding_size, config.hidden_size, config.ffn_size
    p: dict[str, np.ndarray] = {}

    for name, rows in (("emb_q", n_queries), ("emb_d", n_urls), ("emb_c", CLICK_SYMBOLS), ("emb_p", config.p_max + 1)):
        table = rng.uniform(-0.1, 0.1, size=(rows, l))
        table[0] = 0.0
        p[name] = table

    def filter_blocks(prefix, count, tokens, enabled):
        bins = tokens // 2 + 1
        for i in range(count):
            if enabled:
                p[f"{prefix}.{i}.w_re"] = 1.0 + rng.normal(0.0, 0.02, size=(bins, l))
                p[f"{prefix}.{i}.w_im"] = rng.normal(0.0, 0.02, size=(bins, l))
            p[f"{prefix}.{i}.ln_gamma"] = np.ones(l)
            p[f"{prefix}.{i}.ln_beta"] = np.zeros(l)

    filter_blocks("attr_filter", config.filter_blocks_attr, ATTR_TOKENS, config.enable_filter_attr)
    for i in range(config.transformer_blocks):
        pre = f"attr_block.{i}"
        for w in ("wq", "wk", "wv", "wo"):
            p[f"{pre}.{w}"] = _xavier(rng, l, l)
        p[f"{pre}.ln1_gamma"], p[f"{pre}.ln1_beta"] = np.ones(l), np.zeros(l)
        p[f"{pre}.ffn_w1"] = _xavier(rng, l, ff)
        p[f"{pre}.ffn_b1"] = np.zeros(ff)
        p[f"{pre}.ffn_w2"] = _xavier(rng, ff, l)
        p[f"{pre}.ffn_b2"] = np.zeros(l)
        p[f"{pre}.ln2_gamma"], p[f"{pre}.ln2_beta"] = np.ones(l), np.zeros(l)
    p["attr_head.w"] = _xavier(rng, ATTR_TOKENS * l, 1)
    p["attr_head.b"] = np.zeros(1)

    filter_blocks("exam_filter", config.filter_blocks_exam, EXAM_TOKENS, config.enable_filter_exam)
    x_size = EXAM_TOKENS * l
    for gate in "zrh":
        p[f"gru.w_{gate}"] = _xavier(rng, x_size, h)
        p[f"gru.u_{gate}"] = _xavier(rng, h, h)
        p[f"gru.b_{gate}"] = np.zeros(h)
    p["exam_head.w"] = _xavier(rng, h, 1)
    p["exam_head.b"] = np.zeros(1)

    kind = config.combination
    if kind == "exp_mul":
        p["comb.lambda"] = np.array(1.0)
        p["comb.mu"] = np.array(1.0)
    elif kind == "linear":
        p["comb.alpha"] = np.array(0.5)
        p["comb.beta"] = np.array(0.5)
    elif kind == "nonlinear":
        p["comb.w1"] = _xavier(rng, 2, MLP_HIDDEN)
        p["comb.b1"] = np.zeros(MLP_HIDDEN)
        p["comb.w2"] = _xavier(rng, MLP_HIDDEN, 1)
        p["comb.b2"] = np.zeros(1)

    return {k: Tensor(v, requires_grad=True) for k, v in p.items()}


# -- building blocks --------------------------------------------------------

def embed_features(params, query_ids, url_ids, click_ids, position_ids):
    """Look up the four field embeddings; id 0 maps to the frozen zero row."""
    return (T.embedding_lookup(params["emb_q"], query_ids, padding_idx=0),
            T.embedding_lookup(params["emb_d"], url_ids, padding_idx=0),
            T.embedding_lookup(params["emb_c"], click_ids, padding_idx=0),
            T.embedding_lookup(params["emb_p"], position_ids, padding_idx=0))


def filter_block_forward(x: Tensor, params, prefix: str, dropout: float = 0.0, training: bool = False,
                         rng=None, eps: float = 1e-12) -> Tensor:
    """``layer_norm(x + dropout(irfft(W * rfft(x))))`` along the token axis (-2).

    Without filter weights under ``prefix`` (filter disabled) only the skip
    path remains: ``layer_norm(x)``.
    """
    gamma, beta = params[f"{prefix}.ln_gamma"], params[f"{prefix}.ln_beta"]
    if f"{prefix}.w_re" not in params:
        return T.layer_norm(x, gamma, beta, eps)
    spec = T.spectrum_filter_mul(T.rfft(x), params[f"{prefix}.w_re"], params[f"{prefix}.w_im"])
    filtered = T.dropout(T.irfft(spec, x.shape[-2]), dropout, training, rng)
    return T.layer_norm(x + filtered, gamma, beta, eps)


def _filter_stack(x, params, prefix, count, config, training, rng):
    for i in range(count):
        x = filter_block_forward(x, params, f"{prefix}.{i}", config.dropout, training, rng, config.layer_norm_eps)
    return x


def multi_head_attention(x: Tensor, params, prefix: str, heads: int) -> Tensor:
    """Scaled dot-product self-attention over axis -2 of ``x`` (``[N, n, d]``)."""
    squeeze = x.ndim == 2
    if squeeze:
        x = x.reshape(1, *x.shape)
    batch, n, d = x.shape
    if d % heads:
        raise T.DimensionError(f"width {d} not divisible by {heads} heads")
    dk = d // heads

    def split_heads(t):
        return t.reshape(batch, n, heads, dk).transpose(0, 2, 1, 3)

    q = split_heads(x @ params[f"{prefix}.wq"])
    k = split_heads(x @ params[f"{prefix}.wk"])
    v = split_heads(x @ params[f"{prefix}.wv"])
    weights = T.softmax_rows((q @ k.transpose(0, 1, 3, 2)) * (1.0 / math.sqrt(dk)))
    merged = (weights @ v).transpose(0, 2, 1, 3).reshape(batch, n, d)
    out = merged @ params[f"{prefix}.wo"]
    return out.reshape(n, d) if squeeze else out


def position_wise_ffn(s: Tensor, params, prefix: str) -> Tensor:
    hidden = T.relu(s @ params[f"{prefix}.ffn_w1"] + params[f"{prefix}.ffn_b1"])
    return hidden @ params[f"{prefix}.ffn_w2"] + params[f"{prefix}.ffn_b2"]


def transformer_block(x: Tensor, params, prefix: str, config: ModelConfig, training=False, rng=None) -> Tensor:
    eps = config.layer_norm_eps
    attn = T.dropout(multi_head_attention(x, params, prefix, config.heads), config.dropout, training, rng)
    s = T.layer_norm(x + attn, params[f"{prefix}.ln1_gamma"], params[f"{prefix}.ln1_beta"], eps)
    ffn = T.dropout(position_wise_ffn(s, params, prefix), config.dropout, training, rng)
    return T.layer_norm(s + ffn, params[f"{prefix}.ln2_gamma"], params[f"{prefix}.ln2_beta"], eps)


def attractiveness_forward(params, config: ModelConfig, v_q, v_d, v_c, v_p, training=False, rng=None) -> Tensor:
    """Attraction probability for each of ``N`` documents from their ``[N, l]`` field embeddings."""
    n, l = v_q.shape
    tokens = T.concat([v.reshape(n, 1, l) for v in (v_q, v_d, v_c, v_p)], axis=1)
    tokens = _filter_stack(tokens, params, "attr_filter", config.filter_blocks_attr, config, training, rng)
    for i in range(config.transformer_blocks):
        tokens = transformer_block(tokens, params, f"attr_block.{i}", config, training, rng)
    logits = tokens.reshape(n, ATTR_TOKENS * l) @ params["attr_head.w"] + params["attr_head.b"]
    return T.sigmoid(logits).reshape(n)


def examination_forward(params, config: ModelConfig, v_p, v_c_prev, mask=None, training=False, rng=None) -> Tensor:
    """Examination probability per step of ``[B, T, l]`` session sequences."""
    b, steps, l = v_p.shape
    if steps == 0:
        raise ValueError("examination_forward needs at least one document")
    tokens = T.concat([v_p.reshape(b, steps, 1, l), v_c_prev.reshape(b, steps, 1, l)], axis=2)
    tokens = _filter_stack(tokens, params, "exam_filter", config.filter_blocks_exam, config, training, rng)
    gru = {k[4:]: v for k, v in params.items() if k.startswith("gru.")}
    states = T.gru_sequence(tokens.reshape(b, steps, EXAM_TOKENS * l), gru, mask=mask)
    logits = states @ params["exam_head.w"] + params["exam_head.b"]
    return T.sigmoid(logits).reshape(b, steps)


def combine(a: Tensor, e: Tensor, kind: str, params, eps: float = 1e-6) -> Tensor:
    """Merge attraction and examination into a click probability clamped to ``[eps, 1 - eps]``."""
    if kind == "mul":
        c = a * e
    elif kind == "exp_mul":
        c = T.power(a, params["comb.lambda"]) * T.power(e, params["comb.mu"])
    elif kind == "sigmoid_log":
        c = (a * e * 4.0) / ((a + 1.0) * (e + 1.0))
    elif kind == "linear":
        c = params["comb.alpha"] * a + params["comb.beta"] * e
    elif kind == "nonlinear":
        shape = a.shape
        x = T.concat([a.reshape(-1, 1), e.reshape(-1, 1)], axis=1)
        hidden = T.relu(x @ params["comb.w1"] + params["comb.b1"])
        c = T.sigmoid(hidden @ params["comb.w2"] + params["comb.b2"]).reshape(*shape)
    else:
        raise ConfigError(f"unknown combination {kind!r}")
    return T.clip(c, eps, 1.0 - eps)


def click_loss(c: Tensor, labels: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean binary cross-entropy (natural log) over the masked-in documents."""
    m = np.asarray(mask, dtype=np.float64)
    n_valid = m.sum()
    if n_valid == 0:
        raise ValueError("click_loss: no valid documents")
    y = np.asarray(labels, dtype=np.float64)
    ll = T.log(c) * (y * m) + T.log(1.0 - c) * ((1.0 - y) * m)
    return -ll.sum() * (1.0 / n_valid)


# -- full model -------------------------------------------------------------

class ClickModel:
    """Parameters plus configuration; ``forward`` works on padded batches."""

    def __init__(self, config: ModelConfig, n_queries: int, n_urls: int, seed: int = 0,
                 params: dict[str, Tensor] | None = None):
        config.validate()
        self.config = config
        self.n_queries = n_queries
        self.n_urls = n_urls
        self.params = params if params is not None else init_params(config, n_queries, n_urls, seed)

    def forward(self, batch: Batch, training: bool = False, rng=None) -> ForwardOutput:
        cfg = self.config
        if batch.position.max(initial=0) > cfg.p_max:
            raise ConfigError(f"batch has rank {batch.position.max()} beyond p_max={cfg.p_max}")
        if batch.query.max(initial=0) >= self.n_queries or batch.url.max(initial=0) >= self.n_urls:
            raise ConfigError("batch ids exceed the model vocabulary")
        b, nq, np_ = batch.mask.shape
        steps = nq * np_
        flat = lambda a: a.reshape(b * steps)  # noqa: E731
        v_q, v_d, v_c, v_p = embed_features(self.params, flat(batch.query), flat(batch.url),
                                            flat(batch.prev_click_query), flat(batch.position))
        attraction = attractiveness_forward(self.params, cfg, v_q, v_d, v_c, v_p, training, rng)
        l = cfg.embedding_size
        v_c_sess = T.embedding_lookup(self.params["emb_c"], batch.prev_click_session.reshape(b, steps), padding_idx=0)
        examination = examination_forward(self.params, cfg, v_p.reshape(b, steps, l), v_c_sess,
                                          batch.mask.reshape(b, steps), training, rng)
        attraction = attraction.reshape(b, nq, np_)
        examination = examination.reshape(b, nq, np_)
        click = combine(attraction, examination, cfg.combination, self.params, cfg.prob_clamp)
        return ForwardOutput(attraction, examination, click, batch.mask)

    def loss(self, batch: Batch, training: bool = True, rng=None) -> Tensor:
        out = self.forward(batch, training, rng)
        return click_loss(out.click, batch.click, batch.mask)

    def predict_batch(self, batch: Batch) -> ForwardOutput:
        """Evaluation-mode forward pass without graph recording."""
        with T.no_grad():
            return self.forward(batch, training=False)

    def predict_session(self, session: Session, vocab: Vocabulary) -> ForwardOutput:
        if vocab.query_count != self.n_queries or vocab.url_count != self.n_urls:
            raise ConfigError(f"vocabulary ({vocab.query_count} queries, {vocab.url_count} urls) does not "
                              f"match the model ({self.n_queries}, {self.n_urls})")
        return self.predict_batch(make_batch([session], self.config.p_max, vocab))

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    def config_dict(self) -> dict:
        return asdict(self.config)
