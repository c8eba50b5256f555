"""Finite-difference gradient checks for every differentiable op and the full model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as M
from . import tensor as T
from .clicklog import DocumentImpression, QueryRecord, Session, make_batch
from .tensor import Tensor

THRESHOLD = 1e-4
STEP = 1e-6


@dataclass
class CheckRow:
    name: str
    max_rel_err: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < THRESHOLD

    def csv(self) -> str:
        return f"{self.name},{self.max_rel_err:.3e},{'pass' if self.passed else 'FAIL'}"


def toy_config(**overrides) -> M.ModelConfig:
    cfg = dict(embedding_size=8, hidden_size=8, heads=2, dropout=0.0, p_max=3)
    cfg.update(overrides)
    return M.ModelConfig(**cfg)


def toy_session(seed: int = 0, n_queries: int = 2, n_docs: int = 3, n_ids: int = 4) -> Session:
    rng = np.random.default_rng(seed)
    queries = []
    for _ in range(n_queries):
        urls = rng.choice(np.arange(n_ids), size=n_docs, replace=False)
        docs = tuple(DocumentImpression(int(u) + 2, r + 1, int(rng.integers(2))) for r, u in enumerate(urls))
        queries.append(QueryRecord(int(rng.integers(n_ids)) + 2, docs))
    return Session(0, tuple(queries))


def _randomize(params: dict[str, Tensor], rng, scale: float = 0.3):
    # move away from the symmetric init so no gradient is accidentally tiny
    for name, p in params.items():
        if name.startswith("emb_"):
            p.data[1:] = rng.normal(0.0, 0.5, size=p.data[1:].shape)
        elif name in ("comb.lambda", "comb.mu"):
            p.data[...] = rng.uniform(0.7, 1.3)
        elif name.endswith(("ln_gamma", "ln1_gamma", "ln2_gamma")):
            p.data[...] = 1.0 + rng.normal(0.0, 0.1, size=p.shape)
        else:
            p.data[...] = p.data + rng.normal(0.0, scale, size=p.shape)


def model_check(seed: int = 0, combination: str = "exp_mul", **overrides) -> list[CheckRow]:
    """Check ``dloss/dparam`` for every parameter of a toy model."""
    cfg = toy_config(combination=combination, **overrides)
    session = toy_session(seed)
    batch = make_batch([session], cfg.p_max)
    model = M.ClickModel(cfg, 6, 6, seed=seed)
    _randomize(model.params, np.random.default_rng(seed + 1))
    rows = []
    for name, p in model.params.items():
        # row 0 of every embedding table is frozen at zero
        coords = np.arange(p.shape[1], p.data.size) if name.startswith("emb_") else None
        rows.append(CheckRow(f"model[{combination}].{name}",
                             T.grad_check(lambda _: model.loss(batch, training=False), p, STEP, coords)))
    return rows


def op_checks(seed: int = 0) -> list[CheckRow]:
    rng = np.random.default_rng(seed)
    rows = []

    def add(name, f, x):
        rows.append(CheckRow(name, T.grad_check(f, Tensor(x), STEP)))

    w = rng.normal(size=(4, 3))
    c = rng.normal(size=(5, 3))
    add("matmul.a", lambda a: (T.matmul(a, Tensor(w)) * Tensor(c)).sum(), rng.normal(size=(5, 4)))
    a0 = rng.normal(size=(5, 4))
    add("matmul.b", lambda b: (T.matmul(Tensor(a0), b) * Tensor(c)).sum(), w)
    c5 = rng.normal(size=(3, 5))
    add("softmax_rows", lambda x: (T.softmax_rows(x) * Tensor(c5)).sum(), rng.normal(size=(3, 5)))
    gamma, beta = rng.normal(size=5), rng.normal(size=5)
    x0 = rng.normal(size=(3, 5))
    add("layer_norm.x", lambda x: (T.layer_norm(x, Tensor(gamma), Tensor(beta)) * Tensor(c5)).sum(), x0)
    add("layer_norm.gamma", lambda g: (T.layer_norm(Tensor(x0), g, Tensor(beta)) * Tensor(c5)).sum(), gamma)
    add("layer_norm.beta", lambda b: (T.layer_norm(Tensor(x0), Tensor(gamma), b) * Tensor(c5)).sum(), beta)
    for kind in ("sigmoid", "tanh"):
        add(kind, lambda x, k=kind: (T.activation(x, k) * Tensor(c5)).sum(), rng.normal(size=(3, 5)))
    # keep relu inputs away from the kink
    xr = rng.normal(size=(3, 5))
    xr = np.where(np.abs(xr) < 0.1, 0.5, xr)
    add("relu", lambda x: (T.relu(x) * Tensor(c5)).sum(), xr)
    k0 = rng.normal(size=(3, 5))
    add("power.base", lambda x: (T.power(x, Tensor(k0)) * Tensor(c5)).sum(), rng.uniform(0.2, 2.0, size=(3, 5)))
    b0 = rng.uniform(0.2, 2.0, size=(3, 5))
    add("power.exponent", lambda k: (T.power(Tensor(b0), k) * Tensor(c5)).sum(), k0)
    add("exp_log", lambda x: (T.log(T.exp(x) + 1.0) * Tensor(c5)).sum(), rng.normal(size=(3, 5)))
    add("dropout(fixed mask)",
        lambda x: (T.dropout(x, 0.5, True, np.random.default_rng(7)) * Tensor(c5)).sum(), rng.normal(size=(3, 5)))
    ids = np.array([1, 3, 3, 0])
    c_emb = rng.normal(size=(4, 3))
    add("embedding_lookup", lambda t: (T.embedding_lookup(t, ids) * Tensor(c_emb)).sum(), rng.normal(size=(5, 3)))

    for n in (1, 2, 4, 7):
        cn = rng.normal(size=(2, n, 3))
        wr, wi = rng.normal(size=(n // 2 + 1, 3)), rng.normal(size=(n // 2 + 1, 3))
        x0 = rng.normal(size=(2, n, 3))

        def spectral(x, wr_, wi_):
            return (T.irfft(T.spectrum_filter_mul(T.rfft(x), wr_, wi_), n) * Tensor(cn)).sum()

        add(f"rfft_filter_irfft[n={n}].x", lambda x: spectral(x, Tensor(wr), Tensor(wi)), x0)
        add(f"rfft_filter_irfft[n={n}].w_re", lambda v: spectral(Tensor(x0), v, Tensor(wi)), wr)
        add(f"rfft_filter_irfft[n={n}].w_im", lambda v: spectral(Tensor(x0), Tensor(wr), v), wi)

    # filter block on n=4, d=8
    params = {"fb.w_re": Tensor(1.0 + rng.normal(0, 0.3, size=(3, 8))),
              "fb.w_im": Tensor(rng.normal(0, 0.3, size=(3, 8))),
              "fb.ln_gamma": Tensor(1.0 + rng.normal(0, 0.1, size=8)),
              "fb.ln_beta": Tensor(rng.normal(0, 0.1, size=8))}
    f_in = rng.normal(size=(4, 8))
    cf = rng.normal(size=(4, 8))
    for key in ("w_re", "w_im"):
        rows.append(CheckRow(f"filter_block.{key}", T.grad_check(
            lambda _: (M.filter_block_forward(Tensor(f_in), params, "fb") * Tensor(cf)).sum(),
            params[f"fb.{key}"], STEP)))
    add("filter_block.x", lambda x: (M.filter_block_forward(x, params, "fb") * Tensor(cf)).sum(), f_in)

    gru = {f"{k}_{g}": Tensor(rng.normal(0, 0.5, size=s))
           for g in "zrh" for k, s in (("w", (3, 4)), ("u", (4, 4)), ("b", (4,)))}
    xs = Tensor(rng.normal(size=(3, 3)))
    for name, p in gru.items():
        rows.append(CheckRow(f"gru_sequence.{name}",
                             T.grad_check(lambda _: T.gru_sequence(xs, gru)[-1].sum(), p, STEP)))

    blk = {f"blk.{w}": Tensor(rng.normal(0, 0.4, size=(8, 8))) for w in ("wq", "wk", "wv", "wo")}
    tok = rng.normal(size=(2, 4, 8))
    ct = rng.normal(size=(2, 4, 8))
    for name, p in blk.items():
        rows.append(CheckRow(f"multi_head_attention.{name.split('.')[1]}", T.grad_check(
            lambda _: (M.multi_head_attention(Tensor(tok), blk, "blk", 2) * Tensor(ct)).sum(), p, STEP)))
    ffn = {"f.ffn_w1": Tensor(rng.normal(0, 0.4, size=(8, 16))), "f.ffn_b1": Tensor(rng.normal(0, 0.4, size=16)),
           "f.ffn_w2": Tensor(rng.normal(0, 0.4, size=(16, 8))), "f.ffn_b2": Tensor(rng.normal(0, 0.4, size=8))}
    for name, p in ffn.items():
        rows.append(CheckRow(f"position_wise_ffn.{name.split('.')[1]}", T.grad_check(
            lambda _: (M.position_wise_ffn(Tensor(tok), ffn, "f") * Tensor(ct)).sum(), p, STEP)))

    a0 = rng.uniform(0.2, 0.8, size=6)
    e0 = rng.uniform(0.2, 0.8, size=6)
    for kind in M.COMBINATIONS:
        cp = {k: v for k, v in M.init_params(toy_config(combination=kind), 3, 3, seed).items()
              if k.startswith("comb.")}
        add(f"combine[{kind}].a", lambda a, k=kind: M.combine(a, Tensor(e0), k, cp).sum(), a0)
        add(f"combine[{kind}].e", lambda e, k=kind: M.combine(Tensor(a0), e, k, cp).sum(), e0)
    labels = np.array([1, 0, 1, 0, 1, 1])
    mask = np.array([1, 1, 1, 1, 0, 1], bool)
    add("click_loss", lambda c: M.click_loss(c, labels, mask), rng.uniform(0.1, 0.9, size=6))
    return rows


def run_all(seed: int = 0) -> list[CheckRow]:
    rows = op_checks(seed)
    for kind in M.COMBINATIONS:
        rows += model_check(seed, kind)
    return rows
