"""Click-prediction metrics, the rank-CTR baseline and the PBM oracle.

Per-rank perplexity uses base-2 logs (a coin flip scores exactly 2);
log-likelihood uses natural logs. Probabilities are clamped to
``[eps, 1 - eps]`` before any log.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .clicklog import GroundTruth, Session, Vocabulary, batch_iter

DEFAULT_EPS = 1e-6


class MetricError(ValueError):
    pass


@dataclass
class Predictions:
    """Flat per-document arrays: predicted click probability, label, rank."""

    prob: np.ndarray
    click: np.ndarray
    rank: np.ndarray

    def __len__(self):
        return len(self.prob)


def _log2_lik(p, c, eps):
    p = np.clip(np.asarray(p, dtype=np.float64), eps, 1.0 - eps)
    c = np.asarray(c, dtype=np.float64)
    return c * np.log2(p) + (1.0 - c) * np.log2(1.0 - p)


def perplexity_at_rank(preds: Predictions, r: int, eps: float = DEFAULT_EPS) -> float:
    at = preds.rank == r
    if not at.any():
        raise MetricError(f"no documents at rank {r}")
    return float(2.0 ** (-_log2_lik(preds.prob[at], preds.click[at], eps).mean()))


def ppl_by_rank(preds: Predictions, p_max: int, eps: float = DEFAULT_EPS) -> dict[int, float]:
    """PPL for every rank in ``1..p_max`` that has at least one document."""
    return {r: perplexity_at_rank(preds, r, eps) for r in range(1, p_max + 1) if (preds.rank == r).any()}


def overall_ppl(preds: Predictions, p_max: int, eps: float = DEFAULT_EPS) -> float:
    """Arithmetic mean of PPL@r over the ranks present."""
    per_rank = ppl_by_rank(preds, p_max, eps)
    if not per_rank:
        raise MetricError("no ranks present")
    return float(np.mean(list(per_rank.values())))


def log_likelihood(preds: Predictions, eps: float = DEFAULT_EPS) -> float:
    if len(preds) == 0:
        raise MetricError("log-likelihood of zero documents")
    p = np.clip(preds.prob, eps, 1.0 - eps)
    c = preds.click.astype(np.float64)
    return float(np.mean(c * np.log(p) + (1.0 - c) * np.log(1.0 - p)))


# -- predictors -----------------------------------------------------------------

def session_arrays(sessions: list[Session]) -> tuple[np.ndarray, np.ndarray]:
    clicks, ranks = [], []
    for s in sessions:
        for _, d in s.documents():
            clicks.append(d.click)
            ranks.append(d.position)
    return np.asarray(clicks, dtype=np.int64), np.asarray(ranks, dtype=np.int64)


def model_predictions(model, sessions: list[Session], vocab: Vocabulary, batch_size: int = 256) -> Predictions:
    """Evaluation-mode click probabilities in session/query/rank order."""
    probs = []
    for batch in batch_iter(sessions, batch_size, model.config.p_max, vocab=vocab):
        out = model.predict_batch(batch)
        probs.append(out.click.data[batch.mask])
    clicks, ranks = session_arrays(sessions)
    prob = np.concatenate(probs) if probs else np.zeros(0)
    return Predictions(prob, clicks, ranks)


class RankCTRBaseline:
    """Laplace-smoothed click-through rate per rank: ``(clicks + 1) / (impressions + 2)``."""

    def __init__(self, sessions: list[Session]):
        if not sessions:
            raise ValueError("rank-CTR baseline needs at least one training session")
        clicks, ranks = session_arrays(sessions)
        self.clicks: dict[int, int] = {}
        self.impressions: dict[int, int] = {}
        for r in np.unique(ranks):
            at = ranks == r
            self.clicks[int(r)] = int(clicks[at].sum())
            self.impressions[int(r)] = int(at.sum())
        self.global_ctr = self.smoothed(int(clicks.sum()), len(clicks))

    @staticmethod
    def smoothed(clicks: int, impressions: int) -> float:
        return (clicks + 1.0) / (impressions + 2.0)

    def prob(self, rank: int) -> float:
        """Smoothed CTR at ``rank``; ranks never seen in training get the global CTR."""
        if rank not in self.impressions:
            return float(self.global_ctr)
        return self.smoothed(self.clicks[rank], self.impressions[rank])

    def predict(self, sessions: list[Session]) -> Predictions:
        clicks, ranks = session_arrays(sessions)
        return Predictions(np.array([self.prob(int(r)) for r in ranks]), clicks, ranks)


def pbm_oracle_predictions(sessions: list[Session], truth: GroundTruth) -> Predictions:
    probs = []
    for s in sessions:
        for q, d in s.documents():
            key = (q.query_id, d.url_id)
            if key not in truth.alpha or d.position > len(truth.gamma):
                raise MetricError(f"ground truth has no entry for query {q.query_id}, url {d.url_id}, "
                                  f"rank {d.position}")
            probs.append(truth.alpha[key] * truth.gamma[d.position - 1])
    clicks, ranks = session_arrays(sessions)
    return Predictions(np.asarray(probs, dtype=np.float64), clicks, ranks)


def pbm_oracle_ppl(sessions: list[Session], truth: GroundTruth, p_max: int = 10, eps: float = DEFAULT_EPS) -> float:
    return overall_ppl(pbm_oracle_predictions(sessions, truth), p_max, eps)


# -- report -----------------------------------------------------------------------

@dataclass
class EvalReport:
    ppl_at_rank: dict[int, float]
    ppl_overall: float
    ll: float
    n_queries: int
    n_docs: int
    baseline_ppl: float | None = None
    oracle_ppl: float | None = None
    extra: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write("rank,ppl\n")
        for r, v in sorted(self.ppl_at_rank.items()):
            out.write(f"{r},{v!r}\n")
        out.write(f"overall_ppl,{self.ppl_overall!r}\n")
        out.write(f"ll,{self.ll!r}\n")
        if self.baseline_ppl is not None:
            out.write(f"baseline_ppl,{self.baseline_ppl!r}\n")
        if self.oracle_ppl is not None:
            out.write(f"oracle_ppl,{self.oracle_ppl!r}\n")
        return out.getvalue()

    def summary(self) -> str:
        parts = [f"ppl={self.ppl_overall:.6f}", f"ll={self.ll:.6f}"]
        if self.baseline_ppl is not None:
            parts.append(f"baseline_ppl={self.baseline_ppl:.6f}")
        if self.oracle_ppl is not None:
            parts.append(f"oracle_ppl={self.oracle_ppl:.6f}")
        return " ".join(parts)


def report(preds: Predictions, sessions: list[Session], p_max: int, eps: float = DEFAULT_EPS,
           baseline: RankCTRBaseline | None = None, truth: GroundTruth | None = None) -> EvalReport:
    rep = EvalReport(
        ppl_at_rank=ppl_by_rank(preds, p_max, eps),
        ppl_overall=overall_ppl(preds, p_max, eps),
        ll=log_likelihood(preds, eps),
        n_queries=sum(len(s.queries) for s in sessions),
        n_docs=len(preds),
    )
    if baseline is not None:
        rep.baseline_ppl = overall_ppl(baseline.predict(sessions), p_max, eps)
    if truth is not None:
        rep.oracle_ppl = overall_ppl(pbm_oracle_predictions(sessions, truth), p_max, eps)
    return rep
