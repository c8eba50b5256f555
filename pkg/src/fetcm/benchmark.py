"""Synthetic PBM benchmark: 20k one-query sessions over 200 queries x 1000 urls."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import clicklog, metrics
from .model import ModelConfig
from .training import TrainConfig, TrainResult, train


@dataclass
class BenchmarkData:
    truth: clicklog.GroundTruth
    train: list[clicklog.Session]
    valid: list[clicklog.Session]
    test: list[clicklog.Session]


def build_benchmark(n_sessions: int = 20000, n_queries: int = 200, n_urls: int = 1000, docs: int = 10,
                    seed: int = 0) -> BenchmarkData:
    gamma = np.round(np.linspace(1.0, 0.1, docs), 10)
    truth = clicklog.random_truth(n_queries, n_urls, docs, gamma, 0.1, 0.9, seed=seed)
    sessions, _ = clicklog.synthesize_pbm(truth, n_sessions, 1, docs, seed=seed + 1)
    return BenchmarkData(truth, *clicklog.split(sessions, (0.8, 0.1, 0.1), seed=seed + 2))


@dataclass
class BenchmarkRun:
    report: metrics.EvalReport
    result: TrainResult
    seconds: float


def run_benchmark(data: BenchmarkData, model_config: ModelConfig | None = None,
                  train_config: TrainConfig | None = None, progress=None) -> BenchmarkRun:
    """Train on ``data.train`` (early stopping on ``data.valid``) and score ``data.test``."""
    mcfg = model_config or ModelConfig()
    tcfg = train_config or TrainConfig()
    start = time.time()
    result = train(data.train, data.valid, mcfg, tcfg, progress=progress)
    preds = metrics.model_predictions(result.model, data.test, result.checkpoint.vocab)
    rep = metrics.report(preds, data.test, mcfg.p_max, mcfg.prob_clamp,
                         baseline=metrics.RankCTRBaseline(data.train), truth=data.truth)
    return BenchmarkRun(rep, result, time.time() - start)


def filters(config: ModelConfig, enabled: bool) -> ModelConfig:
    return replace(config, enable_filter_attr=enabled, enable_filter_exam=enabled)
