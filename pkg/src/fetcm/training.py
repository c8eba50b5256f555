"""Adam training with early stopping on validation log-likelihood, plus the
binary checkpoint format.

Checkpoint layout (all integers little-endian)::

    b"FETCM\\0" | u32 version | u64 header length | JSON header | float64 arrays

The header's ``manifest`` lists ``name``, ``shape`` and byte ``offset`` (from
the start of the array section) for every stored array, in storage order.
"""

from __future__ import annotations

import json
import logging
import math
import struct
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import metrics
from .clicklog import Session, Vocabulary, batch_iter, build_vocab
from .model import ClickModel, ModelConfig
from .tensor import Tensor

log = logging.getLogger(__name__)

MAGIC = b"FETCM\0"
VERSION = 1
EPOCH_LOG_HEADER = "epoch,train_loss,valid_ll,valid_ppl,clip_events"


class TrainingError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


def derive_seed(seed: int, tag: str) -> int:
    """Deterministic sub-seed for one purpose, so one ``seed`` drives everything."""
    return int(np.random.SeedSequence([seed, zlib.crc32(tag.encode())]).generate_state(1)[0])


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 64
    weight_decay: float = 1e-5
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip_norm: float = 5.0
    min_freq: int = 1

    def validate(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    def copy(self) -> OptimizerState:
        return OptimizerState({k: a.copy() for k, a in self.m.items()},
                              {k: a.copy() for k, a in self.v.items()}, self.t)


def adam_update(params: dict[str, Tensor], state: OptimizerState, config: TrainConfig) -> bool:
    """One Adam step in place on ``params`` using their ``.grad``.

    Order: global-norm clipping, then coupled L2 decay (``g += wd * w``), then
    the bias-corrected moment update. Returns whether clipping fired.
    """
    grads = {}
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
        grads[name] = g
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    clipped = config.grad_clip_norm > 0 and norm > config.grad_clip_norm
    scale = config.grad_clip_norm / norm if clipped else 1.0
    state.t += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name] * scale
        if config.weight_decay:
            g = g + config.weight_decay * p.data
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= config.learning_rate * (m / c1) / (np.sqrt(v / c2) + config.adam_eps)
    return clipped


# -- checkpoints ----------------------------------------------------------------

@dataclass
class Checkpoint:
    model_config: ModelConfig
    vocab: Vocabulary
    params: dict[str, np.ndarray]
    optimizer: OptimizerState
    epoch: int = 0
    best_valid_ll: float | None = None
    version: int = VERSION

    def to_model(self) -> ClickModel:
        params = {k: Tensor(v.copy(), requires_grad=True) for k, v in self.params.items()}
        model = ClickModel(self.model_config, self.vocab.query_count, self.vocab.url_count, params=params)
        if params["emb_q"].shape[0] != self.vocab.query_count or params["emb_d"].shape[0] != self.vocab.url_count:
            raise CheckpointError("embedding tables do not match the stored vocabulary")
        return model


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    arrays: list[tuple[str, np.ndarray]] = list(ckpt.params.items())
    arrays += [(f"adam.m/{k}", a) for k, a in ckpt.optimizer.m.items()]
    arrays += [(f"adam.v/{k}", a) for k, a in ckpt.optimizer.v.items()]
    manifest, offset = [], 0
    for name, a in arrays:
        manifest.append({"name": name, "shape": list(a.shape), "offset": offset})
        offset += a.size * 8
    header = {
        "config": asdict(ckpt.model_config),
        "vocab_sizes": {"queries": ckpt.vocab.query_count, "urls": ckpt.vocab.url_count},
        "vocab": ckpt.vocab.to_json(),
        "n_params": len(ckpt.params),
        "manifest": manifest,
        "optimizer": {"t": ckpt.optimizer.t},
        "epoch": ckpt.epoch,
        "best_valid_ll": ckpt.best_valid_ll,
    }
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", ckpt.version))
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for _, a in arrays:
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic bytes)")
    pos = len(MAGIC)
    if len(raw) < pos + 12:
        raise CheckpointError(f"{path}: truncated header")
    (version,) = struct.unpack_from("<I", raw, pos)
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, this build reads version {VERSION}")
    (hlen,) = struct.unpack_from("<Q", raw, pos + 4)
    pos += 12
    if len(raw) < pos + hlen:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header ({e})") from None
    base = pos + hlen
    arrays = {}
    for entry in header["manifest"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start = base + entry["offset"]
        if start + count * 8 > len(raw):
            raise CheckpointError(f"{path}: truncated data for {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8", count=count, offset=start) \
            .reshape(entry["shape"]).astype(np.float64)
    known = {f.name for f in fields(ModelConfig)}
    config = ModelConfig(**{k: v for k, v in header["config"].items() if k in known})
    vocab = Vocabulary.from_json(header["vocab"])
    sizes = header["vocab_sizes"]
    if sizes["queries"] != vocab.query_count or sizes["urls"] != vocab.url_count:
        raise CheckpointError(f"{path}: vocabulary sizes disagree with the stored vocabulary")
    params = {k: a for k, a in arrays.items() if not k.startswith("adam.")}
    opt = OptimizerState({k[7:]: a for k, a in arrays.items() if k.startswith("adam.m/")},
                         {k[7:]: a for k, a in arrays.items() if k.startswith("adam.v/")},
                         header["optimizer"]["t"])
    return Checkpoint(config, vocab, params, opt, header["epoch"], header["best_valid_ll"], version)


# -- training loop --------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    valid_ll: float
    valid_ppl: float
    clip_events: int

    def csv(self) -> str:
        return f"{self.epoch},{self.train_loss!r},{self.valid_ll!r},{self.valid_ppl!r},{self.clip_events}"


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[EpochRecord]
    model: ClickModel

    def epoch_log(self) -> str:
        return "\n".join([EPOCH_LOG_HEADER] + [r.csv() for r in self.history]) + "\n"


def train(train_sessions: list[Session], valid_sessions: list[Session], model_config: ModelConfig,
          train_config: TrainConfig, vocab: Vocabulary | None = None, progress=None) -> TrainResult:
    """Fit a click model; returns the checkpoint with the best validation LL."""
    train_config.validate()
    model_config.validate()
    if not train_sessions or not valid_sessions:
        raise ValueError("training and validation splits must be non-empty")
    vocab = vocab or build_vocab(train_sessions, train_config.min_freq)
    seed = train_config.seed
    model = ClickModel(model_config, vocab.query_count, vocab.url_count, seed=derive_seed(seed, "init"))
    dropout_rng = np.random.default_rng(derive_seed(seed, "dropout"))
    state = OptimizerState()
    history: list[EpochRecord] = []
    best: Checkpoint | None = None
    stale = 0

    for epoch in range(1, train_config.max_epochs + 1):
        total, n_docs, clips = 0.0, 0, 0
        batches = batch_iter(train_sessions, train_config.batch_size, model_config.p_max,
                             seed=seed + epoch, shuffle=True, vocab=vocab)
        for b_idx, batch in enumerate(batches):
            model.zero_grad()
            loss = model.loss(batch, training=True, rng=dropout_rng)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingError(f"loss diverged at epoch {epoch}, batch {b_idx}")
            loss.backward()
            try:
                clips += adam_update(model.params, state, train_config)
            except TrainingError as e:
                raise TrainingError(f"epoch {epoch}, batch {b_idx}: {e}") from None
            total += value * batch.n_docs
            n_docs += batch.n_docs
        preds = metrics.model_predictions(model, valid_sessions, vocab)
        rec = EpochRecord(epoch, total / n_docs,
                          metrics.log_likelihood(preds, model_config.prob_clamp),
                          metrics.overall_ppl(preds, model_config.p_max, model_config.prob_clamp), clips)
        history.append(rec)
        log.info("epoch %d: train_loss=%.6f valid_ll=%.6f valid_ppl=%.6f clips=%d",
                 epoch, rec.train_loss, rec.valid_ll, rec.valid_ppl, clips)
        if progress is not None:
            progress(rec)
        if best is None or rec.valid_ll > best.best_valid_ll:
            best = Checkpoint(model_config, vocab, {k: p.data.copy() for k, p in model.params.items()},
                              state.copy(), epoch, rec.valid_ll)
            stale = 0
        else:
            stale += 1
            if stale >= train_config.patience:
                break

    return TrainResult(best, history, best.to_model())
