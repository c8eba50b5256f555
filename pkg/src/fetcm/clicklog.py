"""Click-log data model, readers/writers, vocabulary, splitting, batching and a
position-based-model (PBM) session generator with known ground truth.

Canonical format: one compact JSON object per line,
``{"session_id":1,"queries":[{"query_id":7,"docs":[{"url_id":3,"pos":1,"click":1}]}]}``.
"""

from __future__ import annotations

import io
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator

import numpy as np

log = logging.getLogger(__name__)

PAD = 0
UNKNOWN = 1
# click-context symbols
NO_PREVIOUS, NOT_CLICKED, CLICKED = 0, 1, 2


class ParseError(ValueError):
    def __init__(self, line: int, reason: str):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class ValidationError(ValueError):
    pass


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class DocumentImpression:
    url_id: int
    position: int
    click: int


@dataclass(frozen=True)
class QueryRecord:
    query_id: int
    docs: tuple[DocumentImpression, ...]


@dataclass(frozen=True)
class Session:
    session_id: int
    queries: tuple[QueryRecord, ...]

    def documents(self) -> Iterator[tuple[QueryRecord, DocumentImpression]]:
        for q in self.queries:
            for d in q.docs:
                yield q, d

    @property
    def n_docs(self) -> int:
        return sum(len(q.docs) for q in self.queries)


def validate_session(s: Session, p_max: int | None = None) -> None:
    if not s.queries:
        raise ValidationError(f"session {s.session_id}: no queries")
    for q in s.queries:
        if not q.docs:
            raise ValidationError(f"session {s.session_id}, query {q.query_id}: no docs")
        if p_max is not None and len(q.docs) > p_max:
            raise ValidationError(f"session {s.session_id}, query {q.query_id}: {len(q.docs)} docs > P_max={p_max}")
        positions = [d.position for d in q.docs]
        if any(p < 1 for p in positions):
            raise ValidationError(f"session {s.session_id}, query {q.query_id}: pos must be >= 1")
        if len(set(positions)) != len(positions):
            raise ValidationError(f"session {s.session_id}, query {q.query_id}: duplicate pos")
        if sorted(positions) != list(range(1, len(positions) + 1)):
            raise ValidationError(f"session {s.session_id}, query {q.query_id}: pos must form 1..{len(positions)}")
        for d in q.docs:
            if d.click not in (0, 1):
                raise ValidationError(f"session {s.session_id}: click must be 0 or 1, got {d.click}")
            if d.url_id < 0:
                raise ValidationError(f"session {s.session_id}: negative url_id")
        if q.query_id < 0:
            raise ValidationError(f"session {s.session_id}: negative query_id")


# -- canonical format -------------------------------------------------------

def _require_int(obj: dict, key: str, lineno: int) -> int:
    if key not in obj:
        raise ParseError(lineno, f"missing key {key!r}")
    v = obj[key]
    if not isinstance(v, int) or isinstance(v, bool):
        raise ParseError(lineno, f"{key!r} must be an integer")
    return v


def _session_from_obj(obj, lineno: int) -> Session:
    if not isinstance(obj, dict) or not isinstance(obj.get("queries"), list):
        raise ParseError(lineno, "expected an object with a 'queries' list")
    queries = []
    for qo in obj["queries"]:
        if not isinstance(qo, dict) or not isinstance(qo.get("docs"), list):
            raise ParseError(lineno, "query must be an object with a 'docs' list")
        docs = []
        for do in qo["docs"]:
            if not isinstance(do, dict):
                raise ParseError(lineno, "doc must be an object")
            pos = _require_int(do, "pos", lineno)
            if pos < 1:
                raise ValidationError(f"line {lineno}: pos must be >= 1, got {pos}")
            docs.append(DocumentImpression(_require_int(do, "url_id", lineno), pos, _require_int(do, "click", lineno)))
        docs.sort(key=lambda d: d.position)
        queries.append(QueryRecord(_require_int(qo, "query_id", lineno), tuple(docs)))
    s = Session(_require_int(obj, "session_id", lineno), tuple(queries))
    try:
        validate_session(s)
    except ValidationError as e:
        raise ValidationError(f"line {lineno}: {e}") from None
    return s


def parse_canonical(stream: IO[bytes] | bytes | str) -> list[Session]:
    """Read canonical sessions; raises :class:`ParseError`/:class:`ValidationError`."""
    sessions = []
    for lineno, raw in enumerate(_lines(stream), start=1):
        if not raw.strip():
            continue
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ParseError(lineno, f"invalid JSON ({e.msg})") from None
        sessions.append(_session_from_obj(obj, lineno))
    return sessions


def _lines(stream) -> Iterator[str]:
    if isinstance(stream, (bytes, bytearray)):
        stream = io.BytesIO(stream)
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    for line in stream:
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        yield line.rstrip("\n")


def session_to_line(s: Session) -> str:
    obj = {
        "session_id": s.session_id,
        "queries": [
            {"query_id": q.query_id,
             "docs": [{"url_id": d.url_id, "pos": d.position, "click": d.click} for d in q.docs]}
            for q in s.queries
        ],
    }
    return json.dumps(obj, separators=(",", ":"))


def write_canonical(sessions: Iterable[Session], stream: IO[bytes] | None = None) -> bytes:
    """Serialize to canonical bytes; also writes them to ``stream`` when given."""
    data = "".join(session_to_line(s) + "\n" for s in sessions).encode("utf-8")
    if stream is not None:
        stream.write(data)
    return data


def read_sessions(path) -> list[Session]:
    with open(path, "rb") as f:
        return parse_canonical(f)


def write_sessions(sessions: Iterable[Session], path) -> None:
    with open(path, "wb") as f:
        write_canonical(sessions, f)


# -- Yandex personalized-search log ------------------------------------------

@dataclass
class YandexResult:
    sessions: list[Session]
    warnings: int = 0
    messages: list[str] = field(default_factory=list)


def parse_yandex(stream: IO[bytes] | bytes | str) -> YandexResult:
    """Parse the tab-separated challenge log.

    Records::

        SessionID  M  Day  UserID
        SessionID  TimePassed  Q|T  SERPID  QueryID  Terms  URL,Domain  ... (10 pairs)
        SessionID  TimePassed  C  SERPID  URLID

    Terms and domains are dropped. A click on a URL absent from its SERP, or a
    click arriving before any query of its session, is skipped and counted.
    """
    result = YandexResult([])
    # session id -> list of [serp_id, query_id, urls, clicks]
    order: list[int] = []
    serps: dict[int, list] = {}

    def warn(msg):
        result.warnings += 1
        result.messages.append(msg)
        log.warning(msg)

    for lineno, line in enumerate(_lines(stream), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        try:
            sid = int(parts[0])
            kind = parts[1] if len(parts) > 1 and parts[1] == "M" else parts[2]
            if kind == "M":
                if sid not in serps:
                    serps[sid] = []
                    order.append(sid)
                continue
            if kind in ("Q", "T"):
                serp_id, query_id = int(parts[3]), int(parts[4])
                pairs = parts[6:]
                if not pairs:
                    raise ValueError("query record lists no URLs")
                urls = [int(p.split(",")[0]) for p in pairs]
                if sid not in serps:
                    serps[sid] = []
                    order.append(sid)
                serps[sid].append([serp_id, query_id, urls, [0] * len(urls)])
            elif kind == "C":
                serp_id, url = int(parts[3]), int(parts[4])
                entries = serps.get(sid)
                if not entries:
                    warn(f"line {lineno}: click before any query in session {sid}")
                    continue
                target = next((e for e in reversed(entries) if e[0] == serp_id), None)
                if target is None or url not in target[2]:
                    warn(f"line {lineno}: clicked url {url} not on SERP {serp_id}")
                    continue
                target[3][target[2].index(url)] = 1
            else:
                raise ValueError(f"unknown record type {kind!r}")
        except (IndexError, ValueError) as e:
            raise ParseError(lineno, str(e)) from None

    for sid in order:
        queries = tuple(
            QueryRecord(qid, tuple(DocumentImpression(u, i + 1, c) for i, (u, c) in enumerate(zip(urls, clicks))))
            for _, qid, urls, clicks in serps[sid]
        )
        if queries:
            result.sessions.append(Session(sid, queries))
    return result


# -- vocabulary ---------------------------------------------------------------

@dataclass
class Vocabulary:
    """Dense ids for queries and urls; 0 is padding and 1 is unknown."""

    queries: dict[int, int]
    urls: dict[int, int]

    @property
    def query_count(self) -> int:
        return len(self.queries) + 2

    @property
    def url_count(self) -> int:
        return len(self.urls) + 2

    def query_index(self, raw: int) -> int:
        return self.queries.get(raw, UNKNOWN)

    def url_index(self, raw: int) -> int:
        return self.urls.get(raw, UNKNOWN)

    def to_json(self) -> dict:
        return {"queries": list(self.queries), "urls": list(self.urls)}

    @classmethod
    def from_json(cls, obj: dict) -> Vocabulary:
        return cls({r: i + 2 for i, r in enumerate(obj["queries"])},
                   {r: i + 2 for i, r in enumerate(obj["urls"])})


def build_vocab(sessions: Iterable[Session], min_freq: int = 1) -> Vocabulary:
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    qc: Counter = Counter()
    uc: Counter = Counter()
    for s in sessions:
        for q in s.queries:
            qc[q.query_id] += 1
            for d in q.docs:
                uc[d.url_id] += 1

    def dense(counter):
        kept = [r for r, n in counter.items() if n >= min_freq]
        return {r: i + 2 for i, r in enumerate(kept)}

    return Vocabulary(dense(qc), dense(uc))


# -- splitting ----------------------------------------------------------------

def split(sessions: list[Session], ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Session-level seeded shuffle, then floor-sized valid/test parts; the rest is train."""
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    n = len(sessions)
    if n < 3:
        raise ValueError(f"need at least 3 sessions to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_valid = int(np.floor(n * ratios[1] + 1e-9))
    n_test = int(np.floor(n * ratios[2] + 1e-9))
    n_train = n - n_valid - n_test
    train = [sessions[i] for i in perm[:n_train]]
    valid = [sessions[i] for i in perm[n_train:n_train + n_valid]]
    test = [sessions[i] for i in perm[n_train + n_valid:]]
    return train, valid, test


# -- synthetic PBM sessions ---------------------------------------------------

@dataclass
class GroundTruth:
    """PBM parameters: attractiveness per (query, url) and examination per rank."""

    alpha: dict[tuple[int, int], float]
    gamma: np.ndarray

    def candidates(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for q, u in self.alpha:
            out.setdefault(q, []).append(u)
        return out

    def click_prob(self, query_id: int, url_id: int, position: int) -> float:
        return self.alpha[(query_id, url_id)] * float(self.gamma[position - 1])


def random_truth(n_queries: int, n_urls: int, docs_per_query: int, gamma,
                 alpha_low: float = 0.1, alpha_high: float = 0.9, seed: int = 0) -> GroundTruth:
    """Give every query ``docs_per_query`` distinct urls with alpha ~ U(low, high)."""
    if docs_per_query > n_urls:
        raise GenerationError("docs_per_query exceeds the number of url ids")
    if not (0.0 <= alpha_low <= alpha_high <= 1.0):
        raise GenerationError("alpha range must lie inside [0, 1]")
    rng = np.random.default_rng(seed)
    alpha = {}
    for q in range(n_queries):
        urls = rng.choice(n_urls, size=docs_per_query, replace=False)
        for u in urls:
            alpha[(q, int(u))] = float(rng.uniform(alpha_low, alpha_high))
    return GroundTruth(alpha, np.asarray(gamma, dtype=np.float64))


def synthesize_pbm(truth: GroundTruth, n_sessions: int, queries_per_session: int,
                   docs_per_query: int, seed: int = 0) -> tuple[list[Session], GroundTruth]:
    """Sample sessions whose clicks follow ``Bernoulli(alpha(q, u) * gamma(rank))``.

    Each query is drawn uniformly from the truth's queries; its candidate urls
    are shuffled into a fresh ranking per impression, so every (query, url)
    pair is observed at many ranks.
    """
    gamma = np.asarray(truth.gamma, dtype=np.float64)
    if len(gamma) < docs_per_query:
        raise GenerationError(f"gamma has {len(gamma)} ranks, need {docs_per_query}")
    if np.any(gamma < 0) or np.any(gamma > 1):
        raise GenerationError("gamma values must lie in [0, 1]")
    cands = truth.candidates()
    qids = sorted(cands)
    if n_sessions and not qids:
        raise GenerationError("ground truth has no (query, url) entries")
    for q in qids:
        if len(cands[q]) < docs_per_query:
            raise GenerationError(f"query {q} has {len(cands[q])} urls, need {docs_per_query}")
    rng = np.random.default_rng(seed)
    sessions = []
    for sid in range(n_sessions):
        queries = []
        for _ in range(queries_per_session):
            q = qids[rng.integers(len(qids))]
            urls = rng.permutation(cands[q])[:docs_per_query]
            u01 = rng.random(docs_per_query)
            docs = []
            for rank, u in enumerate(urls, start=1):
                key = (q, int(u))
                if key not in truth.alpha:
                    raise GenerationError(f"missing alpha for query {q}, url {u}")
                p = truth.alpha[key] * gamma[rank - 1]
                docs.append(DocumentImpression(int(u), rank, int(u01[rank - 1] < p)))
            queries.append(QueryRecord(q, tuple(docs)))
        sessions.append(Session(sid, tuple(queries)))
    return sessions, truth


def write_truth(truth: GroundTruth, stream: IO[str]) -> None:
    stream.write("q,u,alpha\n")
    for (q, u), a in sorted(truth.alpha.items()):
        stream.write(f"{q},{u},{a!r}\n")
    stream.write("rank,gamma\n")
    for r, g in enumerate(truth.gamma, start=1):
        stream.write(f"{r},{float(g)!r}\n")


def read_truth(stream: IO[str]) -> GroundTruth:
    alpha: dict[tuple[int, int], float] = {}
    gamma: list[float] = []
    section = None
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        if line in ("q,u,alpha", "rank,gamma"):
            section = line
            continue
        parts = line.split(",")
        try:
            if section == "q,u,alpha":
                alpha[(int(parts[0]), int(parts[1]))] = float(parts[2])
            elif section == "rank,gamma":
                if int(parts[0]) != len(gamma) + 1:
                    raise ValueError("ranks must be listed in order from 1")
                gamma.append(float(parts[1]))
            else:
                raise ValueError("row before any section header")
        except (IndexError, ValueError) as e:
            raise ParseError(lineno, str(e)) from None
    return GroundTruth(alpha, np.asarray(gamma))


# -- batching -------------------------------------------------------------------

@dataclass
class Batch:
    """Padded arrays of shape ``[B, Q, P]`` (sessions x queries x positions).

    ``prev_click_session`` is the click context of the examination branch (the
    previous document anywhere in the session); ``prev_click_query`` is the
    attractiveness context (previous document in the same ranked list).
    """

    query: np.ndarray
    url: np.ndarray
    position: np.ndarray
    click: np.ndarray
    prev_click_session: np.ndarray
    prev_click_query: np.ndarray
    mask: np.ndarray
    sessions: list[Session]

    @property
    def n_docs(self) -> int:
        return int(self.mask.sum())


def make_batch(sessions: list[Session], p_max: int = 10, vocab: Vocabulary | None = None) -> Batch:
    b = len(sessions)
    q_max = max(len(s.queries) for s in sessions)
    shape = (b, q_max, p_max)
    query = np.zeros(shape, np.int64)
    url = np.zeros(shape, np.int64)
    position = np.zeros(shape, np.int64)
    click = np.zeros(shape, np.int64)
    prev_s = np.zeros(shape, np.int64)
    prev_q = np.zeros(shape, np.int64)
    mask = np.zeros(shape, bool)
    for i, s in enumerate(sessions):
        last = NO_PREVIOUS
        for j, q in enumerate(s.queries):
            if len(q.docs) > p_max:
                raise ValidationError(f"session {s.session_id}: {len(q.docs)} docs exceed P_max={p_max}")
            prev_in_query = NO_PREVIOUS
            qi = vocab.query_index(q.query_id) if vocab else q.query_id
            for k, d in enumerate(q.docs):
                query[i, j, k] = qi
                url[i, j, k] = vocab.url_index(d.url_id) if vocab else d.url_id
                position[i, j, k] = d.position
                click[i, j, k] = d.click
                prev_s[i, j, k] = last
                prev_q[i, j, k] = prev_in_query
                mask[i, j, k] = True
                last = prev_in_query = CLICKED if d.click else NOT_CLICKED
    return Batch(query, url, position, click, prev_s, prev_q, mask, list(sessions))


def batch_iter(sessions: list[Session], batch_size: int, p_max: int = 10, seed: int = 0,
               shuffle: bool = False, vocab: Vocabulary | None = None) -> Iterator[Batch]:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.random.default_rng(seed).permutation(len(sessions)) if shuffle else np.arange(len(sessions))
    for start in range(0, len(sessions), batch_size):
        yield make_batch([sessions[i] for i in order[start:start + batch_size]], p_max, vocab)
