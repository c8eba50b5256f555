import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fetcm import clicklog as CL
from fetcm.clicklog import DocumentImpression as D, QueryRecord as Q, Session as S


def yandex_serp(sid, t, serp, qid, urls, kind="Q"):
    pairs = "\t".join(f"{u},{u + 1000}" for u in urls)
    return f"{sid}\t{t}\t{kind}\t{serp}\t{qid}\t11,12\t{pairs}"


# -- canonical format --------------------------------------------------------

def test_parse_single_line():
    line = b'{"session_id":1,"queries":[{"query_id":7,"docs":[{"url_id":3,"pos":1,"click":1}]}]}\n'
    [s] = CL.parse_canonical(line)
    assert s == S(1, (Q(7, (D(3, 1, 1),)),))
    assert CL.write_canonical([s]) == line


def test_empty_stream():
    assert CL.parse_canonical(b"") == []
    assert CL.write_canonical([]) == b""


def test_pos_zero_is_rejected():
    line = '{"session_id":1,"queries":[{"query_id":7,"docs":[{"url_id":3,"pos":0,"click":1}]}]}'
    with pytest.raises(CL.ValidationError, match="pos"):
        CL.parse_canonical(line)


def test_duplicate_positions():
    line = ('{"session_id":1,"queries":[{"query_id":7,"docs":[{"url_id":3,"pos":1,"click":1},'
            '{"url_id":4,"pos":1,"click":0}]}]}')
    with pytest.raises(CL.ValidationError, match="duplicate"):
        CL.parse_canonical(line)


@pytest.mark.parametrize("bad", ["{not json", '{"session_id":1}', '{"session_id":"a","queries":[]}'])
def test_malformed_lines_report_line_number(bad):
    good = '{"session_id":1,"queries":[{"query_id":7,"docs":[{"url_id":3,"pos":1,"click":1}]}]}'
    with pytest.raises(CL.ParseError) as err:
        CL.parse_canonical(good + "\n" + bad + "\n")
    assert err.value.line == 2


sessions_strategy = st.lists(
    st.builds(
        lambda sid, qs: S(sid, tuple(Q(q, tuple(D(u, i + 1, c) for i, (u, c) in enumerate(docs))) for q, docs in qs)),
        st.integers(0, 10**9),
        st.lists(st.tuples(st.integers(0, 10**6),
                           st.lists(st.tuples(st.integers(0, 10**6), st.integers(0, 1)), min_size=1, max_size=10)),
                 min_size=1, max_size=4)),
    max_size=6)


@settings(max_examples=80, deadline=None)
@given(sessions_strategy)
def test_canonical_round_trip_property(sessions):
    data = CL.write_canonical(sessions)
    parsed = CL.parse_canonical(data)
    assert parsed == sessions
    assert CL.write_canonical(parsed) == data


def test_key_layout():
    line = CL.session_to_line(S(4, (Q(2, (D(9, 1, 0),)),)))
    assert line == '{"session_id":4,"queries":[{"query_id":2,"docs":[{"url_id":9,"pos":1,"click":0}]}]}'


# -- yandex adapter --------------------------------------------------------------

def test_yandex_single_click():
    log = "\n".join(["5\tM\t3\t77", yandex_serp(5, 0, 0, 42, range(100, 110)), "5\t12\tC\t0\t102"])
    res = CL.parse_yandex(log)
    assert res.warnings == 0
    [s] = res.sessions
    assert s.session_id == 5 and len(s.queries) == 1
    assert [d.click for d in s.queries[0].docs] == [0, 0, 1, 0, 0, 0, 0, 0, 0, 0]
    assert [d.position for d in s.queries[0].docs] == list(range(1, 11))


def test_yandex_two_serps_in_time_order():
    log = "\n".join(["5\tM\t3\t77", yandex_serp(5, 0, 0, 42, range(10)), yandex_serp(5, 30, 1, 43, range(10, 20), "T"),
                     "5\t40\tC\t1\t15"])
    [s] = CL.parse_yandex(log).sessions
    assert [q.query_id for q in s.queries] == [42, 43]
    assert s.queries[1].docs[5].click == 1 and sum(d.click for d in s.queries[0].docs) == 0


def test_yandex_warnings():
    log = "\n".join(["5\tM\t3\t77", "5\t1\tC\t0\t3", yandex_serp(5, 2, 0, 42, range(10)), "5\t9\tC\t0\t999"])
    res = CL.parse_yandex(log)
    assert res.warnings == 2
    assert sum(d.click for _, d in res.sessions[0].documents()) == 0


def test_yandex_unparseable_record():
    with pytest.raises(CL.ParseError) as err:
        CL.parse_yandex("5\tM\t3\t77\nfoo\tbar\n")
    assert err.value.line == 2


# -- vocabulary and split --------------------------------------------------------

def test_vocab_rules():
    s = S(0, (Q(7, (D(3, 1, 0), D(4, 2, 1))),))
    v = CL.build_vocab([s], 1)
    assert v.query_index(7) == 2 and v.query_count == 3 and v.url_count == 4
    assert sorted(v.urls.values()) == [2, 3]
    v2 = CL.build_vocab([s], 2)
    assert v2.query_index(7) == CL.UNKNOWN and v2.query_count == 2
    assert v.query_index(12345) == CL.UNKNOWN
    assert CL.Vocabulary.from_json(v.to_json()) == v


def _many(n):
    return [S(i, (Q(i, (D(i, 1, i % 2),)),)) for i in range(n)]


@pytest.mark.parametrize("n,sizes", [(10, (8, 1, 1)), (23, (19, 2, 2))])
def test_split_sizes_and_partition(n, sizes):
    data = _many(n)
    parts = CL.split(data, (0.8, 0.1, 0.1), seed=3)
    assert tuple(map(len, parts)) == sizes
    ids = [s.session_id for p in parts for s in p]
    assert sorted(ids) == list(range(n))
    assert CL.split(data, seed=3) == parts


def test_split_too_small():
    with pytest.raises(ValueError):
        CL.split(_many(2))


# -- PBM generator --------------------------------------------------------------

def _fixed_truth(alpha, gamma, n_urls=2):
    return CL.GroundTruth({(0, u): alpha for u in range(n_urls)}, np.array(gamma))


def test_degenerate_probabilities():
    ss, _ = CL.synthesize_pbm(_fixed_truth(1.0, [1.0, 1.0]), 50, 2, 2, seed=0)
    assert all(d.click == 1 for s in ss for _, d in s.documents())
    ss, _ = CL.synthesize_pbm(_fixed_truth(0.0, [1.0, 1.0]), 50, 2, 2, seed=0)
    assert all(d.click == 0 for s in ss for _, d in s.documents())


def test_pbm_ctr_monte_carlo():
    ss, _ = CL.synthesize_pbm(_fixed_truth(0.8, [1.0, 0.5]), 100_000, 1, 2, seed=11)
    clicks = np.array([[d.click for d in s.queries[0].docs] for s in ss])
    assert abs(clicks[:, 0].mean() - 0.8) < 0.01
    assert abs(clicks[:, 1].mean() - 0.4) < 0.01


def test_generator_is_reproducible():
    truth = CL.random_truth(5, 20, 4, [1.0, 0.8, 0.6, 0.4], seed=1)
    a, _ = CL.synthesize_pbm(truth, 30, 2, 4, seed=9)
    b, _ = CL.synthesize_pbm(truth, 30, 2, 4, seed=9)
    assert CL.write_canonical(a) == CL.write_canonical(b)
    assert all((q.query_id, d.url_id) in truth.alpha for s in a for q, d in s.documents())


def test_generation_errors():
    with pytest.raises(CL.GenerationError):
        CL.synthesize_pbm(_fixed_truth(0.5, [1.0]), 3, 1, 2)
    with pytest.raises(CL.GenerationError):
        CL.synthesize_pbm(CL.GroundTruth({(0, 0): 0.5}, np.array([1.0, 1.0])), 3, 1, 2)


def test_truth_round_trip():
    truth = CL.random_truth(3, 10, 2, [1.0, 0.45], seed=4)
    buf = io.StringIO()
    CL.write_truth(truth, buf)
    back = CL.read_truth(io.StringIO(buf.getvalue()))
    assert back.alpha == truth.alpha and np.array_equal(back.gamma, truth.gamma)


# -- batching -------------------------------------------------------------------

def test_mask_and_context_shift():
    s = S(0, (Q(1, tuple(D(10 + i, i + 1, int(i == 2)) for i in range(7))), Q(2, (D(30, 1, 1), D(31, 2, 0)))))
    b = CL.make_batch([s], 10)
    assert b.mask[0, 0].tolist() == [True] * 7 + [False] * 3
    assert b.prev_click_query[0, 0, :4].tolist() == [CL.NO_PREVIOUS, CL.NOT_CLICKED, CL.NOT_CLICKED, CL.CLICKED]
    # session context carries over the query boundary, query context restarts
    assert b.prev_click_session[0, 1, 0] == CL.NOT_CLICKED
    assert b.prev_click_query[0, 1, 0] == CL.NO_PREVIOUS
    assert b.prev_click_query[0, 1, 1] == CL.CLICKED


def test_batch_iter_order_and_conservation():
    truth = CL.random_truth(4, 30, 6, np.linspace(1, 0.5, 6), seed=2)
    ss, _ = CL.synthesize_pbm(truth, 37, 3, 6, seed=5)
    batches = list(CL.batch_iter(ss, 8, 10, shuffle=False))
    assert [s.session_id for b in batches for s in b.sessions] == [s.session_id for s in ss]
    assert sum(b.n_docs for b in batches) == sum(s.n_docs for s in ss)
    shuffled = list(CL.batch_iter(ss, 8, 10, seed=1, shuffle=True))
    assert sorted(s.session_id for b in shuffled for s in b.sessions) == list(range(37))
    assert sum(b.n_docs for b in shuffled) == sum(s.n_docs for s in ss)
