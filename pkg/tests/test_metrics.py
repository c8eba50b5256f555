import math

import numpy as np
import pytest

from fetcm import clicklog as CL
from fetcm import metrics as MX
from fetcm.clicklog import DocumentImpression as D, QueryRecord as Q, Session as S

EPS = 1e-6


def preds(prob, click, rank):
    return MX.Predictions(np.asarray(prob, float), np.asarray(click), np.asarray(rank))


def random_labels(rng, n=500, p_max=10):
    return rng.integers(0, 2, size=n), rng.integers(1, p_max + 1, size=n)


def test_coin_flip(rng):
    c, r = random_labels(rng)
    p = preds(np.full(len(c), 0.5), c, r)
    assert all(v == 2.0 for v in MX.ppl_by_rank(p, 10).values())
    assert abs(MX.overall_ppl(p, 10) - 2.0) < 1e-12
    assert abs(MX.log_likelihood(p) + math.log(2)) < 1e-12


def test_perfect_predictor(rng):
    c, r = random_labels(rng)
    p = preds(c.astype(float), c, r)
    assert abs(MX.overall_ppl(p, 10) - 1.0) < 10 * EPS
    assert abs(MX.log_likelihood(p)) < 10 * EPS


def test_hand_cases():
    p = preds([0.9, 0.2], [1, 0], [1, 1])
    expected = 2 ** (-(math.log2(0.9) + math.log2(0.8)) / 2)
    assert MX.perplexity_at_rank(p, 1) == pytest.approx(expected, abs=1e-14)
    assert abs(expected - 1.1785) < 1e-4
    ll = MX.log_likelihood(preds([0.9, 0.2, 0.6], [1, 0, 1], [1, 2, 3]))
    assert abs(ll + 0.2797) < 1e-4


def test_overall_is_mean_of_present_ranks():
    # rank 1 perfect (PPL 1), rank 3 chosen so PPL@3 = 3
    q = 2 ** (-math.log2(3))
    p = preds([1.0, q], [1, 1], [1, 3])
    assert MX.perplexity_at_rank(p, 3) == pytest.approx(3.0)
    assert MX.overall_ppl(p, 10) == pytest.approx((MX.perplexity_at_rank(p, 1) + 3.0) / 2)
    assert set(MX.ppl_by_rank(p, 10)) == {1, 3}


def test_absent_rank():
    with pytest.raises(MX.MetricError, match="rank 4"):
        MX.perplexity_at_rank(preds([0.5], [1], [1]), 4)


def test_ll_and_log2_loss_agree(rng):
    c, r = random_labels(rng)
    p = rng.uniform(0, 1, size=len(c))
    pr = preds(p, c, r)
    log2_loss = -MX._log2_lik(p, c, EPS)
    assert abs(MX.log_likelihood(pr) - (-math.log(2) * log2_loss.mean())) < 1e-12


def test_noise_increases_perplexity(rng):
    c, r = random_labels(rng, 200)
    base = np.where(c == 1, 0.95, 0.05)
    ref = MX.overall_ppl(preds(base, c, r), 10)
    for _ in range(100):
        shift = rng.uniform(0.01, 0.04, size=len(c))
        noisy = np.where(c == 1, base - shift, base + shift)
        assert MX.overall_ppl(preds(noisy, c, r), 10) > ref


def test_baseline_smoothing():
    assert MX.RankCTRBaseline.smoothed(0, 0) == 0.5
    s = S(0, (Q(1, (D(5, 1, 1),)),))
    b = MX.RankCTRBaseline([s])
    assert b.prob(1) == pytest.approx(2 / 3)
    assert b.prob(7) == b.global_ctr == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        MX.RankCTRBaseline([])


def test_oracle_special_truths():
    truth = CL.GroundTruth({(0, u): 0.5 for u in range(3)}, np.ones(3))
    ss, _ = CL.synthesize_pbm(truth, 200, 1, 3, seed=1)
    assert MX.pbm_oracle_ppl(ss, truth, 3) == pytest.approx(2.0, abs=1e-12)
    det = CL.GroundTruth({(0, 0): 1.0, (0, 1): 0.0}, np.ones(2))
    ss, _ = CL.synthesize_pbm(det, 50, 1, 2, seed=1)
    assert abs(MX.pbm_oracle_ppl(ss, det, 2) - 1.0) < 10 * EPS
    with pytest.raises(MX.MetricError):
        MX.pbm_oracle_predictions([S(0, (Q(9, (D(0, 1, 0),)),))], det)


def test_oracle_beats_baseline_on_pbm_data():
    truth = CL.random_truth(30, 200, 10, np.linspace(1.0, 0.1, 10), seed=0)
    ss, _ = CL.synthesize_pbm(truth, 3000, 1, 10, seed=1)
    tr, _, te = CL.split(ss, seed=2)
    oracle = MX.pbm_oracle_ppl(te, truth)
    baseline = MX.overall_ppl(MX.RankCTRBaseline(tr).predict(te), 10)
    assert oracle <= baseline


def test_report_csv_layout():
    p = preds([0.5, 0.5, 0.25], [1, 0, 0], [1, 2, 2])
    s = [S(0, (Q(1, (D(1, 1, 1), D(2, 2, 0))), Q(2, (D(3, 1, 0),))))]
    rep = MX.report(p, s, 10, baseline=MX.RankCTRBaseline(s))
    lines = rep.to_csv().splitlines()
    assert lines[0] == "rank,ppl" and [ln.split(",")[0] for ln in lines[1:]] == ["1", "2", "overall_ppl", "ll", "baseline_ppl"]
    assert rep.summary().startswith("ppl=") and "baseline_ppl=" in rep.summary() and "oracle_ppl" not in rep.summary()
    assert rep.n_queries == 2 and rep.n_docs == 3
