"""Censored score reporting and lowest-loss worker selection."""

import math

import numpy as np
import pytest

from dslsim.core import NumericError
from dslsim.optimizer import WorkerState
from dslsim.selection import CensorPolicy, ScoreReport, censor_report, next_best, select_workers


def worker(wid=0, last=None):
    w = np.zeros(2)
    return WorkerState(id=wid, w=w, v=w.copy(), w_best=w.copy(), last_reported_f=last)


def reports(scores):
    return [ScoreReport(i, f, True) for i, f in enumerate(scores)]


class TestCensorReport:
    def test_zero_threshold_always_fresh(self):
        wk = worker()
        for f in (1.0, 0.9999999, 0.5):
            report, wk = censor_report(wk, f, 0.0)
            assert report.fresh and report.reported_f == f

    def test_infinite_threshold_single_uplink(self):
        wk = worker()
        uplinks = 0
        for f in (1.0, 0.5, 0.1, 0.0):
            report, wk = censor_report(wk, f, math.inf)
            uplinks += report.fresh
        assert uplinks == 1
        assert wk.last_reported_f == 1.0

    def test_documented_sequence(self):
        # f = 1.0, 0.95, 0.5 with threshold 0.1: uplinks at rounds 0 and 2
        wk = worker()
        fresh = []
        for f in (1.0, 0.95, 0.5):
            report, wk = censor_report(wk, f, 0.1)
            fresh.append(report.fresh)
        assert fresh == [True, False, True]

    def test_stale_report_carries_last_value(self):
        wk = worker(last=0.8)
        report, out = censor_report(wk, 0.79, 0.1)
        assert not report.fresh
        assert report.reported_f == 0.8
        assert out is wk

    def test_nonfinite_score_rejected(self):
        with pytest.raises(NumericError):
            censor_report(worker(), math.nan, 0.1)

    def test_policy_threshold_schedule(self):
        policy = CensorPolicy(enabled=True, threshold_init=2.0, decay=0.5)
        assert policy.threshold_at(0) == 2.0
        assert policy.threshold_at(3) == 0.25
        assert CensorPolicy(enabled=False, threshold_init=2.0).threshold_at(3) == 0.0


class TestSelectWorkers:
    def test_full_participation(self):
        out = select_workers(reports([0.5, 0.1, 0.9, 0.3]), 4)
        assert set(out) == {0, 1, 2, 3}

    def test_single_best(self):
        assert select_workers(reports([0.5, 0.1, 0.9]), 1) == [1]

    def test_tie_breaks_by_lower_id(self):
        assert select_workers(reports([0.3, 0.1, 0.1]), 2) == [1, 2]

    def test_output_sorted_by_score_then_id(self):
        out = select_workers(reports([0.4, 0.2, 0.2, 0.1]), 3)
        assert out == [3, 1, 2]

    def test_more_requested_than_available(self):
        assert select_workers(reports([0.4, 0.2]), 10) == [1, 0]

    def test_empty_reports_rejected(self):
        with pytest.raises(ValueError):
            select_workers([], 1)

    def test_selected_scores_dominate_unselected(self):
        scores = list(np.random.default_rng(0).random(20))
        out = select_workers(reports(scores), 6)
        worst_selected = max(scores[i] for i in out)
        best_unselected = min(scores[i] for i in range(20) if i not in out)
        assert worst_selected <= best_unselected


class TestNextBest:
    def test_rank_shift(self):
        rep = reports([0.1, 0.2, 0.3, 0.4])
        assert next_best(rep, excluded={0, 1}, k=1) == [2]

    def test_excluding_everyone_gives_empty(self):
        rep = reports([0.1, 0.2])
        assert next_best(rep, excluded={0, 1}, k=2) == []

    def test_shifted_window_matches_ranks(self):
        rep = reports([0.5, 0.1, 0.4, 0.2, 0.3])
        first = select_workers(rep, 2)  # [1, 3]
        second = next_best(rep, excluded=set(first), k=2)
        assert second == [4, 2]

    def test_fewer_remaining_than_k(self):
        rep = reports([0.1, 0.2, 0.3])
        assert next_best(rep, excluded={0}, k=5) == [1, 2]


def test_censoring_disabled_equals_fresh_selection():
    # with threshold 0 every report is fresh, so stale-aware selection and
    # fresh selection coincide
    scores = [0.9, 0.4, 0.6, 0.2]
    workers = [worker(i) for i in range(4)]
    rep = []
    for wk, f in zip(workers, scores):
        r, _ = censor_report(wk, f, 0.0)
        rep.append(r)
    assert select_workers(rep, 2) == select_workers(reports(scores), 2)
