import io
import itertools
import json
import math
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from sklearn.metrics import auc as sk_auc
from sklearn.metrics import precision_recall_curve

from templatent.evaluation import (EvalReport, TestPairSet, adamic_adar, auc_pr, auc_roc, evaluate,
                                   pr_curve, prediction_error, previous_graph_baseline,
                                   sample_test_pairs, score_pair, score_pairs)
from templatent.generators import make_rng, planted_partition_generate
from templatent.graph import DynamicGraph, GraphSnapshot
from templatent.latent import dense_prediction_error_oracle, random_space

from conftest import random_instance, random_snapshot

SCHEMA = json.loads((Path(__file__).parents[1] / "docs" / "eval_report.schema.json").read_text())


def brute_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    total = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p in pos for q in neg)
    return total / (len(pos) * len(neg))


def complete(n):
    iu, ju = np.triu_indices(n, 1)
    return GraphSnapshot.from_edges(n, iu, ju)


class TestScores:
    def test_examples(self):
        Z = np.array([[0.6, 0.8], [0.8, 0.6], [0.6, 0.8], [0.0, 1.0], [1.0, 0.0]])
        assert score_pair(Z, 0, 1) == pytest.approx(0.96, rel=1e-15)
        assert score_pair(Z, 0, 2) == pytest.approx(1.0, rel=1e-15)
        assert score_pair(Z, 3, 4) == 0.0
        with pytest.raises(ValueError):
            score_pair(Z, 2, 2)
        with pytest.raises(ValueError):
            score_pairs(Z, [[1, 1]])

    def test_symmetric_and_bounded(self, rng):
        Z = random_space(30, 5, rng)
        pairs = np.array([(a, b) for a in range(30) for b in range(30) if a != b])
        s = score_pairs(Z, pairs)
        np.testing.assert_array_equal(s, score_pairs(Z, pairs[:, ::-1]))
        assert s.min() >= 0 and s.max() <= 1 + 1e-12


class TestAUC:
    def test_examples(self):
        assert auc_roc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
        assert auc_roc([0.5, 0.5], [1, 0]) == 0.5
        with pytest.raises(ValueError):
            auc_roc([0.1, 0.2], [1, 1])
        with pytest.raises(ValueError):
            auc_pr([0.1, 0.2], [0, 0])

    def test_exhaustive_brute_force(self):
        rng = make_rng(3)
        for size in range(2, 13):
            scores = rng.integers(0, 4, size).astype(float)  # small alphabet forces ties
            for bits in itertools.product((0, 1), repeat=size):
                if 0 < sum(bits) < size:
                    assert auc_roc(scores, bits) == brute_auc(scores, bits)

    def test_monotone_invariance_and_negation(self, rng):
        for _ in range(50):
            s = rng.random(40)
            y = rng.integers(0, 2, 40)
            y[:2] = [0, 1]
            a = auc_roc(s, y)
            assert auc_roc(np.exp(3 * s) - 7, y) == a
            assert a + auc_roc(-s, y) == pytest.approx(1.0, abs=1e-15)

    def test_pr_matches_sklearn(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 200))
            s = np.round(rng.random(n), 1)
            y = rng.integers(0, 2, n)
            y[:2] = [0, 1]
            p, r, _ = precision_recall_curve(y, s)
            assert auc_pr(s, y) == pytest.approx(sk_auc(r, p), abs=1e-12)

    def test_pr_curve_shape(self):
        p, r = pr_curve([0.9, 0.8, 0.1], [1, 0, 1])
        np.testing.assert_allclose(r, [0, 0.5, 0.5, 1])
        np.testing.assert_allclose(p, [1, 1, 0.5, 2 / 3])
        assert auc_pr([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0


class TestPredictionError:
    def test_exact_factorization(self):
        s = GraphSnapshot.from_edges(2, [0], [1])
        Z = np.array([[1.0, 0.0], [1.0, 0.0]])
        assert prediction_error(DynamicGraph((s, s, s)), [Z, Z, Z]) == 0.0

    def test_orthogonal_rows(self):
        s = GraphSnapshot.from_edges(2, [0], [1])
        assert prediction_error(DynamicGraph((s, s)), [np.eye(2), np.eye(2)]) == pytest.approx(math.sqrt(2))

    def test_dense_oracle(self):
        for seed in range(20):
            G, spaces, _ = random_instance(seed, 9, 3, 4, weighted=True)
            assert prediction_error(G, spaces) == pytest.approx(dense_prediction_error_oracle(G, spaces), abs=1e-9)

    def test_needs_two_snapshots(self, rng):
        with pytest.raises(ValueError):
            prediction_error(DynamicGraph((GraphSnapshot.empty(3),)), [random_space(3, 2, rng)])


class TestBaselines:
    def test_adamic_adar_examples(self):
        path = GraphSnapshot.from_edges(3, [0, 1], [1, 2])
        assert adamic_adar(path, 0, 2) == pytest.approx(1 / math.log(2))
        assert adamic_adar(GraphSnapshot.from_edges(4, [0, 2], [1, 3]), 0, 2) == 0.0
        # a degree-1 common neighbour cannot exist between distinct u, v; a star centre of degree 2 can
        assert adamic_adar(GraphSnapshot.from_edges(3, [0], [1]), 0, 2) == 0.0

    def test_adamic_adar_brute_force(self, rng):
        for _ in range(10):
            s = random_snapshot(rng, 15, 0.25)
            nbrs = [set(s.neighbors(u)[0].tolist()) for u in range(15)]
            for a in range(15):
                for b in range(a + 1, 15):
                    want = sum(1 / math.log(len(nbrs[w])) for w in nbrs[a] & nbrs[b] if len(nbrs[w]) > 1)
                    assert adamic_adar(s, a, b) == pytest.approx(want, rel=1e-12)

    def test_previous_graph(self):
        s = GraphSnapshot.from_edges(3, [0], [1], [2.5])
        assert previous_graph_baseline(s, 0, 1) == 1.0
        assert previous_graph_baseline(s, 0, 2) == 0.0
        assert previous_graph_baseline(s, 1, 0, weighted=True) == 2.5


class TestSampling:
    def test_complete_graph_clamps_to_zero(self):
        with pytest.warns(UserWarning, match="clamping"):
            tps = sample_test_pairs(complete(6), 10, seed=0)
        assert len(tps) == 0

    def test_deterministic(self, rng):
        s = random_snapshot(rng, 10, 0.4)
        a = sample_test_pairs(s, 5, seed=3)
        b = sample_test_pairs(s, 5, seed=3)
        np.testing.assert_array_equal(a.pairs, b.pairs)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_structure(self, rng):
        s = random_snapshot(rng, 40, 0.2)
        tps = sample_test_pairs(s, 50, seed=1)
        assert len(tps) == 100 and tps.labels.sum() == 50
        assert np.all(tps.pairs[:, 0] < tps.pairs[:, 1])
        assert len({tuple(p) for p in tps.pairs.tolist()}) == 100
        for (a, b), y in zip(tps.pairs, tps.labels):
            assert (s.weight(a, b) > 0) == bool(y)

    def test_uniform_inclusion(self):
        # 2,000 draws of 5 linked + 5 non-linked = 10,000 samples per class
        s = GraphSnapshot.from_edges(8, [0, 0, 1, 2, 3, 4, 5, 6, 0, 2], [1, 2, 3, 4, 5, 6, 7, 7, 7, 6])
        draws, per = 2000, 5
        pos_counts, neg_counts = {}, {}
        for seed in range(draws):
            tps = sample_test_pairs(s, per, seed=seed)
            for (a, b), y in zip(tps.pairs.tolist(), tps.labels.tolist()):
                d = pos_counts if y else neg_counts
                d[(a, b)] = d.get((a, b), 0) + 1
        for counts, pool in ((pos_counts, s.m), (neg_counts, 28 - s.m)):
            p = per / pool
            mean, sd = draws * p, math.sqrt(draws * p * (1 - p))
            assert len(counts) == pool
            assert all(abs(c - mean) <= 3 * sd for c in counts.values())

    def test_new_links_mode(self):
        prev = GraphSnapshot.from_edges(10, [0, 1, 2], [1, 2, 3])
        nxt = GraphSnapshot.from_edges(10, [0, 2, 4, 5], [1, 3, 5, 6])
        with pytest.warns(UserWarning, match="clamping"):
            tps = sample_test_pairs(nxt, 5, mode="new", seed=0, G_prev=prev)
        assert tps.composition == {"linked_added": 2, "non_linked_deleted": 1, "non_linked_never": 1}
        pos = {tuple(p) for p, y in zip(tps.pairs.tolist(), tps.labels) if y}
        neg = [tuple(p) for p, y in zip(tps.pairs.tolist(), tps.labels) if not y]
        assert pos == {(4, 5), (5, 6)}
        assert (1, 2) in neg
        never = [p for p in neg if p != (1, 2)][0]
        assert prev.weight(*never) == 0 and nxt.weight(*never) == 0
        with pytest.raises(ValueError):
            sample_test_pairs(nxt, 5, mode="new")
        with pytest.raises(ValueError):
            sample_test_pairs(nxt, 5, mode="bogus")

    def test_exclude_historical(self):
        hist = GraphSnapshot.from_edges(5, [0, 0, 0, 1, 1, 2], [2, 3, 4, 3, 4, 4])
        nxt = GraphSnapshot.from_edges(5, [0], [1])
        with pytest.warns(UserWarning):
            tps = sample_test_pairs(nxt, 5, seed=0, history=[hist], exclude_historical=True)
        neg = [tuple(p) for p, y in zip(tps.pairs.tolist(), tps.labels) if not y]
        assert neg == [(2, 3)] or neg == [(3, 4)] or neg == [(1, 2)]
        assert all(hist.weight(*p) == 0 for p in neg)

    def test_rejection_path_for_large_graphs(self):
        n = 3000  # 4.5M pairs, above the enumeration limit
        rng = make_rng(0)
        u = rng.integers(0, n, 20000)
        v = (u + rng.integers(1, n, 20000)) % n
        s = GraphSnapshot.from_edges(n, u, v, binarize=True)
        tps = sample_test_pairs(s, 5000, seed=2)
        neg = tps.pairs[tps.labels == 0]
        assert len({tuple(p) for p in neg.tolist()}) == 5000
        assert all(s.weight(a, b) == 0 for a, b in neg)

    def test_round_trip_text(self, rng):
        tps = sample_test_pairs(random_snapshot(rng, 12, 0.3), 4, seed=0)
        buf = io.StringIO()
        tps.write(buf)
        back = TestPairSet.read(io.StringIO(buf.getvalue()))
        np.testing.assert_array_equal(back.pairs, tps.pairs)
        np.testing.assert_array_equal(back.labels, tps.labels)


class TestEvaluate:
    def test_separable_structure_scores_perfectly(self):
        G = planted_partition_generate(40, 4, 1.0, 0.0, seed=0)
        Z = np.eye(4)[np.arange(40) * 4 // 40]
        rep = evaluate(Z, G[0], 100, seed=0)
        assert rep.auc_roc == 1.0 and rep.auc_pr == 1.0

    def test_report_schema_and_baselines(self):
        G = planted_partition_generate(60, 2, 0.3, 0.03, 0.1, T=3, seed=1)
        traj_spaces = [random_space(60, 4, make_rng(i)) for i in range(2)]
        rep = evaluate(traj_spaces[-1], G[2], 200, seed=0, G_prev=G[1], history=list(G[:2]),
                       baselines=("aa", "gpre"), train=G[:2], traj=traj_spaces)
        d = json.loads(rep.to_json())
        jsonschema.validate(d, SCHEMA)
        assert set(d["baselines"]) == {"aa", "gpre"}
        assert d["prediction_error"] >= 0
        rep2 = evaluate(traj_spaces[-1], G[2], 200, seed=0, G_prev=G[1], history=list(G[:2]),
                        baselines=("aa", "gpre"), train=G[:2], traj=traj_spaces)
        assert rep2.auc_roc == rep.auc_roc and rep2.baselines == rep.baselines

    def test_empty_class_is_named(self):
        with pytest.warns(UserWarning), pytest.raises(ValueError, match="non-linked"):
            evaluate(random_space(5, 2, make_rng(0)), complete(5), 10)
        with pytest.warns(UserWarning), pytest.raises(ValueError, match="no linked"):
            evaluate(random_space(5, 2, make_rng(0)), GraphSnapshot.empty(5), 10)

    def test_dimension_mismatch(self):
        s = planted_partition_generate(20, 2, 0.5, 0.1, seed=0)[0]
        with pytest.raises(ValueError, match="rows"):
            evaluate(random_space(19, 2, make_rng(0)), s, 10)

    def test_report_ranges_rejected_by_schema(self):
        bad = EvalReport(auc_roc=1.2, auc_pr=0.5).to_dict()
        with pytest.raises(jsonschema.ValidationError):
            jsonschema.validate(bad, SCHEMA)
