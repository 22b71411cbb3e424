import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stylo_ensemble.ensemble import (
    GROUP_FEATURE_CLASSIFIER,
    GROUP_PLM,
    MODE_GROUPED,
    MODE_POOLED,
    EnsembleError,
    EnsembleSpec,
    ModelOutput,
    enumerate_subsets,
    integrated_enumerate,
    read_prediction_matrix,
    soft_vote,
    softmax,
    write_prediction_matrix,
)


def output(model_id, probs, group=GROUP_PLM, docs=None, classes=None):
    probs = np.asarray(probs, dtype=np.float64)
    docs = docs or tuple(f"d{i}" for i in range(probs.shape[0]))
    classes = classes or tuple(f"c{j}" for j in range(probs.shape[1]))
    return ModelOutput(model_id, group, tuple(docs), tuple(classes), probs)


def random_outputs(rng, k=3, docs=4, classes=3, group=GROUP_PLM):
    outs = []
    for i in range(k):
        logits = rng.normal(size=(docs, classes))
        outs.append(output(f"m{i}", softmax(logits), group=group))
    return outs


class TestSoftmax:
    def test_symmetry(self):
        assert np.allclose(softmax([0.0, 0.0]), [0.5, 0.5])

    def test_closed_form(self):
        assert np.allclose(softmax([math.log(2), 0.0]), [2 / 3, 1 / 3])

    def test_overflow_stability(self):
        out = softmax([1000.0, 0.0])
        assert np.isfinite(out).all()
        assert out[0] == pytest.approx(1.0)
        assert out[1] == pytest.approx(0.0, abs=1e-300)

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            softmax([float("nan"), 0.0])

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
    def test_sums_to_one(self, logits):
        assert math.isclose(float(softmax(logits).sum()), 1.0, abs_tol=1e-12)


class TestSoftVote:
    def test_uniform_mean(self):
        a = output("a", [[0.6, 0.4]])
        b = output("b", [[0.2, 0.8]])
        res = soft_vote([a, b], EnsembleSpec(("a", "b")))
        assert np.allclose(res.fused, [[0.4, 0.6]])
        assert res.predicted == ("c1",)

    def test_idempotence_on_copies(self):
        base = np.array([[0.7, 0.2, 0.1], [0.1, 0.1, 0.8]])
        outs = [output(f"m{i}", base) for i in range(4)]
        res = soft_vote(outs, EnsembleSpec(tuple(f"m{i}" for i in range(4)),
                                           weights=(0.3, 1.0, 2.0, 0.5)))
        assert np.allclose(res.fused, base)

    def test_weighted_mean_oracle(self, rng):
        # brute-force weighted-average oracle, Table-2-style weights
        a, b = random_outputs(rng, k=2)
        w = (0.97, 0.60)
        res = soft_vote([a, b], EnsembleSpec(("m0", "m1"), weights=w))
        expected = (w[0] * a.probs + w[1] * b.probs) / sum(w)
        assert np.allclose(res.fused, expected)

    def test_weight_scaling_leaves_argmax(self, rng):
        outs = random_outputs(rng, k=3)
        ids = tuple(o.model_id for o in outs)
        r1 = soft_vote(outs, EnsembleSpec(ids, weights=(1.0, 2.0, 3.0)))
        r2 = soft_vote(outs, EnsembleSpec(ids, weights=(10.0, 20.0, 30.0)))
        assert r1.predicted == r2.predicted
        assert np.allclose(r1.fused, r2.fused)

    def test_member_permutation_invariance(self, rng):
        outs = random_outputs(rng, k=3)
        r1 = soft_vote(outs, EnsembleSpec(("m0", "m1", "m2")))
        r2 = soft_vote(outs[::-1], EnsembleSpec(("m2", "m0", "m1")))
        assert np.allclose(r1.fused, r2.fused)

    def test_grouped_mode_averages_group_vectors(self, rng):
        plm = random_outputs(rng, k=3, group=GROUP_PLM)
        fc = [output("f0", softmax(rng.normal(size=(4, 3))), group=GROUP_FEATURE_CLASSIFIER)]
        ids = tuple(o.model_id for o in plm + fc)
        res = soft_vote(plm + fc, EnsembleSpec(ids, mode=MODE_GROUPED))
        plm_mean = sum(o.probs for o in plm) / 3
        expected = (fc[0].probs + plm_mean) / 2
        assert np.allclose(res.fused, expected)

    def test_grouped_equals_pooled_for_balanced_uniform(self, rng):
        plm = random_outputs(rng, k=2, group=GROUP_PLM)
        fc = random_outputs(rng, k=2, group=GROUP_FEATURE_CLASSIFIER)
        for o in fc:
            object.__setattr__(o, "model_id", "f" + o.model_id)
        ids = tuple(o.model_id for o in plm + fc)
        g = soft_vote(plm + fc, EnsembleSpec(ids, mode=MODE_GROUPED))
        p = soft_vote(plm + fc, EnsembleSpec(ids, mode=MODE_POOLED))
        assert np.allclose(g.fused, p.fused)

    def test_fused_rows_stochastic(self, rng):
        outs = random_outputs(rng, k=4, docs=6, classes=5)
        ids = tuple(o.model_id for o in outs)
        res = soft_vote(outs, EnsembleSpec(ids, weights=(0.2, 1.5, 0.9, 2.0)))
        assert np.allclose(res.fused.sum(axis=1), 1.0, atol=1e-9)

    def test_doc_mismatch_rejected(self, rng):
        a = output("a", [[1.0, 0.0]], docs=("d1",))
        b = output("b", [[1.0, 0.0]], docs=("other",))
        with pytest.raises(EnsembleError, match="doc_id"):
            soft_vote([a, b], EnsembleSpec(("a", "b")))

    def test_class_order_mismatch_rejected(self):
        a = output("a", [[1.0, 0.0]], classes=("x", "y"))
        b = output("b", [[1.0, 0.0]], classes=("y", "x"))
        with pytest.raises(EnsembleError, match="class-order"):
            soft_vote([a, b], EnsembleSpec(("a", "b")))

    def test_unknown_member_rejected(self):
        a = output("a", [[1.0, 0.0]])
        with pytest.raises(EnsembleError, match="unknown member"):
            soft_vote([a], EnsembleSpec(("a", "ghost")))

    def test_tie_breaks_to_lowest_class_index(self):
        a = output("a", [[0.5, 0.5]])
        res = soft_vote([a], EnsembleSpec(("a",)))
        assert res.predicted == ("c0",)


class TestModelOutputValidation:
    def test_row_sum_violation(self):
        with pytest.raises(EnsembleError, match="sums to"):
            output("bad", [[0.5, 0.3]])

    def test_negative_probability(self):
        with pytest.raises(EnsembleError):
            output("bad", [[1.2, -0.2]])


class TestEnumeration:
    def test_five_ids_26_subsets(self):
        assert len(enumerate_subsets([f"m{i}" for i in range(5)])) == 26

    def test_six_ids_57_subsets(self):
        assert len(enumerate_subsets([f"m{i}" for i in range(6)])) == 57

    def test_two_ids_single_pair(self):
        assert enumerate_subsets(["b", "a"]) == [("a", "b")]

    def test_order_by_size_then_lexicographic(self):
        subs = enumerate_subsets(["c", "a", "b"])
        assert subs == [("a", "b"), ("a", "c"), ("b", "c"), ("a", "b", "c")]

    def test_too_few_rejected(self):
        with pytest.raises(EnsembleError):
            enumerate_subsets(["only"], min_size=2)

    @given(st.integers(2, 8))
    def test_count_formula(self, n):
        ids = [f"m{i}" for i in range(n)]
        assert len(enumerate_subsets(ids)) == 2 ** n - n - 1

    def test_integrated_1482(self):
        pairs = integrated_enumerate([f"p{i}" for i in range(5)],
                                     [f"f{i}" for i in range(6)])
        assert len(pairs) == 26 * 57 == 1482

    def test_integrated_minimal(self):
        pairs = integrated_enumerate(["p0", "p1"], ["f0", "f1"])
        assert pairs == [(("p0", "p1"), ("f0", "f1"))]

    @settings(max_examples=20)
    @given(st.integers(2, 6), st.integers(2, 6))
    def test_integrated_count_formula(self, a, b):
        pairs = integrated_enumerate([f"p{i}" for i in range(a)],
                                     [f"f{i}" for i in range(b)])
        assert len(pairs) == (2 ** a - a - 1) * (2 ** b - b - 1)


class TestInterchange:
    def test_round_trip(self, rng, tmp_path):
        out = random_outputs(rng, k=1, docs=5, classes=4)[0]
        csv_path = tmp_path / "m.csv"
        man_path = tmp_path / "m.manifest.json"
        write_prediction_matrix(out, csv_path, man_path, fold=2)
        again, fold = read_prediction_matrix(csv_path, man_path)
        assert fold == 2
        assert again.model_id == out.model_id
        assert again.doc_ids == out.doc_ids
        assert again.class_order == out.class_order
        assert np.array_equal(again.probs, out.probs)

    def test_bad_row_sum_names_doc(self, tmp_path):
        csv_path = tmp_path / "m.csv"
        man_path = tmp_path / "m.manifest.json"
        csv_path.write_text("doc_id,c0,c1\ngood,0.5,0.5\nbroken,0.5,0.3\n")
        man_path.write_text(
            '{"model_id": "x", "group": "plm", "fold": 0, "class_order": ["c0", "c1"]}'
        )
        with pytest.raises(EnsembleError, match="broken"):
            read_prediction_matrix(csv_path, man_path)

    def test_header_mismatch_rejected(self, tmp_path):
        csv_path = tmp_path / "m.csv"
        man_path = tmp_path / "m.manifest.json"
        csv_path.write_text("doc_id,c1,c0\nd,0.5,0.5\n")
        man_path.write_text(
            '{"model_id": "x", "group": "plm", "fold": 0, "class_order": ["c0", "c1"]}'
        )
        with pytest.raises(EnsembleError, match="header"):
            read_prediction_matrix(csv_path, man_path)
