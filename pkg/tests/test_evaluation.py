import numpy as np
import pytest

from mvec import (
    DegenerateInputError,
    EmptyInputError,
    IdLookupError,
    ScoreSet,
    TrialList,
    compute_eer,
    dimension_sweep,
    rng_for,
    score_trials,
)


def sweep_oracle_eer(targets, nontargets):
    """Plain-loop reference: try every distinct score as a threshold,
    count FRR (targets below) and FAR (nontargets at-or-above), close the
    sweep with an everything-rejected point, and linearly interpolate at
    the first FAR−FRR sign change.  Deliberately no numpy, no sharing
    with the implementation under test.
    """
    thresholds = sorted(set(list(targets) + list(nontargets)))
    thresholds.append(thresholds[-1] + 1.0)
    points = []
    for t in thresholds:
        frr = sum(1 for s in targets if s < t) / len(targets)
        far = sum(1 for s in nontargets if s >= t) / len(nontargets)
        points.append((far, frr))
    for (far0, frr0), (far1, frr1) in zip(points, points[1:]):
        d0, d1 = far0 - frr0, far1 - frr1
        if d1 <= 0.0:
            alpha = d0 / (d0 - d1)
            return frr0 + alpha * (frr1 - frr0)
    raise AssertionError("sweep never crossed")


class TestComputeEer:
    def test_perfect_separation(self):
        eer, _ = compute_eer(ScoreSet([0.9, 0.8], [0.1, 0.2]))
        assert eer == 0.0

    def test_one_third_hand_case(self):
        eer, threshold = compute_eer(ScoreSet([0.9, 0.8, 0.2],
                                              [0.7, 0.1, 0.05]))
        assert eer == pytest.approx(1.0 / 3.0, abs=1e-12)
        assert threshold == pytest.approx(0.7, abs=1e-12)

    def test_complete_confusion(self):
        # Identical score multisets: any threshold errs equally both ways.
        eer, _ = compute_eer(ScoreSet([0.5, 0.1], [0.5, 0.1]))
        assert 0.0 < eer <= 1.0

    def test_empty_side_rejected(self):
        with pytest.raises(EmptyInputError):
            compute_eer(ScoreSet([], [0.1]))
        with pytest.raises(EmptyInputError):
            compute_eer(ScoreSet([0.9], []))

    def test_non_finite_rejected(self):
        with pytest.raises(EmptyInputError):
            compute_eer(ScoreSet([np.nan], [0.1]))

    def test_bounds_on_random_sets(self):
        rng = rng_for(600, "trials")
        for _ in range(50):
            scores = ScoreSet(rng.normal(size=rng.integers(1, 20)),
                              rng.normal(size=rng.integers(1, 20)))
            eer, _ = compute_eer(scores)
            assert 0.0 <= eer <= 1.0

    def test_matches_sweep_oracle_on_200_random_sets(self):
        rng = rng_for(601, "trials")
        for case in range(200):
            n_t = int(rng.integers(1, 21))
            n_n = int(rng.integers(1, 21))
            # Mix continuous scores with deliberate duplicates to hit ties.
            targets = np.round(rng.normal(0.3, 0.5, n_t), 2)
            nontargets = np.round(rng.normal(-0.3, 0.5, n_n), 2)
            eer, _ = compute_eer(ScoreSet(targets, nontargets))
            expected = sweep_oracle_eer(targets.tolist(), nontargets.tolist())
            assert eer == pytest.approx(expected, abs=1e-9), f"case {case}"

    @pytest.mark.parametrize("transform", [
        lambda s: 2.0 * s + 1.0,
        lambda s: s ** 3,
    ])
    def test_invariant_under_increasing_transforms(self, transform):
        rng = rng_for(602, "trials")
        for _ in range(25):
            targets = rng.normal(0.3, 0.5, int(rng.integers(2, 15)))
            nontargets = rng.normal(-0.3, 0.5, int(rng.integers(2, 15)))
            base, _ = compute_eer(ScoreSet(targets, nontargets))
            moved, _ = compute_eer(ScoreSet(transform(targets),
                                            transform(nontargets)))
            assert moved == pytest.approx(base, abs=1e-12)

    def test_swap_and_negate_symmetry(self):
        rng = rng_for(603, "trials")
        for _ in range(25):
            targets = rng.normal(0.3, 0.5, int(rng.integers(2, 15)))
            nontargets = rng.normal(-0.3, 0.5, int(rng.integers(2, 15)))
            eer, _ = compute_eer(ScoreSet(targets, nontargets))
            flipped, _ = compute_eer(ScoreSet(-nontargets, -targets))
            assert flipped == pytest.approx(eer, abs=1e-9)


class TestScoreTrials:
    @pytest.fixture
    def embeddings(self):
        return {
            0: np.array([1.0, 0.0, 0.0, 0.0]),
            1: np.array([1.0, 0.0, 0.0, 1.0]),
            2: np.array([0.0, 1.0, 0.0, 0.0]),
        }

    def test_identical_embedding_scores_one(self, embeddings):
        trials = TrialList([(0, 1, 1), (0, 2, 0)])
        scores = score_trials(embeddings, trials, m=2)
        # At m=2, utt 1's prefix equals utt 0's -> cosine exactly 1.
        np.testing.assert_allclose(scores.target_scores, [1.0], atol=1e-15)

    def test_orthogonal_prefix_scores_zero(self, embeddings):
        trials = TrialList([(0, 2, 0), (0, 1, 1)])
        scores = score_trials(embeddings, trials, m=3)
        np.testing.assert_allclose(scores.nontarget_scores, [0.0], atol=1e-15)

    def test_full_dim_equals_unsliced_cosine(self, embeddings):
        trials = TrialList([(0, 1, 1)])
        scores = score_trials(embeddings, trials, m=4)
        assert scores.target_scores[0] == pytest.approx(1.0 / np.sqrt(2.0),
                                                        abs=1e-12)

    def test_missing_id(self, embeddings):
        with pytest.raises(IdLookupError):
            score_trials(embeddings, TrialList([(0, 99, 1)]), m=2)

    def test_zero_prefix_rejected(self):
        embeddings = {0: np.array([0.0, 0.0, 1.0]),
                      1: np.array([1.0, 0.0, 0.0])}
        with pytest.raises(DegenerateInputError):
            score_trials(embeddings, TrialList([(0, 1, 0)]), m=2)


class TestDimensionSweep:
    @pytest.fixture
    def setup(self):
        rng = rng_for(604, "trials")
        embeddings = {i: rng.normal(size=8) for i in range(10)}
        trials = TrialList([(i, (i + 1) % 10, int(i % 2 == 0))
                            for i in range(10)])
        return embeddings, trials

    def test_row_count_and_order(self, setup):
        embeddings, trials = setup
        report = dimension_sweep({"b_sys": embeddings, "a_sys": embeddings},
                                 trials, (8, 2, 4))
        assert len(report.rows) == 6
        assert [(r[0], r[1]) for r in report.rows] == [
            ("a_sys", 2), ("a_sys", 4), ("a_sys", 8),
            ("b_sys", 2), ("b_sys", 4), ("b_sys", 8),
        ]

    def test_single_system_full_dim_matches_compute_eer(self, setup):
        embeddings, trials = setup
        report = dimension_sweep({"only": embeddings}, trials, (8,))
        eer, threshold = compute_eer(score_trials(embeddings, trials, 8))
        assert report.rows[0][2] == pytest.approx(100.0 * eer, abs=1e-12)
        assert report.rows[0][3] == pytest.approx(threshold, abs=1e-12)

    def test_csv_shape(self, setup):
        embeddings, trials = setup
        text = dimension_sweep({"sys": embeddings}, trials, (2, 8)).to_csv()
        lines = text.strip().split("\n")
        assert lines[0] == "system,dim,eer_percent,threshold"
        assert len(lines) == 3
        system, dim, eer, threshold = lines[1].split(",")
        assert system == "sys" and dim == "2"
        assert "." in eer and len(eer.split(".")[1]) == 6
