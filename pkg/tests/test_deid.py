"""Score-replacement anonymization strategies and the component-count rule."""

import dataclasses

import numpy as np
import pytest

from voxmask.deid import (
    DeidStrategy,
    anonymize_scores,
    anonymize_trajectory,
    constant_pitch_shift,
    replacement_first_score,
    select_n_components,
)
from voxmask.fda import CurveLabel, ScoreVector, build_basis, fpca_fit, smooth_curve, uniform_resample
from voxmask.pitch import HZ, SEMITONE, F0Trajectory, hz_to_semitones, interpolate_unvoiced


def hz_traj(values, voiced=None, hop=0.01):
    values = np.asarray(values, dtype=np.float64)
    if voiced is None:
        voiced = np.isfinite(values)
    return F0Trajectory(np.arange(values.size) * hop, values, np.asarray(voiced, bool), HZ)


def contour(base: float, n: int = 150, bump: float = 0.06, phase: float = 0.0) -> np.ndarray:
    t = np.linspace(0, 1, n)
    declination = 1.0 - 0.08 * t
    return base * declination * (1.0 + bump * np.sin(2 * np.pi * t + phase))


BASIS = build_basis(40, 4)
GRID = 200


def fit_two_group_model(n_per_group: int = 6):
    curves, labels = [], []
    rng = np.random.default_rng(77)
    for gi, (group, base) in enumerate([("low", 110.0), ("high", 210.0)]):
        for k in range(n_per_group):
            f0 = contour(base * (1 + 0.04 * rng.standard_normal()), phase=rng.uniform(0, 3))
            st = hz_to_semitones(hz_traj(f0), 100.0)
            grid = uniform_resample(st.times, st.values, GRID)
            curves.append(smooth_curve(grid, BASIS, 1e-8))
            labels.append(CurveLabel(f"{group}{k}", f"spk_{group}{k}", group, "modal"))
    return fpca_fit(curves, labels)


@pytest.fixture(scope="module")
def two_group_model():
    return fit_two_group_model()


class TestStrategyValidation:
    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            DeidStrategy(kind="swap_everything")

    def test_shift_must_exceed_minus_100(self):
        with pytest.raises(ValueError):
            DeidStrategy(kind="constant_shift", shift_percent=-100.0)

    def test_threshold_bounds(self):
        with pytest.raises(ValueError):
            DeidStrategy(kind="cross_group", variance_threshold=0.0)
        with pytest.raises(ValueError):
            DeidStrategy(kind="cross_group", variance_threshold=1.5)

    def test_empty_donor_group_allowed_for_later_resolution(self):
        s = DeidStrategy(kind="cross_group", donor_group="")
        assert s.donor_group == ""


class TestSelectNComponents:
    def test_single_component(self, two_group_model):
        model = dataclasses.replace(two_group_model, variance_fraction=np.array([1.0]))
        assert select_n_components(model, 0.9, 30) == 1

    def test_worked_cumulative_sum(self, two_group_model):
        fractions = np.array([0.5, 0.3, 0.15, 0.05])
        model = dataclasses.replace(two_group_model, variance_fraction=fractions)
        assert select_n_components(model, 0.9, 30) == 3

    def test_cap_binds(self, two_group_model):
        fractions = np.array([0.5, 0.3, 0.15, 0.05])
        model = dataclasses.replace(two_group_model, variance_fraction=fractions)
        assert select_n_components(model, 0.9, 2) == 2

    def test_threshold_validation(self, two_group_model):
        with pytest.raises(ValueError):
            select_n_components(two_group_model, 0.0, 30)
        with pytest.raises(ValueError):
            select_n_components(two_group_model, 30, 30)

    def test_never_zero(self, two_group_model):
        fractions = np.array([0.99, 0.01])
        model = dataclasses.replace(two_group_model, variance_fraction=fractions)
        assert select_n_components(model, 0.5, 30) == 1


class TestReplacementScore:
    def fake_model(self, two_group_model, s1_values, labels):
        scores = np.zeros((len(s1_values), two_group_model.training_scores.shape[1]))
        scores[:, 0] = s1_values
        return dataclasses.replace(two_group_model, training_scores=scores, labels=tuple(labels))

    def test_disguise_model_uses_mean_absolute(self, two_group_model):
        labels = [
            CurveLabel(f"u{k}", "spk_a", "low", "disguised") for k in range(3)
        ]
        model = self.fake_model(two_group_model, [-2.0, 3.0, -4.0], labels)
        s = DeidStrategy(kind="disguise_model")
        assert replacement_first_score(s, model, "spk_a") == pytest.approx(3.0)

    def test_cross_group_uses_plain_mean(self, two_group_model):
        labels = [CurveLabel(f"u{k}", f"s{k}", "high", "modal") for k in range(3)]
        model = self.fake_model(two_group_model, [1.0, 2.0, 3.0], labels)
        s = DeidStrategy(kind="cross_group", donor_group="high")
        assert replacement_first_score(s, model, "anyone") == pytest.approx(2.0)

    def test_speaker_without_disguised_curves_errors(self, two_group_model):
        labels = [CurveLabel("u0", "spk_a", "low", "modal")]
        model = self.fake_model(two_group_model, [1.0], labels)
        with pytest.raises(ValueError):
            replacement_first_score(DeidStrategy(kind="disguise_model"), model, "spk_a")

    def test_unresolved_donor_group_errors(self, two_group_model):
        with pytest.raises(ValueError, match="donor_group"):
            replacement_first_score(
                DeidStrategy(kind="cross_group", donor_group=""), two_group_model, "x"
            )

    def test_unknown_donor_group_errors(self, two_group_model):
        with pytest.raises(ValueError):
            replacement_first_score(
                DeidStrategy(kind="cross_group", donor_group="martian"), two_group_model, "x"
            )

    def test_unlabeled_model_errors(self, two_group_model):
        model = dataclasses.replace(two_group_model, labels=None)
        with pytest.raises(ValueError):
            replacement_first_score(DeidStrategy(kind="cross_group", donor_group="high"), model, "x")


class TestAnonymizeScores:
    def test_worked_example(self):
        out = anonymize_scores(ScoreVector(np.array([5.0, 1.0, 2.0])), 9.0, 3)
        np.testing.assert_allclose(out.values, [9.0, 1.0, 2.0])

    def test_identity_swap_truncates(self):
        original = ScoreVector(np.array([5.0, 1.0, 2.0, 7.0]))
        out = anonymize_scores(original, 5.0, 2)
        np.testing.assert_allclose(out.values, [5.0, 1.0])

    def test_single_component(self):
        out = anonymize_scores(ScoreVector(np.array([5.0, 1.0])), -3.5, 1)
        np.testing.assert_allclose(out.values, [-3.5])

    def test_tail_untouched_exactly(self):
        rng = np.random.default_rng(0)
        vals = rng.standard_normal(10)
        out = anonymize_scores(ScoreVector(vals), 99.0, 10)
        np.testing.assert_array_equal(out.values[1:], vals[1:])

    def test_excessive_n_rejected(self):
        with pytest.raises(ValueError):
            anonymize_scores(ScoreVector(np.array([1.0])), 0.0, 2)


class TestConstantShift:
    def test_fifteen_percent(self):
        out = constant_pitch_shift(hz_traj([100.0, 100.0]), 15.0)
        np.testing.assert_allclose(out.values, 115.0)

    def test_zero_is_identity(self):
        t = hz_traj([100.0, 140.0, np.nan])
        out = constant_pitch_shift(t, 0.0)
        np.testing.assert_array_equal(out.values[t.voiced], t.values[t.voiced])
        np.testing.assert_array_equal(out.voiced, t.voiced)

    def test_minus_fifty(self):
        out = constant_pitch_shift(hz_traj([200.0]), -50.0)
        assert out.values[0] == pytest.approx(100.0)

    def test_nyquist_guard(self):
        with pytest.raises(ValueError):
            constant_pitch_shift(hz_traj([3000.0]), 50.0, max_hz=4000.0)

    def test_semitone_unit_rejected(self):
        t = F0Trajectory(np.array([0.0]), np.array([12.0]), np.array([True]), SEMITONE)
        with pytest.raises(ValueError):
            constant_pitch_shift(t, 10.0)


class TestAnonymizeTrajectory:
    def test_constant_shift_dispatch(self):
        t = hz_traj(contour(120.0))
        strategy = DeidStrategy(kind="constant_shift", shift_percent=15.0)
        out = anonymize_trajectory(t, None, strategy)
        ref = constant_pitch_shift(t, 15.0)
        np.testing.assert_array_equal(out.values, ref.values)

    def test_model_required_for_score_swap(self):
        t = hz_traj(contour(120.0))
        with pytest.raises(ValueError):
            anonymize_trajectory(t, None, DeidStrategy(kind="cross_group", donor_group="high"))

    def test_frame_geometry_preserved(self, two_group_model):
        f0 = contour(115.0)
        f0[40:55] = np.nan
        t = hz_traj(f0)
        out = anonymize_trajectory(
            t,
            two_group_model,
            DeidStrategy(kind="cross_group", donor_group="high"),
            grid_points=GRID,
        )
        assert len(out) == len(t)
        np.testing.assert_array_equal(out.times, t.times)
        np.testing.assert_array_equal(out.voiced, t.voiced)
        assert np.all(np.isnan(out.values[~out.voiced]))
        assert np.all(np.isfinite(out.values[out.voiced]))

    def test_cross_group_direction(self, two_group_model):
        low = hz_traj(contour(112.0))
        up = anonymize_trajectory(
            low,
            two_group_model,
            DeidStrategy(kind="cross_group", donor_group="high"),
            grid_points=GRID,
        )
        assert np.median(up.values[up.voiced]) > np.median(low.values[low.voiced])

        high = hz_traj(contour(205.0))
        down = anonymize_trajectory(
            high,
            two_group_model,
            DeidStrategy(kind="cross_group", donor_group="low"),
            grid_points=GRID,
        )
        assert np.median(down.values[down.voiced]) < np.median(high.values[high.voiced])

    def test_deterministic(self, two_group_model):
        t = hz_traj(contour(118.0))
        strategy = DeidStrategy(kind="cross_group", donor_group="high")
        a = anonymize_trajectory(t, two_group_model, strategy, grid_points=GRID)
        b = anonymize_trajectory(t, two_group_model, strategy, grid_points=GRID)
        np.testing.assert_array_equal(a.values, b.values)

    def test_own_score_replacement_is_near_identity(self):
        # donor group holding a single curve: the cross-group mean IS that
        # curve's own s1, so full reconstruction must return the input
        solo_f0 = contour(118.0, phase=1.2)
        curves, labels = [], []
        st = hz_to_semitones(interpolate_unvoiced(hz_traj(solo_f0)), 100.0)
        curves.append(smooth_curve(uniform_resample(st.times, st.values, GRID), BASIS, 1e-8))
        labels.append(CurveLabel("solo0", "solo", "solo", "modal"))
        rng = np.random.default_rng(5)
        for k in range(5):
            f0 = contour(150.0 * (1 + 0.1 * rng.standard_normal()), phase=rng.uniform(0, 3))
            st = hz_to_semitones(hz_traj(f0), 100.0)
            curves.append(smooth_curve(uniform_resample(st.times, st.values, GRID), BASIS, 1e-8))
            labels.append(CurveLabel(f"r{k}", f"spk{k}", "rest", "modal"))
        model = fpca_fit(curves, labels)
        strategy = DeidStrategy(
            kind="cross_group", donor_group="solo", variance_threshold=1.0, max_components=99
        )
        t = hz_traj(solo_f0)
        out = anonymize_trajectory(t, model, strategy, grid_points=GRID)
        rel = np.abs(out.values[t.voiced] - t.values[t.voiced]) / t.values[t.voiced]
        assert np.max(rel) < 0.02

    def test_clamps_guard_spline_overshoot(self, two_group_model):
        t = hz_traj(contour(112.0))
        out = anonymize_trajectory(
            t,
            two_group_model,
            DeidStrategy(kind="cross_group", donor_group="high"),
            grid_points=GRID,
            pitch_floor=65.0,
            pitch_ceiling=380.0,
        )
        v = out.values[out.voiced]
        assert np.all(v >= 65.0 / 2) and np.all(v <= 2 * 380.0)
