# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import numpy as np
import pytest
from scipy import stats

from pooled_triangle.attack import implant_fingerprint
from pooled_triangle.errors import DegenerateH0Error, ParameterError
from pooled_triangle.evaluation.bootstrap import (
    bootstrap_from_deviations,
    bootstrap_setup_a,
    gaussian_p_value,
    rescale_groups,
    subset_indices,
    summarize_reports,
)
from pooled_triangle.evaluation.pools import h0_deviation_sets, profile_images
from pooled_triangle.prnu_core import Owner, estimate_fingerprint
from pooled_triangle.sensor_sim import render_batch
from pooled_triangle.triangle import (
    CandidateSet,
    InferenceLine,
    StatisticKind,
    deviations_for_profile,
    estimate_moments,
    fit_inference_line,
    pairs_for_profile,
    v_statistic,
)


def test_gaussian_p_value_at_mean():
    for kind in ("L", "V"):
        assert gaussian_p_value(3.0, 3.0, 2.0, kind) == pytest.approx(0.5)


def test_gaussian_p_value_direction():
    # V: large values are extreme, L: small values are extreme
    assert gaussian_p_value(10.0, 0.0, 1.0, "V") < 1e-6
    assert gaussian_p_value(-10.0, 0.0, 1.0, "V") > 1 - 1e-6
    assert gaussian_p_value(-10.0, 0.0, 1.0, "L") < 1e-6
    assert gaussian_p_value(1.0, 0.0, 1.0, "L") == pytest.approx(0.8413447, abs=1e-6)


def test_gaussian_p_value_rejects_zero_std():
    with pytest.raises(DegenerateH0Error):
        gaussian_p_value(1.0, 0.0, 0.0, "V")


def test_subset_indices():
    rng = np.random.default_rng(0)
    chunks = list(subset_indices(rng, n=30, k=7, reps=2500))
    rows = np.concatenate(chunks)
    assert rows.shape == (2500, 7)
    assert rows.min() >= 0 and rows.max() < 30
    assert all(len(set(r)) == 7 for r in rows)
    # every index is drawn about equally often
    counts = np.bincount(rows.ravel(), minlength=30)
    assert counts.min() > 0.7 * counts.mean()


def test_subset_indices_full_set():
    rows = np.concatenate(list(subset_indices(np.random.default_rng(0), 5, 5, 3)))
    np.testing.assert_array_equal(rows, np.tile(np.arange(5), (3, 1)))


@pytest.mark.parametrize("k", [0, 11])
def test_subset_indices_rejects_k(k):
    with pytest.raises(ParameterError):
        next(subset_indices(np.random.default_rng(0), 10, k, 1))


def _groups(rng, n_groups, n):
    return [rng.normal(size=n) for _ in range(n_groups)]


def test_bootstrap_report_fields():
    rng = np.random.default_rng(1)
    reports = bootstrap_from_deviations(
        rng.normal(size=40), _groups(rng, 10, 40), k=10, reps=300, p_fa_target=0.05
    )
    assert set(reports) == {StatisticKind.L, StatisticKind.V}
    for report in reports.values():
        assert report.p_values.shape == (300,)
        assert np.all((report.p_values >= 0) & (report.p_values <= 1))
        assert report.P_d == pytest.approx(np.mean(report.p_values < 0.05))
        assert report.h0_std > 0
        d = report.to_dict()
        assert "p_values" not in d
        assert d["k"] == 10
        assert len(report.to_dict(include_p_values=True)["p_values"]) == 300


def test_bootstrap_is_deterministic_per_stream():
    rng = np.random.default_rng(2)
    test_d, groups = rng.normal(size=50), _groups(rng, 8, 50)

    def p_values(seed, stream):
        reports = bootstrap_from_deviations(
            test_d, groups, 15, 200, 0.01, ["V"], seed=seed, stream=stream
        )
        return reports[StatisticKind.V].p_values

    np.testing.assert_array_equal(p_values(3, (10, 0)), p_values(3, (10, 0)))
    assert not np.array_equal(p_values(3, (10, 0)), p_values(3, (10, 1)))
    assert not np.array_equal(p_values(3, (10, 0)), p_values(4, (10, 0)))


def test_bootstrap_single_group_full_subset_is_degenerate():
    rng = np.random.default_rng(3)
    with pytest.raises(DegenerateH0Error):
        bootstrap_from_deviations(
            rng.normal(size=12), [rng.normal(size=12)], k=12, reps=50, p_fa_target=0.01
        )


def test_bootstrap_input_checks():
    rng = np.random.default_rng(4)
    with pytest.raises(ParameterError):
        bootstrap_from_deviations(rng.normal(size=10), _groups(rng, 3, 9), 5, 10, 0.01)
    with pytest.raises(ParameterError):
        bootstrap_from_deviations(rng.normal(size=10), _groups(rng, 3, 10), 5, 0, 0.01)
    with pytest.raises(ParameterError):
        bootstrap_from_deviations(rng.normal(size=10), _groups(rng, 3, 10), 5, 10, 1.0)


def test_bootstrap_false_alarm_rate_under_h0():
    """Genuine-like test images are flagged at about the nominal rate."""
    rng = np.random.default_rng(5)
    groups = _groups(rng, 100, 200)
    rates = []
    for i in range(100):
        reports = bootstrap_from_deviations(
            rng.normal(size=200), groups, 60, 1000, 0.05, ["V"], seed=6, stream=(i,)
        )
        rates.append(reports[StatisticKind.V].P_d)
    assert 0.025 <= np.mean(rates) <= 0.075


def test_bootstrap_detects_shifted_subset():
    rng = np.random.default_rng(7)
    groups = _groups(rng, 50, 100)
    test_d = rng.normal(size=100)
    test_d[:10] += 6.0
    reports = bootstrap_from_deviations(test_d, groups, 60, 500, 0.05, ["V"])
    assert reports[StatisticKind.V].P_d > 0.5


def test_summarize_reports():
    rng = np.random.default_rng(8)
    groups = _groups(rng, 5, 20)
    reports = [
        bootstrap_from_deviations(rng.normal(size=20), groups, 5, 50, 0.1, seed=i)
        for i in range(3)
    ]
    summary = summarize_reports(reports)
    assert set(summary) == {"L", "V"}
    assert summary["V"]["n_images"] == 3
    expected = np.mean([r[StatisticKind.V].P_d for r in reports])
    assert summary["V"]["P_d_mean"] == pytest.approx(expected)
    assert summarize_reports([]) == {}


def test_bootstrap_setup_a_on_images(
    public_a, genuine_a, sources_b, alice_fingerprint, blur
):
    line = InferenceLine(lam=1.0, eta=0.0, n_fit=2, residual_rms=0.0)
    K_e = estimate_fingerprint(public_a[:6], blur, owner=Owner.eve)
    forged = implant_fingerprint(sources_b[0], K_e, 1.5)
    reports = bootstrap_setup_a(
        forged, public_a, line, alice_fingerprint, blur, genuine_a, k=8, reps=100
    )
    assert set(reports) == {StatisticKind.L, StatisticKind.V}
    assert all(0 <= r.P_d <= 1 for r in reports.values())

    with pytest.raises(ParameterError):
        bootstrap_setup_a(
            forged, public_a, line, alice_fingerprint, blur, [forged], k=8, reps=10
        )
    with pytest.raises(ParameterError):
        bootstrap_setup_a(
            forged, public_a, line, alice_fingerprint, blur, genuine_a, k=13, reps=10
        )


def test_gaussian_p_values_are_uniform_under_h0():
    rng = np.random.default_rng(9)
    n, k = 200, 60
    reports = bootstrap_from_deviations(
        rng.normal(size=n), _groups(rng, 100, n), k, 2000, 0.05, ["V"]
    )
    report = reports[StatisticKind.V]
    values = []
    for _ in range(2000):
        d = rng.normal(size=n)
        moments = estimate_moments(d)
        subset = rng.choice(n, size=k, replace=False)
        values.append(v_statistic(d[subset], moments.mu, moments.sigma))
    p_values = gaussian_p_value(np.array(values), report.h0_mean, report.h0_std, "V")
    assert stats.kstest(p_values, "uniform").pvalue > 0.01


def test_false_alarm_rate_on_rendered_genuine_images(
    camera_a, alice_fingerprint, blur
):
    """Genuine images of Alice's camera are flagged at about the nominal rate."""
    public = render_batch(
        camera_a, 200, "smooth-random", seed=20, role_tag="public", id_prefix="pub"
    )
    fit_images = render_batch(camera_a, 10, "smooth-random", seed=21, id_prefix="fit")
    reference_images = render_batch(
        camera_a, 60, "smooth-random", seed=22, role_tag="h0_test", id_prefix="ref"
    )
    tests = render_batch(camera_a, 30, "smooth-random", seed=23, id_prefix="test")

    candidates = CandidateSet(profile_images(public, alice_fingerprint, blur))
    pairs = []
    for p in profile_images(fit_images, alice_fingerprint, blur):
        pairs.extend(pairs_for_profile(p, candidates))
    line = fit_inference_line(pairs)
    references = profile_images(reference_images, alice_fingerprint, blur)
    h0_groups = [s.d for s in h0_deviation_sets(references, candidates, line)]

    rates = {StatisticKind.L: [], StatisticKind.V: []}
    for i, profile in enumerate(profile_images(tests, alice_fingerprint, blur)):
        test_d = deviations_for_profile(profile, candidates, line).d
        reports = bootstrap_from_deviations(
            test_d, h0_groups, 60, 2000, 0.05, seed=24, stream=(i,)
        )
        for kind, report in reports.items():
            rates[kind].append(report.P_d)
    for kind, values in rates.items():
        assert 0.03 <= np.mean(values) <= 0.07, kind


def test_rescale_groups_maps_onto_test_moments():
    rng = np.random.default_rng(10)
    test_d = rng.normal(size=30)
    moments = estimate_moments(test_d)
    rescaled = rescale_groups(np.stack([1e-3 * test_d + 5.0, 40 * test_d]), moments)
    np.testing.assert_allclose(rescaled, np.stack([test_d, test_d]), atol=1e-9)


def test_l_is_calibrated_against_references_on_another_scale():
    """References whose deviations are rescaled copies of the test image are H0."""
    rng = np.random.default_rng(11)
    test_d = rng.normal(size=80)
    groups = [1e-3 * test_d + 5.0, 1e3 * test_d - 2.0, 0.5 * test_d]
    reports = bootstrap_from_deviations(test_d, groups, 20, 2000, 0.05, ["L"])
    report = reports[StatisticKind.L]
    assert 0.4 <= np.median(report.p_values) <= 0.6
    assert 0.02 <= report.P_d <= 0.1
