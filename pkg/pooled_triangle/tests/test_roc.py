# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import numpy as np
import pytest

from pooled_triangle.attack import implant_fingerprint
from pooled_triangle.errors import ParameterError
from pooled_triangle.evaluation.roc import (
    pd_at_pfa,
    roc_curve_points,
    roc_from_statistics,
    roc_report,
    roc_setup_b,
)
from pooled_triangle.prnu_core import Owner, estimate_fingerprint
from pooled_triangle.triangle import (
    DeviationMoments,
    InferenceLine,
    PooledStatistics,
    StatisticKind,
)


def test_perfect_separation_V():
    report = roc_report([1, 2, 3], [10, 11, 12], "V", p_fa_target=0.03)
    assert report.area == pytest.approx(1.0)
    assert report.P_d_at_target == pytest.approx(1.0)


def test_perfect_separation_L():
    # low L is evidence of a forgery
    report = roc_report([-1, -2, -3], [-10, -11, -12], "L", p_fa_target=0.0)
    assert report.area == pytest.approx(1.0)
    assert report.P_d_at_target == pytest.approx(1.0)


def test_inverted_separation():
    report = roc_report([10, 11, 12], [1, 2, 3], "V", p_fa_target=0.03)
    assert report.area == pytest.approx(0.0)
    assert report.P_d_at_target == pytest.approx(0.0)


def test_identical_sets_follow_diagonal():
    values = np.arange(20.0)
    fpr, tpr = roc_curve_points(values, values, "V")
    np.testing.assert_allclose(fpr, tpr)
    assert roc_report(values, values, "V", 0.5).area == pytest.approx(0.5)


@pytest.mark.parametrize("kind", ["L", "V"])
def test_curve_endpoints_and_monotonicity(kind):
    rng = np.random.default_rng(0)
    fpr, tpr = roc_curve_points(rng.normal(size=50), rng.normal(1, 1, size=40), kind)
    assert (fpr[0], tpr[0]) == (0.0, 0.0)
    assert (fpr[-1], tpr[-1]) == (1.0, 1.0)
    assert np.all(np.diff(fpr) >= 0)
    assert np.all(np.diff(tpr) >= 0)


def test_polarity_mirrors_between_statistics():
    rng = np.random.default_rng(1)
    h0, h1 = rng.normal(size=30), rng.normal(0.5, 1, size=30)
    v = roc_report(h0, h1, "V", 0.1)
    l = roc_report(-h0, -h1, "L", 0.1)
    np.testing.assert_allclose(v.fpr, l.fpr)
    np.testing.assert_allclose(v.tpr, l.tpr)
    assert v.area == pytest.approx(l.area)


def test_pd_at_pfa_interpolates():
    fpr, tpr = np.array([0.0, 0.5, 1.0]), np.array([0.0, 1.0, 1.0])
    assert pd_at_pfa(fpr, tpr, 0.25) == pytest.approx(0.5)
    assert pd_at_pfa(fpr, tpr, 0.5) == pytest.approx(1.0)
    assert pd_at_pfa(fpr, tpr, 1.0) == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        pd_at_pfa(fpr, tpr, 1.5)


def test_pd_at_pfa_vertical_step():
    fpr, tpr = np.array([0.0, 0.0, 0.5, 1.0]), np.array([0.0, 0.6, 0.8, 1.0])
    assert pd_at_pfa(fpr, tpr, 0.0) == pytest.approx(0.6)
    assert pd_at_pfa(fpr, tpr, 0.25) == pytest.approx(0.7)


def test_empty_inputs():
    with pytest.raises(ParameterError):
        roc_curve_points([], [1.0], "V")
    with pytest.raises(ParameterError):
        roc_curve_points([1.0], [], "L")


def test_report_rows_and_dict():
    report = roc_report([0, 1], [2, 3], StatisticKind.V, 0.03)
    rows = report.curve_rows()
    assert rows[0] == {"statistic": "V", "P_fa": 0.0, "P_d": 0.0}
    assert rows[-1]["P_fa"] == 1.0
    d = report.to_dict()
    assert d["n_h0"] == 2 and d["n_h1"] == 2
    assert d["auc"] == pytest.approx(1.0)


def _stats(L, V):
    return PooledStatistics(k=5, L=L, V=V, moments=DeviationMoments(0.0, 1.0))


def test_roc_from_statistics():
    h0 = [_stats(-5.0, 1.0), _stats(-6.0, 2.0)]
    h1 = [_stats(-20.0, 9.0), _stats(-30.0, 12.0)]
    reports = roc_from_statistics(h0, h1, 0.03)
    assert set(reports) == {StatisticKind.L, StatisticKind.V}
    assert all(r.area == pytest.approx(1.0) for r in reports.values())
    only_v = roc_from_statistics(h0, h1, 0.03, ["V"])
    assert list(only_v) == [StatisticKind.V]


def test_roc_setup_b_on_images(public_a, genuine_a, sources_b, alice_fingerprint, blur):
    line = InferenceLine(lam=1.0, eta=0.0, n_fit=2, residual_rms=0.0)
    K_e = estimate_fingerprint(public_a[:6], blur, owner=Owner.eve)
    forged = [implant_fingerprint(J, K_e, 1.5) for J in sources_b]
    reports = roc_setup_b(
        forged, genuine_a, public_a, line, alice_fingerprint, blur, p_fa_target=0.1
    )
    for report in reports.values():
        assert report.h0_values.size == len(genuine_a)
        assert report.h1_values.size == len(forged)
        assert 0 <= report.area <= 1
    with pytest.raises(ParameterError):
        roc_setup_b(forged, forged, public_a, line, alice_fingerprint, blur)
    with pytest.raises(ParameterError):
        roc_setup_b([], genuine_a, public_a, line, alice_fingerprint, blur)
