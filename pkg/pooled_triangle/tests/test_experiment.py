# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import pytest

from pooled_triangle.attack import AttackResult, implant_fingerprint
from pooled_triangle.errors import ParameterError
from pooled_triangle.evaluation.experiment import recheck_forgeries
from pooled_triangle.evaluation.pools import profile_images
from pooled_triangle.prnu_core import DetectorCalibration, Owner, estimate_fingerprint


@pytest.fixture
def forgeries(public_a, sources_b, alice_fingerprint, blur):
    """A strong forgery and a near-copy of its source claiming the same rho."""
    K_e = estimate_fingerprint(public_a, blur, owner=Owner.eve)
    strong = implant_fingerprint(sources_b[0], K_e, 2.0)
    weak = implant_fingerprint(sources_b[1], K_e, 1e-6)
    results = [
        AttackResult(forged=im, alpha=alpha, rho_achieved=0.5, n_source_images=12)
        for im, alpha in ((strong, 2.0), (weak, 1e-6))
    ]
    return results, profile_images([strong, weak], alice_fingerprint, blur)


def test_recheck_drops_forgery_failing_the_detector(forgeries, caplog):
    results, profiles = forgeries
    strong, weak = profiles
    assert strong.score > weak.score
    calibration = DetectorCalibration(
        threshold=(strong.score + weak.score) / 2, target_tpr=0.9, scores_used=10
    )
    kept, kept_profiles, rejected = recheck_forgeries(results, profiles, calibration)
    assert kept == [results[0]]
    assert kept_profiles == [strong]
    assert [r["image_id"] for r in rejected] == [weak.image_id]
    assert rejected[0]["rho"] == pytest.approx(weak.score)
    assert "fails the detector" in caplog.text


def test_recheck_keeps_every_passing_forgery(forgeries):
    results, profiles = forgeries
    calibration = DetectorCalibration(threshold=-1.0, target_tpr=0.9, scores_used=10)
    kept, kept_profiles, rejected = recheck_forgeries(results, profiles, calibration)
    assert kept == results
    assert kept_profiles == profiles
    assert rejected == []


def test_recheck_requires_aligned_inputs(forgeries):
    results, profiles = forgeries
    calibration = DetectorCalibration(threshold=0.0, target_tpr=0.9, scores_used=10)
    with pytest.raises(ParameterError):
        recheck_forgeries(results, profiles[:1], calibration)
