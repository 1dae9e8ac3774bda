# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import numpy as np
import pytest

from pooled_triangle.errors import ParameterError
from pooled_triangle.prnu_core import DenoiserConfig, normalized_correlation, residual
from pooled_triangle.sensor_sim import (
    CONTENT_HIGH,
    CONTENT_LOW,
    CameraProfile,
    ContentField,
    ContentKind,
    Image,
    central_crop,
    generate_content,
    generate_prnu,
    make_camera,
    quantize,
    render_batch,
    render_image,
)


def test_generate_prnu_is_deterministic():
    a = generate_prnu((2, 2), 0.02, seed=11)
    b = generate_prnu((2, 2), 0.02, seed=11)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, generate_prnu((2, 2), 0.02, seed=12))


def test_generate_prnu_moments():
    k = generate_prnu((256, 256), 0.02, seed=0)
    assert 0.018 <= k.std() <= 0.022
    assert abs(k.mean()) < 1e-12


@pytest.mark.parametrize("sigma_k", [0, -0.1])
def test_generate_prnu_rejects_bad_sigma(sigma_k):
    with pytest.raises(ParameterError):
        generate_prnu((2, 2), sigma_k, seed=0)


def test_generate_prnu_rejects_bad_dims():
    with pytest.raises(ParameterError):
        generate_prnu((0, 3), 0.02, seed=0)


def test_flat_content():
    content = generate_content((3, 4), "flat", level=128)
    assert content.kind is ContentKind.flat
    assert np.all(content.values == 128)


def test_gradient_content_spans_level():
    content = generate_content((1, 3), ContentKind.gradient, level=255)
    np.testing.assert_allclose(content.values, [[0, 127.5, 255]])


def test_smooth_content_range_and_determinism():
    a = generate_content((64, 64), "smooth-random", seed=3, smoothing_radius=4.0)
    b = generate_content((64, 64), "smooth-random", seed=3, smoothing_radius=4.0)
    np.testing.assert_array_equal(a.values, b.values)
    assert (CONTENT_LOW, CONTENT_HIGH) == pytest.approx((51, 204))
    assert a.values.min() >= CONTENT_LOW
    assert a.values.max() <= CONTENT_HIGH


def test_unknown_content_kind():
    with pytest.raises(ParameterError):
        generate_content((4, 4), "checkerboard")


def test_quantize_rounds_half_up_and_clips():
    out = quantize(np.array([[0.5, 1.49, 254.6, 300.0, -3.0]]))
    np.testing.assert_array_equal(out, [[1, 1, 255, 255, 0]])
    assert out.dtype == np.uint8


def _camera(prnu, theta_sigma=0.0):
    return CameraProfile(
        id="T", dims=prnu.shape, prnu=prnu, theta_sigma=theta_sigma, seed=0
    )


def test_identity_sensor():
    camera = _camera(np.zeros((4, 4)))
    content = generate_content((4, 4), "flat", level=100)
    image = render_image(camera, content, noise_seed=0)
    assert np.all(image.pixels == 100)
    assert image.source_id == "T"


def test_single_pixel_gain():
    prnu = np.zeros((3, 3))
    prnu[1, 2] = 0.05
    image = render_image(_camera(prnu), generate_content((3, 3), "flat", 200), 0)
    assert image.pixels[1, 2] == 210
    assert np.count_nonzero(image.pixels != 200) == 1


def test_noiseless_flatfield_exactness():
    prnu = generate_prnu((16, 16), 0.02, seed=5)
    image = render_image(_camera(prnu), generate_content((16, 16), "flat", 150), 9)
    np.testing.assert_array_equal(image.pixels, quantize(150 * (1 + prnu)))


def test_render_dims_mismatch():
    with pytest.raises(ParameterError):
        render_image(_camera(np.zeros((4, 4))), generate_content((4, 5), "flat"), 0)


def test_render_is_deterministic_in_noise_seed():
    camera = make_camera("C", (8, 8), seed=1)
    content = generate_content((8, 8), "flat", 120)
    a = render_image(camera, content, 3)
    np.testing.assert_array_equal(a.pixels, render_image(camera, content, 3).pixels)
    assert not np.array_equal(a.pixels, render_image(camera, content, 4).pixels)


def test_camera_profile_checks_shape():
    with pytest.raises(ParameterError):
        CameraProfile(id="x", dims=(2, 2), prnu=np.zeros((3, 3)), theta_sigma=0, seed=0)
    with pytest.raises(ParameterError):
        CameraProfile(
            id="x", dims=(2, 2), prnu=np.zeros((2, 2)), theta_sigma=-1, seed=0
        )


def test_image_validation():
    with pytest.raises(ParameterError):
        Image(pixels=np.full((2, 2), 256))
    with pytest.raises(ParameterError):
        Image(pixels=np.full((2, 2), 1.5))
    with pytest.raises(ParameterError):
        Image(pixels=np.zeros(4))
    assert Image(pixels=np.full((2, 3), 7.0)).dims == (2, 3)


def test_content_field_range():
    with pytest.raises(ParameterError):
        ContentField(values=np.full((2, 2), 300.0), kind=ContentKind.flat)


def _numbered(rows, cols):
    return Image(pixels=np.arange(rows * cols).reshape(rows, cols), image_id="n")


def test_central_crop_even_margins():
    cropped = central_crop(_numbered(4, 4), (2, 2))
    np.testing.assert_array_equal(cropped.pixels, [[5, 6], [9, 10]])
    assert cropped.image_id == "n"


def test_central_crop_odd_margins_drop_bottom_right():
    cropped = central_crop(_numbered(5, 5), (2, 2))
    np.testing.assert_array_equal(cropped.pixels, [[6, 7], [11, 12]])


def test_central_crop_identity():
    image = _numbered(3, 5)
    np.testing.assert_array_equal(central_crop(image, (3, 5)).pixels, image.pixels)


def test_central_crop_larger_target():
    with pytest.raises(ParameterError):
        central_crop(_numbered(3, 3), (4, 3))


def test_render_batch_ids_and_determinism():
    camera = make_camera("C", (16, 16), seed=2)
    kwargs = dict(seed=8, role_tag="public", id_prefix="p")
    a = render_batch(camera, 3, "smooth-random", **kwargs)
    b = render_batch(camera, 3, "smooth-random", **kwargs)
    assert [im.image_id for im in a] == ["p-00000", "p-00001", "p-00002"]
    assert all(im.role_tag == "public" for im in a)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.pixels, y.pixels)


def test_residual_recovers_planted_prnu():
    own = make_camera("own", (64, 64), sigma_k=0.02, theta_sigma=2.0, seed=21)
    other = make_camera("other", (64, 64), sigma_k=0.02, theta_sigma=2.0, seed=22)
    config = DenoiserConfig(levels=3)

    def score(image):
        return normalized_correlation(
            residual(image, config).values, image.values * own.prnu
        )

    own_scores = [score(im) for im in render_batch(own, 25, "smooth-random", seed=1)]
    other_scores = [
        score(im) for im in render_batch(other, 25, "smooth-random", seed=1)
    ]
    assert np.mean(own_scores) > np.mean(other_scores)
    assert min(own_scores) > max(other_scores)


def test_noiseless_residual_correlation_is_strong():
    camera = make_camera("c", (256, 256), sigma_k=0.02, theta_sigma=0.0, seed=4)
    config = DenoiserConfig()
    scores = [
        normalized_correlation(residual(im, config).values, im.values * camera.prnu)
        for im in render_batch(camera, 20, "smooth-random", seed=2)
    ]
    assert np.mean(scores) > 0.3
