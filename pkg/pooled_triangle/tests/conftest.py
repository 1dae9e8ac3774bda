# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import pytest

from pooled_triangle.prnu_core import DenoiserConfig, Owner, estimate_fingerprint
from pooled_triangle.sensor_sim import make_camera, render_batch


DIMS = (64, 64)


# Linear denoiser: residual strength scales with the implanted pattern
@pytest.fixture(scope="session")
def blur():
    return DenoiserConfig(kind="gaussian-blur", blur_sigma=1.0)


@pytest.fixture(scope="session")
def wavelet():
    return DenoiserConfig(levels=3)


@pytest.fixture(scope="session")
def camera_a():
    return make_camera("A", DIMS, sigma_k=0.02, theta_sigma=2.0, seed=1)


@pytest.fixture(scope="session")
def camera_b():
    return make_camera("B", DIMS, sigma_k=0.02, theta_sigma=2.0, seed=2)


@pytest.fixture(scope="session")
def flatfields(camera_a):
    return render_batch(
        camera_a, 10, "flat", seed=3, role_tag="flatfield", id_prefix="flat"
    )


@pytest.fixture(scope="session")
def alice_fingerprint(flatfields, blur):
    return estimate_fingerprint(flatfields, blur, owner=Owner.alice)


@pytest.fixture(scope="session")
def public_a(camera_a):
    return render_batch(
        camera_a, 12, "smooth-random", seed=4, role_tag="public", id_prefix="public"
    )


@pytest.fixture(scope="session")
def genuine_a(camera_a):
    return render_batch(
        camera_a, 8, "smooth-random", seed=5, role_tag="h0_test", id_prefix="h0"
    )


@pytest.fixture(scope="session")
def sources_b(camera_b):
    return render_batch(
        camera_b, 4, "smooth-random", seed=6, role_tag="attack_source", id_prefix="src"
    )

