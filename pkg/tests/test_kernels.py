import math

import numpy as np
import pytest
from scipy import special

from app.core import kernels
from app.core.errors import DegenerateKernelError, ParameterDomainError
from app.schemas.degradation import BlurKernelSpec


def test_gaussian_unnormalized_values_3x3():
    k = kernels.synth_gaussian_kernel(1.0, 1.0, 0.0, 1.0, 3, normalize=False)
    assert k[1, 1] == pytest.approx(1.0)
    for i, j in [(0, 1), (1, 0), (1, 2), (2, 1)]:
        assert k[i, j] == pytest.approx(math.exp(-0.5), abs=1e-12)
    for i, j in [(0, 0), (0, 2), (2, 0), (2, 2)]:
        assert k[i, j] == pytest.approx(math.exp(-1.0), abs=1e-12)


def test_gaussian_normalized_matches_pointwise_formula():
    raw = np.array([[math.exp(-0.5 * (x * x + y * y) / 4.0) for x in range(-2, 3)] for y in range(-2, 3)])
    k = kernels.synth_gaussian_kernel(2.0, 2.0, 0.0, 1.0, 5)
    np.testing.assert_allclose(k, raw / raw.sum(), atol=1e-12)


def test_isotropic_gaussian_ignores_rotation():
    base = kernels.synth_gaussian_kernel(1.7, 1.7, 0.0, 1.3, 11)
    for theta in (0.3, 1.2, -2.5, math.pi):
        np.testing.assert_allclose(kernels.synth_gaussian_kernel(1.7, 1.7, theta, 1.3, 11), base, atol=1e-12)


def test_anisotropic_gaussian_major_axis_follows_theta():
    k = kernels.synth_gaussian_kernel(2.0, 0.8, math.pi / 4, 1.0, 21)
    m_xx, m_xy, m_yy = kernels.second_moments(k)
    angle = 0.5 * math.atan2(2.0 * m_xy, m_xx - m_yy)
    assert angle == pytest.approx(math.pi / 4, abs=1e-6)
    assert m_xy > 0


def test_plateau_center_and_edge():
    k = kernels.synth_plateau_kernel(1.0, 1.0, 0.0, 1.0, 3, normalize=False)
    assert k[1, 1] == 1.0
    assert k[0, 1] == pytest.approx(0.5)
    for sx, sy, theta, beta in [(0.5, 3.0, 1.0, 2.0), (2.0, 2.0, -0.4, 0.7)]:
        assert kernels.synth_plateau_kernel(sx, sy, theta, beta, 7, normalize=False)[3, 3] == 1.0


def test_plateau_has_flatter_top_than_gaussian():
    plateau = kernels.synth_plateau_kernel(2.0, 2.0, 0.0, 4.0, 7)
    gaussian = kernels.synth_gaussian_kernel(2.0, 2.0, 0.0, 1.0, 7)
    assert plateau[3, 4] / plateau[3, 3] > gaussian[3, 4] / gaussian[3, 3]


def test_sinc_center_is_analytic_limit():
    for omega in (0.5, 1.0, math.pi):
        k = kernels.synth_sinc_kernel(omega, 9, normalize=False)
        assert k[4, 4] == pytest.approx(omega * omega / (4.0 * math.pi), rel=1e-12)


def test_sinc_matches_scipy_bessel_pointwise():
    omega, size = 2.0, 11
    k = kernels.synth_sinc_kernel(omega, size, normalize=False)
    half = size // 2
    for i in range(size):
        for j in range(size):
            r = math.hypot(i - half, j - half)
            expected = omega * omega / (4 * math.pi) if r == 0 else omega * special.j1(omega * r) / (2 * math.pi * r)
            assert k[i, j] == pytest.approx(expected, abs=1e-9)


def test_sinc_full_band_center_dominates_and_is_symmetric():
    k = kernels.synth_sinc_kernel(math.pi, 21)
    assert np.abs(k).max() == k[10, 10]
    np.testing.assert_array_equal(k, k.T)
    np.testing.assert_array_equal(k, k[:, ::-1])
    assert k.sum() == pytest.approx(1.0, abs=1e-6)


def test_bessel_j1_values():
    assert kernels.bessel_j1(0.0) == 0.0
    assert kernels.bessel_j1(1.0) == pytest.approx(0.4400505857, abs=1e-10)
    xs = np.linspace(0.1, 30.0, 57)
    np.testing.assert_allclose(kernels.bessel_j1(-xs), -kernels.bessel_j1(xs), atol=0)


def test_bessel_j1_matches_scipy_up_to_100():
    xs = np.linspace(0.0, 100.0, 20001)
    assert np.max(np.abs(kernels.bessel_j1(xs) - special.j1(xs))) <= 1e-8


@pytest.mark.parametrize(
    "kernel",
    [
        kernels.synth_gaussian_kernel(2.3, 0.9, 0.7, 1.0, 15),
        kernels.synth_gaussian_kernel(1.1, 3.0, -2.2, 2.5, 21),
        kernels.synth_plateau_kernel(1.5, 0.6, 1.9, 1.4, 13),
        kernels.synth_sinc_kernel(1.3, 17),
    ],
)
def test_analytic_kernels_sum_to_one_and_are_point_symmetric(kernel):
    assert kernel.sum() == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_array_equal(kernel, kernel[::-1, ::-1])


def test_gaussian_decays_along_axes():
    k = kernels.synth_gaussian_kernel(2.5, 1.2, 0.0, 1.0, 15)
    center = 7
    for ray in (k[center, center:], k[center, center::-1], k[center:, center], k[center::-1, center]):
        assert np.all(np.diff(ray) <= 0)


def test_kernel_noise_identity_at_zero_strength(rng):
    k = kernels.synth_gaussian_kernel(2.0, 1.0, 0.3, 1.0, 11)
    np.testing.assert_array_equal(kernels.apply_kernel_noise(k, 0.0, rng), k)


def test_kernel_noise_is_normalized_and_deterministic():
    k = kernels.synth_gaussian_kernel(2.0, 1.0, 0.3, 1.0, 11)
    first = kernels.apply_kernel_noise(k, 0.25, np.random.default_rng(7))
    second = kernels.apply_kernel_noise(k, 0.25, np.random.default_rng(7))
    np.testing.assert_array_equal(first, second)
    assert first.sum() == pytest.approx(1.0, abs=1e-6)
    ratio = first / k
    assert ratio.max() / ratio.min() <= 1.25 / 0.75 + 1e-9


def test_kernel_noise_rejects_bad_strength(rng):
    k = kernels.pulse_kernel(3)
    with pytest.raises(ParameterDomainError):
        kernels.apply_kernel_noise(k, 1.5, rng)
    with pytest.raises(ParameterDomainError):
        kernels.apply_kernel_noise(k, -0.1, rng)


def test_normalize_kernel():
    np.testing.assert_allclose(kernels.normalize_kernel(np.full((5, 5), 5.0)), np.full((5, 5), 1 / 25))
    k = kernels.synth_gaussian_kernel(1.0, 1.0, 0.0, 1.0, 5)
    np.testing.assert_allclose(kernels.normalize_kernel(k), k, atol=1e-15)
    raw = kernels.synth_sinc_kernel(math.pi, 15, normalize=False)
    normalized = kernels.normalize_kernel(raw)
    assert normalized.sum() == pytest.approx(1.0, abs=1e-12)
    assert (raw < 0).any()
    np.testing.assert_array_equal(np.sign(normalized), np.sign(raw))


def test_normalize_kernel_rejects_zero_sum():
    with pytest.raises(DegenerateKernelError):
        kernels.normalize_kernel(np.array([[1.0, -1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]))


@pytest.mark.parametrize(
    "call",
    [
        lambda: kernels.synth_gaussian_kernel(1.0, 1.0, 0.0, 1.0, 4),
        lambda: kernels.synth_gaussian_kernel(-1.0, 1.0, 0.0, 1.0, 5),
        lambda: kernels.synth_gaussian_kernel(1.0, 1.0, 0.0, 0.0, 5),
        lambda: kernels.synth_plateau_kernel(1.0, 0.0, 0.0, 1.0, 5),
        lambda: kernels.synth_sinc_kernel(0.0, 5),
        lambda: kernels.synth_sinc_kernel(3.5, 5),
        lambda: kernels.synth_sinc_kernel(1.0, 1),
    ],
)
def test_domain_errors(call):
    with pytest.raises(ParameterDomainError):
        call()


def test_sample_kernel_spec_blurry_presets(rng):
    for _ in range(20):
        spec = kernels.sample_kernel_spec("blurry_x4", rng)
        assert spec.size == 31 and spec.kind == "gaussian" and spec.beta == 1.0
    sigmas = np.array([kernels.sample_kernel_spec("blurry_x2", rng).sigma_x for _ in range(5000)])
    assert sigmas.min() >= 0.6 and sigmas.max() < 5.0


def test_sample_kernel_spec_real_stage_invariants(rng):
    kinds = set()
    for _ in range(500):
        spec = kernels.sample_kernel_spec("real_stage1", rng)
        kinds.add(spec.kind)
        assert spec.size % 2 == 1 and 7 <= spec.size <= 21
        if spec.kind == "sinc":
            assert spec.sigma_x == spec.sigma_y == spec.theta == spec.beta == 0.0
            assert math.pi / 3 <= spec.omega_c <= math.pi
        else:
            assert spec.omega_c == 0.0
    assert kinds == {"gaussian", "plateau", "sinc"}


def test_sample_kernel_spec_unknown_preset(rng):
    with pytest.raises(ParameterDomainError):
        kernels.sample_kernel_spec("motion", rng)


def test_kernel_from_spec_dispatch(rng):
    gaussian = BlurKernelSpec.gaussian(9, 1.5, 0.7, 0.4, 1.2)
    np.testing.assert_array_equal(
        kernels.kernel_from_spec(gaussian), kernels.synth_gaussian_kernel(1.5, 0.7, 0.4, 1.2, 9)
    )
    plateau = BlurKernelSpec.plateau(7, 1.0, 2.0, -0.3, 1.5)
    np.testing.assert_array_equal(kernels.kernel_from_spec(plateau), kernels.synth_plateau_kernel(1.0, 2.0, -0.3, 1.5, 7))
    sinc = BlurKernelSpec.sinc(11, 2.0)
    np.testing.assert_array_equal(kernels.kernel_from_spec(sinc), kernels.synth_sinc_kernel(2.0, 11))
    noisy = kernels.kernel_from_spec(gaussian, 0.25, rng)
    assert noisy.sum() == pytest.approx(1.0, abs=1e-6)


def test_blur_kernel_spec_invariants():
    with pytest.raises(ValueError):
        BlurKernelSpec(kind="sinc", size=5, omega_c=1.0, sigma_x=1.0)
    with pytest.raises(ValueError):
        BlurKernelSpec(kind="gaussian", size=5, sigma_x=1.0, sigma_y=1.0, beta=1.0, omega_c=1.0)
    with pytest.raises(ValueError):
        BlurKernelSpec(kind="gaussian", size=6, sigma_x=1.0, sigma_y=1.0, beta=1.0)
