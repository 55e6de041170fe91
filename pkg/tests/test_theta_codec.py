import numpy as np
import pytest

from app.core.degradation.presets import DEGRADATION_PRESETS, sample_degradation
from app.core.degradation.theta_codec import (
    CONTINUOUS_INDICES,
    DISCRETE_INDICES,
    STAGE_SLOTS,
    THETA_DIM,
    decode_theta,
    decode_theta_with_repairs,
    encode_theta,
    null_theta,
    table_hash,
)
from app.core.errors import ParameterDomainError, ShapeMismatchError
from app.schemas.degradation import BlurKernelSpec, DegradationParams, StageParams


def slot(name, stage=0):
    return STAGE_SLOTS.index(name) + 18 * stage


def test_index_partition():
    assert len(DISCRETE_INDICES) == 16
    assert sorted(DISCRETE_INDICES + CONTINUOUS_INDICES) == list(range(THETA_DIM))


def test_null_theta_layout():
    theta = null_theta()
    assert theta.shape == (36,)
    for stage in (0, 1):
        assert theta[slot("k_g", stage)] == 0.0 and theta[slot("k_c", stage)] == 0.0
        assert theta[slot("k_s", stage)] == 0.0
        assert theta[slot("theta", stage)] == pytest.approx(0.5)
        assert theta[slot("r_area", stage)] == 1.0
        assert theta[slot("s", stage)] == pytest.approx(0.5)
        assert theta[slot("j", stage)] == 0.0
        assert theta[slot("q", stage)] == pytest.approx(1.0)


def _approx_nested(value):
    if isinstance(value, dict):
        return {key: _approx_nested(item) for key, item in value.items()}
    if isinstance(value, float):
        return pytest.approx(value, abs=1e-5)
    return value


@pytest.mark.parametrize("preset", sorted(DEGRADATION_PRESETS))
def test_preset_samples_roundtrip_without_repairs(preset):
    rng = np.random.default_rng(21)
    for _ in range(100):
        params = sample_degradation(preset, rng)
        theta = encode_theta(params)
        assert theta.min() >= 0.0 and theta.max() <= 1.0
        decoded, repairs = decode_theta_with_repairs(theta, params.target_sr_scale)
        assert repairs == []
        again = encode_theta(decoded)
        np.testing.assert_array_equal(again[DISCRETE_INDICES], theta[DISCRETE_INDICES])
        np.testing.assert_allclose(again[CONTINUOUS_INDICES], theta[CONTINUOUS_INDICES], atol=1e-6)
        for original, restored in ((params.stage1, decoded.stage1), (params.stage2, decoded.stage2)):
            assert (original.blur is None) == (restored.blur is None)
            if original.blur is not None:
                assert restored.blur.kind == original.blur.kind
                assert restored.blur.size == original.blur.size
            assert restored.jpeg == original.jpeg
            assert restored.resize.mode == original.resize.mode
            assert restored.kernel_noise == 0.0
            expected = original.model_dump(exclude={"kernel_noise"})
            assert restored.model_dump(exclude={"kernel_noise"}) == _approx_nested(expected)


def test_null_roundtrip():
    params = decode_theta(null_theta(), 2)
    assert params.target_sr_scale == 2
    assert params.stage1.is_identity and params.stage2.is_identity


def test_clamps_out_of_range_continuous_slots():
    theta = null_theta()
    theta[slot("sigma_g")] = 1.7
    theta[slot("q", 1)] = -0.3
    params, repairs = decode_theta_with_repairs(theta)
    assert params.stage1.noise.sigma_g == pytest.approx(30.0 / 255.0)
    assert params.stage2.jpeg.quality == 100
    assert any(r.startswith("stage1.sigma_g: clamped") for r in repairs)
    assert any(r.startswith("stage2.q") for r in repairs)


def test_resize_one_hot_repaired_by_argmax():
    theta = null_theta()
    theta[slot("r_area")], theta[slot("r_bil")], theta[slot("r_bic")] = 0.6, 0.7, 0.1
    params, repairs = decode_theta_with_repairs(theta)
    assert params.stage1.resize.mode == "bilinear"
    assert any("not one-hot" in r for r in repairs)


def test_kernel_invariants_repaired():
    theta = null_theta()
    theta[slot("k_g")], theta[slot("k_c")] = 0.9, 0.8
    theta[slot("k_s")] = 10.0 / 30.0
    theta[slot("omega_c")] = 0.5
    params, repairs = decode_theta_with_repairs(theta)
    blur = params.stage1.blur
    assert blur.kind == "gaussian" and blur.size == 11
    assert blur.omega_c == 0.0
    assert blur.sigma_x == pytest.approx(0.1) and blur.beta == pytest.approx(0.1)
    assert any("both flags set" in r for r in repairs)
    assert any("omega_c: zeroed" in r for r in repairs)


def test_non_finite_slot_is_replaced():
    theta = null_theta()
    theta[slot("s")] = np.nan
    params, repairs = decode_theta_with_repairs(theta)
    assert params.stage1.resize.scale == pytest.approx(0.5)
    assert any("non-finite" in r for r in repairs)


def test_shape_and_domain_errors():
    with pytest.raises(ShapeMismatchError):
        decode_theta(np.zeros(35))
    wide = DegradationParams(stage1=StageParams(blur=BlurKernelSpec.gaussian(7, 6.0, 1.0)))
    with pytest.raises(ParameterDomainError):
        encode_theta(wide)


def test_table_hash_is_stable():
    assert table_hash() == table_hash()
    assert len(table_hash()) == 64
