import math

import numpy as np

from app.core import selfcheck
from app.core.selfcheck import CheckResult, check_codec, check_gradients, check_jpeg, check_kernels, format_results


def test_gradient_checks_pass():
    results = check_gradients(seed=3)
    assert len(results) == 19
    assert all(result.passed for result in results), [r for r in results if not r.passed]


def test_broken_backward_is_detected(mocker):
    mocker.patch(
        "app.core.autodiff.ops.pad2d_adjoint",
        side_effect=lambda grad, pad, mode, height, width: np.zeros(grad.shape[:2] + (height, width)),
    )
    failed = {result.name for result in check_gradients() if not result.passed}
    assert {"conv2d zero", "conv2d reflect"} <= {name.removeprefix("grad ") for name in failed}


def test_kernel_codec_and_jpeg_checks_pass():
    for result in check_kernels() + check_codec(samples=60) + check_jpeg():
        assert result.passed, result


def test_check_result_bounds():
    assert CheckResult("x", 0.5, 1.0).passed
    assert not CheckResult("x", 1.5, 1.0).passed
    assert CheckResult("x", 60.0, 50.0, bound="min").passed
    assert not CheckResult("x", math.nan, 1.0).passed


def test_run_and_format(mocker):
    mocker.patch.object(selfcheck, "check_gradients", return_value=[CheckResult("grad stub", 0.0, 1e-4)])
    results = selfcheck.run_selfcheck(seed=1)
    assert results[0].name == "grad stub"
    table = format_results(results + [CheckResult("broken", 2.0, 1.0)])
    assert "PASS" in table and "FAIL" in table and "broken" in table
