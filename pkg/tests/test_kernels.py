"""Kernel correctness and pure/compiled agreement."""

import math

import numpy as np
import pytest

import refimpl
from ccd import kernels

IMPLS = sorted(kernels.implementations())
RTOL = 0.0
ATOL = 1e-9


def _impl(name):
    return kernels.implementations()[name]


def _random_vectors(seed=42, count=24):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = int(rng.integers(2, 2000))
        scale = float(rng.choice([0.3, 1.0, 5.0, 30.0]))
        out.append(rng.normal(0.0, scale, size=n))
    # edge shapes: ties, constants, a two-element vector
    out.append(np.zeros(8))
    out.append(np.array([5.0, 5.0, 5.0, -2.0]))
    out.append(np.array([1.0, 1.0]))
    return out


def test_both_implementations_present():
    assert set(kernels.implementations()) == {"pure", "fast"}
    assert kernels.implementation() in {"pure", "fast"}


@pytest.mark.parametrize("impl", IMPLS)
def test_confidence_frozen_values(impl):
    m = _impl(impl)
    assert m.token_confidence(np.array([10.0, 0.0, 0.0, 0.0]), 3) == pytest.approx(
        6.666802857181605, abs=1e-12
    )
    # two equal leaders, k=2: exactly ln 2
    assert m.token_confidence(np.array([5.0, 5.0]), 2) == pytest.approx(
        math.log(2), abs=1e-12
    )
    # uniform four-way, k=4: exactly ln 4
    assert m.token_confidence(np.full(4, 3.25), 4) == pytest.approx(
        math.log(4), abs=1e-12
    )


@pytest.mark.parametrize("impl", IMPLS)
def test_entropy_frozen_values(impl):
    m = _impl(impl)
    assert m.entropy(np.array([1.0, 2.0, 3.0])) == pytest.approx(
        0.8323955818399389, abs=1e-12
    )
    assert m.entropy(np.zeros(8)) == pytest.approx(math.log(8), abs=1e-12)


@pytest.mark.parametrize("impl", IMPLS)
def test_margin_and_fuse_frozen_values(impl):
    m = _impl(impl)
    assert m.top_margin(np.array([0.0, 5.0, 3.0])) == 2.0
    assert m.top_margin(np.array([4.0, 4.0, 1.0])) == 0.0
    fused = m.fuse(np.array([2.0, 1.0]), np.array([1.5, 1.5]), 1.0)
    np.testing.assert_array_equal(fused, [2.5, 0.5])


@pytest.mark.parametrize("impl", IMPLS)
def test_clamp(impl):
    m = _impl(impl)
    x = np.array([0.5, -2e4, 1e4])
    clipped, hit = m.clamp(x, 1e4)
    np.testing.assert_array_equal(clipped, [0.5, -1e4, 1e4])
    assert hit is True
    same, hit = m.clamp(np.array([1.0, -1.0]), 1e4)
    np.testing.assert_array_equal(same, [1.0, -1.0])
    assert hit is False


@pytest.mark.parametrize("impl", IMPLS)
def test_kernels_match_reference(impl):
    m = _impl(impl)
    for x in _random_vectors():
        x = np.ascontiguousarray(x, dtype=np.float64)
        for k in (1, 2, 5, x.size, x.size + 10):
            assert m.token_confidence(x, k) == pytest.approx(
                refimpl.confidence(x, k), rel=RTOL, abs=ATOL
            )
        assert m.entropy(x) == pytest.approx(refimpl.entropy(x), abs=ATOL)
        assert m.top_margin(x) == pytest.approx(refimpl.top_margin(x), abs=ATOL)
        other = np.roll(x, 1)
        np.testing.assert_allclose(
            m.fuse(x, other, 0.7), refimpl.fuse(x, other, 0.7), atol=ATOL
        )


def test_pure_and_fast_agree_exactly():
    impls = kernels.implementations()
    pure, fast = impls["pure"], impls["fast"]
    for x in _random_vectors(seed=7):
        x = np.ascontiguousarray(x, dtype=np.float64)
        for k in (1, 3, x.size):
            assert pure.token_confidence(x, k) == pytest.approx(
                fast.token_confidence(x, k), abs=1e-9
            )
        assert pure.entropy(x) == pytest.approx(fast.entropy(x), abs=1e-9)
        assert pure.top_margin(x) == fast.top_margin(x)
        np.testing.assert_allclose(
            pure.fuse(x, np.roll(x, 3), 0.5), fast.fuse(x, np.roll(x, 3), 0.5), atol=0
        )
        pc, pf = pure.clamp(x * 1e5, 1e4)
        fc, ff = fast.clamp(x * 1e5, 1e4)
        np.testing.assert_array_equal(pc, fc)
        assert pf == ff


def test_softmax_and_logsumexp_consistency():
    active = kernels
    x = np.random.default_rng(3).normal(0.0, 2.0, size=50)
    p = active.softmax(x)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(p >= 0)
    assert active.logsumexp(x) == pytest.approx(
        math.log(np.exp(x - x.max()).sum()) + x.max(), abs=1e-12
    )
    np.testing.assert_allclose(np.log(p), active.log_softmax(x), atol=1e-12)


def test_confidence_extreme_mask_values_stay_finite():
    # Large negative mask entries must not produce nan/inf via underflow.
    x = np.full(100, -1e9)
    x[:3] = [2.0, 1.0, 0.0]
    for impl in IMPLS:
        v = _impl(impl).token_confidence(np.ascontiguousarray(x), 3)
        assert math.isfinite(v)


def test_env_override_selects_implementation(tmp_path):
    import subprocess
    import sys

    for forced in ("pure", "fast"):
        code = (
            "from ccd import kernels; "
            f"assert kernels.implementation() == '{forced}', kernels.implementation()"
        )
        subprocess.run(
            [sys.executable, "-c", code],
            check=True,
            env={"PATH": "/usr/bin:/bin", "CCD_KERNELS": forced},
        )
