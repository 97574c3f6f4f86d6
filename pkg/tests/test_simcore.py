"""Tests for vector math and random streams."""
import math

import numpy as np
import pytest

from fetchworld.exceptions import DegenerateVector, InvalidRange
from fetchworld.simcore import Rng, Vec3, instance_seed, normalize, rng_uniform


def test_normalize_three_four_five():
    unit = normalize(Vec3(3.0, 0.0, 4.0))
    assert unit.as_tuple() == pytest.approx((0.6, 0.0, 0.8))


def test_normalize_unit_vector_unchanged():
    assert normalize(Vec3(0.0, 1.0, 0.0)) == Vec3(0.0, 1.0, 0.0)


def test_normalize_degenerate():
    with pytest.raises(DegenerateVector):
        normalize(Vec3(1e-12, 0.0, 0.0))


def test_normalize_random_vectors_are_unit():
    gen = np.random.default_rng(3)
    for values in gen.normal(size=(200, 3)) * 50:
        assert normalize(Vec3.from_iterable(values)).norm() == pytest.approx(1.0, abs=1e-12)


def test_vec3_arithmetic():
    a, b = Vec3(1.0, 2.0, 3.0), Vec3(0.5, -1.0, 2.0)
    assert a + b == Vec3(1.5, 1.0, 5.0)
    assert a - b == Vec3(0.5, 3.0, 1.0)
    assert 2 * a == Vec3(2.0, 4.0, 6.0)
    assert a.dot(b) == pytest.approx(0.5 - 2.0 + 6.0)
    assert Vec3(3.0, 7.0, 4.0).horizontal_distance(Vec3()) == pytest.approx(5.0)
    assert not Vec3(math.nan, 0.0, 0.0).is_finite()


def test_same_seed_same_stream():
    assert Rng(1).uniform(0.0, 1.0) == Rng(1).uniform(0.0, 1.0)
    a, b = Rng(99), Rng(99)
    assert [a.uniform(-3.0, 3.0) for _ in range(100)] == [b.uniform(-3.0, 3.0) for _ in range(100)]


def test_degenerate_interval():
    assert rng_uniform(Rng(5), 5.0, 5.0) == 5.0


def test_inverted_interval():
    with pytest.raises(InvalidRange):
        rng_uniform(Rng(5), 2.0, 1.0)


def test_uniform_stays_in_half_open_interval():
    rng = Rng(11)
    draws = [rng.uniform(-1.0, 1.0) for _ in range(10000)]
    assert min(draws) >= -1.0
    assert max(draws) < 1.0


def test_spawned_streams_differ_and_repeat():
    root = Rng(42)
    a = root.spawn(0).random(8)
    b = root.spawn(1).random(8)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, Rng(42).spawn(0).random(8))
    assert root.spawn("policy").seed == instance_seed(42, "policy")


def test_torch_seed_is_deterministic():
    assert Rng(3).torch_seed() == Rng(3).torch_seed()
    assert 0 <= Rng(3).torch_seed() < 2**63
