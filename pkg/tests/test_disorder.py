import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from randfield_mf.disorder import (
    DistributionError,
    FieldDistribution,
    FieldRealization,
    bbar,
    mean_field_vector,
    sample_fields,
    standard_normals,
)

ALL_KINDS = [
    FieldDistribution.point_mass((0.3, -0.2, 1.0)),
    FieldDistribution.axis_dichotomous("x", 0.7, 0.3),
    FieldDistribution.gaussian((0.1, 0.0, -0.5), 0.8),
    FieldDistribution.uniform_box((-1, 0, 0.5), (1, 2, 0.5)),
    FieldDistribution.empirical([(0, 0, 1), (1, 1, 0), (0, -2, 0)], [0.2, 0.5, 0.3]),
]


def test_point_mass_sample():
    r = sample_fields(FieldDistribution.point_mass((0, 0, 1)), 3, seed=1)
    np.testing.assert_array_equal(r.fields, np.tile([0.0, 0.0, 1.0], (3, 1)))


def test_dichotomous_mean_within_clt_band():
    r = sample_fields(FieldDistribution.axis_dichotomous("z", 1.0, 0.5), 10_000, seed=2024)
    assert abs(r.fields[:, 2].mean()) <= 4 / np.sqrt(10_000)
    assert set(np.unique(r.fields[:, 2])) == {-1.0, 1.0}
    assert not np.any(r.fields[:, :2])


@pytest.mark.parametrize("dist", ALL_KINDS, ids=lambda d: d.kind)
def test_sampling_is_deterministic(dist):
    a = sample_fields(dist, 50, seed=77)
    b = sample_fields(dist, 50, seed=77)
    assert a.fields.tobytes() == b.fields.tobytes()
    c = sample_fields(dist, 50, seed=78)
    if dist.kind != "point_mass":
        assert a.fields.tobytes() != c.fields.tobytes()


@pytest.mark.parametrize("dist", ALL_KINDS, ids=lambda d: d.kind)
def test_prefix_property(dist):
    long = sample_fields(dist, 12, seed=5)
    short = sample_fields(dist, 8, seed=5)
    np.testing.assert_array_equal(short.fields, long.fields[:8])
    np.testing.assert_array_equal(long.prefix(8).fields, short.fields)


@pytest.mark.parametrize("dist", ALL_KINDS, ids=lambda d: d.kind)
def test_empirical_mean_within_five_standard_errors(dist):
    n = 100_000
    r = sample_fields(dist, n, seed=9)
    mu = mean_field_vector(dist)
    se = r.fields.std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(r.fields.mean(axis=0) - mu) <= 5 * se + 1e-12)


def test_mean_field_vector_examples():
    np.testing.assert_array_equal(mean_field_vector(FieldDistribution.point_mass((0, 0, 1))), [0, 0, 1])
    np.testing.assert_array_equal(mean_field_vector(FieldDistribution.axis_dichotomous("z", 2.5, 0.5)), [0, 0, 0])
    np.testing.assert_allclose(mean_field_vector(FieldDistribution.uniform_box()), [0.5, 0.5, 0.5])


@pytest.mark.parametrize("dist", ALL_KINDS, ids=lambda d: d.kind)
def test_mean_field_vector_finite(dist):
    assert np.all(np.isfinite(mean_field_vector(dist)))


def test_bbar_examples():
    assert bbar(sample_fields(FieldDistribution.point_mass((0, 0, 1)), 5, 0)) == 1.0
    assert bbar(sample_fields(FieldDistribution.empirical([(0, 0, 2)], [1.0]), 3, 0)) == 2.0
    for seed in range(5):
        r = sample_fields(FieldDistribution.axis_dichotomous("z", 0.7), 9, seed)
        assert bbar(r) == pytest.approx(0.7, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(*[st.floats(-5, 5)] * 3), min_size=1, max_size=10))
def test_bbar_nonnegative_and_matches_definition(fields):
    r = FieldRealization.from_fields(fields)
    b = bbar(r)
    assert b >= 0
    assert b == pytest.approx(np.mean([np.linalg.norm(f) for f in fields]), abs=1e-12)


@pytest.mark.parametrize(
    "build",
    [
        lambda: FieldDistribution.axis_dichotomous("w"),
        lambda: FieldDistribution.axis_dichotomous("z", 1.0, 1.5),
        lambda: FieldDistribution.gaussian((0, 0, 0), -1.0),
        lambda: FieldDistribution.uniform_box((1, 0, 0), (0, 1, 1)),
        lambda: FieldDistribution.empirical([(0, 0, 1), (1, 0, 0)], [0.5, 0.6]),
        lambda: FieldDistribution.empirical([(0, 0, 1)], [-1.0]),
        lambda: FieldDistribution.empirical([]),
        lambda: FieldDistribution.point_mass((0, np.inf, 0)),
    ],
)
def test_invalid_parameters_rejected(build):
    with pytest.raises(DistributionError):
        build()


def test_sample_fields_requires_positive_N():
    with pytest.raises(ValueError):
        sample_fields(FieldDistribution.point_mass(), 0, 1)


@pytest.mark.parametrize("dist", ALL_KINDS, ids=lambda d: d.kind)
def test_dict_roundtrip(dist):
    assert FieldDistribution.from_dict(dist.to_dict()) == dist


def test_from_dict_rejects_unknown():
    with pytest.raises(DistributionError):
        FieldDistribution.from_dict({"kind": "cauchy"})
    with pytest.raises(DistributionError):
        FieldDistribution.from_dict({"kind": "gaussian", "sigma": 1, "nu": 2})


def test_json_example_config():
    d = FieldDistribution.from_dict({"kind": "axis_dichotomous", "axis": "z", "eps": 1.0, "p": 0.5})
    assert d == FieldDistribution.axis_dichotomous("z", 1.0, 0.5)


def test_gaussian_components_standard():
    z = standard_normals(3, 7, 200_000)
    assert np.all(np.isfinite(z))
    assert abs(z.mean()) < 5 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 0.02


def test_field_and_tilt_streams_do_not_alias():
    a = standard_normals(11, 0, 8)
    b = standard_normals(11, 1, 8)
    assert not np.allclose(a, b)


def test_realization_is_read_only():
    r = sample_fields(FieldDistribution.gaussian(), 4, 0)
    with pytest.raises(ValueError):
        r.fields[0, 0] = 1.0
