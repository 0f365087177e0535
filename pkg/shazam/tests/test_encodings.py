import math

import numpy as np
import pytest

from shazam.encodings import (
    EncodingScheme, cyclical, encoding_channels, encoding_day, linear_time_encoding,
    positional_encoding, seasonal_encoding,
)
from shazam.errors import EncodingError
from shazam.models import AblationSwitches, EncodingVector


def test_seasonal_full_cycle():
    s, c = seasonal_encoding(365)
    assert abs(s) < 1e-12
    assert abs(c - 1.0) < 1e-12


def test_seasonal_day_91():
    s, c = seasonal_encoding(91)
    angle = 2 * math.pi * 91 / 365
    assert s == pytest.approx(math.sin(angle), abs=1e-12)
    assert c == pytest.approx(math.cos(angle), abs=1e-12)
    assert s > 0.9999 and 0 < c < 0.005


def test_seasonal_adjacency_across_new_year():
    late_dec, early_jan, mid_year = (np.array(seasonal_encoding(t)) for t in (350, 5, 183))
    assert np.linalg.norm(late_dec - early_jan) < np.linalg.norm(late_dec - mid_year)


def test_seasonal_periodic_and_injective():
    for t in (1, 100, 200, 365):
        assert np.allclose(cyclical(t), cyclical(t + 365), atol=1e-12)
    codes = {tuple(np.round(seasonal_encoding(t), 12)) for t in range(1, 366)}
    assert len(codes) == 365


@pytest.mark.parametrize("t", [0, 366, -3])
def test_seasonal_out_of_range(t):
    with pytest.raises(EncodingError):
        seasonal_encoding(t)


def test_leap_day_maps_to_365():
    assert encoding_day(366) == 365
    assert encoding_day(1) == 1
    with pytest.raises(EncodingError):
        encoding_day(367)


def test_positional():
    assert positional_encoding(0, 0, 32) == (0.0, 0.0)
    assert positional_encoding(16, 8, 32) == (0.5, 0.25)
    with pytest.raises(EncodingError):
        positional_encoding(32, 0, 32)


def test_linear_time_endpoints():
    assert linear_time_encoding(1) == 0.0
    assert linear_time_encoding(365) == 1.0


def test_encoding_channels_constant_planes():
    vec = EncodingVector(t_sin=0.0, t_cos=1.0, p_row=0.5, p_col=0.25)
    planes = encoding_channels(vec, 32)
    assert planes.shape == (4, 32, 32)
    assert np.all(planes.reshape(4, -1).var(axis=1) == 0)
    assert planes[2].mean() == pytest.approx(0.5)


@pytest.mark.parametrize(
    "switches, order",
    [
        ({}, ["t_sin", "t_cos", "p_row", "p_col"]),
        ({"no_position": True}, ["t_sin", "t_cos"]),
        ({"linear_time": True}, ["t_lin", "p_row", "p_col"]),
        ({"linear_time": True, "no_position": True}, ["t_lin"]),
    ],
)
def test_scheme_order_follows_ablations(switches, order):
    scheme = EncodingScheme.from_ablation(AblationSwitches(**switches))
    assert scheme.order == order
    assert EncodingScheme.from_order(order) == scheme
    assert scheme.values(100, 1, 2, 4, 4).shape == (len(order),)


def test_scheme_values_default():
    values = EncodingScheme().values(91, 1, 3, 4, 4)
    expected = [math.sin(2 * math.pi * 91 / 365), math.cos(2 * math.pi * 91 / 365), 0.25, 0.75]
    assert np.allclose(values, expected, atol=1e-6)


def test_unknown_order_rejected():
    with pytest.raises(EncodingError):
        EncodingScheme.from_order(["p_row", "t_sin"])
