import numpy as np
import pytest

from vriwae.rng import derive_rng, key_to_int


def test_same_path_same_stream():
    a = derive_rng(7, "snr", 3).standard_normal(8)
    b = derive_rng(7, "snr", 3).standard_normal(8)
    assert np.array_equal(a, b)


def test_distinct_paths_differ():
    a = derive_rng(7, "snr", 3).standard_normal(8)
    b = derive_rng(7, "snr", 4).standard_normal(8)
    c = derive_rng(8, "snr", 3).standard_normal(8)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_float_and_string_keys_are_stable():
    assert key_to_int(0.3) == key_to_int(0.3)
    assert key_to_int("pf") == key_to_int("pf")
    assert key_to_int(0.3) != key_to_int(0.7)


def test_bad_keys_rejected():
    with pytest.raises(ValueError):
        key_to_int(-1)
    with pytest.raises(TypeError):
        key_to_int(True)
    with pytest.raises(TypeError):
        key_to_int(object())
