import hashlib

from hypothesis import given
from hypothesis import strategies as st

from poisson_bnn.seeds import derive_seed, rng_for


def test_frozen_value():
    want = int.from_bytes(hashlib.sha256(b"7:fit:ml").digest()[:8], "little")
    assert derive_seed(7, "fit", "ml") == want


@given(st.integers(0, 2**40), st.text(min_size=1, max_size=8))
def test_stable_and_in_range(seed, name):
    a = derive_seed(seed, name)
    assert a == derive_seed(seed, name) and 0 <= a < 2**64


def test_streams_differ():
    assert derive_seed(0, "split") != derive_seed(0, "simulate")
    assert derive_seed(0, "fit", 1) != derive_seed(1, "fit", 0)
    assert rng_for(3, "x").random() == rng_for(3, "x").random()
