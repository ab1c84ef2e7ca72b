#!/usr/bin/env python3
"""
Tests for the layered cipher suites.
"""

import numpy as np
import pytest

from Core.crypto import (MockCipherSuite, RealCipherSuite, ciphertext_size_bits, decrypt_layer, encrypt_layers,
                         keygen, make_suite)
from Core.exceptions import DecryptionError, LayerError
from Core.utils.constants import BOTTOM
from Core.utils.rng import Rng

def _keys(suite, count, bits=256):
    generator = Rng(0).stream("user")
    return [keygen(suite, bits, generator) for _ in range(count)]

def test_mock_triple_layer_round_trip():
    suite = MockCipherSuite()
    collector, shuffler = _keys(suite, 2)
    keys = [collector.public, shuffler.public, collector.public]
    ct = encrypt_layers(suite, 42, keys)
    assert ciphertext_size_bits(ct) == 2072
    middle = decrypt_layer(suite, ct, collector.secret)
    assert ciphertext_size_bits(middle) == 1392
    inner = decrypt_layer(suite, middle, shuffler.secret)
    assert ciphertext_size_bits(inner) == 712
    assert decrypt_layer(suite, inner, collector.secret) == 42

def test_mock_wrong_key_and_layer_limits():
    suite = MockCipherSuite()
    collector, shuffler = _keys(suite, 2)
    ct = encrypt_layers(suite, 5, [collector.public, shuffler.public])
    with pytest.raises(DecryptionError):
        decrypt_layer(suite, ct, collector.secret)
    with pytest.raises(LayerError):
        encrypt_layers(suite, 5, [collector.public] * 4)
    with pytest.raises(LayerError):
        encrypt_layers(suite, 5, [])
    with pytest.raises(LayerError):
        decrypt_layer(suite, 5, collector.secret)

def test_mock_batches():
    suite = MockCipherSuite(tau=(100, 200, 300))
    collector, shuffler = _keys(suite, 2)
    batch = suite.encrypt_batch(np.array([3, 1, 4, 1]), [collector.public, shuffler.public])
    assert batch.total_bits() == 4 * 200
    opened = suite.decrypt_batch(batch, shuffler.secret)
    assert opened.depth == 1 and opened.bits_each == 100
    assert suite.decrypt_batch(opened.take(np.array([2, 0])), collector.secret).tolist() == [4, 3]

    fresh = suite.encrypt_batch(np.array([BOTTOM, BOTTOM]), [collector.public, shuffler.public])
    replaced = batch.replace(np.array([True, False, True, False]), fresh)
    assert suite.decrypt_batch(suite.decrypt_batch(replaced, shuffler.secret), collector.secret).tolist() == [0, 1, 0, 1]

    other = suite.encrypt_batch(np.array([9]), [shuffler.public, collector.public])
    with pytest.raises(LayerError):
        batch.concat(other)

def test_payload_width():
    suite = MockCipherSuite(payload_bytes=4)
    assert suite.fits(2 ** 32 - 1) and not suite.fits(2 ** 32)
    key = _keys(suite, 1)[0]
    with pytest.raises(ValueError):
        encrypt_layers(suite, 2 ** 32, [key.public])

def test_make_suite():
    assert isinstance(make_suite("mock"), MockCipherSuite)
    assert make_suite("mock", (1, 2, 3)).size_model() == (1, 2, 3)
    with pytest.raises(ValueError):
        make_suite("rot13")
    with pytest.raises(ValueError):
        MockCipherSuite(tau=(3, 2, 1))

def test_real_suite_sizes_match_the_size_model():
    suite = RealCipherSuite(256)
    assert suite.size_model() == (712, 1392, 2072)
    collector, shuffler = _keys(suite, 2)
    ct = encrypt_layers(suite, 7, [collector.public, shuffler.public, collector.public])
    assert ciphertext_size_bits(ct) == 2072
    middle = decrypt_layer(suite, ct, collector.secret)
    inner = decrypt_layer(suite, middle, shuffler.secret)
    assert ciphertext_size_bits(inner) == 712
    assert decrypt_layer(suite, inner, collector.secret) == 7

def test_real_suite_rejects_wrong_key_and_tampering():
    suite = RealCipherSuite(256)
    collector, shuffler = _keys(suite, 2)
    ct = encrypt_layers(suite, 11, [collector.public])
    with pytest.raises(DecryptionError):
        decrypt_layer(suite, ct, shuffler.secret)
    tampered = type(ct)(ct.scheme, ct.depth, ct.body[:-1] + bytes([ct.body[-1] ^ 1]), ct.plaintext_bits)
    with pytest.raises(DecryptionError):
        decrypt_layer(suite, tampered, collector.secret)
    with pytest.raises(ValueError):
        RealCipherSuite(128)

def test_real_batch_round_trip():
    suite = RealCipherSuite(256)
    collector, shuffler = _keys(suite, 2)
    batch = suite.encrypt_batch(np.array([1, 2, 3]), [collector.public, shuffler.public])
    assert batch.total_bits() == 3 * 1392
    plain = suite.decrypt_batch(suite.decrypt_batch(batch, shuffler.secret), collector.secret)
    assert plain.tolist() == [1, 2, 3]

def main():
    """Run the cipher suite tests."""
    tests = [obj for name, obj in sorted(globals().items()) if name.startswith("test_") and callable(obj)]
    for test in tests:
        print(f"Running {test.__name__}...")
        test()
    print(f"\nAll {len(tests)} cipher suite tests passed")

if __name__ == "__main__":
    main()
