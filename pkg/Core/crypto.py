"""Layered public-key encryption with ciphertext-size accounting."""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, hmac, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.kdf.x963kdf import X963KDF

from Core.exceptions import DecryptionError, LayerError
from Core.utils.constants import CipherKind, DEFAULT_SECURITY_BITS, DEFAULT_TAU, MIN_PAYLOAD_BYTES

logger = logging.getLogger(__name__)

MAX_LAYERS = 3
KEY_ID_BYTES = 16

@dataclass(frozen=True)
class PublicKey:
    key_id: bytes
    scheme: CipherKind
    material: Any = field(default=None, compare=False, repr=False)

@dataclass(frozen=True)
class SecretKey:
    key_id: bytes
    scheme: CipherKind
    material: Any = field(default=None, compare=False, repr=False)

@dataclass(frozen=True)
class KeyPair:
    """Public and secret key of one party."""
    public: PublicKey
    secret: SecretKey
    scheme: CipherKind
    security_bits: int

@dataclass(frozen=True)
class LayeredCiphertext:
    """A payload under 1-3 layers of encryption; `body` is the outermost ciphertext."""
    scheme: CipherKind
    depth: int
    body: bytes
    plaintext_bits: int
    declared_bits: Optional[int] = None

    @property
    def layers(self) -> List[Tuple[str, bytes]]:
        """Outermost-first (scheme id, opaque bytes) view of the layers."""
        name = self.scheme.name.lower()
        if self.scheme is CipherKind.MOCK:
            return [(name, self.body[i * KEY_ID_BYTES:]) for i in range(self.depth)]
        return [(name, self.body)] + [(name, b'') for _ in range(self.depth - 1)]

def ciphertext_size_bits(ct: LayeredCiphertext) -> int:
    """Declared size for mock ciphertexts, encoded length for real ones."""
    if ct.declared_bits is not None:
        return ct.declared_bits
    return len(ct.body) * 8

class CiphertextBatch:
    """Equally layered ciphertexts moved between parties as one unit."""

    depth: int = 0

    def __len__(self) -> int:
        raise NotImplementedError("Subclasses must implement __len__()")

    def total_bits(self) -> int:
        raise NotImplementedError("Subclasses must implement total_bits()")

    def take(self, indices: np.ndarray) -> "CiphertextBatch":
        raise NotImplementedError("Subclasses must implement take()")

    def concat(self, other: "CiphertextBatch") -> "CiphertextBatch":
        raise NotImplementedError("Subclasses must implement concat()")

    def replace(self, mask: np.ndarray, fresh: "CiphertextBatch") -> "CiphertextBatch":
        raise NotImplementedError("Subclasses must implement replace()")

    def bits_per_message(self) -> np.ndarray:
        raise NotImplementedError("Subclasses must implement bits_per_message()")

class MockBatch(CiphertextBatch):
    """Mock ciphertexts: payloads in the clear, tagged by the key ids that would wrap them."""

    def __init__(self, payloads: np.ndarray, key_ids: Tuple[bytes, ...], bits_each: int):
        self.payloads = np.asarray(payloads, dtype=np.int64)
        self.key_ids = tuple(key_ids)
        self.depth = len(self.key_ids)
        self.bits_each = int(bits_each)

    def __len__(self) -> int:
        return int(self.payloads.size)

    def total_bits(self) -> int:
        return len(self) * self.bits_each

    def bits_per_message(self) -> np.ndarray:
        return np.full(len(self), self.bits_each, dtype=np.int64)

    def take(self, indices: np.ndarray) -> "MockBatch":
        return MockBatch(self.payloads[indices], self.key_ids, self.bits_each)

    def _check_compatible(self, other: CiphertextBatch):
        if not isinstance(other, MockBatch) or other.key_ids != self.key_ids or other.bits_each != self.bits_each:
            raise LayerError("Cannot combine ciphertext batches with different layering")

    def concat(self, other: CiphertextBatch) -> "MockBatch":
        self._check_compatible(other)
        return MockBatch(np.concatenate([self.payloads, other.payloads]), self.key_ids, self.bits_each)

    def replace(self, mask: np.ndarray, fresh: CiphertextBatch) -> "MockBatch":
        self._check_compatible(fresh)
        payloads = self.payloads.copy()
        payloads[mask] = fresh.payloads
        return MockBatch(payloads, self.key_ids, self.bits_each)

class RealBatch(CiphertextBatch):
    """Real ciphertexts, one LayeredCiphertext per message."""

    def __init__(self, items: List[LayeredCiphertext], depth: int):
        self.items = list(items)
        self.depth = depth

    def __len__(self) -> int:
        return len(self.items)

    def total_bits(self) -> int:
        return int(sum(len(ct.body) for ct in self.items) * 8)

    def bits_per_message(self) -> np.ndarray:
        return np.array([len(ct.body) * 8 for ct in self.items], dtype=np.int64)

    def take(self, indices: np.ndarray) -> "RealBatch":
        return RealBatch([self.items[i] for i in np.asarray(indices)], self.depth)

    def concat(self, other: CiphertextBatch) -> "RealBatch":
        if not isinstance(other, RealBatch) or other.depth != self.depth:
            raise LayerError("Cannot combine ciphertext batches with different layering")
        return RealBatch(self.items + other.items, self.depth)

    def replace(self, mask: np.ndarray, fresh: CiphertextBatch) -> "RealBatch":
        if not isinstance(fresh, RealBatch) or fresh.depth != self.depth:
            raise LayerError("Replacement ciphertexts must have the same layering")
        items = list(self.items)
        for position, replacement in zip(np.flatnonzero(mask), fresh.items):
            items[position] = replacement
        return RealBatch(items, self.depth)

class CipherSuite:
    """Base class for cipher suites."""

    kind: CipherKind = None

    def __init__(self, payload_bytes: int = MIN_PAYLOAD_BYTES):
        self.payload_bytes = int(payload_bytes)

    @property
    def plaintext_bits(self) -> int:
        return self.payload_bytes * 8

    def fits(self, max_symbol: int) -> bool:
        """Whether payload symbols up to max_symbol fit the fixed width."""
        return max_symbol < 2 ** self.plaintext_bits

    def keygen(self, security_bits: int, generator: np.random.Generator) -> KeyPair:
        raise NotImplementedError("Subclasses must implement keygen()")

    def encrypt_layers(self, payload: int, keys: Sequence[PublicKey]) -> LayeredCiphertext:
        raise NotImplementedError("Subclasses must implement encrypt_layers()")

    def decrypt_layer(self, ct: LayeredCiphertext, secret: SecretKey) -> Union[LayeredCiphertext, int]:
        raise NotImplementedError("Subclasses must implement decrypt_layer()")

    def encrypt_batch(self, payloads: np.ndarray, keys: Sequence[PublicKey]) -> CiphertextBatch:
        raise NotImplementedError("Subclasses must implement encrypt_batch()")

    def decrypt_batch(self, batch: CiphertextBatch, secret: SecretKey) -> Union[CiphertextBatch, np.ndarray]:
        raise NotImplementedError("Subclasses must implement decrypt_batch()")

    def size_model(self) -> Tuple[int, int, int]:
        """(τ1, τ2, τ3) in bits."""
        raise NotImplementedError("Subclasses must implement size_model()")

    def get_name(self) -> str:
        return self.__class__.__name__

    def _check_keys(self, keys: Sequence[PublicKey]):
        if not 1 <= len(keys) <= MAX_LAYERS:
            raise LayerError(f"Layered encryption takes 1 to {MAX_LAYERS} keys, got {len(keys)}")
        for key in keys:
            if key.scheme is not self.kind:
                raise LayerError(f"Key of scheme {key.scheme.name} used with {self.get_name()}")

    def _check_payloads(self, payloads: np.ndarray):
        if payloads.size and (payloads.min() < 0 or not self.fits(int(payloads.max()))):
            raise ValueError(f"Payload outside the {self.plaintext_bits}-bit message space")

class MockCipherSuite(CipherSuite):
    """Labeled-token cipher with a declared size model."""

    kind = CipherKind.MOCK

    def __init__(self, tau: Tuple[int, int, int] = DEFAULT_TAU, payload_bytes: int = MIN_PAYLOAD_BYTES):
        super().__init__(payload_bytes)
        if len(tau) != MAX_LAYERS or any(b > a for a, b in zip(tau[1:], tau[:-1])):
            raise ValueError(f"Size model must be three nondecreasing sizes, got {tau}")
        self.tau = tuple(int(t) for t in tau)

    def size_model(self) -> Tuple[int, int, int]:
        return self.tau

    def keygen(self, security_bits: int, generator: np.random.Generator) -> KeyPair:
        key_id = generator.bytes(KEY_ID_BYTES)
        return KeyPair(PublicKey(key_id, self.kind), SecretKey(key_id, self.kind), self.kind, security_bits)

    def encrypt_layers(self, payload: int, keys: Sequence[PublicKey]) -> LayeredCiphertext:
        self._check_keys(keys)
        self._check_payloads(np.array([payload]))
        body = b''.join(k.key_id for k in reversed(keys)) + int(payload).to_bytes(self.payload_bytes, 'big')
        return LayeredCiphertext(self.kind, len(keys), body, self.plaintext_bits, self.tau[len(keys) - 1])

    def decrypt_layer(self, ct: LayeredCiphertext, secret: SecretKey) -> Union[LayeredCiphertext, int]:
        if not isinstance(ct, LayeredCiphertext):
            raise LayerError("Nothing left to decrypt")
        if ct.body[:KEY_ID_BYTES] != secret.key_id:
            raise DecryptionError("Ciphertext was not encrypted for this key")
        inner = ct.body[KEY_ID_BYTES:]
        if ct.depth == 1:
            return int.from_bytes(inner, 'big')
        return LayeredCiphertext(self.kind, ct.depth - 1, inner, ct.plaintext_bits, self.tau[ct.depth - 2])

    def encrypt_batch(self, payloads: np.ndarray, keys: Sequence[PublicKey]) -> MockBatch:
        self._check_keys(keys)
        payloads = np.asarray(payloads, dtype=np.int64)
        self._check_payloads(payloads)
        key_ids = tuple(k.key_id for k in reversed(keys))
        return MockBatch(payloads.copy(), key_ids, self.tau[len(keys) - 1])

    def decrypt_batch(self, batch: CiphertextBatch, secret: SecretKey) -> Union[MockBatch, np.ndarray]:
        if not isinstance(batch, MockBatch) or batch.depth == 0:
            raise LayerError("Nothing left to decrypt")
        if batch.key_ids[0] != secret.key_id:
            raise DecryptionError("Ciphertext batch was not encrypted for this key")
        if batch.depth == 1:
            return batch.payloads.copy()
        return MockBatch(batch.payloads, batch.key_ids[1:], self.tau[batch.depth - 2])

# Curve per security parameter; point sizes give τ = 712/1392/2072 bits at 256
_CURVES = {256: ec.SECP256R1, 384: ec.SECP384R1, 521: ec.SECP521R1}
MAC_KEY_BYTES = 32
TAG_BYTES = 20

class RealCipherSuite(CipherSuite):
    """ECIES: ephemeral uncompressed point, X9.63-KDF XOR stream, HMAC-SHA1 tag."""

    kind = CipherKind.REAL

    def __init__(self, security_bits: int = DEFAULT_SECURITY_BITS, payload_bytes: int = MIN_PAYLOAD_BYTES):
        super().__init__(payload_bytes)
        if security_bits not in _CURVES:
            raise ValueError(f"Unsupported security parameter {security_bits}; use one of {sorted(_CURVES)}")
        self.security_bits = security_bits
        self.curve = _CURVES[security_bits]()
        self.point_bytes = 1 + 2 * ((self.curve.key_size + 7) // 8)

    def size_model(self) -> Tuple[int, int, int]:
        """Measured sizes for this payload width."""
        overhead = self.point_bytes + TAG_BYTES
        return tuple((self.payload_bytes + overhead * layers) * 8 for layers in (1, 2, 3))

    def keygen(self, security_bits: int, generator: np.random.Generator) -> KeyPair:
        # Key material comes from the OS CSPRNG; `generator` is not consulted
        if security_bits != self.security_bits:
            raise ValueError(f"Suite is configured for {self.security_bits}-bit security, got {security_bits}")
        private = ec.generate_private_key(self.curve)
        encoded = private.public_key().public_bytes(serialization.Encoding.X962,
                                                    serialization.PublicFormat.UncompressedPoint)
        key_id = hashlib.sha256(encoded).digest()[:KEY_ID_BYTES]
        return KeyPair(PublicKey(key_id, self.kind, private.public_key()),
                       SecretKey(key_id, self.kind, private), self.kind, security_bits)

    def _derive(self, shared: bytes, length: int) -> Tuple[bytes, bytes]:
        okm = X963KDF(algorithm=hashes.SHA256(), length=length + MAC_KEY_BYTES, sharedinfo=None).derive(shared)
        return okm[:length], okm[length:]

    def _seal(self, public: PublicKey, plaintext: bytes) -> bytes:
        ephemeral = ec.generate_private_key(self.curve)
        point = ephemeral.public_key().public_bytes(serialization.Encoding.X962,
                                                    serialization.PublicFormat.UncompressedPoint)
        stream, mac_key = self._derive(ephemeral.exchange(ec.ECDH(), public.material), len(plaintext))
        body = (int.from_bytes(plaintext, 'big') ^ int.from_bytes(stream, 'big')).to_bytes(len(plaintext), 'big')
        tag = hmac.HMAC(mac_key, hashes.SHA1())
        tag.update(body)
        return point + body + tag.finalize()

    def _open(self, secret: SecretKey, data: bytes) -> bytes:
        if len(data) < self.point_bytes + TAG_BYTES:
            raise DecryptionError("Ciphertext too short")
        point, body, tag = data[:self.point_bytes], data[self.point_bytes:-TAG_BYTES], data[-TAG_BYTES:]
        try:
            ephemeral = ec.EllipticCurvePublicKey.from_encoded_point(self.curve, point)
        except ValueError as e:
            raise DecryptionError(f"Malformed ephemeral key: {e}")
        stream, mac_key = self._derive(secret.material.exchange(ec.ECDH(), ephemeral), len(body))
        check = hmac.HMAC(mac_key, hashes.SHA1())
        check.update(body)
        try:
            check.verify(tag)
        except InvalidSignature:
            raise DecryptionError("Authentication tag mismatch (wrong key or tampered ciphertext)")
        return (int.from_bytes(body, 'big') ^ int.from_bytes(stream, 'big')).to_bytes(len(body), 'big')

    def encrypt_layers(self, payload: int, keys: Sequence[PublicKey]) -> LayeredCiphertext:
        self._check_keys(keys)
        self._check_payloads(np.array([payload]))
        body = int(payload).to_bytes(self.payload_bytes, 'big')
        for key in keys:
            body = self._seal(key, body)
        return LayeredCiphertext(self.kind, len(keys), body, self.plaintext_bits)

    def decrypt_layer(self, ct: LayeredCiphertext, secret: SecretKey) -> Union[LayeredCiphertext, int]:
        if not isinstance(ct, LayeredCiphertext):
            raise LayerError("Nothing left to decrypt")
        inner = self._open(secret, ct.body)
        if ct.depth == 1:
            return int.from_bytes(inner, 'big')
        return LayeredCiphertext(self.kind, ct.depth - 1, inner, ct.plaintext_bits)

    def encrypt_batch(self, payloads: np.ndarray, keys: Sequence[PublicKey]) -> RealBatch:
        payloads = np.asarray(payloads, dtype=np.int64)
        self._check_payloads(payloads)
        return RealBatch([self.encrypt_layers(int(x), keys) for x in payloads], len(keys))

    def decrypt_batch(self, batch: CiphertextBatch, secret: SecretKey) -> Union[RealBatch, np.ndarray]:
        if not isinstance(batch, RealBatch) or batch.depth == 0:
            raise LayerError("Nothing left to decrypt")
        opened = [self.decrypt_layer(ct, secret) for ct in batch.items]
        if batch.depth == 1:
            return np.array(opened, dtype=np.int64)
        return RealBatch(opened, batch.depth - 1)

def keygen(suite: CipherSuite, security_bits: int, generator: np.random.Generator) -> KeyPair:
    """Fresh key pair for a party."""
    return suite.keygen(security_bits, generator)

def encrypt_layers(suite: CipherSuite, payload: int, keys: Sequence[PublicKey]) -> LayeredCiphertext:
    """Encrypt under keys applied innermost first; the last key forms the outermost layer."""
    return suite.encrypt_layers(payload, keys)

def decrypt_layer(suite: CipherSuite, ct: LayeredCiphertext, secret: SecretKey) -> Union[LayeredCiphertext, int]:
    """Strip the outermost layer."""
    return suite.decrypt_layer(ct, secret)

def make_suite(kind: str = "mock", tau: Tuple[int, int, int] = DEFAULT_TAU,
               security_bits: int = DEFAULT_SECURITY_BITS, payload_bytes: int = MIN_PAYLOAD_BYTES) -> CipherSuite:
    """Build a suite from CLI/config settings."""
    if kind.lower() == "mock":
        return MockCipherSuite(tau, payload_bytes)
    if kind.lower() == "real":
        return RealCipherSuite(security_bits, payload_bytes)
    raise ValueError(f"Unknown cipher suite: {kind}")
