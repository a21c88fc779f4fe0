"""Simulated SGX platform: enclave reports, a quoting enclave and attestation keys.

Nothing here touches real hardware. A :class:`SimulatedPlatform` stands in for
one SGX-capable machine (platform id, CPU SVN, quoting enclave SVN and the
attestation key), and :class:`SimulatedEnclave` for the measured identity of
one enclave running on it.

Wire layout (all integers little-endian, see docs/quote_layout.md)::

    report body   432 bytes, fixed offsets, reserved regions zero
    quote         header(8) || report body(432) || u32 sig_len || signature
"""

from __future__ import annotations

import enum
import os
import struct
from dataclasses import dataclass, field
from typing import Union

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec

from .errors import MalformedQuote, SigningFailure, WrongLength

FLAG_INIT = 1 << 0
FLAG_DEBUG = 1 << 1
FLAG_MODE64BIT = 1 << 2
FLAG_PROVISION_KEY = 1 << 4
FLAG_EINITTOKEN_KEY = 1 << 5
FLAG_KSS = 1 << 7
KNOWN_FLAGS = (
    FLAG_INIT | FLAG_DEBUG | FLAG_MODE64BIT | FLAG_PROVISION_KEY | FLAG_EINITTOKEN_KEY | FLAG_KSS
)

REPORT_BODY_SIZE = 432
QUOTE_HEADER_SIZE = 8
REPORT_DATA_SIZE = 64

# (name, offset, size) of every non-reserved field in the report body
REPORT_BODY_LAYOUT = (
    ("cpu_svn", 0, 16),
    ("attributes.flags", 48, 8),
    ("attributes.xfrm", 56, 8),
    ("mr_enclave", 64, 32),
    ("mr_signer", 128, 32),
    ("isv_prod_id", 256, 2),
    ("isv_svn", 258, 2),
    ("report_data", 368, 64),
)
_RESERVED = ((16, 48), (96, 128), (160, 256), (260, 368))


class SignType(enum.IntEnum):
    EPID_SIM = 1
    ECDSA_SIM = 2


# Simulation-only format versions; not the real SGX quote versions.
QUOTE_VERSION = {SignType.EPID_SIM: 2, SignType.ECDSA_SIM: 3}


def _fixed(name: str, value: bytes, size: int) -> bytes:
    value = bytes(value)
    if len(value) != size:
        raise WrongLength(f"{name} must be {size} bytes, got {len(value)}")
    return value


def _u16(name: str, value: int) -> int:
    if not 0 <= value <= 0xFFFF:
        raise ValueError(f"{name} out of 16-bit range: {value}")
    return value


@dataclass(frozen=True)
class SgxAttributes:
    flags: int = FLAG_INIT | FLAG_MODE64BIT
    xfrm: int = 0x3

    def __post_init__(self):
        if not 0 <= self.flags < 1 << 64 or not 0 <= self.xfrm < 1 << 64:
            raise ValueError("attribute words are 64-bit")
        if self.flags & ~KNOWN_FLAGS:
            raise ValueError(f"reserved attribute flag bits set: {self.flags:#x}")

    @property
    def debug(self) -> bool:
        return bool(self.flags & FLAG_DEBUG)


@dataclass(frozen=True)
class SgxReportBody:
    cpu_svn: bytes
    attributes: SgxAttributes
    mr_enclave: bytes
    mr_signer: bytes
    isv_prod_id: int
    isv_svn: int
    report_data: bytes

    def __post_init__(self):
        object.__setattr__(self, "cpu_svn", _fixed("cpu_svn", self.cpu_svn, 16))
        object.__setattr__(self, "mr_enclave", _fixed("mr_enclave", self.mr_enclave, 32))
        object.__setattr__(self, "mr_signer", _fixed("mr_signer", self.mr_signer, 32))
        object.__setattr__(
            self, "report_data", _fixed("report_data", self.report_data, REPORT_DATA_SIZE)
        )
        _u16("isv_prod_id", self.isv_prod_id)
        _u16("isv_svn", self.isv_svn)

    def to_bytes(self) -> bytes:
        buf = bytearray(REPORT_BODY_SIZE)
        buf[0:16] = self.cpu_svn
        struct.pack_into("<QQ", buf, 48, self.attributes.flags, self.attributes.xfrm)
        buf[64:96] = self.mr_enclave
        buf[128:160] = self.mr_signer
        struct.pack_into("<HH", buf, 256, self.isv_prod_id, self.isv_svn)
        buf[368:432] = self.report_data
        return bytes(buf)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SgxReportBody":
        if len(data) != REPORT_BODY_SIZE:
            raise MalformedQuote(f"report body must be {REPORT_BODY_SIZE} bytes, got {len(data)}")
        for start, end in _RESERVED:
            if any(data[start:end]):
                raise MalformedQuote(f"non-zero reserved bytes at {start}..{end}")
        flags, xfrm = struct.unpack_from("<QQ", data, 48)
        isv_prod_id, isv_svn = struct.unpack_from("<HH", data, 256)
        try:
            attributes = SgxAttributes(flags, xfrm)
        except ValueError as exc:
            raise MalformedQuote(str(exc)) from exc
        return cls(
            cpu_svn=bytes(data[0:16]),
            attributes=attributes,
            mr_enclave=bytes(data[64:96]),
            mr_signer=bytes(data[128:160]),
            isv_prod_id=isv_prod_id,
            isv_svn=isv_svn,
            report_data=bytes(data[368:432]),
        )


@dataclass(frozen=True)
class SgxQuote:
    version: int
    sign_type: SignType
    qe_svn: int
    report_body: SgxReportBody
    signature: bytes

    def header_bytes(self) -> bytes:
        return struct.pack("<HHHH", self.version, int(self.sign_type), self.qe_svn, 0)

    def signed_bytes(self) -> bytes:
        """The exact byte range covered by the quote signature."""
        return self.header_bytes() + self.report_body.to_bytes()

    def to_bytes(self) -> bytes:
        return self.signed_bytes() + struct.pack("<I", len(self.signature)) + self.signature

    @classmethod
    def from_bytes(cls, data: bytes) -> "SgxQuote":
        signed, signature = split_quote(data)
        version, sign_type, qe_svn, reserved = struct.unpack_from("<HHHH", signed, 0)
        if reserved:
            raise MalformedQuote("non-zero reserved header word")
        try:
            sign_type = SignType(sign_type)
        except ValueError:
            raise MalformedQuote(f"unknown sign type {sign_type}") from None
        body = SgxReportBody.from_bytes(signed[QUOTE_HEADER_SIZE:])
        return cls(version, sign_type, qe_svn, body, signature)


def split_quote(data: bytes) -> tuple[bytes, bytes]:
    """Split serialized quote bytes into (signed region, signature) without interpreting fields."""
    data = bytes(data)
    signed_len = QUOTE_HEADER_SIZE + REPORT_BODY_SIZE
    if len(data) < signed_len + 4:
        raise MalformedQuote(f"quote truncated: {len(data)} bytes")
    (sig_len,) = struct.unpack_from("<I", data, signed_len)
    if len(data) != signed_len + 4 + sig_len:
        raise MalformedQuote(
            f"signature length {sig_len} does not match remaining {len(data) - signed_len - 4} bytes"
        )
    return data[:signed_len], data[signed_len + 4 :]


class AttestationKey:
    """ECDSA P-256 key standing in for the quoting enclave's attestation key."""

    def __init__(self, private_key: ec.EllipticCurvePrivateKey, key_id: str | None = None):
        if not isinstance(private_key.curve, ec.SECP256R1):
            raise SigningFailure("attestation keys are ECDSA P-256")
        self._private_key = private_key
        self.key_id = key_id or self.public_der()[-8:].hex()

    @classmethod
    def generate(cls, key_id: str | None = None) -> "AttestationKey":
        return cls(ec.generate_private_key(ec.SECP256R1()), key_id)

    @classmethod
    def from_private_value(cls, value: int, key_id: str | None = None) -> "AttestationKey":
        return cls(ec.derive_private_key(value, ec.SECP256R1()), key_id)

    def public_key(self) -> ec.EllipticCurvePublicKey:
        return self._private_key.public_key()

    def public_der(self) -> bytes:
        return self.public_key().public_bytes(
            serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
        )

    def sign(self, data: bytes) -> bytes:
        try:
            return self._private_key.sign(data, ec.ECDSA(hashes.SHA256()))
        except Exception as exc:  # backend faults only
            raise SigningFailure(str(exc)) from exc

    def private_value(self) -> int:
        # Simulation state snapshots only; never part of any quote or certificate.
        return self._private_key.private_numbers().private_value

    def __repr__(self):
        return f"AttestationKey(key_id={self.key_id!r})"


@dataclass(frozen=True)
class SimulatedEnclave:
    mr_enclave: bytes
    mr_signer: bytes
    isv_prod_id: int = 0
    isv_svn: int = 0
    attributes: SgxAttributes = field(default_factory=SgxAttributes)
    platform_id: bytes = bytes(16)

    def __post_init__(self):
        object.__setattr__(self, "mr_enclave", _fixed("mr_enclave", self.mr_enclave, 32))
        object.__setattr__(self, "mr_signer", _fixed("mr_signer", self.mr_signer, 32))
        object.__setattr__(self, "platform_id", _fixed("platform_id", self.platform_id, 16))
        _u16("isv_prod_id", self.isv_prod_id)
        _u16("isv_svn", self.isv_svn)

    @property
    def debug(self) -> bool:
        return self.attributes.debug


@dataclass(frozen=True)
class SimulatedPlatform:
    """Platform state shared by every enclave on one simulated machine."""

    platform_id: bytes
    attestation_key: AttestationKey
    cpu_svn: bytes = bytes([2] * 16)
    qe_svn: int = 5

    def __post_init__(self):
        object.__setattr__(self, "platform_id", _fixed("platform_id", self.platform_id, 16))
        object.__setattr__(self, "cpu_svn", _fixed("cpu_svn", self.cpu_svn, 16))
        _u16("qe_svn", self.qe_svn)

    @classmethod
    def generate(cls, **kwargs) -> "SimulatedPlatform":
        kwargs.setdefault("platform_id", os.urandom(16))
        kwargs.setdefault("attestation_key", AttestationKey.generate())
        return cls(**kwargs)

    def launch(self, mr_enclave: bytes, mr_signer: bytes, **kwargs) -> SimulatedEnclave:
        return SimulatedEnclave(mr_enclave, mr_signer, platform_id=self.platform_id, **kwargs)

    def report(self, enclave: SimulatedEnclave, report_data: bytes) -> SgxReportBody:
        return create_report(enclave, report_data, self)

    def quote(self, report: SgxReportBody, sign_type: SignType) -> SgxQuote:
        return quote_report(report, self.attestation_key, sign_type, self.qe_svn)


def create_report(
    enclave: SimulatedEnclave, report_data: bytes, platform: SimulatedPlatform | None = None
) -> SgxReportBody:
    """Build the report an enclave would produce for ``report_data``.

    ``cpu_svn`` comes from ``platform``; without one the report carries an
    all-zero CPU SVN.
    """
    report_data = _fixed("report_data", report_data, REPORT_DATA_SIZE)
    if platform is not None and platform.platform_id != enclave.platform_id:
        raise ValueError("enclave does not run on this platform")
    return SgxReportBody(
        cpu_svn=platform.cpu_svn if platform is not None else bytes(16),
        attributes=enclave.attributes,
        mr_enclave=enclave.mr_enclave,
        mr_signer=enclave.mr_signer,
        isv_prod_id=enclave.isv_prod_id,
        isv_svn=enclave.isv_svn,
        report_data=report_data,
    )


def quote_report(
    report: SgxReportBody, key: AttestationKey, sign_type: SignType, qe_svn: int
) -> SgxQuote:
    sign_type = SignType(sign_type)
    unsigned = SgxQuote(QUOTE_VERSION[sign_type], sign_type, _u16("qe_svn", qe_svn), report, b"")
    return SgxQuote(
        unsigned.version, sign_type, qe_svn, report, key.sign(unsigned.signed_bytes())
    )


PublicKeyLike = Union[ec.EllipticCurvePublicKey, AttestationKey, bytes]


def load_public_key(key: PublicKeyLike) -> ec.EllipticCurvePublicKey:
    if isinstance(key, AttestationKey):
        return key.public_key()
    if isinstance(key, (bytes, bytearray)):
        return serialization.load_der_public_key(bytes(key))
    return key


def verify_quote_signature(quote: SgxQuote | bytes, attestation_pubkey: PublicKeyLike) -> bool:
    """True iff the quote signature covers header || report body under ``attestation_pubkey``.

    Serialized input is checked over the received bytes as-is, so any byte flip
    in the signed region yields False rather than a parse error.
    """
    if isinstance(quote, SgxQuote):
        signed, signature = quote.signed_bytes(), quote.signature
    else:
        signed, signature = split_quote(quote)
    pub = load_public_key(attestation_pubkey)
    if not isinstance(pub, ec.EllipticCurvePublicKey):
        return False
    try:
        pub.verify(signature, signed, ec.ECDSA(hashes.SHA256()))
    except (InvalidSignature, ValueError):
        return False
    return True
