"""X.509 and framing helpers shared by the services, certgen and verifier."""

from __future__ import annotations

import datetime as dt
import struct
from typing import Iterable, Sequence

from cryptography import x509
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.x509.oid import NameOID

UTC = dt.timezone.utc
SIM_ORG = "Simulated SGX Attestation Services"


def utcnow() -> dt.datetime:
    return dt.datetime.now(UTC)


def as_utc(value: dt.datetime) -> dt.datetime:
    if value.tzinfo is None:
        return value.replace(tzinfo=UTC)
    return value.astimezone(UTC)


def isoformat(value: dt.datetime) -> str:
    return as_utc(value).isoformat(timespec="microseconds").replace("+00:00", "Z")


def parse_iso(text: str) -> dt.datetime:
    if not isinstance(text, str):
        raise ValueError(f"timestamp must be a string, got {type(text).__name__}")
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    return as_utc(dt.datetime.fromisoformat(text))


def spki_der(public_key) -> bytes:
    return public_key.public_bytes(
        serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
    )


def new_key() -> ec.EllipticCurvePrivateKey:
    return ec.generate_private_key(ec.SECP256R1())


def sim_name(common_name: str) -> x509.Name:
    # Full DN mirrors the shape of vendor attestation PKI names.
    return x509.Name(
        [
            x509.NameAttribute(NameOID.COMMON_NAME, common_name),
            x509.NameAttribute(NameOID.ORGANIZATION_NAME, SIM_ORG),
            x509.NameAttribute(NameOID.LOCALITY_NAME, "Santa Clara"),
            x509.NameAttribute(NameOID.STATE_OR_PROVINCE_NAME, "CA"),
            x509.NameAttribute(NameOID.COUNTRY_NAME, "US"),
        ]
    )


def _builder(subject, issuer, public_key, not_before, not_after, serial=None):
    return (
        x509.CertificateBuilder()
        .subject_name(subject)
        .issuer_name(issuer)
        .public_key(public_key)
        .serial_number(serial or x509.random_serial_number())
        .not_valid_before(not_before)
        .not_valid_after(not_after)
    )


def make_root_ca(common_name: str, key, now: dt.datetime, days: int = 3650) -> x509.Certificate:
    name = sim_name(common_name)
    builder = (
        _builder(name, name, key.public_key(), now - dt.timedelta(minutes=5), now + dt.timedelta(days=days))
        .add_extension(x509.BasicConstraints(ca=True, path_length=None), critical=True)
        .add_extension(
            x509.KeyUsage(False, False, False, False, False, True, True, False, False), critical=True
        )
        .add_extension(x509.SubjectKeyIdentifier.from_public_key(key.public_key()), critical=False)
    )
    return builder.sign(key, hashes.SHA256())


def issue_cert(
    common_name: str,
    public_key,
    issuer: x509.Certificate,
    issuer_key,
    now: dt.datetime,
    days: int = 3650,
    ca: bool = False,
    extensions: Iterable[x509.ExtensionType] = (),
) -> x509.Certificate:
    builder = _builder(
        sim_name(common_name),
        issuer.subject,
        public_key,
        now - dt.timedelta(minutes=5),
        now + dt.timedelta(days=days),
    ).add_extension(x509.BasicConstraints(ca=ca, path_length=0 if ca else None), critical=True)
    builder = builder.add_extension(
        x509.AuthorityKeyIdentifier.from_issuer_public_key(issuer_key.public_key()), critical=False
    )
    for ext in extensions:
        builder = builder.add_extension(ext, critical=False)
    return builder.sign(issuer_key, hashes.SHA256())


def signed_by(cert: x509.Certificate, issuer: x509.Certificate) -> bool:
    try:
        cert.verify_directly_issued_by(issuer)
    except (ValueError, TypeError, InvalidSignature):
        return False
    return True


def is_ca(cert: x509.Certificate) -> bool:
    try:
        return cert.extensions.get_extension_for_class(x509.BasicConstraints).value.ca
    except x509.ExtensionNotFound:
        return False


def chain_anchor(
    leaf: x509.Certificate,
    chain: Sequence[x509.Certificate],
    trust_roots: Sequence[x509.Certificate],
) -> x509.Certificate | None:
    """The trusted root that leaf -> chain[0] -> ... terminates at, or None.

    ``chain`` is leaf-first and may end with the root itself. Intermediate
    issuers must be CA certificates.
    """
    current = leaf
    for issuer in chain:
        if not is_ca(issuer) or not signed_by(current, issuer):
            return None
        current = issuer
    current_der = current.public_bytes(serialization.Encoding.DER)
    for root in trust_roots:
        if root.public_bytes(serialization.Encoding.DER) == current_der:
            return root
    for root in trust_roots:
        if is_ca(root) and signed_by(current, root):
            return root
    return None


def chains_to_root(
    leaf: x509.Certificate,
    chain: Sequence[x509.Certificate],
    trust_roots: Sequence[x509.Certificate],
) -> bool:
    return chain_anchor(leaf, chain, trust_roots) is not None


def der(cert: x509.Certificate | x509.CertificateRevocationList) -> bytes:
    return cert.public_bytes(serialization.Encoding.DER)


def load_certs_pem(data: bytes) -> list[x509.Certificate]:
    return x509.load_pem_x509_certificates(data)


def pack_blobs(blobs: Sequence[bytes]) -> bytes:
    """Concatenate blobs, each prefixed with its big-endian u32 length."""
    return b"".join(struct.pack(">I", len(b)) + bytes(b) for b in blobs)


def unpack_blobs(data: bytes) -> list[bytes]:
    out, pos = [], 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise ValueError("truncated length prefix")
        (size,) = struct.unpack_from(">I", data, pos)
        pos += 4
        if pos + size > len(data):
            raise ValueError("blob overruns buffer")
        out.append(bytes(data[pos : pos + size]))
        pos += size
    return out


def der_octet_string(payload: bytes) -> bytes:
    n = len(payload)
    if n < 0x80:
        length = bytes([n])
    else:
        raw = n.to_bytes((n.bit_length() + 7) // 8, "big")
        length = bytes([0x80 | len(raw)]) + raw
    return b"\x04" + length + payload


def parse_der_octet_string(data: bytes) -> bytes:
    if len(data) < 2 or data[0] != 0x04:
        raise ValueError("not a DER OCTET STRING")
    first = data[1]
    if first < 0x80:
        size, pos = first, 2
    else:
        count = first & 0x7F
        if count == 0 or count > 4 or len(data) < 2 + count:
            raise ValueError("bad DER length")
        size, pos = int.from_bytes(data[2 : 2 + count], "big"), 2 + count
        if size < 0x80 or data[2] == 0:
            raise ValueError("non-minimal DER length")
    if pos + size != len(data):
        raise ValueError("OCTET STRING length mismatch")
    return bytes(data[pos:])
