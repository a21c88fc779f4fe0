"""Attester side: fresh RA-TLS key, key-bound quote, self-signed certificate."""

from __future__ import annotations

import datetime as dt
import hashlib
import re
import secrets
from dataclasses import dataclass, field
from typing import Callable

from cryptography import x509
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.x509.oid import NameOID

from . import pki
from .errors import CertEncodingFailure, MalformedCertificate, MalformedExtension, MissingExtension, NotRaTls
from .evidence import (
    DEFAULT_REGISTRY,
    EvidenceBundle,
    EvidenceKind,
    ExtensionRegistry,
    assemble_ecdsa_evidence,
    assemble_epid_evidence,
    decode_bundle,
    decompress_payload,
    encode_bundle,
)
from .sgx_sim import SgxQuote, SignType, SimulatedEnclave, SimulatedPlatform, create_report

DEFAULT_SUBJECT = "RA-TLS Attester"
MRENCLAVE_CN = re.compile(r"^[0-9a-f]{64}$")


def binding_hash(pubkey_spki_der: bytes) -> bytes:
    """report_data binding a public key: SHA-256(SPKI DER) followed by 32 zero bytes."""
    return hashlib.sha256(bytes(pubkey_spki_der)).digest() + bytes(32)


@dataclass
class AttesterConfig:
    attestation_mode: EvidenceKind
    enclave: SimulatedEnclave
    platform: SimulatedPlatform
    ias: object = None
    pcs: object = None
    spid: bytes | None = None
    api_key: str | None = None
    cert_validity: dt.timedelta = dt.timedelta(hours=24)
    subject_name: str = DEFAULT_SUBJECT
    mark_critical: bool = False
    compress: bool = False
    mrenclave_in_cn: bool = False
    registry: ExtensionRegistry = DEFAULT_REGISTRY
    clock: Callable[[], dt.datetime] = field(default=pki.utcnow, repr=False)

    def __post_init__(self):
        self.attestation_mode = EvidenceKind(self.attestation_mode)
        epid = self.attestation_mode == EvidenceKind.EPID
        if epid != bool(self.spid):
            raise ValueError("spid is required for EPID mode and only for EPID mode")
        if (not epid) != bool(self.api_key):
            raise ValueError("api_key is required for ECDSA mode and only for ECDSA mode")
        if epid and len(self.spid) != 16:
            raise ValueError("spid is 16 bytes")
        if epid and self.ias is None:
            raise ValueError("EPID mode needs an IAS client")
        if not epid and self.pcs is None:
            raise ValueError("ECDSA mode needs a PCS client")
        if self.enclave.platform_id != self.platform.platform_id:
            raise ValueError("enclave does not run on the configured platform")


@dataclass(frozen=True)
class RaTlsCertificate:
    cert_der: bytes
    key_der: bytes = field(repr=False)

    @property
    def cert_pem(self) -> bytes:
        return self.certificate().public_bytes(serialization.Encoding.PEM)

    @property
    def key_pem(self) -> bytes:
        return self.private_key().private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        )

    def certificate(self) -> x509.Certificate:
        return x509.load_der_x509_certificate(self.cert_der)

    def private_key(self) -> ec.EllipticCurvePrivateKey:
        return serialization.load_der_private_key(self.key_der, password=None)


def _serial() -> int:
    while True:
        serial = secrets.randbits(64)
        if serial:
            return serial


def build_certificate(
    key,
    extensions: list[tuple[str, bytes]],
    subject_name: str,
    not_before: dt.datetime,
    not_after: dt.datetime,
    critical: bool = False,
    serial: int | None = None,
) -> bytes:
    """Self-sign a certificate for ``key`` carrying raw (OID, payload) extensions.

    Payloads are wrapped in a DER OCTET STRING inside extnValue.
    """
    name = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, subject_name)])
    try:
        builder = (
            x509.CertificateBuilder()
            .subject_name(name)
            .issuer_name(name)
            .public_key(key.public_key())
            .serial_number(serial or _serial())
            .not_valid_before(not_before)
            .not_valid_after(not_after)
        )
        for oid, payload in extensions:
            builder = builder.add_extension(
                x509.UnrecognizedExtension(x509.ObjectIdentifier(oid), pki.der_octet_string(payload)),
                critical=critical,
            )
        cert = builder.sign(key, hashes.SHA256())
    except (ValueError, TypeError) as exc:
        raise CertEncodingFailure(str(exc)) from exc
    return pki.der(cert)


def collect_evidence(config: AttesterConfig, spki: bytes) -> tuple[SgxQuote, EvidenceBundle]:
    report = create_report(config.enclave, binding_hash(spki), config.platform)
    if config.attestation_mode == EvidenceKind.EPID:
        quote = config.platform.quote(report, SignType.EPID_SIM)
        payload = assemble_epid_evidence(quote, config.ias, config.spid)
    else:
        quote = config.platform.quote(report, SignType.ECDSA_SIM)
        payload = assemble_ecdsa_evidence(quote, config.pcs, config.platform.platform_id, config.api_key)
    return quote, EvidenceBundle(config.attestation_mode, payload, config.compress)


def create_key_and_cert(config: AttesterConfig) -> RaTlsCertificate:
    """Generate a new P-256 key and a self-signed certificate attesting to it.

    The key is created fresh on every call and only ever returned.
    """
    now = pki.as_utc(config.clock())
    key = ec.generate_private_key(ec.SECP256R1())
    spki = pki.spki_der(key.public_key())
    _, bundle = collect_evidence(config, spki)
    subject = config.enclave.mr_enclave.hex() if config.mrenclave_in_cn else config.subject_name
    cert_der = build_certificate(
        key,
        encode_bundle(bundle, config.registry),
        subject,
        now.replace(microsecond=0),
        now + config.cert_validity,
        critical=config.mark_critical,
    )
    key_der = key.private_bytes(
        serialization.Encoding.DER, serialization.PrivateFormat.PKCS8, serialization.NoEncryption()
    )
    return RaTlsCertificate(cert_der, key_der)


# reading certificates ------------------------------------------------------------


def load_cert(cert_der: bytes) -> x509.Certificate:
    try:
        cert = x509.load_der_x509_certificate(bytes(cert_der))
        cert.extensions  # force extension parsing
    except ValueError as exc:
        raise MalformedCertificate(str(exc)) from exc
    return cert


def raw_extensions(cert: x509.Certificate, registry: ExtensionRegistry = DEFAULT_REGISTRY):
    """Registry (OID, payload) pairs with the OCTET STRING wrapper removed."""
    out = []
    for ext in cert.extensions:
        oid = ext.oid.dotted_string
        if not registry.owns(oid):
            continue
        value = ext.value.value if isinstance(ext.value, x509.UnrecognizedExtension) else b""
        try:
            out.append((oid, pki.parse_der_octet_string(value)))
        except ValueError as exc:
            raise MalformedExtension(f"{oid}: {exc}") from exc
    return out


def bundle_from_cert(cert_der: bytes, registry: ExtensionRegistry = DEFAULT_REGISTRY) -> EvidenceBundle:
    exts = raw_extensions(load_cert(cert_der), registry)
    if not exts:
        raise NotRaTls("certificate carries no RA-TLS evidence extensions")
    return decode_bundle(exts, registry)


def get_quote_from_cert(cert_der: bytes, registry: ExtensionRegistry = DEFAULT_REGISTRY) -> SgxQuote:
    """The attested quote, whether it came inside an AVR (EPID) or directly (ECDSA)."""
    bundle = bundle_from_cert(cert_der, registry)
    try:
        return bundle.quote
    except (ValueError, KeyError) as exc:
        raise MalformedExtension(f"AVR carries no usable quote: {exc}") from exc


def inspect_cert(cert_der: bytes, registry: ExtensionRegistry = DEFAULT_REGISTRY) -> dict:
    cert = load_cert(cert_der)
    exts = raw_extensions(cert, registry)
    report: dict = {
        "subject": cert.subject.rfc4514_string(),
        "serial": format(cert.serial_number, "x"),
        "not_before": pki.isoformat(cert.not_valid_before_utc),
        "not_after": pki.isoformat(cert.not_valid_after_utc),
        "self_signed": pki.signed_by(cert, cert),
        "cert_size": len(cert_der),
        "mode": "none",
        "extensions": [],
        "extension_bytes": 0,
    }
    critical = {e.oid.dotted_string: e.critical for e in cert.extensions}
    for oid, payload in exts:
        item = registry.item(oid)
        entry = {
            "oid": oid,
            "item": item.name if item else "UNKNOWN",
            "size": len(payload),
            "critical": critical[oid],
        }
        if item is not None and item.name != "FORMAT" and payload[:1] in (b"\x00", b"\x01"):
            entry["compressed"] = payload[:1] == b"\x01"
            try:
                entry["decompressed_size"] = len(decompress_payload(payload))
            except MalformedExtension:
                pass
        report["extensions"].append(entry)
    report["extension_bytes"] = sum(e["size"] for e in report["extensions"])
    if not exts:
        return report
    try:
        bundle = decode_bundle(exts, registry)
        quote = bundle.quote
    except (MissingExtension, MalformedExtension, ValueError, KeyError) as exc:
        report["mode"] = "invalid"
        report["error"] = f"{type(exc).__name__}: {exc}"
        return report
    body = quote.report_body
    report["mode"] = bundle.kind.name
    report["compressed"] = bundle.compressed
    report["identity"] = {
        "mr_enclave": body.mr_enclave.hex(),
        "mr_signer": body.mr_signer.hex(),
        "isv_prod_id": body.isv_prod_id,
        "isv_svn": body.isv_svn,
        "cpu_svn": body.cpu_svn.hex(),
        "debug": body.attributes.debug,
        "report_data": body.report_data.hex(),
        "qe_svn": quote.qe_svn,
    }
    if bundle.kind == EvidenceKind.EPID:
        avr = bundle.payload.report()
        report["evidence_timestamps"] = {"avr": avr.get("timestamp")}
        report["avr_status"] = avr.get("isvEnclaveQuoteStatus")
    else:
        stamps = {}
        for name, doc in (("tcb_info", bundle.payload.tcb_info), ("qe_identity", bundle.payload.qe_identity)):
            try:
                d = doc.json()
                stamps[name] = {"issueDate": d.get("issueDate"), "nextUpdate": d.get("nextUpdate")}
            except ValueError:
                stamps[name] = None
        for i, crl_der in enumerate(bundle.payload.crls):
            crl = x509.load_der_x509_crl(crl_der)
            stamps[f"crl{i}"] = {
                "thisUpdate": pki.isoformat(crl.last_update_utc),
                "nextUpdate": pki.isoformat(crl.next_update_utc) if crl.next_update_utc else None,
            }
        report["evidence_timestamps"] = stamps
    return report
