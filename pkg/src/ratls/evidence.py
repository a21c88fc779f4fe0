"""Attestation evidence bundles and their X.509 extension encoding.

An EPID bundle carries the attestation verification report (AVR) returned by
the IAS, its signature, and the report-signing certificate. An ECDSA bundle
carries the quote plus all collateral needed to check it offline.

Every evidence item gets its own extension OID under a configurable arc::

    <arc>.1   format tag, one byte: 0x01 EPID, 0x02 ECDSA
    <arc>.2   AVR                       (EPID)
    <arc>.3   AVR signature             (EPID)
    <arc>.4   report-signing cert       (EPID)
    <arc>.6   quote                     (ECDSA)
    <arc>.7   TCB info                  (ECDSA)
    <arc>.8   TCB signing chain         (ECDSA)
    <arc>.9   PCK certificate           (ECDSA)
    <arc>.10  PCK signing chain         (ECDSA)
    <arc>.11  CRLs                      (ECDSA)
    <arc>.12  QE identity               (ECDSA)

The default arc 1.3.6.1.4.1.99999.1337 is a placeholder private-enterprise
arc and is not an OID assigned by Intel.

Item payloads start with one header byte (0x00 raw, 0x01 raw DEFLATE).
Multi-blob items (chains, CRL sets, signed documents) are big-endian u32
length-prefixed concatenations.
"""

from __future__ import annotations

import base64
import enum
import json
import zlib
from dataclasses import dataclass, field
from typing import Iterable, Union

from cryptography import x509

from . import pki
from .errors import (
    CorruptStream,
    IasRejected,
    MalformedExtension,
    MalformedQuote,
    MissingExtension,
    QuoteInvalid,
    UnknownFormat,
)
from .sgx_sim import SgxQuote, SignType

DEFAULT_ARC = "1.3.6.1.4.1.99999.1337"

RAW = 0x00
DEFLATE = 0x01


class EvidenceKind(enum.IntEnum):
    EPID = 1
    ECDSA = 2


class Item(enum.IntEnum):
    FORMAT = 1
    AVR = 2
    AVR_SIGNATURE = 3
    REPORT_SIGNING_CERT = 4
    QUOTE = 6
    TCB_INFO = 7
    TCB_SIGNING_CHAIN = 8
    PCK_CERT = 9
    PCK_SIGNING_CHAIN = 10
    CRLS = 11
    QE_IDENTITY = 12


EPID_ITEMS = (Item.AVR, Item.AVR_SIGNATURE, Item.REPORT_SIGNING_CERT)
ECDSA_ITEMS = (
    Item.QUOTE,
    Item.TCB_INFO,
    Item.TCB_SIGNING_CHAIN,
    Item.PCK_CERT,
    Item.PCK_SIGNING_CHAIN,
    Item.CRLS,
    Item.QE_IDENTITY,
)
ITEMS_BY_KIND = {EvidenceKind.EPID: EPID_ITEMS, EvidenceKind.ECDSA: ECDSA_ITEMS}


@dataclass(frozen=True)
class ExtensionRegistry:
    arc: str = DEFAULT_ARC

    def oid(self, item: Item) -> str:
        return f"{self.arc}.{int(item)}"

    def item(self, oid: str) -> Item | None:
        prefix = self.arc + "."
        if not oid.startswith(prefix):
            return None
        tail = oid[len(prefix) :]
        if not tail.isdigit():
            return None
        try:
            return Item(int(tail))
        except ValueError:
            return None

    def owns(self, oid: str) -> bool:
        return oid.startswith(self.arc + ".")

    @property
    def format_oid(self) -> str:
        return self.oid(Item.FORMAT)


DEFAULT_REGISTRY = ExtensionRegistry()


@dataclass(frozen=True)
class SignedDocument:
    """A JSON document plus a detached signature over its exact bytes."""

    body: bytes
    signature: bytes

    def json(self) -> dict:
        doc = json.loads(self.body)
        if not isinstance(doc, dict):
            raise ValueError("signed document is not a JSON object")
        return doc

    def to_bytes(self) -> bytes:
        return pki.pack_blobs([self.body, self.signature])

    @classmethod
    def from_bytes(cls, data: bytes) -> "SignedDocument":
        parts = pki.unpack_blobs(data)
        if len(parts) != 2:
            raise ValueError(f"signed document needs 2 parts, got {len(parts)}")
        return cls(*parts)


@dataclass(frozen=True)
class EpidEvidence:
    avr: bytes
    avr_signature: bytes
    signing_cert: bytes

    def report(self) -> dict:
        doc = json.loads(self.avr)
        if not isinstance(doc, dict):
            raise ValueError("AVR is not a JSON object")
        return doc

    def quote_bytes(self) -> bytes:
        return base64.b64decode(self.report()["isvEnclaveQuoteBody"], validate=True)

    def quote(self) -> SgxQuote:
        return SgxQuote.from_bytes(self.quote_bytes())

    def timestamp(self):
        return pki.parse_iso(self.report()["timestamp"])


@dataclass(frozen=True)
class EcdsaEvidence:
    quote: SgxQuote
    tcb_info: SignedDocument
    tcb_signing_chain: tuple[bytes, ...]
    pck_cert: bytes
    pck_signing_chain: tuple[bytes, ...]
    crls: tuple[bytes, ...]
    qe_identity: SignedDocument

    def __post_init__(self):
        for name in ("tcb_signing_chain", "pck_signing_chain", "crls"):
            object.__setattr__(self, name, tuple(getattr(self, name)))


Payload = Union[EpidEvidence, EcdsaEvidence]


@dataclass(frozen=True)
class EvidenceBundle:
    kind: EvidenceKind
    payload: Payload
    # Transport detail only: bundles compare equal regardless of compression.
    compressed: bool = field(default=False, compare=False)

    def __post_init__(self):
        expected = EpidEvidence if self.kind == EvidenceKind.EPID else EcdsaEvidence
        if not isinstance(self.payload, expected):
            raise TypeError(f"{self.kind.name} bundle needs {expected.__name__} payload")

    @property
    def quote(self) -> SgxQuote:
        if isinstance(self.payload, EcdsaEvidence):
            return self.payload.quote
        return self.payload.quote()


# compression -----------------------------------------------------------------


def compress_payload(data: bytes) -> bytes:
    comp = zlib.compressobj(9, zlib.DEFLATED, -15)
    return bytes([DEFLATE]) + comp.compress(bytes(data)) + comp.flush()


def decompress_payload(data: bytes) -> bytes:
    if not data:
        raise CorruptStream("empty payload")
    header, body = data[0], bytes(data[1:])
    if header == RAW:
        return body
    if header != DEFLATE:
        raise CorruptStream(f"unknown payload header {header:#04x}")
    decomp = zlib.decompressobj(-15)
    try:
        out = decomp.decompress(body) + decomp.flush()
    except zlib.error as exc:
        raise CorruptStream(str(exc)) from exc
    if not decomp.eof or decomp.unused_data:
        raise CorruptStream("truncated or trailing DEFLATE data")
    return out


def _frame(data: bytes, compress: bool) -> bytes:
    return compress_payload(data) if compress else bytes([RAW]) + data


# encode / decode -------------------------------------------------------------


def _item_bytes(payload: Payload) -> dict[Item, bytes]:
    if isinstance(payload, EpidEvidence):
        return {
            Item.AVR: payload.avr,
            Item.AVR_SIGNATURE: payload.avr_signature,
            Item.REPORT_SIGNING_CERT: payload.signing_cert,
        }
    return {
        Item.QUOTE: payload.quote.to_bytes(),
        Item.TCB_INFO: payload.tcb_info.to_bytes(),
        Item.TCB_SIGNING_CHAIN: pki.pack_blobs(payload.tcb_signing_chain),
        Item.PCK_CERT: payload.pck_cert,
        Item.PCK_SIGNING_CHAIN: pki.pack_blobs(payload.pck_signing_chain),
        Item.CRLS: pki.pack_blobs(payload.crls),
        Item.QE_IDENTITY: payload.qe_identity.to_bytes(),
    }


def encode_bundle(
    bundle: EvidenceBundle, registry: ExtensionRegistry = DEFAULT_REGISTRY
) -> list[tuple[str, bytes]]:
    """One (OID, payload) pair per evidence item, format tag first."""
    pairs = [(registry.format_oid, bytes([int(bundle.kind)]))]
    for item, data in _item_bytes(bundle.payload).items():
        pairs.append((registry.oid(item), _frame(data, bundle.compressed)))
    return pairs


def _load_certs(blobs: Iterable[bytes]) -> tuple[bytes, ...]:
    out = []
    for blob in blobs:
        x509.load_der_x509_certificate(blob)
        out.append(blob)
    return tuple(out)


def _load_crls(blobs: Iterable[bytes]) -> tuple[bytes, ...]:
    out = []
    for blob in blobs:
        x509.load_der_x509_crl(blob)
        out.append(blob)
    return tuple(out)


def _nonempty_chain(data: bytes) -> tuple[bytes, ...]:
    blobs = pki.unpack_blobs(data)
    if not blobs:
        raise ValueError("empty certificate chain")
    return _load_certs(blobs)


def decode_bundle(
    extensions: Iterable[tuple[str, bytes]], registry: ExtensionRegistry = DEFAULT_REGISTRY
) -> EvidenceBundle:
    """Rebuild an :class:`EvidenceBundle` from (OID, payload) pairs in any order."""
    found: dict[Item, bytes] = {}
    for oid, value in extensions:
        item = registry.item(oid)
        if item is None:
            continue
        if item in found:
            raise MalformedExtension(f"duplicate extension {oid}")
        found[item] = bytes(value)

    if Item.FORMAT not in found:
        raise MissingExtension(f"format tag {registry.format_oid} absent")
    tag = found.pop(Item.FORMAT)
    if len(tag) != 1:
        raise MalformedExtension(f"format tag must be 1 byte, got {len(tag)}")
    try:
        kind = EvidenceKind(tag[0])
    except ValueError:
        raise UnknownFormat(f"format tag {tag[0]:#04x}") from None

    other = EvidenceKind.ECDSA if kind == EvidenceKind.EPID else EvidenceKind.EPID
    stray = [item for item in ITEMS_BY_KIND[other] if item in found]
    if stray:
        raise MalformedExtension(
            f"{kind.name} bundle also carries {other.name} items: {[i.name for i in stray]}"
        )
    missing = [item for item in ITEMS_BY_KIND[kind] if item not in found]
    if missing:
        raise MissingExtension(f"missing evidence items: {[i.name for i in missing]}")

    compressed = all(found[item][:1] == bytes([DEFLATE]) for item in ITEMS_BY_KIND[kind])
    raw = {item: decompress_payload(found[item]) for item in ITEMS_BY_KIND[kind]}
    try:
        if kind == EvidenceKind.EPID:
            payload = EpidEvidence(
                avr=raw[Item.AVR],
                avr_signature=raw[Item.AVR_SIGNATURE],
                signing_cert=_load_certs([raw[Item.REPORT_SIGNING_CERT]])[0],
            )
            payload.report()
        else:
            payload = EcdsaEvidence(
                quote=SgxQuote.from_bytes(raw[Item.QUOTE]),
                tcb_info=SignedDocument.from_bytes(raw[Item.TCB_INFO]),
                tcb_signing_chain=_nonempty_chain(raw[Item.TCB_SIGNING_CHAIN]),
                pck_cert=_load_certs([raw[Item.PCK_CERT]])[0],
                pck_signing_chain=_nonempty_chain(raw[Item.PCK_SIGNING_CHAIN]),
                crls=_load_crls(pki.unpack_blobs(raw[Item.CRLS])),
                qe_identity=SignedDocument.from_bytes(raw[Item.QE_IDENTITY]),
            )
    except (ValueError, MalformedQuote) as exc:
        raise MalformedExtension(f"undecodable {kind.name} evidence: {exc}") from exc
    return EvidenceBundle(kind, payload, compressed)


# assembly --------------------------------------------------------------------


def assemble_epid_evidence(quote: SgxQuote, ias, spid: bytes) -> EpidEvidence:
    """Submit ``quote`` to the IAS and package its signed reply.

    ``ias`` is anything with ``verify_quote(quote_bytes, spid)`` returning an
    object with ``avr``, ``signature`` and ``signing_cert`` attributes: the
    in-process mock or the HTTP client.
    """
    if quote.sign_type != SignType.EPID_SIM:
        raise ValueError("EPID evidence needs an EPID_SIM quote")
    try:
        resp = ias.verify_quote(quote.to_bytes(), spid)
    except QuoteInvalid as exc:
        raise IasRejected(str(exc)) from exc
    return EpidEvidence(avr=resp.avr, avr_signature=resp.signature, signing_cert=resp.signing_cert)


def assemble_ecdsa_evidence(quote: SgxQuote, pcs, platform_id: bytes, api_key: str) -> EcdsaEvidence:
    """Collect the PCK certificate and current collateral for ``quote``."""
    if quote.sign_type != SignType.ECDSA_SIM:
        raise ValueError("ECDSA evidence needs an ECDSA_SIM quote")
    pck = pcs.get_pck_cert(platform_id, api_key)
    tcb = pcs.get_tcb_info()
    qe = pcs.get_qe_identity()
    return EcdsaEvidence(
        quote=quote,
        tcb_info=tcb.document,
        tcb_signing_chain=tcb.chain,
        pck_cert=pck.pck_cert,
        pck_signing_chain=pck.chain,
        crls=pcs.get_crls(),
        qe_identity=qe.document,
    )
