"""Scenario fixtures and the catalog of certificate mutations.

A :class:`Scenario` is one simulated world (mock services, a platform, an
enclave) on a controllable clock. The catalog derives tampered or otherwise
non-conforming certificates from scenarios and pairs each with the cause the
verifier must report. Tests, the acceptance suite and ``ratls``-level checks
all draw from the same catalog.
"""

from __future__ import annotations

import base64
import dataclasses
import datetime as dt
import hashlib
import json
import random
from dataclasses import dataclass
from typing import Callable, Iterator

from cryptography import x509
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.x509.oid import NameOID

from . import pki
from .certgen import (
    AttesterConfig,
    RaTlsCertificate,
    build_certificate,
    bundle_from_cert,
    create_key_and_cert,
    load_cert,
    raw_extensions,
)
from .evidence import (
    DEFAULT_REGISTRY,
    EvidenceBundle,
    EvidenceKind,
    Item,
    SignedDocument,
    assemble_ecdsa_evidence,
    assemble_epid_evidence,
    encode_bundle,
)
from .sgx_sim import FLAG_DEBUG, SgxAttributes, SgxQuote, SignType, SimulatedEnclave, create_report
from .services import SimulationWorld
from .verifier import Cause, VerificationPolicy

SPID = bytes(range(16))
API_KEY = "catalog-subscription-key"
VERIFY_OFFSET = dt.timedelta(minutes=1)


class Clock:
    """Settable clock shared by the mock services and the attester."""

    def __init__(self, start: dt.datetime | None = None):
        self.now = pki.as_utc(start or pki.utcnow()).replace(microsecond=0)

    def __call__(self) -> dt.datetime:
        return self.now

    def advance(self, delta: dt.timedelta) -> None:
        self.now += delta


def random_enclave(rng: random.Random, platform_id: bytes, debug: bool = False) -> SimulatedEnclave:
    flags = SgxAttributes().flags | (FLAG_DEBUG if debug else 0)
    return SimulatedEnclave(
        mr_enclave=rng.randbytes(32),
        mr_signer=rng.randbytes(32),
        isv_prod_id=rng.randrange(1 << 16),
        isv_svn=rng.randrange(1 << 16),
        attributes=SgxAttributes(flags),
        platform_id=platform_id,
    )


@dataclass
class Scenario:
    mode: EvidenceKind
    world: SimulationWorld
    clock: Clock
    enclave: SimulatedEnclave
    compress: bool = False

    @classmethod
    def create(
        cls,
        mode: EvidenceKind,
        rng: random.Random | None = None,
        compress: bool = False,
        start: dt.datetime | None = None,
    ) -> "Scenario":
        rng = rng or random.Random()
        clock = Clock(start)
        world = SimulationWorld.create(clock=clock)
        enclave = random_enclave(rng, world.platform().platform_id)
        return cls(EvidenceKind(mode), world, clock, enclave, compress)

    @property
    def platform(self):
        return self.world.platform(self.enclave.platform_id)

    @property
    def verify_time(self) -> dt.datetime:
        return self.clock() + VERIFY_OFFSET

    def attester(self, enclave: SimulatedEnclave | None = None, **overrides) -> AttesterConfig:
        if self.mode == EvidenceKind.EPID:
            service = dict(ias=self.world.ias, spid=SPID)
        else:
            service = dict(pcs=self.world.pcs, api_key=API_KEY)
        kwargs = dict(compress=self.compress, clock=self.clock, **service)
        kwargs.update(overrides)
        return AttesterConfig(self.mode, enclave or self.enclave, self.platform, **kwargs)

    def issue(self, enclave: SimulatedEnclave | None = None, **overrides) -> RaTlsCertificate:
        return create_key_and_cert(self.attester(enclave, **overrides))

    def policy(self, enclave: SimulatedEnclave | None = None, **overrides) -> VerificationPolicy:
        enclave = enclave or self.enclave
        kwargs = dict(
            trust_roots=tuple(self.world.trust_roots),
            golden_mr_enclave=enclave.mr_enclave,
            golden_mr_signer=enclave.mr_signer,
            min_isv_svn=enclave.isv_svn,
            allow_debug=enclave.debug,
            current_time=self.verify_time,
        )
        kwargs.update(overrides)
        return VerificationPolicy(**kwargs)

    def pck_serial(self) -> int:
        return self.world.pcs.platforms[self.platform.platform_id].cert.serial_number


# certificate surgery ---------------------------------------------------------------


def flip(data: bytes, pos: int, mask: int = 0x01) -> bytes:
    out = bytearray(data)
    out[pos] ^= mask
    return bytes(out)


def signature_tail(der: bytes, rng: random.Random) -> int:
    """A byte position inside the trailing ECDSA ``s`` value of a signed DER object."""
    return len(der) - 1 - rng.randrange(24)


def rebuild_cert(
    cert_der: bytes,
    key,
    extensions: list[tuple[str, bytes]] | None = None,
    *,
    subject: str | None = None,
    not_before: dt.datetime | None = None,
    not_after: dt.datetime | None = None,
) -> bytes:
    """Re-sign the certificate with ``key``, optionally swapping its registry extensions.

    With a key other than the original this is the relay attacker's move:
    genuine evidence presented under a different TLS key.
    """
    cert = load_cert(cert_der)
    if extensions is None:
        extensions = raw_extensions(cert)
    cn = cert.subject.get_attributes_for_oid(NameOID.COMMON_NAME)[0].value
    critical = any(e.critical for e in cert.extensions)
    return build_certificate(
        key,
        extensions,
        subject or cn,
        not_before or cert.not_valid_before_utc,
        not_after or cert.not_valid_after_utc,
        critical=critical,
    )


def with_bundle(cred: RaTlsCertificate, bundle: EvidenceBundle) -> bytes:
    return rebuild_cert(cred.cert_der, cred.private_key(), encode_bundle(bundle))


def with_payload(cred: RaTlsCertificate, **changes) -> bytes:
    bundle = bundle_from_cert(cred.cert_der)
    payload = dataclasses.replace(bundle.payload, **changes)
    return with_bundle(cred, EvidenceBundle(bundle.kind, payload, bundle.compressed))


def with_extensions(cred: RaTlsCertificate, edit: Callable[[list], list]) -> bytes:
    exts = raw_extensions(cred.certificate())
    return rebuild_cert(cred.cert_der, cred.private_key(), edit(list(exts)))


def forge_with_report_data(scenario: Scenario, report_data: Callable[[bytes], bytes]) -> bytes:
    """Genuine evidence whose report_data is ``report_data(spki)`` rather than the binding hash."""
    key = ec.generate_private_key(ec.SECP256R1())
    config = scenario.attester()
    report = create_report(config.enclave, report_data(pki.spki_der(key.public_key())), config.platform)
    if config.attestation_mode == EvidenceKind.EPID:
        quote = config.platform.quote(report, SignType.EPID_SIM)
        payload = assemble_epid_evidence(quote, config.ias, config.spid)
    else:
        quote = config.platform.quote(report, SignType.ECDSA_SIM)
        payload = assemble_ecdsa_evidence(quote, config.pcs, config.platform.platform_id, config.api_key)
    bundle = EvidenceBundle(config.attestation_mode, payload, config.compress)
    now = scenario.clock()
    return build_certificate(key, encode_bundle(bundle), config.subject_name, now, now + config.cert_validity)


def _tweak_digit(text: bytes, start: int, length: int) -> bytes:
    """Change the last digit inside ``text[start:start+length]`` keeping it a valid time."""
    i = start + length - 1
    while not chr(text[i]).isdigit():
        i -= 1
    digit = text[i] - ord("0")
    out = bytearray(text)
    out[i] = ord("0") + (digit + 1) % 10 if digit < 9 else ord("0")
    return bytes(out)


def tamper_json_field(body: bytes, key: str) -> bytes:
    """Alter one digit of a timestamp-valued JSON member without re-signing."""
    value = json.loads(body)[key]
    needle = f'"{key}":"{value}"'.encode()
    pos = body.index(needle)
    return _tweak_digit(body, pos, len(needle))


def tamper_asn1_time(der: bytes, when: dt.datetime) -> bytes:
    """Alter the encoded seconds of a UTCTime/GeneralizedTime inside signed DER."""
    for fmt in ("%y%m%d%H%M%SZ", "%Y%m%d%H%M%SZ"):
        needle = pki.as_utc(when).strftime(fmt).encode()
        pos = der.find(needle)
        if pos >= 0:
            return _tweak_digit(der, pos, len(needle) - 1)
    raise ValueError(f"time {when} not found in DER")


# catalog -------------------------------------------------------------------------


@dataclass(frozen=True)
class MutationCase:
    name: str
    mutation: str
    mode: EvidenceKind
    expected: Cause
    cert_der: bytes
    policy: VerificationPolicy


BOTH = (EvidenceKind.EPID, EvidenceKind.ECDSA)
EPID_ONLY = (EvidenceKind.EPID,)
ECDSA_ONLY = (EvidenceKind.ECDSA,)

# each builder yields (label, cert_der, policy)
Builder = Callable[["_Context"], Iterator[tuple[str, bytes, VerificationPolicy]]]


@dataclass(frozen=True)
class Mutation:
    name: str
    expected: Cause
    modes: tuple[EvidenceKind, ...]
    build: Builder
    description: str = ""


@dataclass
class _Context:
    """Baseline shared by the mutations of one mode, plus a source of fresh scenarios."""

    base: Scenario
    cred: RaTlsCertificate
    rng: random.Random
    samples: int

    @property
    def mode(self) -> EvidenceKind:
        return self.base.mode

    @property
    def policy(self) -> VerificationPolicy:
        return self.base.policy()

    def fresh(self) -> Scenario:
        return Scenario.create(self.mode, random.Random(self.rng.random()), self.base.compress)

    def bundle(self) -> EvidenceBundle:
        return bundle_from_cert(self.cred.cert_der)


def _positions(ctx: _Context, size: int) -> list[int]:
    return ctx.rng.sample(range(size), min(ctx.samples, size))


# signatures


def _cert_signature(ctx):
    for _ in range(ctx.samples):
        pos = signature_tail(ctx.cred.cert_der, ctx.rng)
        yield f"byte {pos}", flip(ctx.cred.cert_der, pos), ctx.policy


def _avr_signature(ctx):
    sig = ctx.bundle().payload.avr_signature
    for pos in _positions(ctx, len(sig)):
        yield f"byte {pos}", with_payload(ctx.cred, avr_signature=flip(sig, pos)), ctx.policy


def _signing_cert_signature(ctx):
    der = ctx.bundle().payload.signing_cert
    for _ in range(ctx.samples):
        pos = signature_tail(der, ctx.rng)
        yield f"byte {pos}", with_payload(ctx.cred, signing_cert=flip(der, pos)), ctx.policy


def _quote_signature(ctx):
    payload = ctx.bundle().payload
    if ctx.mode == EvidenceKind.ECDSA:
        quote = payload.quote
        for pos in _positions(ctx, len(quote.signature)):
            bad = dataclasses.replace(quote, signature=flip(quote.signature, pos))
            yield f"byte {pos}", with_payload(ctx.cred, quote=bad), ctx.policy
    else:
        quote = payload.quote()
        for pos in _positions(ctx, len(quote.signature)):
            bad = dataclasses.replace(quote, signature=flip(quote.signature, pos))
            yield f"byte {pos}", with_payload(ctx.cred, avr=_replace_avr_quote(payload.avr, bad)), ctx.policy


def _replace_avr_quote(avr: bytes, quote: SgxQuote) -> bytes:
    doc = json.loads(avr)
    doc["isvEnclaveQuoteBody"] = base64.b64encode(quote.to_bytes()).decode()
    return json.dumps(doc, separators=(",", ":")).encode()


def _chain_signature(field_name: str, index: int | None):
    def build(ctx):
        payload = ctx.bundle().payload
        value = getattr(payload, field_name)
        der = value if index is None else value[index]
        for _ in range(ctx.samples):
            pos = signature_tail(der, ctx.rng)
            bad = flip(der, pos)
            if index is not None:
                bad = tuple(bad if i == index else c for i, c in enumerate(value))
            yield f"byte {pos}", with_payload(ctx.cred, **{field_name: bad}), ctx.policy

    return build


def _document_signature(field_name: str):
    def build(ctx):
        doc: SignedDocument = getattr(ctx.bundle().payload, field_name)
        for pos in _positions(ctx, len(doc.signature)):
            bad = SignedDocument(doc.body, flip(doc.signature, pos))
            yield f"byte {pos}", with_payload(ctx.cred, **{field_name: bad}), ctx.policy

    return build


def _crl_signature(ctx):
    crls = ctx.bundle().payload.crls
    for index, der in enumerate(crls):
        for _ in range(ctx.samples):
            pos = signature_tail(der, ctx.rng)
            bad = tuple(flip(c, pos) if i == index else c for i, c in enumerate(crls))
            yield f"crl {index} byte {pos}", with_payload(ctx.cred, crls=bad), ctx.policy


# measurements


def _quote_body_offsets() -> dict[str, range]:
    # header is 8 bytes; report body offsets follow the fixed layout
    return {
        "mr_enclave": range(8 + 64, 8 + 96),
        "mr_signer": range(8 + 128, 8 + 160),
        "isv_svn": range(8 + 258, 8 + 260),
        "report_data": range(8 + 368, 8 + 400),
    }


def _tampered_quote_cert(ctx, pos: int) -> bytes:
    payload = ctx.bundle().payload
    if ctx.mode == EvidenceKind.ECDSA:
        raw = payload.quote.to_bytes()
        return with_payload(ctx.cred, quote=SgxQuote.from_bytes(flip(raw, pos)))
    raw = payload.quote_bytes()
    doc = json.loads(payload.avr)
    doc["isvEnclaveQuoteBody"] = base64.b64encode(flip(raw, pos)).decode()
    return with_payload(ctx.cred, avr=json.dumps(doc, separators=(",", ":")).encode())


def _measurement_tamper(ctx):
    for field_name, span in _quote_body_offsets().items():
        for pos in ctx.rng.sample(span, min(ctx.samples, len(span))):
            yield f"{field_name} byte {pos - 8}", _tampered_quote_cert(ctx, pos), ctx.policy


def _measurement_mismatch(ctx):
    enclave = ctx.base.enclave
    for field_name in ("mr_enclave", "mr_signer"):
        for pos in _positions(ctx, 32):
            golden = flip(getattr(enclave, field_name), pos)
            policy = ctx.base.policy(**{f"golden_{field_name}": golden})
            yield f"{field_name} byte {pos}", ctx.cred.cert_der, policy


# timestamps


def _timestamp_tamper(ctx):
    payload = ctx.bundle().payload
    if ctx.mode == EvidenceKind.EPID:
        yield "AVR timestamp", with_payload(ctx.cred, avr=tamper_json_field(payload.avr, "timestamp")), ctx.policy
    else:
        for field_name in ("tcb_info", "qe_identity"):
            doc = getattr(payload, field_name)
            for key in ("issueDate", "nextUpdate"):
                bad = SignedDocument(tamper_json_field(doc.body, key), doc.signature)
                yield f"{field_name} {key}", with_payload(ctx.cred, **{field_name: bad}), ctx.policy
        for index, der in enumerate(payload.crls):
            crl = x509.load_der_x509_crl(der)
            for label, when in (("thisUpdate", crl.last_update_utc), ("nextUpdate", crl.next_update_utc)):
                bad_der = tamper_asn1_time(der, when)
                crls = tuple(bad_der if i == index else c for i, c in enumerate(payload.crls))
                yield f"crl {index} {label}", with_payload(ctx.cred, crls=crls), ctx.policy


def _cert_validity_tamper(ctx):
    cert = ctx.cred.certificate()
    for label, when in (("notBefore", cert.not_valid_before_utc), ("notAfter", cert.not_valid_after_utc)):
        yield label, tamper_asn1_time(ctx.cred.cert_der, when), ctx.policy


def _stale_avr(ctx):
    issued = ctx.base.clock()
    for hours in (2, 5, 23):
        policy = ctx.base.policy(
            max_evidence_age=dt.timedelta(hours=1), current_time=issued + dt.timedelta(hours=hours)
        )
        yield f"verified {hours}h later, max age 1h", ctx.cred.cert_der, policy
    boundary = ctx.base.policy(current_time=issued + dt.timedelta(hours=24, seconds=1))
    yield "max age + 1s", ctx.cred.cert_der, boundary


def _expired_collateral(name: str):
    def build(ctx):
        sc = ctx.fresh()
        now = sc.clock()
        short = now + dt.timedelta(seconds=30)
        pcs = sc.world.pcs
        if name == "crl":
            cred = sc.issue()
            crls = pcs.make_crls(now, short)
            yield "CRL nextUpdate passed", with_payload(cred, crls=crls), sc.policy()
            return
        maker = pcs.make_tcb_info if name == "tcb" else pcs.make_qe_identity
        pcs.override_collateral(name, maker(now, short))
        yield f"{name} nextUpdate passed", sc.issue().cert_der, sc.policy()
        pcs.override_collateral(name, maker(now + dt.timedelta(hours=1)))
        yield f"{name} issued in the future", sc.issue().cert_der, sc.policy()

    return build


def _expired_cert(ctx):
    sc = ctx.fresh()
    cred = sc.issue(cert_validity=dt.timedelta(seconds=30))
    yield "certificate notAfter passed", cred.cert_der, sc.policy()
    yield "verified before notBefore", ctx.cred.cert_der, ctx.base.policy(
        current_time=ctx.base.clock() - dt.timedelta(hours=1)
    )


# extensions


def _item_oids(ctx) -> list[str]:
    return [oid for oid, _ in raw_extensions(ctx.cred.certificate())]


def _extension_removal(ctx):
    for oid in _item_oids(ctx):
        item = DEFAULT_REGISTRY.item(oid)
        yield f"without {item.name}", with_extensions(ctx.cred, lambda e, o=oid: [x for x in e if x[0] != o]), ctx.policy


def _half(payload: bytes) -> bytes:
    """Cut a payload roughly in half, never at a length-prefixed blob boundary."""
    cut = len(payload) // 2
    if payload[:1] == b"\x00":
        while cut > 1:
            try:
                pki.unpack_blobs(payload[1:cut])
            except ValueError:
                break
            cut -= 1
    return payload[:cut]


def _extension_truncation(ctx):
    for oid in _item_oids(ctx):
        item = DEFAULT_REGISTRY.item(oid)
        if item in (Item.FORMAT, Item.AVR_SIGNATURE):
            continue

        def edit(exts, o=oid):
            return [(x, _half(p) if x == o else p) for x, p in exts]

        yield f"{item.name} cut in half", with_extensions(ctx.cred, edit), ctx.policy


def _format_tag(ctx):
    other = EvidenceKind.ECDSA if ctx.mode == EvidenceKind.EPID else EvidenceKind.EPID
    fmt = DEFAULT_REGISTRY.format_oid
    for label, tag in (
        ("0x00", b"\x00"), ("0x07", b"\x07"), ("0xff", b"\xff"),
        (f"claims {other.name}", bytes([int(other)])), ("empty", b""), ("two bytes", bytes([int(ctx.mode), 0])),
    ):
        yield label, with_extensions(ctx.cred, lambda e, t=tag: [(o, t if o == fmt else p) for o, p in e]), ctx.policy


def _both_formats(ctx):
    other = ctx.fresh()
    other_mode = EvidenceKind.ECDSA if ctx.mode == EvidenceKind.EPID else EvidenceKind.EPID
    other_cred = dataclasses.replace(other, mode=other_mode).issue()
    extra = [(o, p) for o, p in raw_extensions(other_cred.certificate()) if o != DEFAULT_REGISTRY.format_oid]
    yield f"{ctx.mode.name} tag with {other_mode.name} items", with_extensions(ctx.cred, lambda e: e + extra), ctx.policy


# binding


def _key_substitution(ctx):
    for i in range(ctx.samples):
        key = ec.generate_private_key(ec.SECP256R1())
        yield f"relay key {i}", rebuild_cert(ctx.cred.cert_der, key), ctx.policy
    other = ctx.base.issue()
    exts = raw_extensions(other.certificate())
    yield "evidence of a sibling certificate", rebuild_cert(ctx.cred.cert_der, ctx.cred.private_key(), exts), ctx.policy


def _report_data(ctx):
    yield "report_data all zero", forge_with_report_data(ctx.base, lambda spki: bytes(64)), ctx.policy
    padded = lambda spki: hashlib.sha256(spki).digest() + b"\x01" * 32  # noqa: E731
    yield "hash with nonzero padding", forge_with_report_data(ctx.base, padded), ctx.policy
    swapped = lambda spki: bytes(32) + hashlib.sha256(spki).digest()  # noqa: E731
    yield "hash in the upper half", forge_with_report_data(ctx.base, swapped), ctx.policy


# platform and collateral state


def _revoked_pck(ctx):
    sc = ctx.fresh()
    sc.world.pcs.revoke(sc.pck_serial())
    yield "PCK serial on PCK-issuer CRL", sc.issue().cert_der, sc.policy()
    sc = ctx.fresh()
    sc.world.pcs.revoke(sc.world.pcs.pck_ca_cert.serial_number)
    yield "PCK CA serial on root CRL", sc.issue().cert_der, sc.policy()


def _tcb_status(status: str):
    def build(ctx):
        sc = ctx.fresh()
        if ctx.mode == EvidenceKind.ECDSA:
            sc.world.pcs.set_tcb_status(sc.platform.cpu_svn, status)
        else:
            ias_status = {"OutOfDate": "GROUP_OUT_OF_DATE", "Revoked": "GROUP_REVOKED"}[status]
            sc.world.ias.set_platform_status(sc.platform.attestation_key, ias_status)
            status_label = ias_status
        yield (status if ctx.mode == EvidenceKind.ECDSA else status_label), sc.issue().cert_der, sc.policy()

    return build


def _avr_status_other(ctx):
    for status in ("CONFIGURATION_NEEDED", "SIGRL_VERSION_MISMATCH", "SIGNATURE_INVALID"):
        sc = ctx.fresh()
        sc.world.ias.set_platform_status(sc.platform.attestation_key, status)
        yield status, sc.issue().cert_der, sc.policy()


def _qe_svn(ctx):
    sc = ctx.fresh()
    sc.world.pcs.set_qe_identity(min_svn=sc.platform.qe_svn + 1)
    yield f"minQeSvn {sc.platform.qe_svn + 1} > qe_svn {sc.platform.qe_svn}", sc.issue().cert_der, sc.policy()


# identity policy


def _debug(ctx):
    enclave = dataclasses.replace(ctx.base.enclave, attributes=SgxAttributes(SgxAttributes().flags | FLAG_DEBUG))
    cert = ctx.base.issue(enclave).cert_der
    yield "DEBUG enclave, allow_debug off", cert, ctx.base.policy(enclave, allow_debug=False)


def _isv_svn(ctx):
    for svn, minimum in ((0, 1), (3, 4), (0x7FFF, 0xFFFF)):
        enclave = dataclasses.replace(ctx.base.enclave, isv_svn=svn)
        yield f"isv_svn {svn} < {minimum}", ctx.base.issue(enclave).cert_der, ctx.base.policy(enclave, min_isv_svn=minimum)


def _cn_mismatch(ctx):
    wrong = flip(ctx.base.enclave.mr_enclave, 0).hex()
    yield "CN carries another MRENCLAVE", rebuild_cert(ctx.cred.cert_der, ctx.cred.private_key(), subject=wrong), ctx.policy


def _untrusted_root(ctx):
    stranger = SimulationWorld.create(clock=ctx.base.clock, platforms=0)
    yield "policy trusts another simulation", ctx.cred.cert_der, ctx.base.policy(trust_roots=tuple(stranger.trust_roots))


# not RA-TLS at all


def _not_ratls(ctx):
    key = ec.generate_private_key(ec.SECP256R1())
    now = ctx.base.clock()
    plain = build_certificate(key, [], "plain.example", now, now + dt.timedelta(days=1))
    yield "plain self-signed certificate", plain, ctx.policy


def _garbage(ctx):
    yield "truncated DER", ctx.cred.cert_der[: len(ctx.cred.cert_der) // 2], ctx.policy
    yield "random bytes", ctx.rng.randbytes(300), ctx.policy


MUTATIONS: tuple[Mutation, ...] = (
    Mutation("cert-signature", Cause.BAD_CERT_SIGNATURE, BOTH, _cert_signature,
             "byte flipped in the certificate's self-signature"),
    Mutation("cert-validity-tamper", Cause.BAD_CERT_SIGNATURE, BOTH, _cert_validity_tamper,
             "validity time edited without re-signing"),
    Mutation("avr-signature", Cause.BAD_EVIDENCE_SIGNATURE, EPID_ONLY, _avr_signature),
    Mutation("report-signing-cert-signature", Cause.UNTRUSTED_SIGNER, EPID_ONLY, _signing_cert_signature),
    Mutation("quote-signature", Cause.BAD_EVIDENCE_SIGNATURE, BOTH, _quote_signature),
    Mutation("pck-cert-signature", Cause.UNTRUSTED_SIGNER, ECDSA_ONLY, _chain_signature("pck_cert", None)),
    Mutation("pck-chain-signature", Cause.UNTRUSTED_SIGNER, ECDSA_ONLY, _chain_signature("pck_signing_chain", 0)),
    Mutation("tcb-chain-signature", Cause.UNTRUSTED_SIGNER, ECDSA_ONLY, _chain_signature("tcb_signing_chain", 0)),
    Mutation("tcb-info-signature", Cause.BAD_EVIDENCE_SIGNATURE, ECDSA_ONLY, _document_signature("tcb_info")),
    Mutation("qe-identity-signature", Cause.BAD_EVIDENCE_SIGNATURE, ECDSA_ONLY, _document_signature("qe_identity")),
    Mutation("crl-signature", Cause.BAD_EVIDENCE_SIGNATURE, ECDSA_ONLY, _crl_signature),
    Mutation("measurement-tamper", Cause.BAD_EVIDENCE_SIGNATURE, BOTH, _measurement_tamper,
             "quote body bytes edited after signing"),
    Mutation("measurement-mismatch", Cause.IDENTITY_MISMATCH, BOTH, _measurement_mismatch,
             "genuine evidence, golden value differs in one byte"),
    Mutation("timestamp-tamper", Cause.BAD_EVIDENCE_SIGNATURE, BOTH, _timestamp_tamper),
    Mutation("stale-avr", Cause.STALE_EVIDENCE, EPID_ONLY, _stale_avr),
    Mutation("expired-tcb-info", Cause.STALE_EVIDENCE, ECDSA_ONLY, _expired_collateral("tcb")),
    Mutation("expired-qe-identity", Cause.STALE_EVIDENCE, ECDSA_ONLY, _expired_collateral("qe")),
    Mutation("expired-crl", Cause.STALE_EVIDENCE, ECDSA_ONLY, _expired_collateral("crl")),
    Mutation("cert-outside-validity", Cause.STALE_EVIDENCE, BOTH, _expired_cert),
    Mutation("extension-removal", Cause.MISSING_EVIDENCE, BOTH, _extension_removal),
    Mutation("extension-truncation", Cause.MALFORMED_EVIDENCE, BOTH, _extension_truncation),
    Mutation("format-tag", Cause.MALFORMED_EVIDENCE, BOTH, _format_tag),
    Mutation("both-formats", Cause.MALFORMED_EVIDENCE, BOTH, _both_formats),
    Mutation("key-substitution", Cause.KEY_BINDING_MISMATCH, BOTH, _key_substitution),
    Mutation("report-data-binding", Cause.KEY_BINDING_MISMATCH, BOTH, _report_data),
    Mutation("crl-listed-pck", Cause.REVOKED, ECDSA_ONLY, _revoked_pck),
    Mutation("tcb-out-of-date", Cause.TCB_OUT_OF_DATE, BOTH, _tcb_status("OutOfDate")),
    Mutation("tcb-revoked", Cause.REVOKED, BOTH, _tcb_status("Revoked")),
    Mutation("avr-status-not-ok", Cause.TCB_OUT_OF_DATE, EPID_ONLY, _avr_status_other),
    Mutation("qe-svn-below-minimum", Cause.QE_IDENTITY_MISMATCH, ECDSA_ONLY, _qe_svn),
    Mutation("debug-not-allowed", Cause.DEBUG_NOT_ALLOWED, BOTH, _debug),
    Mutation("isv-svn-below-minimum", Cause.SVN_TOO_LOW, BOTH, _isv_svn),
    Mutation("cn-mrenclave-mismatch", Cause.IDENTITY_MISMATCH, BOTH, _cn_mismatch),
    Mutation("untrusted-root", Cause.UNTRUSTED_SIGNER, BOTH, _untrusted_root),
    Mutation("not-ratls", Cause.MISSING_EVIDENCE, BOTH, _not_ratls),
    Mutation("garbage-der", Cause.MALFORMED_EVIDENCE, BOTH, _garbage),
)


def mutation_catalog(
    seed: int = 0,
    samples: int = 3,
    modes: tuple[EvidenceKind, ...] = BOTH,
    compress: bool = False,
    only: set[str] | None = None,
) -> list[MutationCase]:
    """Materialize every mutation instance for the given modes.

    ``samples`` bounds the random byte positions tried per corrupted field.
    """
    rng = random.Random(seed)
    cases: list[MutationCase] = []
    for mode in modes:
        base = Scenario.create(mode, random.Random(rng.random()), compress)
        ctx = _Context(base, base.issue(), random.Random(rng.random()), samples)
        for mutation in MUTATIONS:
            if mode not in mutation.modes or (only and mutation.name not in only):
                continue
            for label, cert_der, policy in mutation.build(ctx):
                cases.append(MutationCase(
                    f"{mode.name.lower()}/{mutation.name}/{label}",
                    mutation.name, mode, mutation.expected, cert_der, policy,
                ))
    return cases
