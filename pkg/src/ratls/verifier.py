"""Challenger side: validate an RA-TLS certificate and its embedded evidence.

``verify_ratls_cert`` runs, in order and stopping at the first failure:

1. certificate parse and self-signature
2. evidence decode
3. mode-specific evidence integrity (EPID or ECDSA signature chains,
   revocation, QE identity, TCB status)
4. key binding (report_data holds the hash of the certificate key)
5. freshness (validity windows, evidence age)
6. identity policy (pinned measurements, debug, SVN)

The clock is always an input. Nothing here samples the system time.
"""

from __future__ import annotations

import base64
import datetime as dt
import enum
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from cryptography import x509
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric import ec

from . import pki
from .certgen import MRENCLAVE_CN, binding_hash, load_cert, raw_extensions
from .errors import MalformedCertificate, MalformedExtension, MalformedQuote, MissingExtension
from .evidence import (
    DEFAULT_REGISTRY,
    EcdsaEvidence,
    EpidEvidence,
    EvidenceKind,
    ExtensionRegistry,
    SignedDocument,
    decode_bundle,
)
from .sgx_sim import SgxQuote, SgxReportBody, verify_quote_signature

log = logging.getLogger(__name__)


class Cause(str, enum.Enum):
    NONE = "None"
    BAD_CERT_SIGNATURE = "BadCertSignature"
    MISSING_EVIDENCE = "MissingEvidence"
    BAD_EVIDENCE_SIGNATURE = "BadEvidenceSignature"
    UNTRUSTED_SIGNER = "UntrustedSigner"
    REVOKED = "Revoked"
    STALE_EVIDENCE = "StaleEvidence"
    TCB_OUT_OF_DATE = "TcbOutOfDate"
    QE_IDENTITY_MISMATCH = "QeIdentityMismatch"
    KEY_BINDING_MISMATCH = "KeyBindingMismatch"
    IDENTITY_MISMATCH = "IdentityMismatch"
    DEBUG_NOT_ALLOWED = "DebugNotAllowed"
    SVN_TOO_LOW = "SvnTooLow"
    MALFORMED_EVIDENCE = "MalformedEvidence"


class Verdict(str, enum.Enum):
    ACCEPTED = "Accepted"
    REJECTED = "Rejected"


ACCEPTABLE_AVR_STATUS = "OK"
REVOKED_AVR_STATUSES = {"GROUP_REVOKED", "SIGNATURE_REVOKED", "KEY_REVOKED"}


class _Reject(Exception):
    def __init__(self, cause: Cause, detail: str):
        super().__init__(detail)
        self.cause = cause
        self.detail = detail


@dataclass(frozen=True)
class VerificationPolicy:
    trust_roots: tuple[bytes, ...]
    golden_mr_enclave: bytes | None = None
    golden_mr_signer: bytes | None = None
    min_isv_svn: int | None = None
    allow_debug: bool = False
    max_evidence_age: dt.timedelta = dt.timedelta(hours=24)
    current_time: dt.datetime | None = None
    # PCS client; when set, CRLs, TCB info and QE identity come from it
    # rather than from the certificate.
    collateral_source: object = field(default=None, compare=False)
    registry: ExtensionRegistry = DEFAULT_REGISTRY
    _roots: tuple = field(init=False, repr=False, compare=False, default=())

    def __post_init__(self):
        if self.golden_mr_enclave is None and self.golden_mr_signer is None:
            raise ValueError("policy must pin golden_mr_enclave and/or golden_mr_signer")
        for name in ("golden_mr_enclave", "golden_mr_signer"):
            value = getattr(self, name)
            if value is not None and len(value) != 32:
                raise ValueError(f"{name} must be 32 bytes")
        roots = tuple(bytes(r) for r in self.trust_roots)
        if not roots:
            raise ValueError("policy needs at least one trust root")
        object.__setattr__(self, "trust_roots", roots)
        object.__setattr__(self, "_roots", tuple(x509.load_der_x509_certificate(r) for r in roots))

    def at(self, when: dt.datetime) -> "VerificationPolicy":
        return replace(self, current_time=pki.as_utc(when))

    @classmethod
    def from_json(cls, obj: dict, base_dir: str | Path = ".") -> "VerificationPolicy":
        """Build a policy from the JSON policy-file schema (see README)."""
        base = Path(base_dir)
        roots: list[bytes] = []
        for entry in obj.get("trust_roots", []):
            data = entry.encode() if "-----BEGIN" in entry else (base / entry).read_bytes()
            roots.extend(pki.der(c) for c in pki.load_certs_pem(data))
        hexval = lambda k: bytes.fromhex(obj[k]) if obj.get(k) else None  # noqa: E731
        current = obj.get("current_time")
        return cls(
            trust_roots=tuple(roots),
            golden_mr_enclave=hexval("mr_enclave"),
            golden_mr_signer=hexval("mr_signer"),
            min_isv_svn=obj.get("min_isv_svn"),
            allow_debug=bool(obj.get("allow_debug", False)),
            max_evidence_age=dt.timedelta(seconds=obj.get("max_evidence_age_seconds", 86400)),
            current_time=pki.parse_iso(current) if current else None,
        )

    @classmethod
    def load(cls, path: str | Path) -> "VerificationPolicy":
        path = Path(path)
        return cls.from_json(json.loads(path.read_text()), path.parent)

    def to_json(self) -> dict:
        """Policy-file form with trust roots inlined as PEM."""
        obj: dict = {
            "trust_roots": [c.public_bytes(serialization.Encoding.PEM).decode() for c in self._roots],
            "allow_debug": self.allow_debug,
            "max_evidence_age_seconds": self.max_evidence_age.total_seconds(),
        }
        if self.golden_mr_enclave is not None:
            obj["mr_enclave"] = self.golden_mr_enclave.hex()
        if self.golden_mr_signer is not None:
            obj["mr_signer"] = self.golden_mr_signer.hex()
        if self.min_isv_svn is not None:
            obj["min_isv_svn"] = self.min_isv_svn
        if self.current_time is not None:
            obj["current_time"] = pki.isoformat(self.current_time)
        return obj


@dataclass(frozen=True)
class VerificationResult:
    verdict: Verdict
    cause: Cause = Cause.NONE
    claims: SgxReportBody | None = None
    evidence_timestamp: dt.datetime | None = None
    mode: EvidenceKind | None = None
    detail: str = ""

    def __post_init__(self):
        if (self.verdict == Verdict.ACCEPTED) != (self.cause == Cause.NONE):
            raise ValueError("verdict is Accepted exactly when cause is None")

    @property
    def accepted(self) -> bool:
        return self.verdict == Verdict.ACCEPTED

    @property
    def exit_code(self) -> int:
        return 0 if self.accepted else 1

    def to_json(self) -> dict:
        claims = None
        if self.claims is not None:
            c = self.claims
            claims = {
                "mr_enclave": c.mr_enclave.hex(),
                "mr_signer": c.mr_signer.hex(),
                "isv_prod_id": c.isv_prod_id,
                "isv_svn": c.isv_svn,
                "cpu_svn": c.cpu_svn.hex(),
                "debug": c.attributes.debug,
            }
        return {
            "verdict": self.verdict.value,
            "cause": self.cause.value,
            "detail": self.detail,
            "mode": self.mode.name if self.mode is not None else None,
            "claims": claims,
            "evidence_timestamp": pki.isoformat(self.evidence_timestamp) if self.evidence_timestamp else None,
        }


# helpers ------------------------------------------------------------------------


def _cert(blob: bytes, what: str) -> x509.Certificate:
    try:
        return x509.load_der_x509_certificate(blob)
    except ValueError as exc:
        raise _Reject(Cause.MALFORMED_EVIDENCE, f"{what}: {exc}") from exc


def _roots(trust_roots) -> list[x509.Certificate]:
    return [r if isinstance(r, x509.Certificate) else x509.load_der_x509_certificate(r) for r in trust_roots]


def _verify_ecdsa(public_key, signature: bytes, data: bytes) -> bool:
    if not isinstance(public_key, ec.EllipticCurvePublicKey):
        return False
    try:
        public_key.verify(signature, data, ec.ECDSA(hashes.SHA256()))
    except (InvalidSignature, ValueError):
        return False
    return True


def _doc(doc: SignedDocument, signer: x509.Certificate, what: str, keys: Sequence[str]) -> dict:
    if not _verify_ecdsa(signer.public_key(), doc.signature, doc.body):
        raise _Reject(Cause.BAD_EVIDENCE_SIGNATURE, f"{what} signature invalid")
    try:
        obj = doc.json()
        for k in keys:
            obj[k]
        pki.parse_iso(obj["issueDate"])
        pki.parse_iso(obj["nextUpdate"])
    except (ValueError, KeyError, TypeError) as exc:
        raise _Reject(Cause.MALFORMED_EVIDENCE, f"{what}: {exc}") from exc
    return obj


class _Windows:
    """Validity windows seen during verification; drives freshness checks."""

    def __init__(self):
        self.items: list[tuple[str, dt.datetime, dt.datetime | None]] = []

    def add(self, what: str, start: dt.datetime, end: dt.datetime | None) -> None:
        self.items.append((what, pki.as_utc(start), pki.as_utc(end) if end else None))

    def add_cert(self, what: str, cert: x509.Certificate) -> None:
        self.add(what, cert.not_valid_before_utc, cert.not_valid_after_utc)

    def check(self, now: dt.datetime) -> None:
        for what, start, end in self.items:
            if now < start:
                raise _Reject(Cause.STALE_EVIDENCE, f"{what} not valid before {pki.isoformat(start)}")
            if end is not None and now > end:
                raise _Reject(Cause.STALE_EVIDENCE, f"{what} expired at {pki.isoformat(end)}")

    @property
    def latest_start(self) -> dt.datetime | None:
        return max((s for _, s, _ in self.items), default=None)


@dataclass
class _Checked:
    quote: SgxQuote
    windows: _Windows
    age_anchor: dt.datetime  # evidence age is measured from this instant


# EPID ----------------------------------------------------------------------------


def _epid_integrity(ev: EpidEvidence, trust_roots) -> _Checked:
    roots = _roots(trust_roots)
    signing = _cert(ev.signing_cert, "report signing certificate")
    if not pki.chains_to_root(signing, [], roots):
        raise _Reject(Cause.UNTRUSTED_SIGNER, "report signing certificate does not chain to a trusted root")
    if not _verify_ecdsa(signing.public_key(), ev.avr_signature, ev.avr):
        raise _Reject(Cause.BAD_EVIDENCE_SIGNATURE, "AVR signature invalid")
    try:
        avr = ev.report()
        status = avr["isvEnclaveQuoteStatus"]
        timestamp = pki.parse_iso(avr["timestamp"])
        avr["id"]
        quote = SgxQuote.from_bytes(base64.b64decode(avr["isvEnclaveQuoteBody"], validate=True))
    except (ValueError, KeyError, TypeError, MalformedQuote) as exc:
        raise _Reject(Cause.MALFORMED_EVIDENCE, f"AVR: {exc}") from exc
    if status != ACCEPTABLE_AVR_STATUS:
        cause = Cause.REVOKED if status in REVOKED_AVR_STATUSES else Cause.TCB_OUT_OF_DATE
        raise _Reject(cause, f"AVR quote status {status}")
    windows = _Windows()
    windows.add_cert("report signing certificate", signing)
    for root in roots:
        if pki.signed_by(signing, root):
            windows.add_cert("report signing CA", root)
            break
    windows.add("AVR", timestamp, None)
    return _Checked(quote, windows, timestamp)


def _freshness(checked: _Checked, now: dt.datetime, max_age: dt.timedelta) -> None:
    checked.windows.check(now)
    age = now - checked.age_anchor
    if age > max_age:
        raise _Reject(Cause.STALE_EVIDENCE, f"evidence is {age} old, limit {max_age}")


def verify_epid_evidence(
    ev: EpidEvidence,
    trust_roots,
    now: dt.datetime,
    max_evidence_age: dt.timedelta = dt.timedelta(hours=24),
) -> Cause:
    """Report-signing chain, AVR signature, status and AVR age. Cause.NONE on pass."""
    try:
        checked = _epid_integrity(ev, trust_roots)
        _freshness(checked, pki.as_utc(now), max_evidence_age)
    except _Reject as rej:
        return rej.cause
    return Cause.NONE


# ECDSA ---------------------------------------------------------------------------


def tcb_status(levels: Iterable[dict], cpu_svn: bytes) -> str | None:
    """Status of the highest threshold <= cpu_svn (bytewise), or None if none applies."""
    best: tuple[bytes, str] | None = None
    for level in levels:
        threshold = bytes.fromhex(level["cpuSvn"])
        if len(threshold) != 16:
            raise ValueError("TCB level cpuSvn must be 16 bytes")
        if threshold <= cpu_svn and (best is None or threshold > best[0]):
            best = (threshold, level["status"])
    return best[1] if best else None


def _ecdsa_integrity(ev: EcdsaEvidence, trust_roots, collateral_source=None) -> _Checked:
    roots = _roots(trust_roots)
    quote = ev.quote
    tcb_doc, qe_doc, tcb_chain_der, crl_ders = ev.tcb_info, ev.qe_identity, ev.tcb_signing_chain, ev.crls
    if collateral_source is not None:
        tcb = collateral_source.get_tcb_info()
        qe = collateral_source.get_qe_identity()
        tcb_doc, qe_doc, tcb_chain_der = tcb.document, qe.document, tcb.chain
        crl_ders = tuple(collateral_source.get_crls())

    # (1) quote -> PCK -> PCK chain -> trusted root
    pck = _cert(ev.pck_cert, "PCK certificate")
    pck_chain = [_cert(c, "PCK signing chain") for c in ev.pck_signing_chain]
    tcb_chain = [_cert(c, "TCB signing chain") for c in tcb_chain_der]
    if not pck_chain or not tcb_chain:
        raise _Reject(Cause.MALFORMED_EVIDENCE, "empty signing chain")
    root_cert = pki.chain_anchor(pck, pck_chain, roots)
    if root_cert is None:
        raise _Reject(Cause.UNTRUSTED_SIGNER, "PCK certificate does not chain to a trusted root")
    if not verify_quote_signature(quote, pck.public_key()):
        raise _Reject(Cause.BAD_EVIDENCE_SIGNATURE, "quote signature does not verify under the PCK key")
    if not pki.chains_to_root(tcb_chain[0], tcb_chain[1:], roots):
        raise _Reject(Cause.UNTRUSTED_SIGNER, "TCB signing chain does not chain to a trusted root")

    # (2) revocation
    windows = _Windows()
    try:
        crls = [x509.load_der_x509_crl(c) for c in crl_ders]
    except ValueError as exc:
        raise _Reject(Cause.MALFORMED_EVIDENCE, f"CRL: {exc}") from exc
    # the anchor, not whatever the chain happens to end with
    pck_issuer = pck_chain[0]
    by_issuer: dict[str, x509.CertificateRevocationList] = {}
    for crl in crls:
        by_issuer.setdefault(crl.issuer.rfc4514_string(), crl)
    issuers = {
        "root CRL": root_cert,
        "PCK issuer CRL": pck_issuer,
    }
    checked_crls = {}
    for what, issuer in issuers.items():
        crl = by_issuer.get(issuer.subject.rfc4514_string())
        if crl is None:
            raise _Reject(Cause.MALFORMED_EVIDENCE, f"{what} missing")
        if not crl.is_signature_valid(issuer.public_key()):
            raise _Reject(Cause.BAD_EVIDENCE_SIGNATURE, f"{what} signature invalid")
        windows.add(what, crl.last_update_utc, crl.next_update_utc)
        checked_crls[what] = crl
    if checked_crls["PCK issuer CRL"].get_revoked_certificate_by_serial_number(pck.serial_number):
        raise _Reject(Cause.REVOKED, f"PCK certificate {pck.serial_number:x} revoked")
    root_der = pki.der(root_cert)
    root_issued = [c for c in pck_chain + tcb_chain if pki.der(c) != root_der and pki.signed_by(c, root_cert)]
    for cert in root_issued:
        if checked_crls["root CRL"].get_revoked_certificate_by_serial_number(cert.serial_number):
            raise _Reject(Cause.REVOKED, f"CA certificate {cert.serial_number:x} revoked")

    # (3) quoting enclave identity
    qe = _doc(qe_doc, tcb_chain[0], "QE identity", ("minQeSvn", "mrenclave"))
    if not isinstance(qe["minQeSvn"], int):
        raise _Reject(Cause.MALFORMED_EVIDENCE, "QE identity minQeSvn is not an integer")
    if quote.qe_svn < qe["minQeSvn"]:
        raise _Reject(Cause.QE_IDENTITY_MISMATCH, f"QE SVN {quote.qe_svn} < minimum {qe['minQeSvn']}")

    # (4) TCB status
    tcb = _doc(tcb_doc, tcb_chain[0], "TCB info", ("tcbLevels",))
    try:
        status = tcb_status(tcb["tcbLevels"], quote.report_body.cpu_svn)
    except (ValueError, KeyError, TypeError) as exc:
        raise _Reject(Cause.MALFORMED_EVIDENCE, f"TCB info levels: {exc}") from exc
    if status != "UpToDate":
        cause = Cause.REVOKED if status == "Revoked" else Cause.TCB_OUT_OF_DATE
        raise _Reject(cause, f"platform TCB status {status}")

    for what, obj in (("QE identity", qe), ("TCB info", tcb)):
        windows.add(what, pki.parse_iso(obj["issueDate"]), pki.parse_iso(obj["nextUpdate"]))
    windows.add_cert("PCK certificate", pck)
    for i, cert in enumerate(pck_chain):
        windows.add_cert(f"PCK chain[{i}]", cert)
    for i, cert in enumerate(tcb_chain):
        windows.add_cert(f"TCB chain[{i}]", cert)
    anchor = min(
        [pki.parse_iso(qe["issueDate"]), pki.parse_iso(tcb["issueDate"])]
        + [c.last_update_utc for c in checked_crls.values()]
    )
    return _Checked(quote, windows, anchor)


def verify_ecdsa_evidence(
    ev: EcdsaEvidence,
    trust_roots,
    now: dt.datetime,
    max_evidence_age: dt.timedelta = dt.timedelta(hours=24),
    collateral_source=None,
) -> Cause:
    """Quote/PCK chain, revocation, QE identity, TCB status and collateral validity."""
    try:
        checked = _ecdsa_integrity(ev, trust_roots, collateral_source)
        _freshness(checked, pki.as_utc(now), max_evidence_age)
    except _Reject as rej:
        return rej.cause
    return Cause.NONE


# binding and identity ------------------------------------------------------------


def verify_key_binding(cert: bytes | x509.Certificate, report: SgxReportBody) -> Cause:
    if not isinstance(cert, x509.Certificate):
        cert = load_cert(cert)
    expected = binding_hash(pki.spki_der(cert.public_key()))
    return Cause.NONE if report.report_data == expected else Cause.KEY_BINDING_MISMATCH


def check_identity_policy(report: SgxReportBody, policy: VerificationPolicy) -> Cause:
    if policy.golden_mr_enclave is not None and report.mr_enclave != policy.golden_mr_enclave:
        return Cause.IDENTITY_MISMATCH
    if policy.golden_mr_signer is not None and report.mr_signer != policy.golden_mr_signer:
        return Cause.IDENTITY_MISMATCH
    if report.attributes.debug and not policy.allow_debug:
        return Cause.DEBUG_NOT_ALLOWED
    if policy.min_isv_svn is not None and report.isv_svn < policy.min_isv_svn:
        return Cause.SVN_TOO_LOW
    return Cause.NONE


def _common_name(cert: x509.Certificate) -> str | None:
    attrs = cert.subject.get_attributes_for_oid(x509.NameOID.COMMON_NAME)
    return attrs[0].value if attrs else None


# top level -----------------------------------------------------------------------


def verify_ratls_cert(
    cert_der: bytes, policy: VerificationPolicy, now: dt.datetime | None = None
) -> VerificationResult:
    """Total function: every failure is reported in the result, never raised."""
    now = now or policy.current_time
    if now is None:
        raise ValueError("verification needs an explicit current time")
    now = pki.as_utc(now)
    mode = claims = stamp = None
    try:
        try:
            cert = load_cert(cert_der)
        except MalformedCertificate as exc:
            raise _Reject(Cause.MALFORMED_EVIDENCE, f"certificate: {exc}") from exc
        if cert.issuer != cert.subject or not pki.signed_by(cert, cert):
            raise _Reject(Cause.BAD_CERT_SIGNATURE, "certificate is not validly self-signed")

        try:
            exts = raw_extensions(cert, policy.registry)
            if not exts:
                raise _Reject(Cause.MISSING_EVIDENCE, "no RA-TLS evidence extensions")
            bundle = decode_bundle(exts, policy.registry)
        except MissingExtension as exc:
            raise _Reject(Cause.MISSING_EVIDENCE, str(exc)) from exc
        except MalformedExtension as exc:
            raise _Reject(Cause.MALFORMED_EVIDENCE, str(exc)) from exc
        mode = bundle.kind

        if mode == EvidenceKind.EPID:
            checked = _epid_integrity(bundle.payload, policy._roots)
        else:
            checked = _ecdsa_integrity(bundle.payload, policy._roots, policy.collateral_source)
        claims = checked.quote.report_body

        if verify_key_binding(cert, claims) != Cause.NONE:
            raise _Reject(Cause.KEY_BINDING_MISMATCH, "report_data does not bind the certificate key")

        checked.windows.add("RA-TLS certificate", cert.not_valid_before_utc, cert.not_valid_after_utc)
        stamp = max(checked.windows.latest_start, checked.age_anchor)
        _freshness(checked, now, policy.max_evidence_age)

        cause = check_identity_policy(claims, policy)
        if cause != Cause.NONE:
            raise _Reject(cause, "enclave identity does not satisfy policy")
        cn = _common_name(cert)
        if cn and MRENCLAVE_CN.match(cn) and cn != claims.mr_enclave.hex():
            raise _Reject(Cause.IDENTITY_MISMATCH, "MRENCLAVE in common name differs from quote")
    except _Reject as rej:
        log.debug("rejected: %s (%s)", rej.cause.value, rej.detail)
        return VerificationResult(Verdict.REJECTED, rej.cause, claims, stamp, mode, rej.detail)
    return VerificationResult(Verdict.ACCEPTED, Cause.NONE, claims, stamp, mode)


# TLS hook ------------------------------------------------------------------------


class HookOutcome(enum.Enum):
    CONTINUE = "continue"
    ABORT = "abort"


@dataclass
class ConnectionRecord:
    """Per-connection slot where the hook leaves its result for the application."""

    result: VerificationResult | None = None
    _cache: dict = field(default_factory=dict, repr=False)


def tls_verify_hook(
    preverify_outcome: bool,
    cert_der: bytes,
    policy: VerificationPolicy,
    record: ConnectionRecord | None = None,
    now: dt.datetime | None = None,
) -> HookOutcome:
    """Override-style hook: the built-in chain verdict is ignored; evidence decides."""
    if record is not None and cert_der in record._cache:
        result = record._cache[cert_der]
    else:
        result = verify_ratls_cert(cert_der, policy, now)
        if record is not None:
            record._cache[cert_der] = result
    if record is not None:
        record.result = result
    return HookOutcome.CONTINUE if result.accepted else HookOutcome.ABORT


class OpenSSLVerifyCallback:
    """Adapter for pyOpenSSL ``Context.set_verify``.

    ``style="override"`` accepts a self-signed leaf purely on its evidence.
    ``style="extend"`` additionally requires OpenSSL's own verdict, for
    RA-TLS certificates issued under a conventional PKI.

    The connection's app data must be a :class:`ConnectionRecord`; the
    leaf's result is stored there for retrieval after the handshake.
    """

    def __init__(
        self,
        policy: VerificationPolicy,
        clock: Callable[[], dt.datetime] = pki.utcnow,
        style: str = "override",
    ):
        if style not in ("override", "extend"):
            raise ValueError(f"unknown hook style {style!r}")
        self.policy = policy
        self.clock = clock
        self.style = style

    def __call__(self, conn, cert, errno: int, depth: int, preverify_ok: int) -> bool:
        if depth > 0:
            return self.style == "override" or bool(preverify_ok)
        record = conn.get_app_data()
        if not isinstance(record, ConnectionRecord):
            record = ConnectionRecord()
            conn.set_app_data(record)
        der = pki.der(cert.to_cryptography())
        outcome = tls_verify_hook(bool(preverify_ok), der, self.policy, record, self.clock())
        if self.style == "extend" and not preverify_ok:
            return False
        return outcome == HookOutcome.CONTINUE


def verify_peer(conn, policy: VerificationPolicy, now: dt.datetime) -> VerificationResult:
    """Post-handshake check of the peer certificate on a pyOpenSSL connection."""
    cert = conn.get_peer_certificate(as_cryptography=True)
    if cert is None:
        return VerificationResult(Verdict.REJECTED, Cause.MISSING_EVIDENCE, detail="peer sent no certificate")
    return verify_ratls_cert(pki.der(cert), policy, now)
