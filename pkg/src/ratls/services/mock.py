"""In-process mock IAS and PCS state machines.

Both are plain objects usable directly from tests; ``services.http`` wraps
the same objects behind loopback HTTP endpoints. Mutations are serialized by
a per-service lock.
"""

from __future__ import annotations

import base64
import datetime as dt
import json
import logging
import threading
from dataclasses import dataclass
from typing import Callable

from cryptography import x509
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec

from .. import pki
from ..errors import MalformedQuote, MalformedRequest, QuoteInvalid, UnknownPlatform, UnknownSerial
from ..evidence import SignedDocument
from ..sgx_sim import SgxQuote, SignType, load_public_key, verify_quote_signature

log = logging.getLogger(__name__)

Clock = Callable[[], dt.datetime]

AVR_SCHEMA_VERSION = 1
IAS_STATUSES = (
    "OK",
    "SIGNATURE_INVALID",
    "GROUP_REVOKED",
    "SIGNATURE_REVOKED",
    "KEY_REVOKED",
    "SIGRL_VERSION_MISMATCH",
    "GROUP_OUT_OF_DATE",
    "CONFIGURATION_NEEDED",
)
TCB_STATUSES = ("UpToDate", "OutOfDate", "ConfigurationNeeded", "Revoked")

PLATFORM_ID_OID = x509.ObjectIdentifier("1.3.6.1.4.1.99999.1337.100.1")
PCK_CPUSVN_OID = x509.ObjectIdentifier("1.3.6.1.4.1.99999.1337.100.2")


def _require_credential(name: str, value) -> None:
    if not value:
        raise MalformedRequest(f"missing {name}")


@dataclass(frozen=True)
class AvrResponse:
    avr: bytes
    signature: bytes
    signing_cert: bytes


@dataclass(frozen=True)
class PckCertResponse:
    pck_cert: bytes
    chain: tuple[bytes, ...]


@dataclass(frozen=True)
class SignedCollateral:
    document: SignedDocument
    chain: tuple[bytes, ...]


class MockIas:
    """Quote verification service for the EPID flow.

    Attestation public keys must be registered up front; the real service
    learns them through provisioning that is outside this simulation.
    """

    def __init__(
        self,
        clock: Clock = pki.utcnow,
        ca_key: ec.EllipticCurvePrivateKey | None = None,
        signing_key: ec.EllipticCurvePrivateKey | None = None,
        ca_cert: x509.Certificate | None = None,
        signing_cert: x509.Certificate | None = None,
    ):
        self.clock = clock
        self._lock = threading.RLock()
        now = clock()
        self.ca_key = ca_key or pki.new_key()
        self.signing_key = signing_key or pki.new_key()
        self.ca_cert = ca_cert or pki.make_root_ca(
            "Simulated Attestation Report Signing CA", self.ca_key, now
        )
        self.signing_cert = signing_cert or pki.issue_cert(
            "Simulated Attestation Report Signing", self.signing_key.public_key(),
            self.ca_cert, self.ca_key, now,
        )
        self._keys: dict[bytes, ec.EllipticCurvePublicKey] = {}
        self._status: dict[bytes, str] = {}
        self._counter = 0
        self._last_ts: dt.datetime | None = None

    @property
    def trust_root(self) -> bytes:
        return pki.der(self.ca_cert)

    @property
    def signing_cert_der(self) -> bytes:
        return pki.der(self.signing_cert)

    def register_attestation_key(self, public_key) -> None:
        pub = load_public_key(public_key)
        with self._lock:
            self._keys[pki.spki_der(pub)] = pub
            self._status.setdefault(pki.spki_der(pub), "OK")

    def set_platform_status(self, public_key, status: str) -> None:
        if status not in IAS_STATUSES:
            raise MalformedRequest(f"unknown IAS status {status!r}")
        spki = pki.spki_der(load_public_key(public_key))
        with self._lock:
            if spki not in self._keys:
                raise UnknownPlatform("attestation key not registered")
            self._status[spki] = status

    def _next_timestamp(self) -> dt.datetime:
        now = pki.as_utc(self.clock())
        if self._last_ts is not None and now <= self._last_ts:
            now = self._last_ts + dt.timedelta(microseconds=1)
        self._last_ts = now
        return now

    def verify_quote(self, quote_bytes: bytes, spid: bytes | None = None) -> AvrResponse:
        _require_credential("SPID", spid)
        try:
            quote = SgxQuote.from_bytes(quote_bytes)
        except MalformedQuote as exc:
            raise QuoteInvalid(f"unparseable quote: {exc}") from exc
        if quote.sign_type != SignType.EPID_SIM:
            raise QuoteInvalid("IAS only verifies EPID quotes")
        with self._lock:
            matches = [s for s, pub in self._keys.items() if verify_quote_signature(quote_bytes, pub)]
            if not matches:
                raise QuoteInvalid("quote signature does not verify under any known attestation key")
            self._counter += 1
            report = {
                "id": str(self._counter),
                "version": AVR_SCHEMA_VERSION,
                "timestamp": pki.isoformat(self._next_timestamp()),
                "isvEnclaveQuoteStatus": self._status[matches[0]],
                "isvEnclaveQuoteBody": base64.b64encode(bytes(quote_bytes)).decode(),
            }
        avr = json.dumps(report, separators=(",", ":")).encode()
        signature = self.signing_key.sign(avr, ec.ECDSA(hashes.SHA256()))
        return AvrResponse(avr, signature, self.signing_cert_der)


@dataclass
class PckRecord:
    cert: x509.Certificate
    cpu_svn: bytes


class MockPcs:
    """Provisioning/collateral service for the ECDSA flow.

    PKI: root CA -> PCK issuer CA -> per-platform PCK certificates, and
    root CA -> TCB signing certificate (signs TCB info and QE identity).
    A PCK certificate's subject key is the platform's attestation key.
    """

    def __init__(
        self,
        clock: Clock = pki.utcnow,
        collateral_validity: dt.timedelta = dt.timedelta(days=30),
        qe_mr_enclave: bytes = bytes.fromhex("51" * 32),
        qe_min_svn: int = 2,
        keys: dict | None = None,
        certs: dict | None = None,
    ):
        self.clock = clock
        self.collateral_validity = collateral_validity
        self._lock = threading.RLock()
        now = clock()
        keys = keys or {}
        certs = certs or {}
        self.root_key = keys.get("root") or pki.new_key()
        self.pck_ca_key = keys.get("pck_ca") or pki.new_key()
        self.tcb_key = keys.get("tcb") or pki.new_key()
        self.root_cert = certs.get("root") or pki.make_root_ca(
            "Simulated SGX Root CA", self.root_key, now
        )
        self.pck_ca_cert = certs.get("pck_ca") or pki.issue_cert(
            "Simulated SGX PCK Platform CA", self.pck_ca_key.public_key(),
            self.root_cert, self.root_key, now, ca=True,
        )
        self.tcb_cert = certs.get("tcb") or pki.issue_cert(
            "Simulated SGX TCB Signing", self.tcb_key.public_key(),
            self.root_cert, self.root_key, now,
        )
        self.platforms: dict[bytes, PckRecord] = {}
        self.revoked: dict[int, dt.datetime] = {}
        self.tcb_levels: list[tuple[bytes, str]] = [(bytes(16), "UpToDate")]
        self.qe_mr_enclave = qe_mr_enclave
        self.qe_min_svn = qe_min_svn
        self._overrides: dict[str, SignedDocument] = {}

    @property
    def trust_root(self) -> bytes:
        return pki.der(self.root_cert)

    @property
    def pck_chain(self) -> tuple[bytes, ...]:
        return (pki.der(self.pck_ca_cert), pki.der(self.root_cert))

    @property
    def tcb_chain(self) -> tuple[bytes, ...]:
        return (pki.der(self.tcb_cert), pki.der(self.root_cert))

    # admin ------------------------------------------------------------------

    def provision_platform(self, platform_id: bytes, cpu_svn: bytes, attestation_key) -> bytes:
        if len(platform_id) != 16 or len(cpu_svn) != 16:
            raise MalformedRequest("platform_id and cpu_svn are 16 bytes")
        pub = load_public_key(attestation_key)
        cert = pki.issue_cert(
            "Simulated SGX PCK Certificate", pub, self.pck_ca_cert, self.pck_ca_key,
            self.clock(), days=365 * 5,
            extensions=[
                x509.UnrecognizedExtension(PLATFORM_ID_OID, bytes(platform_id)),
                x509.UnrecognizedExtension(PCK_CPUSVN_OID, bytes(cpu_svn)),
            ],
        )
        with self._lock:
            self.platforms[bytes(platform_id)] = PckRecord(cert, bytes(cpu_svn))
        log.info("provisioned platform %s (PCK serial %x)", platform_id.hex(), cert.serial_number)
        return pki.der(cert)

    def _known_serials(self) -> set[int]:
        serials = {rec.cert.serial_number for rec in self.platforms.values()}
        serials.update({self.pck_ca_cert.serial_number, self.tcb_cert.serial_number})
        return serials

    def revoke(self, serial: int) -> None:
        with self._lock:
            if serial not in self._known_serials():
                raise UnknownSerial(serial)
            self.revoked.setdefault(serial, pki.as_utc(self.clock()))

    def set_tcb_status(self, threshold: bytes, status: str) -> None:
        if len(threshold) != 16:
            raise MalformedRequest("TCB threshold is a 16-byte CPU SVN")
        if status not in TCB_STATUSES:
            raise MalformedRequest(f"unknown TCB status {status!r}")
        with self._lock:
            levels = [lv for lv in self.tcb_levels if lv[0] != bytes(threshold)]
            levels.append((bytes(threshold), status))
            self.tcb_levels = sorted(levels, key=lambda lv: lv[0], reverse=True)

    def set_qe_identity(self, min_svn: int | None = None, mr_enclave: bytes | None = None) -> None:
        with self._lock:
            if min_svn is not None:
                self.qe_min_svn = min_svn
            if mr_enclave is not None:
                self.qe_mr_enclave = mr_enclave

    def override_collateral(self, name: str, document: SignedDocument | None) -> None:
        """Pin the next ``tcb``/``qe`` responses to a fixed document (test scaffolding)."""
        with self._lock:
            if document is None:
                self._overrides.pop(name, None)
            else:
                self._overrides[name] = document

    # collateral ---------------------------------------------------------------

    def sign_document(self, doc: dict) -> SignedDocument:
        body = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return SignedDocument(body, self.tcb_key.sign(body, ec.ECDSA(hashes.SHA256())))

    def _window(self, issue: dt.datetime | None = None, next_update: dt.datetime | None = None):
        issue = pki.as_utc(issue or self.clock())
        return issue, pki.as_utc(next_update or issue + self.collateral_validity)

    def make_tcb_info(self, issue=None, next_update=None) -> SignedDocument:
        issue, nxt = self._window(issue, next_update)
        with self._lock:
            levels = list(self.tcb_levels)
        return self.sign_document({
            "version": 1,
            "issueDate": pki.isoformat(issue),
            "nextUpdate": pki.isoformat(nxt),
            "tcbLevels": [{"cpuSvn": t.hex(), "status": s} for t, s in levels],
        })

    def make_qe_identity(self, issue=None, next_update=None) -> SignedDocument:
        issue, nxt = self._window(issue, next_update)
        return self.sign_document({
            "version": 1,
            "issueDate": pki.isoformat(issue),
            "nextUpdate": pki.isoformat(nxt),
            "mrenclave": self.qe_mr_enclave.hex(),
            "minQeSvn": self.qe_min_svn,
        })

    def make_crls(self, issue=None, next_update=None) -> tuple[bytes, bytes]:
        issue, nxt = self._window(issue, next_update)
        with self._lock:
            revoked = dict(self.revoked)
            pck_serials = {rec.cert.serial_number for rec in self.platforms.values()}

        def build(issuer_cert, issuer_key, serials):
            builder = (
                x509.CertificateRevocationListBuilder()
                .issuer_name(issuer_cert.subject)
                .last_update(issue)
                .next_update(nxt)
            )
            for serial in sorted(serials):
                builder = builder.add_revoked_certificate(
                    x509.RevokedCertificateBuilder()
                    .serial_number(serial)
                    .revocation_date(revoked[serial])
                    .build()
                )
            return pki.der(builder.sign(issuer_key, hashes.SHA256()))

        root_crl = build(
            self.root_cert, self.root_key, {s for s in revoked if s not in pck_serials}
        )
        pck_crl = build(self.pck_ca_cert, self.pck_ca_key, {s for s in revoked if s in pck_serials})
        return root_crl, pck_crl

    def get_pck_cert(self, platform_id: bytes, api_key: str | None = None) -> PckCertResponse:
        _require_credential("API key", api_key)
        with self._lock:
            record = self.platforms.get(bytes(platform_id))
        if record is None:
            raise UnknownPlatform(f"no PCK certificate for platform {bytes(platform_id).hex()}")
        return PckCertResponse(pki.der(record.cert), self.pck_chain)

    def get_tcb_info(self) -> SignedCollateral:
        doc = self._overrides.get("tcb") or self.make_tcb_info()
        return SignedCollateral(doc, self.tcb_chain)

    def get_qe_identity(self) -> SignedCollateral:
        doc = self._overrides.get("qe") or self.make_qe_identity()
        return SignedCollateral(doc, self.tcb_chain)

    def get_crls(self) -> tuple[bytes, bytes]:
        return self.make_crls()
