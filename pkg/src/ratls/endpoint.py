"""Attested TLS endpoints over pyOpenSSL.

The server generates its RA-TLS credential before it starts listening and can
rotate it periodically. The client registers the verification hook so a
certificate failing attestation aborts the handshake. The application
protocol is newline-delimited echo.
"""

from __future__ import annotations

import datetime as dt
import logging
import socket
import struct
import threading
from dataclasses import dataclass, field
from typing import Callable

from cryptography import x509
from OpenSSL import SSL

from . import pki
from .certgen import AttesterConfig, RaTlsCertificate, create_key_and_cert
from .errors import HandshakeAborted, Transport
from .verifier import (
    ConnectionRecord,
    OpenSSLVerifyCallback,
    VerificationPolicy,
    VerificationResult,
)

log = logging.getLogger(__name__)

TLS_VERSIONS = {
    "1.2": (SSL.TLS1_2_VERSION, SSL.TLS1_2_VERSION),
    "1.3": (SSL.TLS1_3_VERSION, SSL.TLS1_3_VERSION),
    "any": (SSL.TLS1_2_VERSION, SSL.TLS1_3_VERSION),
}
# TLS 1.2 suites restricted to ephemeral ECDH; every TLS 1.3 suite is ephemeral.
TLS12_CIPHERS = b"ECDHE+AESGCM:ECDHE+CHACHA20"
MAX_LINE = 64 * 1024


@dataclass
class EndpointConfig:
    address: tuple[str, int]
    attester: AttesterConfig | None = None
    policy: VerificationPolicy | None = None
    mutual_attestation: bool = False
    cert_rotation_interval: dt.timedelta | None = None
    tls_version: str = "any"
    timeout: float = 10.0
    clock: Callable[[], dt.datetime] = field(default=pki.utcnow, repr=False)

    def __post_init__(self):
        if self.tls_version not in TLS_VERSIONS:
            raise ValueError(f"tls_version must be one of {sorted(TLS_VERSIONS)}")
        if self.mutual_attestation and (self.attester is None or self.policy is None):
            raise ValueError("mutual attestation needs both an attester config and a policy")


def make_context(
    tls_version: str,
    credential: RaTlsCertificate | None = None,
    verify: OpenSSLVerifyCallback | None = None,
    server: bool = False,
) -> SSL.Context:
    ctx = SSL.Context(SSL.TLS_METHOD)
    lo, hi = TLS_VERSIONS[tls_version]
    ctx.set_min_proto_version(lo)
    ctx.set_max_proto_version(hi)
    ctx.set_cipher_list(TLS12_CIPHERS)
    if credential is not None:
        ctx.use_certificate(credential.certificate())
        ctx.use_privatekey(credential.private_key())
        ctx.check_privatekey()
    if verify is not None:
        mode = SSL.VERIFY_PEER
        if server:
            mode |= SSL.VERIFY_FAIL_IF_NO_PEER_CERT
        ctx.set_verify(mode, verify)
    else:
        ctx.set_verify(SSL.VERIFY_NONE)
    return ctx


def _set_timeouts(sock: socket.socket, seconds: float) -> None:
    # Python-level timeouts make the socket non-blocking, which pyOpenSSL
    # surfaces as WantReadError; use kernel timeouts on a blocking socket.
    sock.setblocking(True)
    tv = struct.pack("ll", int(seconds), int((seconds % 1) * 1_000_000))
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_RCVTIMEO, tv)
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_SNDTIMEO, tv)


def _read_line(conn: SSL.Connection, buf: bytearray) -> bytes | None:
    while b"\n" not in buf:
        try:
            chunk = conn.recv(4096)
        except (SSL.ZeroReturnError, SSL.SysCallError):
            return None
        if not chunk:
            return None
        buf.extend(chunk)
        if len(buf) > MAX_LINE:
            raise ValueError("line too long")
    line, _, rest = bytes(buf).partition(b"\n")
    buf[:] = rest
    return line + b"\n"


def _close(conn: SSL.Connection) -> None:
    try:
        conn.shutdown()
    except SSL.Error:
        pass
    try:
        conn.sock_shutdown(socket.SHUT_RDWR)
    except OSError:
        pass
    conn.close()


class AttesterServer:
    """Echo server presenting a freshly generated RA-TLS certificate."""

    def __init__(
        self,
        config: EndpointConfig,
        credential_factory: Callable[[], RaTlsCertificate] | None = None,
    ):
        if credential_factory is None:
            if config.attester is None:
                raise ValueError("server needs an attester config or a credential factory")
            credential_factory = lambda: create_key_and_cert(config.attester)  # noqa: E731
        self.config = config
        self._factory = credential_factory
        self._lock = threading.Lock()
        self._ctx: SSL.Context | None = None
        self.credential: RaTlsCertificate | None = None
        self.transcript: list[dict] = []
        self._stop = threading.Event()
        self._sock: socket.socket | None = None
        self._threads: list[threading.Thread] = []

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()[:2]

    def _verify_cb(self) -> OpenSSLVerifyCallback | None:
        if not self.config.mutual_attestation:
            return None
        return OpenSSLVerifyCallback(self.config.policy, self.config.clock)

    def rotate(self) -> RaTlsCertificate:
        """Generate a new key and certificate; later handshakes use it."""
        credential = self._factory()
        ctx = make_context(self.config.tls_version, credential, self._verify_cb(), server=True)
        with self._lock:
            self._ctx, self.credential = ctx, credential
        log.info("installed RA-TLS credential, %d-byte certificate", len(credential.cert_der))
        return credential

    def start(self) -> "AttesterServer":
        self.rotate()  # before the listener opens
        sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        sock.bind(self.config.address)
        sock.listen(16)
        sock.settimeout(0.2)
        self._sock = sock
        self._spawn(self._accept_loop)
        if self.config.cert_rotation_interval:
            self._spawn(self._rotation_loop)
        return self

    def _spawn(self, target, *args) -> None:
        t = threading.Thread(target=target, args=args, daemon=True)
        t.start()
        self._threads.append(t)

    def _rotation_loop(self) -> None:
        interval = self.config.cert_rotation_interval.total_seconds()
        while not self._stop.wait(interval):
            try:
                self.rotate()
            except Exception:
                log.exception("certificate rotation failed; keeping previous credential")

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                client, peer = self._sock.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            self._spawn(self._serve, client, peer)

    def _serve(self, sock: socket.socket, peer) -> None:
        _set_timeouts(sock, self.config.timeout)
        with self._lock:
            ctx = self._ctx
        conn = SSL.Connection(ctx, sock)
        record = ConnectionRecord()
        conn.set_app_data(record)
        conn.set_accept_state()
        entry = {"role": "server", "peer": f"{peer[0]}:{peer[1]}", "echoed": 0}
        try:
            conn.do_handshake()
            entry["tls_version"] = conn.get_protocol_version_name()
            entry["handshake"] = "ok"
            if record.result is not None:
                entry.update(_result_fields(record.result))
            buf = bytearray()
            while (line := _read_line(conn, buf)) is not None:
                conn.sendall(line)
                entry["echoed"] += 1
        except (SSL.Error, OSError, ValueError) as exc:
            entry.setdefault("handshake", "aborted")
            if record.result is not None:
                entry.update(_result_fields(record.result))
            entry["error"] = str(exc) or type(exc).__name__
            log.info("connection from %s failed: %s", peer, exc)
        finally:
            self.transcript.append(entry)
            _close(conn)

    def serve_forever(self) -> None:
        self.start()
        try:
            self._stop.wait()
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()

    def stop(self) -> None:
        self._stop.set()
        if self._sock is not None:
            self._sock.close()
        for t in self._threads:
            t.join(timeout=2)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


def _result_fields(result: VerificationResult) -> dict:
    out = {"verdict": result.verdict.value, "cause": result.cause.value}
    if result.claims is not None:
        out["peer_mr_enclave"] = result.claims.mr_enclave.hex()
        out["peer_mr_signer"] = result.claims.mr_signer.hex()
    return out


@dataclass
class Session:
    conn: SSL.Connection
    result: VerificationResult
    tls_version: str
    credential: RaTlsCertificate | None = None
    _buf: bytearray = field(default_factory=bytearray, repr=False)

    @property
    def claims(self):
        return self.result.claims

    def peer_certificate(self) -> x509.Certificate:
        return self.conn.get_peer_certificate(as_cryptography=True)

    def echo(self, line: bytes) -> bytes:
        if not line.endswith(b"\n"):
            line += b"\n"
        try:
            self.conn.sendall(line)
            reply = _read_line(self.conn, self._buf)
        except SSL.Error as exc:
            raise HandshakeAborted(None, f"peer aborted the session: {exc}") from exc
        if reply is None:
            raise HandshakeAborted(None, "peer closed the session")
        return reply

    def close(self) -> None:
        _close(self.conn)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def run_challenger_client(config: EndpointConfig) -> Session:
    """Connect, verify the server's evidence during the handshake, return the session.

    Raises HandshakeAborted carrying the verifier's cause when the server's
    certificate is rejected, and Transport when the server is unreachable.
    """
    if config.policy is None:
        raise ValueError("client needs a verification policy")
    credential = create_key_and_cert(config.attester) if config.mutual_attestation else None
    ctx = make_context(
        config.tls_version, credential, OpenSSLVerifyCallback(config.policy, config.clock)
    )
    try:
        sock = socket.create_connection(config.address, timeout=config.timeout)
    except OSError as exc:
        raise Transport(f"cannot reach {config.address}: {exc}") from exc
    _set_timeouts(sock, config.timeout)
    conn = SSL.Connection(ctx, sock)
    record = ConnectionRecord()
    conn.set_app_data(record)
    conn.set_connect_state()
    try:
        conn.do_handshake()
    except SSL.Error as exc:
        _close(conn)
        result = record.result
        if result is not None and not result.accepted:
            raise HandshakeAborted(result.cause, f"server certificate rejected: {result.cause.value}") from exc
        raise HandshakeAborted(None, f"handshake failed: {exc}") from exc
    except OSError as exc:
        _close(conn)
        raise Transport(str(exc)) from exc
    if record.result is None or not record.result.accepted:
        _close(conn)
        raise HandshakeAborted(None, "verification hook did not run")
    return Session(conn, record.result, conn.get_protocol_version_name(), credential)


def run_attester_server(config: EndpointConfig) -> None:
    AttesterServer(config).serve_forever()
