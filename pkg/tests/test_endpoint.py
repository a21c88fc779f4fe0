import datetime as dt
import random
import select
import socket
import threading
import time

import pytest
from cryptography.hazmat.primitives import serialization

from ratls import pki
from ratls.certgen import RaTlsCertificate
from ratls.endpoint import AttesterServer, EndpointConfig, run_challenger_client
from ratls.errors import HandshakeAborted, Transport
from ratls.mutations import random_enclave
from ratls.verifier import Cause
from tests.test_certgen import plain_credential

LOCAL = ("127.0.0.1", 0)


def _server(sc, **kw) -> AttesterServer:
    kw.setdefault("attester", sc.attester())
    return AttesterServer(EndpointConfig(LOCAL, clock=lambda: sc.verify_time, **kw))


def _client(sc, address, **kw):
    kw.setdefault("policy", sc.policy())
    return run_challenger_client(EndpointConfig(address, clock=lambda: sc.verify_time, timeout=5, **kw))


def _spki(cert) -> bytes:
    return pki.spki_der(cert.public_key())


class Relay:
    """TCP man-in-the-middle that forwards bytes unchanged and keeps a copy."""

    def __init__(self, upstream):
        self.upstream = upstream
        self.listener = socket.create_server(LOCAL)
        self.address = self.listener.getsockname()
        self.to_server = bytearray()
        self.to_client = bytearray()
        self.thread = threading.Thread(target=self._run, daemon=True)
        self.thread.start()

    def _run(self):
        self.listener.settimeout(10)
        down, _ = self.listener.accept()
        up = socket.create_connection(self.upstream)
        pipes = {down: (up, self.to_server), up: (down, self.to_client)}
        open_ = set(pipes)
        while open_:
            ready, _, _ = select.select(list(open_), [], [], 10)
            if not ready:
                break
            for s in ready:
                data = s.recv(65536)
                dst, log = pipes[s]
                if not data:
                    open_.discard(s)
                    try:
                        dst.shutdown(socket.SHUT_WR)
                    except OSError:
                        pass
                    continue
                log.extend(data)
                dst.sendall(data)
        down.close()
        up.close()
        self.listener.close()

    def join(self):
        self.thread.join(timeout=10)


def tls_records(stream: bytes) -> list[int]:
    """Content types of the TLS records in one direction of a capture."""
    types, pos = [], 0
    while pos + 5 <= len(stream):
        types.append(stream[pos])
        pos += 5 + int.from_bytes(stream[pos + 3 : pos + 5], "big")
    return types


@pytest.mark.parametrize("version", ["1.2", "1.3"])
def test_handshake_and_echo(scenario, version):
    with _server(scenario, tls_version=version) as srv:
        with _client(scenario, srv.address, tls_version=version) as session:
            assert session.tls_version == f"TLSv{version}"
            assert session.echo(b"hello") == b"hello\n"
            assert session.echo(b"again\n") == b"again\n"
            assert session.claims.mr_enclave == scenario.enclave.mr_enclave
            assert _spki(session.peer_certificate()) == _spki(srv.credential.certificate())


def test_wrong_mrenclave_aborts(scenario):
    with _server(scenario) as srv:
        with pytest.raises(HandshakeAborted) as err:
            _client(scenario, srv.address, policy=scenario.policy(golden_mr_enclave=bytes(32)))
        assert err.value.cause == Cause.IDENTITY_MISMATCH
        time.sleep(0.1)
    assert srv.transcript and all(e["echoed"] == 0 for e in srv.transcript)


def test_plain_server_missing_evidence(epid):
    cert_der, key = plain_credential("plain")
    key_der = key.private_bytes(serialization.Encoding.DER, serialization.PrivateFormat.PKCS8, serialization.NoEncryption())
    srv = AttesterServer(EndpointConfig(LOCAL), credential_factory=lambda: RaTlsCertificate(cert_der, key_der))
    with srv:
        with pytest.raises(HandshakeAborted) as err:
            _client(epid, srv.address)
    assert err.value.cause == Cause.MISSING_EVIDENCE


def test_unreachable(epid):
    with socket.create_server(LOCAL) as probe:
        port = probe.getsockname()[1]
    with pytest.raises(Transport):
        _client(epid, ("127.0.0.1", port))


def test_rotation_changes_key(ecdsa):
    with _server(ecdsa, cert_rotation_interval=dt.timedelta(seconds=0.3)) as srv:
        with _client(ecdsa, srv.address) as s:
            first = _spki(s.peer_certificate())
        deadline = time.monotonic() + 5
        while _spki(srv.credential.certificate()) == first and time.monotonic() < deadline:
            time.sleep(0.05)
        with _client(ecdsa, srv.address) as s:
            second = _spki(s.peer_certificate())
            assert s.echo(b"x") == b"x\n"
    assert first != second


def test_manual_rotate(epid):
    with _server(epid) as srv:
        before = srv.credential
        after = srv.rotate()
        with _client(epid, srv.address) as s:
            assert _spki(s.peer_certificate()) == _spki(after.certificate()) != _spki(before.certificate())


def test_mutual(scenario):
    client_enclave = random_enclave(random.Random(77), scenario.platform.platform_id)
    server_policy = scenario.policy(client_enclave)
    with _server(scenario, policy=server_policy, mutual_attestation=True) as srv:
        cfg = dict(attester=scenario.attester(client_enclave), mutual_attestation=True)
        with _client(scenario, srv.address, **cfg) as session:
            assert session.echo(b"ping") == b"ping\n"
            assert session.claims.mr_enclave == scenario.enclave.mr_enclave
            assert session.credential is not None
        time.sleep(0.1)
    entry = srv.transcript[0]
    assert entry["verdict"] == "Accepted"
    assert entry["peer_mr_enclave"] == client_enclave.mr_enclave.hex()


def test_mutual_server_rejects_client(ecdsa):
    client_enclave = random_enclave(random.Random(78), ecdsa.platform.platform_id)
    server_policy = ecdsa.policy(client_enclave, golden_mr_enclave=bytes(32))
    with _server(ecdsa, policy=server_policy, mutual_attestation=True) as srv:
        cfg = dict(attester=ecdsa.attester(client_enclave), mutual_attestation=True, tls_version="1.2")
        with pytest.raises(HandshakeAborted):
            _client(ecdsa, srv.address, **cfg)
        time.sleep(0.1)
    assert srv.transcript[0]["cause"] == "IdentityMismatch"
    assert srv.transcript[0]["echoed"] == 0


def test_mutual_requires_both(epid):
    with pytest.raises(ValueError):
        EndpointConfig(LOCAL, policy=epid.policy(), mutual_attestation=True)


@pytest.mark.parametrize("version", ["1.2", "1.3"])
def test_private_key_never_on_wire(scenario, version):
    with _server(scenario, tls_version=version) as srv:
        relay = Relay(srv.address)
        with _client(scenario, relay.address, tls_version=version) as s:
            s.echo(b"payload")
        relay.join()
        key = srv.credential.private_key()
    scalar = key.private_numbers().private_value.to_bytes(32, "big")
    secrets = [scalar, scalar[::-1], srv.credential.key_der, srv.credential.key_pem]
    wire = bytes(relay.to_client) + bytes(relay.to_server)
    assert len(relay.to_client) > 500
    if version == "1.2":  # 1.3 encrypts the certificate message
        assert srv.credential.cert_der in wire
    for secret in secrets:
        assert secret not in wire


def test_no_application_data_on_reject(epid):
    with _server(epid, tls_version="1.2") as srv:
        relay = Relay(srv.address)
        with pytest.raises(HandshakeAborted):
            _client(epid, relay.address, tls_version="1.2", policy=epid.policy(min_isv_svn=epid.enclave.isv_svn + 1))
        relay.join()
        time.sleep(0.1)
    application_data = 23
    assert application_data not in tls_records(bytes(relay.to_client))
    assert application_data not in tls_records(bytes(relay.to_server))
    assert srv.transcript[0]["echoed"] == 0


def test_server_survives_bad_client(epid):
    with _server(epid) as srv:
        with socket.create_connection(srv.address) as raw:
            raw.sendall(b"GET / HTTP/1.0\r\n\r\n")
            raw.recv(100)
        with _client(epid, srv.address) as s:
            assert s.echo(b"still up") == b"still up\n"
