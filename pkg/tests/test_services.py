import base64
import datetime as dt
import json
import threading
import urllib.error
import urllib.request

import pytest
from cryptography import x509
from cryptography.hazmat.primitives import serialization
from hypothesis import given, settings
from hypothesis import strategies as st

from ratls import pki
from ratls.errors import MalformedRequest, QuoteInvalid, Transport, UnknownPlatform, UnknownSerial
from ratls.evidence import EvidenceKind
from ratls.mutations import API_KEY, SPID, Clock, flip
from ratls.services import HttpIasClient, HttpPcsClient, MockIas, MockPcs, ServiceServer, SimulationWorld
from ratls.sgx_sim import AttestationKey, SignType
from ratls.verifier import Cause, verify_ratls_cert
from tests import oracles


def _quote(sc, sign_type=SignType.EPID_SIM):
    return sc.platform.quote(sc.platform.report(sc.enclave, bytes(64)), sign_type).to_bytes()


def _crl_serials(crl_der: bytes) -> set[int]:
    return {r.serial_number for r in x509.load_der_x509_crl(crl_der)}


def _pem(der: bytes) -> bytes:
    return x509.load_der_x509_certificate(der).public_bytes(serialization.Encoding.PEM)


def assert_collateral_consistent(pcs):
    """Every served document and CRL verifies under the service's published chains."""
    root = x509.load_der_x509_certificate(pcs.trust_root)
    for c in (pcs.get_tcb_info(), pcs.get_qe_identity()):
        leaf = x509.load_der_x509_certificate(c.chain[0])
        assert pki.chains_to_root(leaf, [x509.load_der_x509_certificate(d) for d in c.chain[1:]], [root])
        assert oracles.ecdsa_verify(pki.spki_der(leaf.public_key()), c.document.signature, c.document.body)
        doc = c.document.json()
        assert pki.parse_iso(doc["nextUpdate"]) > pki.parse_iso(doc["issueDate"])
    root_crl, pck_crl = (x509.load_der_x509_crl(d) for d in pcs.get_crls())
    pck_ca = x509.load_der_x509_certificate(pcs.pck_chain[0])
    assert root_crl.is_signature_valid(root.public_key())
    assert pck_crl.is_signature_valid(pck_ca.public_key())
    for crl in (root_crl, pck_crl):
        assert crl.next_update_utc > crl.last_update_utc


class TestIas:
    def test_valid_quote(self, epid):
        quote = _quote(epid)
        resp = epid.world.ias.verify_quote(quote, SPID)
        avr = json.loads(resp.avr)
        assert avr["isvEnclaveQuoteStatus"] == "OK"
        assert base64.b64decode(avr["isvEnclaveQuoteBody"]) == quote

    def test_corrupted_quote(self, epid):
        with pytest.raises(QuoteInvalid):
            epid.world.ias.verify_quote(flip(_quote(epid), 200), SPID)

    def test_unparseable(self, epid):
        with pytest.raises(QuoteInvalid):
            epid.world.ias.verify_quote(b"nonsense", SPID)

    def test_ecdsa_quote_refused(self, epid):
        with pytest.raises(QuoteInvalid):
            epid.world.ias.verify_quote(_quote(epid, SignType.ECDSA_SIM), SPID)

    def test_unknown_key(self, epid):
        stranger = SimulationWorld.create(platforms=0)
        with pytest.raises(QuoteInvalid):
            stranger.ias.verify_quote(_quote(epid), SPID)

    def test_spid_presence(self, epid):
        with pytest.raises(MalformedRequest):
            epid.world.ias.verify_quote(_quote(epid), None)

    def test_distinct_ids_and_timestamps(self, epid):
        quote = _quote(epid)
        a = json.loads(epid.world.ias.verify_quote(quote, SPID).avr)
        b = json.loads(epid.world.ias.verify_quote(quote, SPID).avr)
        assert a["id"] != b["id"]
        assert a["timestamp"] != b["timestamp"]

    def test_timestamps_nondecreasing(self, epid):
        # frozen clock: the service still orders its reports
        stamps = [pki.parse_iso(json.loads(epid.world.ias.verify_quote(_quote(epid), SPID).avr)["timestamp"]) for _ in range(20)]
        assert stamps == sorted(stamps)

    def test_avr_verifies_under_published_cert(self, epid):
        resp = epid.world.ias.verify_quote(_quote(epid), SPID)
        cert = x509.load_der_x509_certificate(resp.signing_cert)
        assert oracles.ecdsa_verify(pki.spki_der(cert.public_key()), resp.signature, resp.avr)
        assert pki.signed_by(cert, x509.load_der_x509_certificate(epid.world.ias.trust_root))

    def test_status_change(self, epid):
        epid.world.ias.set_platform_status(epid.platform.attestation_key, "GROUP_REVOKED")
        avr = json.loads(epid.world.ias.verify_quote(_quote(epid), SPID).avr)
        assert avr["isvEnclaveQuoteStatus"] == "GROUP_REVOKED"
        with pytest.raises(MalformedRequest):
            epid.world.ias.set_platform_status(epid.platform.attestation_key, "FINE")
        with pytest.raises(UnknownPlatform):
            epid.world.ias.set_platform_status(AttestationKey.generate(), "OK")

    def test_concurrent_ids_unique(self, epid):
        quote, ids = _quote(epid), []
        lock = threading.Lock()

        def worker():
            for _ in range(10):
                rid = json.loads(epid.world.ias.verify_quote(quote, SPID).avr)["id"]
                with lock:
                    ids.append(rid)

        threads = [threading.Thread(target=worker) for _ in range(6)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(set(ids)) == 60


class TestPcs:
    def test_pck_chain_openssl(self, ecdsa, tmp_path):
        resp = ecdsa.world.pcs.get_pck_cert(ecdsa.platform.platform_id, API_KEY)
        at = int((ecdsa.clock() + dt.timedelta(minutes=1)).timestamp())
        out = oracles.openssl_verify(
            tmp_path, _pem(resp.pck_cert), [_pem(d) for d in resp.chain[:-1]], _pem(ecdsa.world.pcs.trust_root), at
        )
        if out is None:
            pytest.skip("openssl binary not available")
        ok, text = out
        assert ok, text

    def test_pck_chain_ecdsa_oracle(self, ecdsa):
        resp = ecdsa.world.pcs.get_pck_cert(ecdsa.platform.platform_id, API_KEY)
        certs = [x509.load_der_x509_certificate(d) for d in (resp.pck_cert, *resp.chain)]
        for child, parent in zip(certs, certs[1:]):
            assert oracles.ecdsa_verify(pki.spki_der(parent.public_key()), child.signature, child.tbs_certificate_bytes)

    def test_pck_certifies_attestation_key(self, ecdsa):
        pck = x509.load_der_x509_certificate(ecdsa.world.pcs.get_pck_cert(ecdsa.platform.platform_id, API_KEY).pck_cert)
        assert pki.spki_der(pck.public_key()) == ecdsa.platform.attestation_key.public_der()

    def test_unknown_platform(self, ecdsa):
        with pytest.raises(UnknownPlatform):
            ecdsa.world.pcs.get_pck_cert(b"\xee" * 16, API_KEY)

    def test_api_key_presence(self, ecdsa):
        with pytest.raises(MalformedRequest):
            ecdsa.world.pcs.get_pck_cert(ecdsa.platform.platform_id, None)

    def test_tcb_dates(self, ecdsa):
        doc = ecdsa.world.pcs.get_tcb_info().document.json()
        assert pki.parse_iso(doc["nextUpdate"]) > pki.parse_iso(doc["issueDate"])

    def test_collateral_self_consistent(self, ecdsa):
        assert_collateral_consistent(ecdsa.world.pcs)
        ecdsa.world.pcs.revoke(ecdsa.pck_serial())
        ecdsa.world.pcs.set_tcb_status(bytes(16), "OutOfDate")
        assert_collateral_consistent(ecdsa.world.pcs)

    def test_revoke_lists_serial(self, ecdsa):
        serial = ecdsa.pck_serial()
        ecdsa.world.pcs.revoke(serial)
        root_crl, pck_crl = ecdsa.world.pcs.get_crls()
        assert serial in _crl_serials(pck_crl)
        assert serial not in _crl_serials(root_crl)

    def test_revoke_unknown(self, ecdsa):
        with pytest.raises(UnknownSerial):
            ecdsa.world.pcs.revoke(12345)

    def test_provision_then_fetch(self, ecdsa):
        key = AttestationKey.generate()
        ecdsa.world.pcs.provision_platform(b"\x77" * 16, bytes(16), key)
        assert ecdsa.world.pcs.get_pck_cert(b"\x77" * 16, API_KEY).pck_cert

    def test_tcb_status_validation(self, ecdsa):
        with pytest.raises(MalformedRequest):
            ecdsa.world.pcs.set_tcb_status(bytes(16), "Sparkling")
        with pytest.raises(MalformedRequest):
            ecdsa.world.pcs.set_tcb_status(bytes(3), "OutOfDate")

    def test_revoke_then_verify(self, ecdsa):
        ecdsa.world.pcs.revoke(ecdsa.pck_serial())
        result = verify_ratls_cert(ecdsa.issue().cert_der, ecdsa.policy())
        assert result.cause == Cause.REVOKED

    def test_collateral_fresh_per_fetch(self, ecdsa):
        first = ecdsa.world.pcs.get_tcb_info().document.json()["issueDate"]
        ecdsa.clock.advance(dt.timedelta(hours=1))
        assert ecdsa.world.pcs.get_tcb_info().document.json()["issueDate"] != first


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=1, max_size=12))
def test_revocation_monotone(picks):
    world = SimulationWorld.create(clock=Clock(), platforms=3)
    pcs = world.pcs
    candidates = [pcs.platforms[p.platform_id].cert.serial_number for p in world.platforms]
    candidates += [pcs.pck_ca_cert.serial_number, pcs.tcb_cert.serial_number]
    previous: set[int] = set()
    for i in picks:
        pcs.revoke(candidates[i % len(candidates)])
        current = set().union(*(_crl_serials(c) for c in pcs.get_crls()))
        assert current >= previous
        previous = current
    assert previous == {candidates[i % len(candidates)] for i in picks}


@pytest.fixture
def served():
    world = SimulationWorld.create(clock=Clock())
    with ServiceServer(ias=world.ias, pcs=world.pcs) as srv:
        yield world, srv


class TestHttp:
    def test_ias_roundtrip(self, served):
        world, srv = served
        platform = world.platform()
        enclave = platform.launch(b"\x01" * 32, b"\x02" * 32)
        quote = platform.quote(platform.report(enclave, bytes(64)), SignType.EPID_SIM).to_bytes()
        resp = HttpIasClient(srv.url).verify_quote(quote, SPID)
        assert base64.b64decode(json.loads(resp.avr)["isvEnclaveQuoteBody"]) == quote
        cert = x509.load_der_x509_certificate(resp.signing_cert)
        assert oracles.ecdsa_verify(pki.spki_der(cert.public_key()), resp.signature, resp.avr)

    def test_ias_rejects_garbage(self, served):
        _, srv = served
        with pytest.raises(QuoteInvalid):
            HttpIasClient(srv.url).verify_quote(b"\x00" * 500, SPID)

    def test_status_codes(self, served):
        _, srv = served
        cases = [
            ("POST", "/ias/v1/report", {"isvEnclaveQuote": "AAAA", "spid": SPID.hex()}, 400),
            ("POST", "/ias/v1/report", {"isvEnclaveQuote": "%%%"}, 400),
            ("GET", f"/pcs/v1/pckcert?platform_id={'00' * 16}", None, 404),
            ("GET", "/pcs/v1/pckcert?platform_id=zz", None, 400),
            ("POST", "/pcs/admin/revoke", {"serial": 1}, 404),
            ("GET", "/nowhere", None, 404),
        ]
        for method, path, body, status in cases:
            req = urllib.request.Request(
                srv.url + path, data=json.dumps(body).encode() if body else None, method=method,
                headers={"Ocp-Apim-Subscription-Key": API_KEY},
            )
            with pytest.raises(urllib.error.HTTPError) as err:
                urllib.request.urlopen(req, timeout=5)
            assert err.value.code == status, path
            assert "error" in json.loads(err.value.read())

    def test_pcs_client(self, served):
        world, srv = served
        client = HttpPcsClient(srv.url, api_key=API_KEY)
        pid = world.platform().platform_id
        resp = client.get_pck_cert(pid)
        assert resp.chain == world.pcs.pck_chain
        assert client.get_tcb_info().document.json()["tcbLevels"]
        assert client.get_qe_identity().document.json()["minQeSvn"] == world.pcs.qe_min_svn
        assert len(client.get_crls()) == 2
        with pytest.raises(UnknownPlatform):
            client.get_pck_cert(bytes(16))

    def test_admin_over_http(self, served):
        world, srv = served
        client = HttpPcsClient(srv.url, api_key=API_KEY)
        serial = world.pcs.platforms[world.platform().platform_id].cert.serial_number
        client.revoke(serial)
        assert serial in _crl_serials(client.get_crls()[1])
        with pytest.raises(UnknownSerial):
            client.revoke(99)
        client.set_tcb_status(bytes(16), "OutOfDate")
        levels = client.get_tcb_info().document.json()["tcbLevels"]
        assert {"cpuSvn": "00" * 16, "status": "OutOfDate"} in levels
        key = AttestationKey.generate()
        assert client.provision_platform(b"\x42" * 16, bytes(16), key.public_der())
        assert client.get_pck_cert(b"\x42" * 16).pck_cert

    def test_admin_disabled(self):
        world = SimulationWorld.create(clock=Clock())
        with ServiceServer(pcs=world.pcs, admin=False) as srv:
            with pytest.raises(MalformedRequest):  # 404 maps to the generic client error
                HttpPcsClient(srv.url).revoke(1)

    def test_unreachable(self):
        with pytest.raises(Transport):
            HttpPcsClient("http://127.0.0.1:9", timeout=1).get_crls()


class TestSnapshot:
    def test_roundtrip(self, tmp_path):
        clock = Clock()
        world = SimulationWorld.create(clock=clock, platforms=2)
        world.pcs.revoke(world.pcs.tcb_cert.serial_number)
        path = tmp_path / "w.json"
        world.save(path)
        assert path.stat().st_mode & 0o777 == 0o600
        loaded = SimulationWorld.load(path, clock)
        assert loaded.trust_roots == world.trust_roots
        assert [p.platform_id for p in loaded.platforms] == [p.platform_id for p in world.platforms]
        assert _crl_serials(loaded.pcs.get_crls()[0]) == {world.pcs.tcb_cert.serial_number}

    def test_loaded_world_attests(self, tmp_path):
        from ratls.mutations import Scenario

        sc = Scenario.create(EvidenceKind.ECDSA)
        sc.world.save(tmp_path / "w.json")
        twin = Scenario(sc.mode, SimulationWorld.load(tmp_path / "w.json", sc.clock), sc.clock, sc.enclave)
        assert verify_ratls_cert(twin.issue().cert_der, sc.policy()).accepted


def test_mock_constructible_in_process():
    assert MockIas().trust_root and MockPcs().trust_root
