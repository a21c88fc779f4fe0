import json
import subprocess
import sys
from contextlib import contextmanager

import pytest

from ratls import pki
from ratls.cli import DEMO_MR_ENCLAVE, build_parser, cli_main, run_demo
from ratls.evidence import EvidenceKind
from ratls.services import ServiceServer, SimulationWorld
from ratls.verifier import Cause, VerificationPolicy, verify_ratls_cert
from tests.test_certgen import plain_cert


@contextmanager
def spawn(*argv):
    proc = subprocess.Popen([sys.executable, "-m", "ratls", *argv], stdout=subprocess.PIPE,
                            stderr=subprocess.PIPE, text=True)
    try:
        yield proc
    finally:
        proc.terminate()
        proc.wait(timeout=5)


def run(capsys, *argv) -> tuple[int, str]:
    code = cli_main([str(a) for a in argv])
    return code, capsys.readouterr().out


@pytest.fixture
def keygen(tmp_path, capsys):
    """Run keygen in ``mode`` and write a matching policy file next to it."""

    def make(mode="ecdsa", *extra):
        out = tmp_path / mode
        code, _ = run(capsys, "keygen", "--state", tmp_path / "state.json", "--mode", mode, "--out", out, *extra)
        assert code == 0
        policy = {"trust_roots": ["trust-roots.pem"], "mr_enclave": DEMO_MR_ENCLAVE}
        (out / "policy.json").write_text(json.dumps(policy))
        return out

    return make


class TestKeygen:
    @pytest.mark.parametrize("mode", ["epid", "ecdsa"])
    def test_outputs(self, keygen, mode):
        out = keygen(mode)
        for name in ("cert.der", "cert.pem", "key.der", "key.pem", "trust-roots.pem"):
            assert (out / name).stat().st_size > 0
        assert (out / "key.der").stat().st_mode & 0o777 == 0o600
        assert (out / "cert.pem").read_bytes().startswith(b"-----BEGIN CERTIFICATE")

    def test_json(self, tmp_path, capsys):
        code, out = run(capsys, "keygen", "--state", tmp_path / "s.json", "--out", tmp_path, "--json")
        assert code == 0
        assert json.loads(out)["mode"] == "EPID"

    def test_state_reused(self, tmp_path, capsys, keygen):
        keygen("epid")
        roots = (tmp_path / "epid" / "trust-roots.pem").read_bytes()
        keygen("ecdsa")
        assert (tmp_path / "ecdsa" / "trust-roots.pem").read_bytes() == roots

    def test_unknown_platform(self, tmp_path, capsys):
        code = cli_main(["keygen", "--state", str(tmp_path / "s.json"), "--platform-id", "ab" * 16])
        assert code == 2


class TestInspect:
    def test_text(self, keygen, capsys):
        out = keygen("ecdsa")
        code, text = run(capsys, "inspect", out / "cert.pem")
        assert code == 0
        assert "mode:      ECDSA" in text
        assert text.count("1.3.6.1.4.1.99999.1337.") == 8

    def test_json_der(self, keygen, capsys):
        out = keygen("epid", "--compress")
        code, text = run(capsys, "inspect", out / "cert.der", "--json")
        info = json.loads(text)
        assert code == 0 and info["mode"] == "EPID" and info["compressed"] is True

    def test_plain(self, tmp_path, capsys):
        (tmp_path / "plain.der").write_bytes(plain_cert())
        code, text = run(capsys, "inspect", tmp_path / "plain.der", "--json")
        assert code == 0 and json.loads(text)["mode"] == "none"

    def test_undecodable(self, tmp_path, capsys):
        (tmp_path / "junk.der").write_bytes(b"junk")
        assert run(capsys, "inspect", tmp_path / "junk.der")[0] == 4


class TestVerify:
    def test_good(self, keygen, capsys):
        out = keygen()
        code, text = run(capsys, "verify", out / "cert.pem", "--policy", out / "policy.json")
        assert code == 0
        assert text.strip() == "Accepted"

    def test_tampered(self, keygen, capsys):
        out = keygen()
        der = bytearray((out / "cert.der").read_bytes())
        der[-5] ^= 1
        (out / "bad.der").write_bytes(bytes(der))
        code, text = run(capsys, "verify", out / "bad.der", "--policy", out / "policy.json", "--json")
        assert code == 1
        assert json.loads(text)["cause"] == Cause.BAD_CERT_SIGNATURE.value

    def test_at(self, keygen, capsys):
        out = keygen()
        code, text = run(capsys, "verify", out / "cert.der", "--policy", out / "policy.json", "--at", "2035-01-01T00:00:00Z")
        assert code == 1
        assert "StaleEvidence" in text

    def test_matches_library(self, keygen, capsys):
        out = keygen("epid")
        policy = VerificationPolicy.load(out / "policy.json")
        at = "2031-06-01T00:00:00Z"
        for when in (None, at):
            extra = ["--at", when] if when else []
            code, text = run(capsys, "verify", out / "cert.der", "--policy", out / "policy.json", "--json", *extra)
            library = verify_ratls_cert((out / "cert.der").read_bytes(), policy, pki.parse_iso(when) if when else pki.utcnow())
            assert json.loads(text)["verdict"] == library.verdict.value
            assert code == library.exit_code

    def test_bad_policy(self, keygen, capsys, tmp_path):
        out = keygen()
        (tmp_path / "p.json").write_text(json.dumps({"trust_roots": []}))
        assert run(capsys, "verify", out / "cert.der", "--policy", tmp_path / "p.json")[0] == 2

    def test_missing_file(self, tmp_path, capsys):
        (tmp_path / "p.json").write_text("{}")
        assert run(capsys, "verify", tmp_path / "nope.der", "--policy", tmp_path / "p.json")[0] in (2, 4)


class TestUsage:
    @pytest.mark.parametrize(
        "argv",
        [[], ["bogus"], ["verify"], ["connect", "nohostport", "--policy", "p"], ["keygen", "--state", "s", "--mr-enclave", "zz"]],
    )
    def test_exit_2(self, argv, capsys):
        assert cli_main(argv) == 2

    def test_help_lists_commands(self):
        text = build_parser().format_help()
        for cmd in ("keygen", "inspect", "verify", "serve", "connect", "mock-ias", "mock-pcs", "demo"):
            assert cmd in text


class TestNetwork:
    def test_connect_refused(self, keygen, capsys):
        out = keygen()
        code = cli_main(["connect", "127.0.0.1:9", "--policy", str(out / "policy.json"), "--state", str(out / "s.json")])
        assert code == 3

    def test_serve_connect_via_http_services(self, tmp_path, capsys):
        state = tmp_path / "state.json"
        world = SimulationWorld.load_or_create(state)
        (tmp_path / "roots.pem").write_bytes(world.trust_roots_pem())
        policy = {"trust_roots": ["roots.pem"], "mr_enclave": DEMO_MR_ENCLAVE}
        (tmp_path / "policy.json").write_text(json.dumps(policy))
        with ServiceServer(ias=world.ias, pcs=world.pcs) as services:
            argv = ["serve", "--state", str(state), "--mode", "ecdsa", "--pcs-url", services.url, "--port", "0"]
            with spawn(*argv) as proc:
                banner = proc.stdout.readline()
                assert banner, proc.stderr.read()
                port = banner.split()[4].rsplit(":", 1)[1]
                code, text = run(capsys, "connect", f"127.0.0.1:{port}", "--policy", tmp_path / "policy.json",
                                 "--state", state, "--json")
        assert code == 0
        reply = json.loads(text)
        assert reply["echo"] == "hello enclave"
        assert reply["claims"]["mr_enclave"] == DEMO_MR_ENCLAVE

    @pytest.mark.parametrize("command", ["mock-ias", "mock-pcs"])
    def test_mock_service_subprocess(self, tmp_path, command):
        with spawn(command, "--state", str(tmp_path / "s.json"), "--port", "0") as proc:
            assert "http://127.0.0.1:" in proc.stdout.readline()


@pytest.mark.parametrize("mode", list(EvidenceKind), ids=lambda m: m.name.lower())
def test_demo_transcript(mode):
    transcript = run_demo(mode, "1.3")
    assert [e["handshake"] for e in transcript] == ["matching", "wrong-mrenclave"]
    assert all(e["pass"] for e in transcript)
    assert transcript[1]["cause"] == "IdentityMismatch"


def test_demo_command(capsys):
    code, text = run(capsys, "demo", "--mode", "ecdsa", "--tls", "1.2")
    lines = [json.loads(ln) for ln in text.splitlines()]
    assert code == 0
    assert lines[-1]["demo"] == "pass"
