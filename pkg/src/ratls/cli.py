"""``ratls`` command line tool.

Exit codes: 0 accepted/success, 1 rejected, 2 usage error, 3 transport
failure, 4 any other runtime error (unreadable files, bad state snapshot).
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

from cryptography import x509

from . import pki
from .certgen import AttesterConfig, create_key_and_cert, inspect_cert
from .endpoint import AttesterServer, EndpointConfig, run_challenger_client
from .errors import HandshakeAborted, RaTlsError, Transport
from .evidence import EvidenceKind
from .sgx_sim import FLAG_DEBUG, SgxAttributes
from .services import HttpIasClient, HttpPcsClient, ServiceServer, SimulationWorld
from .verifier import VerificationPolicy, verify_ratls_cert

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_USAGE = 2
EXIT_TRANSPORT = 3
EXIT_ERROR = 4

DEMO_MR_ENCLAVE = hashlib.sha256(b"ratls demo enclave").hexdigest()
DEMO_MR_SIGNER = hashlib.sha256(b"ratls demo signer").hexdigest()
DEMO_SPID = "00112233445566778899aabbccddeeff"
DEMO_API_KEY = "simulated-subscription-key"

log = logging.getLogger("ratls")


class UsageError(Exception):
    pass


def _hex(size: int):
    def parse(text: str) -> bytes:
        try:
            value = bytes.fromhex(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not hex: {text!r}") from None
        if len(value) != size:
            raise argparse.ArgumentTypeError(f"expected {size} bytes, got {len(value)}")
        return value

    return parse


def _hostport(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError(f"expected HOST:PORT, got {text!r}")
    return host or "127.0.0.1", int(port)


def read_cert(path: str | Path) -> bytes:
    data = Path(path).read_bytes()
    if b"-----BEGIN CERTIFICATE-----" in data:
        return pki.der(x509.load_pem_x509_certificate(data))
    return data


def _emit(args, obj: dict, text: str) -> None:
    print(json.dumps(obj, indent=2) if args.json else text)


# shared option groups ------------------------------------------------------------


def _add_enclave_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("enclave identity")
    g.add_argument("--mr-enclave", type=_hex(32), default=bytes.fromhex(DEMO_MR_ENCLAVE))
    g.add_argument("--mr-signer", type=_hex(32), default=bytes.fromhex(DEMO_MR_SIGNER))
    g.add_argument("--isv-prod-id", type=int, default=0)
    g.add_argument("--isv-svn", type=int, default=1)
    g.add_argument("--debug-enclave", action="store_true", help="set the DEBUG attribute")
    g.add_argument("--platform-id", type=_hex(16), help="platform from the state file (default: first)")


def _add_attester_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--state", required=True, help="simulation state snapshot (created if absent)")
    p.add_argument("--mode", choices=["epid", "ecdsa"], default="epid")
    p.add_argument("--ias-url", help="mock IAS base URL (default: in-process from --state)")
    p.add_argument("--pcs-url", help="mock PCS base URL (default: in-process from --state)")
    p.add_argument("--spid", type=_hex(16), default=bytes.fromhex(DEMO_SPID))
    p.add_argument("--api-key", default=DEMO_API_KEY)
    p.add_argument("--validity-hours", type=float, default=24.0)
    p.add_argument("--subject", default="RA-TLS Attester")
    p.add_argument("--critical", action="store_true", help="mark evidence extensions critical")
    p.add_argument("--compress", action="store_true", help="DEFLATE-compress evidence payloads")
    p.add_argument("--mrenclave-cn", action="store_true", help="put MRENCLAVE in the subject CN")
    _add_enclave_args(p)


def _attester_config(args) -> tuple[AttesterConfig, SimulationWorld]:
    world = SimulationWorld.load_or_create(args.state)
    try:
        platform = world.platform(args.platform_id)
    except (KeyError, IndexError):
        raise UsageError("platform not found in state file") from None
    flags = SgxAttributes().flags | (FLAG_DEBUG if args.debug_enclave else 0)
    enclave = platform.launch(
        args.mr_enclave, args.mr_signer,
        isv_prod_id=args.isv_prod_id, isv_svn=args.isv_svn, attributes=SgxAttributes(flags),
    )
    mode = EvidenceKind[args.mode.upper()]
    if mode == EvidenceKind.EPID:
        service = dict(ias=HttpIasClient(args.ias_url) if args.ias_url else world.ias, spid=args.spid)
    else:
        service = dict(
            pcs=HttpPcsClient(args.pcs_url, api_key=args.api_key) if args.pcs_url else world.pcs,
            api_key=args.api_key,
        )
    config = AttesterConfig(
        mode, enclave, platform,
        cert_validity=dt.timedelta(hours=args.validity_hours),
        subject_name=args.subject,
        mark_critical=args.critical,
        compress=args.compress,
        mrenclave_in_cn=args.mrenclave_cn,
        **service,
    )
    return config, world


# subcommands ---------------------------------------------------------------------


def cmd_keygen(args) -> int:
    config, world = _attester_config(args)
    cred = create_key_and_cert(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "cert.der").write_bytes(cred.cert_der)
    (out / "cert.pem").write_bytes(cred.cert_pem)
    for name, data in (("key.der", cred.key_der), ("key.pem", cred.key_pem)):
        (out / name).write_bytes(data)
        (out / name).chmod(0o600)
    (out / "trust-roots.pem").write_bytes(world.trust_roots_pem())
    info = {
        "out": str(out),
        "mode": config.attestation_mode.name,
        "cert_size": len(cred.cert_der),
        "mr_enclave": config.enclave.mr_enclave.hex(),
    }
    _emit(args, info, f"wrote {out}/cert.{{der,pem}}, key.{{der,pem}}, trust-roots.pem "
                      f"({info['mode']}, {info['cert_size']} byte certificate)")
    return EXIT_OK


def cmd_inspect(args) -> int:
    report = inspect_cert(read_cert(args.cert))
    if args.json:
        print(json.dumps(report, indent=2))
        return EXIT_OK
    print(f"subject:   {report['subject']}")
    print(f"mode:      {report['mode']}")
    print(f"validity:  {report['not_before']} .. {report['not_after']}")
    print(f"cert size: {report['cert_size']} bytes")
    for ext in report["extensions"]:
        crit = " critical" if ext["critical"] else ""
        print(f"  {ext['oid']:<28} {ext['item']:<20} {ext['size']:>6} bytes{crit}")
    print(f"evidence extension bytes: {report['extension_bytes']}")
    for k, v in (report.get("identity") or {}).items():
        print(f"  {k}: {v}")
    if "error" in report:
        print(f"error: {report['error']}")
    return EXIT_OK


def _load_policy(args) -> VerificationPolicy:
    try:
        return VerificationPolicy.load(args.policy)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"bad policy file: {exc}") from exc


def cmd_verify(args) -> int:
    policy = _load_policy(args)
    now = pki.parse_iso(args.at) if args.at else policy.current_time or pki.utcnow()
    result = verify_ratls_cert(read_cert(args.cert), policy, now)
    text = result.verdict.value if result.accepted else f"{result.verdict.value}: {result.cause.value} ({result.detail})"
    _emit(args, result.to_json(), text)
    return result.exit_code


def _tls_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tls", choices=["1.2", "1.3", "any"], default="any")


def cmd_serve(args) -> int:
    config, _ = _attester_config(args)
    policy = _load_policy(args) if args.mutual else None
    rotation = dt.timedelta(seconds=args.rotate) if args.rotate else None
    endpoint = EndpointConfig(
        (args.host, args.port), attester=config, policy=policy,
        mutual_attestation=args.mutual, cert_rotation_interval=rotation, tls_version=args.tls,
    )
    server = AttesterServer(endpoint).start()
    host, port = server.address
    print(f"serving RA-TLS echo on {host}:{port} ({config.attestation_mode.name})", flush=True)
    try:
        while True:
            time.sleep(3600)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return EXIT_OK


def cmd_connect(args) -> int:
    policy = _load_policy(args)
    attester = _attester_config(args)[0] if args.mutual else None
    endpoint = EndpointConfig(
        args.address, attester=attester, policy=policy,
        mutual_attestation=args.mutual, tls_version=args.tls,
    )
    try:
        with run_challenger_client(endpoint) as session:
            reply = session.echo(args.message.encode())
            obj = session.result.to_json()
            obj["tls_version"] = session.tls_version
            obj["echo"] = reply.decode(errors="replace").rstrip("\n")
    except HandshakeAborted as exc:
        cause = exc.cause.value if exc.cause is not None else None
        _emit(args, {"verdict": "Rejected", "cause": cause, "detail": str(exc)}, f"aborted: {exc}")
        return EXIT_REJECTED
    _emit(args, obj, f"{obj['tls_version']} session to enclave {obj['claims']['mr_enclave']}: echo {obj['echo']!r}")
    return EXIT_OK


def _serve_service(args, **which) -> int:
    world = SimulationWorld.load_or_create(args.state)
    server = ServiceServer(host=args.host, port=args.port, admin=not args.no_admin,
                           **{k: getattr(world, k) for k, v in which.items() if v})
    print(f"mock service listening on {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


def cmd_mock_ias(args) -> int:
    return _serve_service(args, ias=True)


def cmd_mock_pcs(args) -> int:
    return _serve_service(args, pcs=True)


def run_demo(mode: EvidenceKind, tls_version: str) -> list[dict]:
    """Services over HTTP, an attester server and two clients, all in-process."""
    world = SimulationWorld.create()
    platform = world.platform()
    mr_enclave = bytes.fromhex(DEMO_MR_ENCLAVE)
    enclave = platform.launch(mr_enclave, bytes.fromhex(DEMO_MR_SIGNER), isv_svn=1)
    transcript = []
    with ServiceServer(ias=world.ias, pcs=world.pcs) as services:
        if mode == EvidenceKind.EPID:
            service = dict(ias=HttpIasClient(services.url), spid=bytes.fromhex(DEMO_SPID))
        else:
            service = dict(pcs=HttpPcsClient(services.url), api_key=DEMO_API_KEY)
        attester = AttesterConfig(mode, enclave, platform, **service)
        good = VerificationPolicy(tuple(world.trust_roots), golden_mr_enclave=mr_enclave)
        wrong = VerificationPolicy(tuple(world.trust_roots), golden_mr_enclave=bytes(32))
        with AttesterServer(EndpointConfig(("127.0.0.1", 0), attester=attester, tls_version=tls_version)) as srv:
            for name, policy, expect in (("matching", good, "Accepted"), ("wrong-mrenclave", wrong, "IdentityMismatch")):
                entry = {"handshake": name, "mode": mode.name, "tls": tls_version, "expected": expect}
                started = time.perf_counter()
                try:
                    with run_challenger_client(EndpointConfig(srv.address, policy=policy, tls_version=tls_version)) as s:
                        echoed = s.echo(b"hello enclave") == b"hello enclave\n"
                        entry.update(verdict="Accepted", cause="None", negotiated=s.tls_version, echo_ok=echoed)
                        entry["pass"] = expect == "Accepted" and echoed
                except HandshakeAborted as exc:
                    cause = exc.cause.value if exc.cause is not None else None
                    entry.update(verdict="Rejected", cause=cause, detail=str(exc))
                    entry["pass"] = expect == cause
                entry["seconds"] = round(time.perf_counter() - started, 4)
                transcript.append(entry)
    return transcript


def cmd_demo(args) -> int:
    started = time.perf_counter()
    transcript = run_demo(EvidenceKind[args.mode.upper()], args.tls)
    for entry in transcript:
        print(json.dumps(entry))
    ok = all(e["pass"] for e in transcript)
    print(json.dumps({"demo": "pass" if ok else "fail", "seconds": round(time.perf_counter() - started, 3)}))
    return EXIT_OK if ok else EXIT_REJECTED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ratls", description="RA-TLS toolkit with simulated SGX attestation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate an RA-TLS key and certificate")
    _add_attester_args(p)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("inspect", help="summarize a certificate")
    p.add_argument("cert")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("verify", help="verify an RA-TLS certificate against a policy")
    p.add_argument("cert")
    p.add_argument("--policy", required=True)
    p.add_argument("--at", help="verification time, ISO-8601 (default: policy current_time or now)")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("serve", help="run an attester echo server")
    _add_attester_args(p)
    _tls_args(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=4433)
    p.add_argument("--rotate", type=float, help="regenerate key and certificate every N seconds")
    p.add_argument("--mutual", action="store_true", help="require and verify an RA-TLS client certificate")
    p.add_argument("--policy", help="policy for client certificates (with --mutual)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("connect", help="connect to an attester and echo one line")
    p.add_argument("address", type=_hostport)
    p.add_argument("--policy", required=True)
    p.add_argument("--message", default="hello enclave")
    p.add_argument("--mutual", action="store_true", help="present an RA-TLS client certificate")
    p.add_argument("--json", action="store_true")
    _tls_args(p)
    # attester options only matter with --mutual
    p.add_argument("--state", default="ratls-state.json")
    p.add_argument("--mode", choices=["epid", "ecdsa"], default="epid")
    p.add_argument("--ias-url")
    p.add_argument("--pcs-url")
    p.add_argument("--spid", type=_hex(16), default=bytes.fromhex(DEMO_SPID))
    p.add_argument("--api-key", default=DEMO_API_KEY)
    p.add_argument("--validity-hours", type=float, default=24.0)
    p.add_argument("--subject", default="RA-TLS Client")
    p.add_argument("--critical", action="store_true")
    p.add_argument("--compress", action="store_true")
    p.add_argument("--mrenclave-cn", action="store_true")
    _add_enclave_args(p)
    p.set_defaults(func=cmd_connect)

    for name, func, helptext in (
        ("mock-ias", cmd_mock_ias, "run the mock IAS over HTTP"),
        ("mock-pcs", cmd_mock_pcs, "run the mock PCS over HTTP"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--state", required=True)
        p.add_argument("--host", default="127.0.0.1")
        p.add_argument("--port", type=int, default=0)
        p.add_argument("--no-admin", action="store_true", help="disable admin endpoints")
        p.set_defaults(func=func)

    p = sub.add_parser("demo", help="services + server + client in one process")
    p.add_argument("--mode", choices=["epid", "ecdsa"], default="epid")
    _tls_args(p)
    p.set_defaults(func=cmd_demo)
    return parser


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"ratls: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Transport as exc:
        print(f"ratls: transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (RaTlsError, OSError, ValueError) as exc:
        print(f"ratls: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
