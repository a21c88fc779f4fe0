"""A complete simulated attestation universe: platforms, mock IAS, mock PCS.

The snapshot format exists for fixtures and for running the CLI services
as separate processes that agree on keys. It contains private keys and is
never meant to leave a test machine.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from cryptography import x509
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric import ec

from .. import pki
from ..sgx_sim import AttestationKey, SimulatedPlatform
from .mock import MockIas, MockPcs, PckRecord

SNAPSHOT_VERSION = 1


def _key_pem(key) -> str:
    return key.private_bytes(
        serialization.Encoding.PEM,
        serialization.PrivateFormat.PKCS8,
        serialization.NoEncryption(),
    ).decode()


def _load_key(text: str) -> ec.EllipticCurvePrivateKey:
    return serialization.load_pem_private_key(text.encode(), password=None)


def _cert_pem(cert: x509.Certificate) -> str:
    return cert.public_bytes(serialization.Encoding.PEM).decode()


def _load_cert(text: str) -> x509.Certificate:
    return x509.load_pem_x509_certificate(text.encode())


@dataclass
class SimulationWorld:
    ias: MockIas
    pcs: MockPcs
    platforms: list[SimulatedPlatform] = field(default_factory=list)

    @classmethod
    def create(cls, clock=pki.utcnow, platforms: int = 1) -> "SimulationWorld":
        world = cls(MockIas(clock=clock), MockPcs(clock=clock))
        for _ in range(platforms):
            world.add_platform()
        return world

    def add_platform(
        self,
        platform_id: bytes | None = None,
        cpu_svn: bytes = bytes([2] * 16),
        qe_svn: int = 5,
        attestation_key: AttestationKey | None = None,
    ) -> SimulatedPlatform:
        platform = SimulatedPlatform(
            platform_id=platform_id or os.urandom(16),
            attestation_key=attestation_key or AttestationKey.generate(),
            cpu_svn=cpu_svn,
            qe_svn=qe_svn,
        )
        self.ias.register_attestation_key(platform.attestation_key)
        self.pcs.provision_platform(platform.platform_id, platform.cpu_svn, platform.attestation_key)
        self.platforms.append(platform)
        return platform

    def platform(self, platform_id: bytes | None = None) -> SimulatedPlatform:
        if platform_id is None:
            return self.platforms[0]
        for p in self.platforms:
            if p.platform_id == platform_id:
                return p
        raise KeyError(platform_id.hex())

    @property
    def trust_roots(self) -> list[bytes]:
        return [self.ias.trust_root, self.pcs.trust_root]

    def trust_roots_pem(self) -> bytes:
        return b"".join(
            x509.load_der_x509_certificate(d).public_bytes(serialization.Encoding.PEM)
            for d in self.trust_roots
        )

    # snapshots --------------------------------------------------------------

    def to_snapshot(self) -> dict:
        pcs = self.pcs
        return {
            "version": SNAPSHOT_VERSION,
            "ias": {
                "ca_key": _key_pem(self.ias.ca_key),
                "signing_key": _key_pem(self.ias.signing_key),
                "ca_cert": _cert_pem(self.ias.ca_cert),
                "signing_cert": _cert_pem(self.ias.signing_cert),
            },
            "pcs": {
                "keys": {
                    "root": _key_pem(pcs.root_key),
                    "pck_ca": _key_pem(pcs.pck_ca_key),
                    "tcb": _key_pem(pcs.tcb_key),
                },
                "certs": {
                    "root": _cert_pem(pcs.root_cert),
                    "pck_ca": _cert_pem(pcs.pck_ca_cert),
                    "tcb": _cert_pem(pcs.tcb_cert),
                },
                "pck": [
                    {"platform_id": pid.hex(), "cpu_svn": rec.cpu_svn.hex(), "cert": _cert_pem(rec.cert)}
                    for pid, rec in pcs.platforms.items()
                ],
                "revoked": {str(s): pki.isoformat(t) for s, t in pcs.revoked.items()},
                "tcb_levels": [[t.hex(), s] for t, s in pcs.tcb_levels],
                "qe_mr_enclave": pcs.qe_mr_enclave.hex(),
                "qe_min_svn": pcs.qe_min_svn,
            },
            "platforms": [
                {
                    "platform_id": p.platform_id.hex(),
                    "cpu_svn": p.cpu_svn.hex(),
                    "qe_svn": p.qe_svn,
                    "attestation_key": p.attestation_key.private_value(),
                }
                for p in self.platforms
            ],
        }

    @classmethod
    def from_snapshot(cls, snap: dict, clock=pki.utcnow) -> "SimulationWorld":
        if snap.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {snap.get('version')!r}")
        ias_s, pcs_s = snap["ias"], snap["pcs"]
        ias = MockIas(
            clock=clock,
            ca_key=_load_key(ias_s["ca_key"]),
            signing_key=_load_key(ias_s["signing_key"]),
            ca_cert=_load_cert(ias_s["ca_cert"]),
            signing_cert=_load_cert(ias_s["signing_cert"]),
        )
        pcs = MockPcs(
            clock=clock,
            qe_mr_enclave=bytes.fromhex(pcs_s["qe_mr_enclave"]),
            qe_min_svn=pcs_s["qe_min_svn"],
            keys={k: _load_key(v) for k, v in pcs_s["keys"].items()},
            certs={k: _load_cert(v) for k, v in pcs_s["certs"].items()},
        )
        for rec in pcs_s["pck"]:
            pcs.platforms[bytes.fromhex(rec["platform_id"])] = PckRecord(
                _load_cert(rec["cert"]), bytes.fromhex(rec["cpu_svn"])
            )
        pcs.revoked = {int(s): pki.parse_iso(t) for s, t in pcs_s["revoked"].items()}
        pcs.tcb_levels = [(bytes.fromhex(t), s) for t, s in pcs_s["tcb_levels"]]
        world = cls(ias, pcs)
        for p in snap["platforms"]:
            platform = SimulatedPlatform(
                platform_id=bytes.fromhex(p["platform_id"]),
                attestation_key=AttestationKey.from_private_value(p["attestation_key"]),
                cpu_svn=bytes.fromhex(p["cpu_svn"]),
                qe_svn=p["qe_svn"],
            )
            ias.register_attestation_key(platform.attestation_key)
            world.platforms.append(platform)
        return world

    def save(self, path: str | os.PathLike) -> None:
        path = Path(path)
        path.write_text(json.dumps(self.to_snapshot(), indent=1))
        os.chmod(path, 0o600)

    @classmethod
    def load(cls, path: str | os.PathLike, clock=pki.utcnow) -> "SimulationWorld":
        return cls.from_snapshot(json.loads(Path(path).read_text()), clock=clock)

    @classmethod
    def load_or_create(cls, path: str | os.PathLike, clock=pki.utcnow) -> "SimulationWorld":
        if Path(path).exists():
            return cls.load(path, clock)
        world = cls.create(clock)
        world.save(path)
        return world

