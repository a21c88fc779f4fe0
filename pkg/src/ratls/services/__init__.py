"""Mock attestation back end: IAS-like and PCS-like services."""

from .http import HttpIasClient, HttpPcsClient, ServiceServer
from .mock import AvrResponse, MockIas, MockPcs, PckCertResponse, SignedCollateral
from .world import SimulationWorld

__all__ = [
    "AvrResponse",
    "HttpIasClient",
    "HttpPcsClient",
    "MockIas",
    "MockPcs",
    "PckCertResponse",
    "ServiceServer",
    "SignedCollateral",
    "SimulationWorld",
]
