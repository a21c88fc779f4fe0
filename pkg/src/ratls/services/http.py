"""Loopback HTTP front end for the mock services, and matching clients.

Endpoint and field reference: docs/service_api.md.
"""

from __future__ import annotations

import base64
import json
import logging
import threading
import urllib.error
import urllib.parse
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .. import errors
from ..evidence import SignedDocument
from .mock import AvrResponse, MockIas, MockPcs, PckCertResponse, SignedCollateral

log = logging.getLogger(__name__)

SIG_HEADER = "X-IASReport-Signature"
CERT_HEADER = "X-IASReport-Signing-Certificate"
API_KEY_HEADER = "Ocp-Apim-Subscription-Key"

_STATUS = {
    errors.QuoteInvalid: 400,
    errors.MalformedRequest: 400,
    errors.UnknownPlatform: 404,
    errors.UnknownSerial: 404,
}


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode()


def _unb64(text) -> bytes:
    if not isinstance(text, str):
        raise errors.MalformedRequest("expected base64 string")
    try:
        return base64.b64decode(text, validate=True)
    except ValueError as exc:
        raise errors.MalformedRequest(f"bad base64: {exc}") from exc


def _unhex(text, size: int | None = None) -> bytes:
    try:
        value = bytes.fromhex(text)
    except (TypeError, ValueError) as exc:
        raise errors.MalformedRequest(f"bad hex: {text!r}") from exc
    if size is not None and len(value) != size:
        raise errors.MalformedRequest(f"expected {size} bytes, got {len(value)}")
    return value


def _collateral_json(c: SignedCollateral, name: str) -> dict:
    return {
        name: _b64(c.document.body),
        "signature": _b64(c.document.signature),
        "chain": [_b64(d) for d in c.chain],
    }


class _Handler(BaseHTTPRequestHandler):
    server: "_Server"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        log.debug("%s %s", self.address_string(), fmt % args)

    def _send(self, status: int, body: bytes, headers: dict | None = None):
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        for k, v in (headers or {}).items():
            self.send_header(k, v)
        self.end_headers()
        self.wfile.write(body)

    def _json(self, status: int, obj) -> None:
        self._send(status, json.dumps(obj).encode())

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        try:
            obj = json.loads(self.rfile.read(length) or b"{}")
        except ValueError as exc:
            raise errors.MalformedRequest(f"body is not JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise errors.MalformedRequest("body must be a JSON object")
        return obj

    def _dispatch(self, method: str):
        url = urllib.parse.urlsplit(self.path)
        route = self.server.routes.get((method, url.path))
        if route is None:
            return self._json(404, {"error": "NotFound", "detail": url.path})
        try:
            route(self, urllib.parse.parse_qs(url.query))
        except errors.RaTlsError as exc:
            status = next((s for cls, s in _STATUS.items() if isinstance(exc, cls)), 500)
            self._json(status, {"error": type(exc).__name__, "detail": str(exc)})
        except (KeyError, TypeError, ValueError) as exc:
            self._json(400, {"error": "MalformedRequest", "detail": str(exc)})

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    # IAS ----------------------------------------------------------------------

    def ias_report(self, _query):
        body = self._body()
        spid = _unhex(body.get("spid", ""), 16) if body.get("spid") else None
        resp = self.server.ias.verify_quote(_unb64(body.get("isvEnclaveQuote")), spid)
        self._send(200, resp.avr, {SIG_HEADER: _b64(resp.signature), CERT_HEADER: _b64(resp.signing_cert)})

    def ias_register(self, _query):
        self.server.ias.register_attestation_key(_unb64(self._body().get("attestation_key")))
        self._json(200, {"ok": True})

    def ias_status(self, _query):
        body = self._body()
        self.server.ias.set_platform_status(_unb64(body.get("attestation_key")), body.get("status"))
        self._json(200, {"ok": True})

    # PCS ----------------------------------------------------------------------

    def pcs_pckcert(self, query):
        pid = _unhex((query.get("platform_id") or [""])[0], 16)
        resp = self.server.pcs.get_pck_cert(pid, self.headers.get(API_KEY_HEADER))
        self._json(200, {"pck_cert": _b64(resp.pck_cert), "chain": [_b64(d) for d in resp.chain]})

    def pcs_tcb(self, _query):
        self._json(200, _collateral_json(self.server.pcs.get_tcb_info(), "tcb_info"))

    def pcs_qe(self, _query):
        self._json(200, _collateral_json(self.server.pcs.get_qe_identity(), "qe_identity"))

    def pcs_crl(self, _query):
        self._json(200, {"crls": [_b64(c) for c in self.server.pcs.get_crls()]})

    def pcs_revoke(self, _query):
        serial = self._body().get("serial")
        if isinstance(serial, str):
            serial = int(serial, 16)
        if not isinstance(serial, int):
            raise errors.MalformedRequest("serial must be an integer or hex string")
        self.server.pcs.revoke(serial)
        self._json(200, {"ok": True, "serial": format(serial, "x")})

    def pcs_tcb_admin(self, _query):
        body = self._body()
        self.server.pcs.set_tcb_status(_unhex(body.get("cpu_svn"), 16), body.get("status"))
        self._json(200, {"ok": True})

    def pcs_provision(self, _query):
        body = self._body()
        pck = self.server.pcs.provision_platform(
            _unhex(body.get("platform_id"), 16),
            _unhex(body.get("cpu_svn"), 16),
            _unb64(body.get("attestation_key")),
        )
        self._json(200, {"ok": True, "pck_cert": _b64(pck)})


class _Server(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, addr, ias: MockIas | None, pcs: MockPcs | None, admin: bool):
        super().__init__(addr, _Handler)
        self.ias, self.pcs = ias, pcs
        h = _Handler
        self.routes = {}
        if ias is not None:
            self.routes[("POST", "/ias/v1/report")] = h.ias_report
            if admin:
                self.routes[("POST", "/ias/admin/register")] = h.ias_register
                self.routes[("POST", "/ias/admin/status")] = h.ias_status
        if pcs is not None:
            self.routes.update({
                ("GET", "/pcs/v1/pckcert"): h.pcs_pckcert,
                ("GET", "/pcs/v1/tcb"): h.pcs_tcb,
                ("GET", "/pcs/v1/crl"): h.pcs_crl,
                ("GET", "/pcs/v1/qe"): h.pcs_qe,
            })
            if admin:
                self.routes.update({
                    ("POST", "/pcs/admin/revoke"): h.pcs_revoke,
                    ("POST", "/pcs/admin/tcb"): h.pcs_tcb_admin,
                    ("POST", "/pcs/admin/provision"): h.pcs_provision,
                })


class ServiceServer:
    """Serve a mock IAS and/or PCS over HTTP on a background thread.

    >>> with ServiceServer(ias=MockIas()) as srv:   # doctest: +SKIP
    ...     HttpIasClient(srv.url).verify_quote(quote_bytes, spid)
    """

    def __init__(self, ias=None, pcs=None, host: str = "127.0.0.1", port: int = 0, admin: bool = True):
        self._httpd = _Server((host, port), ias, pcs, admin)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._httpd.server_address[:2]

    @property
    def url(self) -> str:
        host, port = self.address
        return f"http://{host}:{port}"

    def start(self) -> "ServiceServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


# clients ------------------------------------------------------------------------

_ERRORS = {
    name: getattr(errors, name)
    for name in ("QuoteInvalid", "MalformedRequest", "UnknownPlatform", "UnknownSerial")
}


class _HttpClient:
    def __init__(self, base_url: str, timeout: float = 10.0, api_key: str | None = None):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.api_key = api_key

    def _request(self, method: str, path: str, body: dict | None = None, headers: dict | None = None):
        data = json.dumps(body).encode() if body is not None else None
        req = urllib.request.Request(self.base_url + path, data=data, method=method)
        req.add_header("Content-Type", "application/json")
        for k, v in (headers or {}).items():
            req.add_header(k, v)
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return resp.read(), resp.headers
        except urllib.error.HTTPError as exc:
            try:
                err = json.loads(exc.read())
            except ValueError:
                err = {}
            cls = _ERRORS.get(err.get("error"), errors.MalformedRequest)
            if exc.code >= 500:
                raise errors.Transport(f"{path}: HTTP {exc.code}") from exc
            raise cls(err.get("detail", f"HTTP {exc.code}")) from exc
        except (urllib.error.URLError, OSError) as exc:
            raise errors.Transport(f"{self.base_url}{path}: {exc}") from exc

    def _json(self, method, path, body=None, headers=None) -> dict:
        raw, _ = self._request(method, path, body, headers)
        try:
            return json.loads(raw)
        except ValueError as exc:
            raise errors.Transport(f"{path}: response is not JSON") from exc


class HttpIasClient(_HttpClient):
    def verify_quote(self, quote_bytes: bytes, spid: bytes | None = None) -> AvrResponse:
        body = {"isvEnclaveQuote": _b64(quote_bytes)}
        if spid:
            body["spid"] = bytes(spid).hex()
        raw, headers = self._request("POST", "/ias/v1/report", body)
        try:
            return AvrResponse(raw, _unb64(headers[SIG_HEADER]), _unb64(headers[CERT_HEADER]))
        except (KeyError, errors.MalformedRequest) as exc:
            raise errors.Transport(f"IAS response lacks signature headers: {exc}") from exc

    def register_attestation_key(self, spki_der: bytes) -> None:
        self._json("POST", "/ias/admin/register", {"attestation_key": _b64(spki_der)})

    def set_platform_status(self, spki_der: bytes, status: str) -> None:
        self._json("POST", "/ias/admin/status", {"attestation_key": _b64(spki_der), "status": status})


class HttpPcsClient(_HttpClient):
    def get_pck_cert(self, platform_id: bytes, api_key: str | None = None) -> PckCertResponse:
        key = api_key or self.api_key
        headers = {API_KEY_HEADER: key} if key else {}
        query = urllib.parse.urlencode({"platform_id": bytes(platform_id).hex()})
        obj = self._json("GET", f"/pcs/v1/pckcert?{query}", headers=headers)
        return PckCertResponse(_unb64(obj["pck_cert"]), tuple(_unb64(c) for c in obj["chain"]))

    def _collateral(self, path: str, name: str) -> SignedCollateral:
        obj = self._json("GET", path)
        doc = SignedDocument(_unb64(obj[name]), _unb64(obj["signature"]))
        return SignedCollateral(doc, tuple(_unb64(c) for c in obj["chain"]))

    def get_tcb_info(self) -> SignedCollateral:
        return self._collateral("/pcs/v1/tcb", "tcb_info")

    def get_qe_identity(self) -> SignedCollateral:
        return self._collateral("/pcs/v1/qe", "qe_identity")

    def get_crls(self) -> tuple[bytes, ...]:
        return tuple(_unb64(c) for c in self._json("GET", "/pcs/v1/crl")["crls"])

    def revoke(self, serial: int) -> None:
        self._json("POST", "/pcs/admin/revoke", {"serial": serial})

    def set_tcb_status(self, threshold: bytes, status: str) -> None:
        self._json("POST", "/pcs/admin/tcb", {"cpu_svn": threshold.hex(), "status": status})

    def provision_platform(self, platform_id: bytes, cpu_svn: bytes, attestation_key_der: bytes) -> bytes:
        obj = self._json("POST", "/pcs/admin/provision", {
            "platform_id": platform_id.hex(),
            "cpu_svn": cpu_svn.hex(),
            "attestation_key": _b64(attestation_key_der),
        })
        return _unb64(obj["pck_cert"])
