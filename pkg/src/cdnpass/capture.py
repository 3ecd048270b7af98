"""Outbound-request capture backends.

Two interchangeable backends record the requests a browser session emits
while credentials are submitted:

* ``ProxyCapture`` — a local intercepting proxy. Plain HTTP is parsed on the
  wire; HTTPS is intercepted by terminating TLS with a per-host certificate
  minted from an ephemeral local CA (trusted only by the scan browser
  profile). This is the default backend because exposure analysis needs the
  exact body bytes.
* ``PerfLogCapture`` — parses Chrome performance-log entries fetched over
  WebDriver. No proxy required, but bodies are only available when the
  browser reports ``postData``.
"""

from __future__ import annotations

import datetime
import json
import logging
import socket
import ssl
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional
from urllib.parse import urlsplit

from .errors import InvariantError

logger = logging.getLogger(__name__)

__all__ = ["CapturedRequest", "CaptureBackend", "ProxyCapture", "PerfLogCapture", "CertAuthority"]


@dataclass(frozen=True)
class CapturedRequest:
    """One outbound HTTP request observed during credential submission."""

    url: str
    method: str
    headers: tuple[tuple[str, str], ...]
    body: bytes
    destination_host: str
    tls: bool
    timestamp: float

    def __post_init__(self) -> None:
        host = urlsplit(self.url).hostname or ""
        if host != self.destination_host:
            raise InvariantError(
                f"destination_host {self.destination_host!r} does not match url host {host!r}"
            )

    def header(self, name: str, default: Optional[str] = None) -> Optional[str]:
        lowered = name.lower()
        for key, value in self.headers:
            if key.lower() == lowered:
                return value
        return default

    def to_dict(self) -> dict:
        import base64

        return {
            "url": self.url,
            "method": self.method,
            "headers": [[k, v] for k, v in self.headers],
            "body_b64": base64.b64encode(self.body).decode("ascii"),
            "tls": self.tls,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CapturedRequest":
        import base64

        url = doc["url"]
        return cls(
            url=url,
            method=doc["method"],
            headers=tuple((k, v) for k, v in doc.get("headers", [])),
            body=base64.b64decode(doc.get("body_b64", "")),
            destination_host=urlsplit(url).hostname or "",
            tls=bool(doc.get("tls", url.startswith("https:"))),
            timestamp=float(doc.get("timestamp", 0.0)),
        )


class CaptureBackend:
    """Shared record store + submission-window bookkeeping for backends."""

    def __init__(self) -> None:
        self._records: list[CapturedRequest] = []
        self._lock = threading.Lock()
        self._window_start = 0
        self._last_activity: Optional[float] = None

    def _append(self, record: CapturedRequest) -> None:
        with self._lock:
            self._records.append(record)
            self._last_activity = time.monotonic()

    def begin_window(self) -> None:
        with self._lock:
            self._window_start = len(self._records)
            self._last_activity = None

    def drain_window(self) -> list[CapturedRequest]:
        with self._lock:
            return list(self._records[self._window_start :])

    def last_activity_at(self) -> Optional[float]:
        with self._lock:
            return self._last_activity

    def all_records(self) -> list[CapturedRequest]:
        with self._lock:
            return list(self._records)


# --- certificate authority for HTTPS interception ---

class CertAuthority:
    """Ephemeral CA that mints per-host leaf certificates on demand."""

    def __init__(self, common_name: str = "cdnpass interception CA") -> None:
        from cryptography import x509
        from cryptography.hazmat.primitives import hashes
        from cryptography.hazmat.primitives.asymmetric import ec
        from cryptography.x509.oid import NameOID

        self._x509 = x509
        self._hashes = hashes
        self._key = ec.generate_private_key(ec.SECP256R1())
        self._leaf_key = ec.generate_private_key(ec.SECP256R1())
        subject = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, common_name)])
        now = datetime.datetime.now(datetime.timezone.utc)
        self._cert = (
            x509.CertificateBuilder()
            .subject_name(subject)
            .issuer_name(subject)
            .public_key(self._key.public_key())
            .serial_number(x509.random_serial_number())
            .not_valid_before(now - datetime.timedelta(days=1))
            .not_valid_after(now + datetime.timedelta(days=365))
            .add_extension(x509.BasicConstraints(ca=True, path_length=0), critical=True)
            .sign(self._key, hashes.SHA256())
        )
        self._dir = tempfile.TemporaryDirectory(prefix="cdnpass-ca-")
        self._contexts: dict[str, ssl.SSLContext] = {}
        self._lock = threading.Lock()

    def ca_pem(self) -> bytes:
        from cryptography.hazmat.primitives import serialization

        return self._cert.public_bytes(serialization.Encoding.PEM)

    def write_ca(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_bytes(self.ca_pem())
        return path

    def _mint(self, host: str) -> tuple[bytes, bytes]:
        from cryptography import x509
        from cryptography.hazmat.primitives import serialization
        from cryptography.x509.oid import NameOID

        now = datetime.datetime.now(datetime.timezone.utc)
        builder = (
            x509.CertificateBuilder()
            .subject_name(x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, host[:64])]))
            .issuer_name(self._cert.subject)
            .public_key(self._leaf_key.public_key())
            .serial_number(x509.random_serial_number())
            .not_valid_before(now - datetime.timedelta(days=1))
            .not_valid_after(now + datetime.timedelta(days=90))
            .add_extension(x509.SubjectAlternativeName([x509.DNSName(host)]), critical=False)
        )
        cert = builder.sign(self._key, self._hashes.SHA256())
        cert_pem = cert.public_bytes(serialization.Encoding.PEM) + self.ca_pem()
        key_pem = self._leaf_key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.PKCS8,
            serialization.NoEncryption(),
        )
        return cert_pem, key_pem

    def context_for(self, host: str) -> ssl.SSLContext:
        with self._lock:
            ctx = self._contexts.get(host)
            if ctx is not None:
                return ctx
            cert_pem, key_pem = self._mint(host)
            base = Path(self._dir.name) / host.replace("*", "_")
            cert_path = base.with_suffix(".crt")
            key_path = base.with_suffix(".key")
            cert_path.write_bytes(cert_pem)
            key_path.write_bytes(key_pem)
            ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
            ctx.load_cert_chain(str(cert_path), str(key_path))
            self._contexts[host] = ctx
            return ctx


# --- intercepting proxy ---

_HOP_HEADERS = {"proxy-connection", "connection", "keep-alive", "transfer-encoding", "te", "upgrade"}


def _read_headers(reader) -> list[tuple[str, str]]:
    headers: list[tuple[str, str]] = []
    while True:
        line = reader.readline(65536)
        if not line or line in (b"\r\n", b"\n"):
            break
        text = line.decode("latin-1").rstrip("\r\n")
        if ":" not in text:
            continue
        name, _, value = text.partition(":")
        headers.append((name.strip(), value.strip()))
    return headers


def _read_body(reader, headers: list[tuple[str, str]]) -> bytes:
    lowered = {k.lower(): v for k, v in headers}
    if "chunked" in lowered.get("transfer-encoding", "").lower():
        chunks = []
        while True:
            size_line = reader.readline(1024)
            if not size_line:
                break
            try:
                size = int(size_line.strip().split(b";")[0], 16)
            except ValueError:
                break
            if size == 0:
                reader.readline(1024)  # trailing CRLF
                break
            chunks.append(reader.read(size))
            reader.readline(1024)
        return b"".join(chunks)
    length = lowered.get("content-length")
    if length is None:
        return b""
    try:
        n = int(length)
    except ValueError:
        return b""
    return reader.read(n) if n > 0 else b""


def _forward_request(
    upstream: socket.socket, method: str, path: str, headers: list[tuple[str, str]], body: bytes
) -> None:
    lines = [f"{method} {path} HTTP/1.1"]
    for name, value in headers:
        if name.lower() in _HOP_HEADERS or name.lower() == "content-length":
            continue
        lines.append(f"{name}: {value}")
    lines.append("Connection: close")
    if body or method.upper() in ("POST", "PUT", "PATCH"):
        lines.append(f"Content-Length: {len(body)}")
    payload = ("\r\n".join(lines) + "\r\n\r\n").encode("latin-1") + body
    upstream.sendall(payload)


def _relay_response(upstream: socket.socket, client) -> None:
    while True:
        data = upstream.recv(65536)
        if not data:
            break
        client.sendall(data)


class ProxyCapture(CaptureBackend):
    """Local intercepting proxy recording exact request bytes.

    One instance per browser session; the instance itself is the session tag.
    ``upstream_map`` lets tests route fixture hostnames to local servers.
    """

    def __init__(
        self,
        authority: Optional[CertAuthority] = None,
        upstream_map: Optional[dict[str, tuple[str, int]]] = None,
        upstream_verify: bool = False,
    ) -> None:
        super().__init__()
        self.authority = authority or CertAuthority()
        self._upstream_map = dict(upstream_map or {})
        self._upstream_verify = upstream_verify
        self._server: Optional[socket.socket] = None
        self._thread: Optional[threading.Thread] = None
        self._closing = threading.Event()
        self.port = 0

    # -- lifecycle --

    def start(self) -> "ProxyCapture":
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind(("127.0.0.1", 0))
        server.listen(32)
        self._server = server
        self.port = server.getsockname()[1]
        self._thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._closing.set()
        if self._server is not None:
            try:
                self._server.close()
            except OSError:
                pass
        if self._thread is not None:
            self._thread.join(timeout=2)

    @property
    def proxy_url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def __enter__(self) -> "ProxyCapture":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()

    # -- internals --

    def _accept_loop(self) -> None:
        assert self._server is not None
        while not self._closing.is_set():
            try:
                conn, _ = self._server.accept()
            except OSError:
                break
            threading.Thread(target=self._handle, args=(conn,), daemon=True).start()

    def _upstream_for(self, host: str, port: int) -> tuple[str, int]:
        for key in (f"{host}:{port}", host):
            if key in self._upstream_map:
                return self._upstream_map[key]
        return host, port

    def _connect_upstream_tls(self, host: str, port: int) -> ssl.SSLSocket:
        real_host, real_port = self._upstream_for(host, port)
        raw = socket.create_connection((real_host, real_port), timeout=15)
        ctx = ssl.create_default_context()
        if not self._upstream_verify:
            ctx.check_hostname = False
            ctx.verify_mode = ssl.CERT_NONE
        return ctx.wrap_socket(raw, server_hostname=host)

    def _handle(self, conn: socket.socket) -> None:
        conn.settimeout(30)
        try:
            reader = conn.makefile("rb")
            request_line = reader.readline(65536)
            if not request_line:
                return
            try:
                method, target, _version = request_line.decode("latin-1").split(None, 2)
            except ValueError:
                return
            if method.upper() == "CONNECT":
                self._handle_connect(conn, reader, target)
            else:
                self._handle_plain(conn, reader, method, target)
        except (OSError, ssl.SSLError) as exc:
            logger.debug("proxy connection error: %s", exc)
        finally:
            try:
                conn.close()
            except OSError:
                pass

    def _handle_plain(self, conn: socket.socket, reader, method: str, target: str) -> None:
        headers = _read_headers(reader)
        body = _read_body(reader, headers)
        parts = urlsplit(target)
        host = parts.hostname or ""
        port = parts.port or 80
        path = parts.path or "/"
        if parts.query:
            path += "?" + parts.query
        self._append(
            CapturedRequest(
                url=target,
                method=method,
                headers=tuple(headers),
                body=body,
                destination_host=host,
                tls=False,
                timestamp=time.time(),
            )
        )
        real_host, real_port = self._upstream_for(host, port)
        with socket.create_connection((real_host, real_port), timeout=15) as upstream:
            _forward_request(upstream, method, path, headers, body)
            _relay_response(upstream, conn)

    def _handle_connect(self, conn: socket.socket, reader, target: str) -> None:
        _read_headers(reader)  # consume CONNECT headers
        host, _, port_s = target.partition(":")
        port = int(port_s or "443")
        conn.sendall(b"HTTP/1.1 200 Connection Established\r\n\r\n")
        ctx = self.authority.context_for(host)
        try:
            tls_conn = ctx.wrap_socket(conn, server_side=True)
        except ssl.SSLError as exc:
            logger.debug("TLS interception handshake with client failed: %s", exc)
            return
        tls_reader = tls_conn.makefile("rb")
        while True:
            request_line = tls_reader.readline(65536)
            if not request_line or request_line in (b"\r\n", b"\n"):
                return
            try:
                method, path, _version = request_line.decode("latin-1").split(None, 2)
            except ValueError:
                return
            headers = _read_headers(tls_reader)
            body = _read_body(tls_reader, headers)
            netloc = host if port == 443 else f"{host}:{port}"
            url = f"https://{netloc}{path}"
            self._append(
                CapturedRequest(
                    url=url,
                    method=method,
                    headers=tuple(headers),
                    body=body,
                    destination_host=host,
                    tls=True,
                    timestamp=time.time(),
                )
            )
            upstream = self._connect_upstream_tls(host, port)
            try:
                _forward_request(upstream, method, path, headers, body)
                _relay_response(upstream, tls_conn)
            finally:
                upstream.close()
            return  # interception closes the tunnel after one exchange


# --- performance-log backend ---

class PerfLogCapture(CaptureBackend):
    """Capture from Chrome performance-log entries pulled over WebDriver.

    Body bytes are only as good as the browser reports (``postData``); use
    the proxy backend when exact bytes matter.
    """

    def __init__(self, log_source: Callable[[], list[dict]]) -> None:
        super().__init__()
        self._log_source = log_source

    def poll(self) -> int:
        """Fetch pending log entries; returns the number of requests added."""
        added = 0
        for entry in self._log_source():
            record = self._parse_entry(entry)
            if record is not None:
                self._append(record)
                added += 1
        return added

    @staticmethod
    def _parse_entry(entry: dict) -> Optional[CapturedRequest]:
        message = entry.get("message")
        if isinstance(message, str):
            try:
                message = json.loads(message)
            except json.JSONDecodeError:
                return None
        if not isinstance(message, dict):
            return None
        inner = message.get("message", message)
        if inner.get("method") != "Network.requestWillBeSent":
            return None
        request = inner.get("params", {}).get("request", {})
        url = request.get("url")
        if not isinstance(url, str) or not url.startswith(("http://", "https://")):
            return None
        host = urlsplit(url).hostname or ""
        post_data = request.get("postData") or ""
        headers = request.get("headers") or {}
        return CapturedRequest(
            url=url,
            method=request.get("method", "GET"),
            headers=tuple((k, str(v)) for k, v in headers.items()),
            body=post_data.encode("utf-8"),
            destination_host=host,
            tls=url.startswith("https://"),
            timestamp=float(entry.get("timestamp", 0)) / 1000.0,
        )
