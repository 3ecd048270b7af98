"""Minimal DNS client: wire codec plus pluggable lookup backends.

Only the record types CDN attribution needs (A, AAAA, CNAME, NS) are
implemented. Three backends share one ``query(name, rtype)`` interface:

* ``UdpResolver`` — speaks the DNS wire format to a configured UDP endpoint.
* ``SystemResolver`` — ``UdpResolver`` pointed at the system's nameserver.
* ``RecordedResolver`` — replays a recorded JSON lookup table; the fixture
  format is a map ``"<name> <TYPE>" -> [records] | {"error": ...}``.

The codec is symmetric (queries and responses both ways) so tests can run a
fixture DNS server against the same implementation.
"""

from __future__ import annotations

import json
import secrets
import socket
import struct
from pathlib import Path
from typing import Mapping, Protocol

from .errors import NxDomain, ResolveError, ResolveTimeout

__all__ = [
    "RECORD_TYPES",
    "Resolver",
    "UdpResolver",
    "SystemResolver",
    "RecordedResolver",
    "encode_query",
    "parse_query",
    "parse_response",
    "build_response",
]

RECORD_TYPES = {"A": 1, "NS": 2, "CNAME": 5, "AAAA": 28}
_TYPE_NAMES = {v: k for k, v in RECORD_TYPES.items()}

_FLAG_QR = 0x8000
_FLAG_RD = 0x0100
_FLAG_RA = 0x0080
_RCODE_NXDOMAIN = 3


class Resolver(Protocol):
    def query(self, name: str, rtype: str) -> list[str]:
        """Record strings for (name, rtype); [] when the name exists without
        records of that type. Raises NxDomain / ResolveTimeout."""
        ...


# --- wire codec ---

def _encode_name(name: str) -> bytes:
    out = bytearray()
    for label in name.rstrip(".").split("."):
        raw = label.encode("idna") if not label.isascii() else label.encode("ascii")
        if not 0 < len(raw) < 64:
            raise ResolveError(f"invalid DNS label in {name!r}")
        out.append(len(raw))
        out.extend(raw)
    out.append(0)
    return bytes(out)


def _parse_name(message: bytes, offset: int) -> tuple[str, int]:
    labels: list[str] = []
    jumps = 0
    end = -1
    while True:
        if offset >= len(message):
            raise ResolveError("truncated DNS name")
        length = message[offset]
        if length & 0xC0 == 0xC0:
            if offset + 1 >= len(message):
                raise ResolveError("truncated DNS compression pointer")
            pointer = ((length & 0x3F) << 8) | message[offset + 1]
            if end < 0:
                end = offset + 2
            offset = pointer
            jumps += 1
            if jumps > 32:
                raise ResolveError("DNS compression pointer loop")
            continue
        offset += 1
        if length == 0:
            break
        labels.append(message[offset : offset + length].decode("ascii", "replace"))
        offset += length
    return ".".join(labels), (end if end >= 0 else offset)


def encode_query(name: str, rtype: str, qid: int | None = None) -> tuple[int, bytes]:
    if rtype not in RECORD_TYPES:
        raise ResolveError(f"unsupported record type {rtype!r}")
    if qid is None:
        qid = secrets.randbelow(65536)
    header = struct.pack(">HHHHHH", qid, _FLAG_RD, 1, 0, 0, 0)
    question = _encode_name(name) + struct.pack(">HH", RECORD_TYPES[rtype], 1)
    return qid, header + question


def parse_query(message: bytes) -> tuple[int, str, str]:
    """(qid, name, rtype) of a query message; used by fixture servers."""
    if len(message) < 12:
        raise ResolveError("truncated DNS query")
    qid, _flags, qdcount, _an, _ns, _ar = struct.unpack(">HHHHHH", message[:12])
    if qdcount != 1:
        raise ResolveError("expected exactly one question")
    name, offset = _parse_name(message, 12)
    qtype, _qclass = struct.unpack(">HH", message[offset : offset + 4])
    return qid, name, _TYPE_NAMES.get(qtype, str(qtype))


def _encode_rdata(rtype: str, value: str) -> bytes:
    if rtype == "A":
        return socket.inet_aton(value)
    if rtype == "AAAA":
        return socket.inet_pton(socket.AF_INET6, value)
    return _encode_name(value)


def _parse_rdata(message: bytes, rtype: int, start: int, length: int) -> str | None:
    if rtype == RECORD_TYPES["A"] and length == 4:
        return socket.inet_ntoa(message[start : start + 4])
    if rtype == RECORD_TYPES["AAAA"] and length == 16:
        return socket.inet_ntop(socket.AF_INET6, message[start : start + 16])
    if rtype in (RECORD_TYPES["CNAME"], RECORD_TYPES["NS"]):
        name, _ = _parse_name(message, start)
        return name
    return None


def build_response(
    qid: int,
    name: str,
    rtype: str,
    answers: list[tuple[str, str, str]],
    rcode: int = 0,
) -> bytes:
    """Compose a response message; answers are (owner, rtype, value) triples."""
    flags = _FLAG_QR | _FLAG_RD | _FLAG_RA | (rcode & 0xF)
    header = struct.pack(">HHHHHH", qid, flags, 1, len(answers), 0, 0)
    body = _encode_name(name) + struct.pack(">HH", RECORD_TYPES[rtype], 1)
    for owner, atype, value in answers:
        rdata = _encode_rdata(atype, value)
        body += (
            _encode_name(owner)
            + struct.pack(">HHIH", RECORD_TYPES[atype], 1, 60, len(rdata))
            + rdata
        )
    return header + body


def parse_response(message: bytes, wanted_qid: int) -> tuple[int, list[tuple[str, str, str]]]:
    """(rcode, answers) where answers are (owner, rtype, value) triples."""
    if len(message) < 12:
        raise ResolveError("truncated DNS response")
    qid, flags, qdcount, ancount, _ns, _ar = struct.unpack(">HHHHHH", message[:12])
    if qid != wanted_qid:
        raise ResolveError("DNS response id mismatch")
    if not flags & _FLAG_QR:
        raise ResolveError("DNS response flag not set")
    rcode = flags & 0xF
    offset = 12
    for _ in range(qdcount):
        _, offset = _parse_name(message, offset)
        offset += 4
    answers: list[tuple[str, str, str]] = []
    for _ in range(ancount):
        owner, offset = _parse_name(message, offset)
        rtype, _rclass, _ttl, rdlength = struct.unpack(">HHIH", message[offset : offset + 10])
        offset += 10
        value = _parse_rdata(message, rtype, offset, rdlength)
        offset += rdlength
        if value is not None:
            answers.append((owner, _TYPE_NAMES.get(rtype, str(rtype)), value))
    return rcode, answers


# --- backends ---

class UdpResolver:
    """DNS over UDP against one configured endpoint."""

    def __init__(self, server: str, port: int = 53, timeout: float = 3.0, retries: int = 2) -> None:
        self.server = server
        self.port = port
        self.timeout = timeout
        self.retries = retries

    def query(self, name: str, rtype: str) -> list[str]:
        qid, message = encode_query(name, rtype)
        last_exc: Exception | None = None
        for _ in range(max(1, self.retries)):
            sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
            try:
                sock.settimeout(self.timeout)
                sock.sendto(message, (self.server, self.port))
                data, _ = sock.recvfrom(4096)
            except socket.timeout as exc:
                last_exc = exc
                continue
            except OSError as exc:
                raise ResolveError(f"DNS query to {self.server} failed: {exc}") from exc
            finally:
                sock.close()
            rcode, answers = parse_response(data, qid)
            if rcode == _RCODE_NXDOMAIN:
                raise NxDomain(f"{name} does not exist")
            if rcode != 0:
                raise ResolveError(f"DNS server returned rcode {rcode} for {name}")
            return [value for _owner, atype, value in answers if atype == rtype]
        raise ResolveTimeout(f"no DNS answer for {name} from {self.server}") from last_exc


class SystemResolver(UdpResolver):
    """UdpResolver pointed at the first nameserver in /etc/resolv.conf."""

    def __init__(self, resolv_conf: str = "/etc/resolv.conf", timeout: float = 3.0) -> None:
        server = None
        try:
            for line in Path(resolv_conf).read_text("utf-8").splitlines():
                parts = line.split()
                if len(parts) >= 2 and parts[0] == "nameserver":
                    server = parts[1]
                    break
        except OSError:
            pass
        if server is None:
            raise ResolveError(f"no nameserver found in {resolv_conf}")
        super().__init__(server, timeout=timeout)


class RecordedResolver:
    """Replays recorded lookups; the deterministic backend for tests/replay.

    Table keys are ``"<name> <TYPE>"``; values are record lists, or
    ``{"error": "nxdomain" | "timeout"}``. Unknown keys answer empty
    (NOERROR, no data).
    """

    def __init__(self, table: Mapping[str, object]) -> None:
        self._table = {k.lower(): v for k, v in table.items()}

    @classmethod
    def from_json_file(cls, path: str | Path) -> "RecordedResolver":
        with open(path, "rb") as fh:
            return cls(json.load(fh))

    def query(self, name: str, rtype: str) -> list[str]:
        entry = self._table.get(f"{name.rstrip('.').lower()} {rtype.lower()}")
        if entry is None:
            return []
        if isinstance(entry, dict):
            error = entry.get("error")
            if error == "nxdomain":
                raise NxDomain(f"{name} does not exist (recorded)")
            if error == "timeout":
                raise ResolveTimeout(f"recorded timeout for {name}")
            raise ResolveError(f"recorded error for {name}: {error}")
        return [str(v) for v in entry]  # type: ignore[union-attr]
