"""Decide whether a captured login submission exposes the password.

The password is searched for in every encoding a CDN-side observer could
trivially reverse: raw bytes, percent-encoding, the three Base64 variants,
and JSON string escaping. Absence of all of them is treated as client-side
encryption (an upper bound: hashing and custom obfuscation look the same
from this vantage point).
"""

from __future__ import annotations

import base64
import binascii
import enum
import json
import quopri
from dataclasses import dataclass
from typing import TYPE_CHECKING, Mapping, Optional
from urllib.parse import quote, quote_plus, unquote_plus, urlsplit

from .capture import CapturedRequest
from .detector import Credentials
from .errors import MissingAttribution

if TYPE_CHECKING:
    from .attribution import CdnAttribution
    from .driver import SessionOutcome

__all__ = [
    "ENCODINGS",
    "ExposureEvidence",
    "Verdict",
    "SiteVerdict",
    "find_password",
    "classify_site",
    "verify_evidence",
    "exposure_bucket",
]

# Precedence order; the first matching encoding wins.
ENCODINGS = (
    "plaintext",
    "url-encoded",
    "base64-std",
    "base64-urlsafe",
    "base64-nopad",
    "json-embedded",
)

# Two-way reporting split: percent- and JSON-escaped forms are still readable
# passwords on the wire, so they fold into the plaintext bucket.
_PLAINTEXT_BUCKET = frozenset({"plaintext", "url-encoded", "json-embedded"})


def exposure_bucket(encoding: str) -> str:
    return "plaintext" if encoding in _PLAINTEXT_BUCKET else "base64"


@dataclass(frozen=True)
class ExposureEvidence:
    request_index: int
    encoding: str
    byte_offset: int
    matched_field: Optional[str] = None
    location: str = "body"  # "body" | "url"


class Verdict(str, enum.Enum):
    PASSWORD_EXPOSED = "password_exposed"
    PASSWORD_ENCRYPTED = "password_encrypted"
    LOGIN_NOT_FOUND = "login_not_found"
    NO_HTTPS = "no_https"
    NOT_CDN_TERMINATED = "not_cdn_terminated"


@dataclass(frozen=True)
class SiteVerdict:
    kind: Verdict
    evidence: Optional[ExposureEvidence] = None
    attributed_provider: Optional[str] = None


# --- candidate patterns ---

def _candidate_patterns(password: str) -> list[tuple[str, bytes]]:
    """Byte patterns to search for, tagged by encoding, in precedence order."""
    pw = password.encode("utf-8")
    candidates: list[tuple[str, bytes]] = [("plaintext", pw)]
    seen = {pw}

    def add(encoding: str, pattern: bytes) -> None:
        if pattern and pattern not in seen:
            candidates.append((encoding, pattern))
            seen.add(pattern)

    add("url-encoded", quote(password, safe="").encode("ascii"))
    add("url-encoded", quote_plus(password).encode("ascii"))
    add("base64-std", base64.b64encode(pw))
    add("base64-urlsafe", base64.urlsafe_b64encode(pw))
    add("base64-nopad", base64.b64encode(pw).rstrip(b"="))
    add("base64-nopad", base64.urlsafe_b64encode(pw).rstrip(b"="))
    add("json-embedded", json.dumps(password)[1:-1].encode("utf-8"))
    return candidates


def _decode_candidate(encoding: str, matched: bytes) -> Optional[str]:
    """Reverse one encoding; None when the bytes do not decode."""
    try:
        if encoding == "plaintext":
            return matched.decode("utf-8")
        if encoding == "url-encoded":
            return unquote_plus(matched.decode("ascii"))
        if encoding == "base64-std":
            return base64.b64decode(matched, validate=True).decode("utf-8")
        if encoding == "base64-urlsafe":
            return base64.urlsafe_b64decode(matched).decode("utf-8")
        if encoding == "base64-nopad":
            padded = matched + b"=" * (-len(matched) % 4)
            translated = padded.replace(b"-", b"+").replace(b"_", b"/")
            return base64.b64decode(translated).decode("utf-8")
        if encoding == "json-embedded":
            return json.loads('"' + matched.decode("utf-8") + '"')
    except (ValueError, UnicodeDecodeError, binascii.Error):
        return None
    return None


def _scan(data: bytes, candidates: list[tuple[str, bytes]]) -> Optional[tuple[str, int, int]]:
    """First (encoding, offset, length) hit by encoding precedence."""
    for encoding, pattern in candidates:
        offset = data.find(pattern)
        if offset != -1:
            return encoding, offset, len(pattern)
    return None


# --- body structure helpers ---

def _form_field_at(body: bytes, offset: int) -> Optional[str]:
    """Name of the k=v pair covering a byte offset in a form-encoded body."""
    pos = 0
    for segment in body.split(b"&"):
        end = pos + len(segment)
        if pos <= offset < end:
            name, sep, _ = segment.partition(b"=")
            if sep:
                try:
                    return unquote_plus(name.decode("latin-1"))
                except ValueError:
                    return None
            return None
        pos = end + 1
    return None


def _multipart_boundary(content_type: str) -> Optional[bytes]:
    for part in content_type.split(";"):
        part = part.strip()
        if part.lower().startswith("boundary="):
            boundary = part[len("boundary=") :].strip('"')
            return boundary.encode("latin-1")
    return None


def _parse_multipart(body: bytes, boundary: bytes) -> list[tuple[Optional[str], bytes]]:
    """(field name, decoded payload) per part, honoring transfer encodings."""
    delimiter = b"--" + boundary
    parts: list[tuple[Optional[str], bytes]] = []
    for chunk in body.split(delimiter)[1:]:
        if chunk.startswith(b"--"):
            break
        chunk = chunk.lstrip(b"\r\n")
        head, sep, payload = chunk.partition(b"\r\n\r\n")
        if not sep:
            continue
        if payload.endswith(b"\r\n"):
            payload = payload[:-2]
        name: Optional[str] = None
        transfer = ""
        for line in head.split(b"\r\n"):
            text = line.decode("latin-1", "replace")
            lowered = text.lower()
            if lowered.startswith("content-disposition:"):
                for param in text.split(";"):
                    param = param.strip()
                    if param.lower().startswith("name="):
                        name = param[5:].strip('"')
            elif lowered.startswith("content-transfer-encoding:"):
                transfer = text.partition(":")[2].strip().lower()
        if transfer == "base64":
            try:
                payload = base64.b64decode(payload, validate=False)
            except (ValueError, binascii.Error):
                pass
        elif transfer == "quoted-printable":
            payload = quopri.decodestring(payload)
        parts.append((name, payload))
    return parts


def find_password(request: CapturedRequest, creds: Credentials) -> Optional[ExposureEvidence]:
    """Locate the submitted password in a captured request, in any supported
    encoding; None models client-side encryption of this request."""
    candidates = _candidate_patterns(creds.password)
    content_type = request.header("Content-Type", "") or ""

    if request.body:
        if content_type.lower().startswith("multipart/form-data"):
            boundary = _multipart_boundary(content_type)
            if boundary:
                for name, payload in _parse_multipart(request.body, boundary):
                    hit = _scan(payload, candidates)
                    if hit:
                        encoding, offset, _ = hit
                        return ExposureEvidence(
                            request_index=0,
                            encoding=encoding,
                            byte_offset=offset,
                            matched_field=name,
                            location="body",
                        )
        hit = _scan(request.body, candidates)
        if hit:
            encoding, offset, _ = hit
            field = None
            if content_type.lower().startswith("application/x-www-form-urlencoded") or (
                not content_type and b"=" in request.body
            ):
                field = _form_field_at(request.body, offset)
            return ExposureEvidence(
                request_index=0,
                encoding=encoding,
                byte_offset=offset,
                matched_field=field,
                location="body",
            )

    query = urlsplit(request.url).query
    if query:
        qbytes = query.encode("utf-8", "surrogateescape")
        hit = _scan(qbytes, candidates)
        if hit:
            encoding, offset, _ = hit
            return ExposureEvidence(
                request_index=0,
                encoding=encoding,
                byte_offset=offset,
                matched_field=_form_field_at(qbytes, offset),
                location="url",
            )
    return None


def verify_evidence(request: CapturedRequest, creds: Credentials, evidence: ExposureEvidence) -> bool:
    """Mechanical soundness check: the indicated bytes decode to the password."""
    expected = {p for e, p in _candidate_patterns(creds.password) if e == evidence.encoding}
    if evidence.location == "url":
        region = urlsplit(request.url).query.encode("utf-8", "surrogateescape")
        regions = [region]
    else:
        regions = [request.body]
        content_type = request.header("Content-Type", "") or ""
        if content_type.lower().startswith("multipart/form-data"):
            boundary = _multipart_boundary(content_type)
            if boundary:
                regions = [
                    payload
                    for name, payload in _parse_multipart(request.body, boundary)
                    if name == evidence.matched_field
                ] or regions
    for region in regions:
        for pat in expected:
            end = evidence.byte_offset + len(pat)
            if region[evidence.byte_offset : end] == pat:
                return _decode_candidate(evidence.encoding, pat) == creds.password
    return False


def classify_site(
    outcome: "SessionOutcome",
    attributions: Mapping[str, "CdnAttribution"],
    https: bool,
    creds: Optional[Credentials] = None,
) -> SiteVerdict:
    """Fold a session's captured requests into one site-level verdict."""
    if not https:
        return SiteVerdict(kind=Verdict.NO_HTTPS)
    if not outcome.submitted:
        return SiteVerdict(kind=Verdict.LOGIN_NOT_FOUND)
    creds = creds or outcome.credentials
    if creds is None:
        raise ValueError("credentials required to classify a submitted session")
    for request in outcome.requests:
        if request.destination_host not in attributions:
            raise MissingAttribution(f"no CDN attribution for host {request.destination_host!r}")

    password_hits: list[tuple[int, ExposureEvidence, str]] = []
    for index, request in enumerate(outcome.requests):
        evidence = find_password(request, creds)
        if evidence is not None:
            password_hits.append(
                (index, ExposureEvidence(
                    request_index=index,
                    encoding=evidence.encoding,
                    byte_offset=evidence.byte_offset,
                    matched_field=evidence.matched_field,
                    location=evidence.location,
                ), request.destination_host)
            )

    for index, evidence, host in password_hits:
        provider = attributions[host].provider
        if provider:
            return SiteVerdict(
                kind=Verdict.PASSWORD_EXPOSED,
                evidence=evidence,
                attributed_provider=provider,
            )
    if password_hits:
        return SiteVerdict(kind=Verdict.NOT_CDN_TERMINATED)
    return SiteVerdict(kind=Verdict.PASSWORD_ENCRYPTED)
