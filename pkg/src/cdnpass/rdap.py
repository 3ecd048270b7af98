"""RDAP ownership lookups for IP addresses (RFC 7482 JSON over HTTP).

The live client walks the IANA bootstrap registry to the authoritative
server; ``RecordedRdap`` replays recorded responses for deterministic runs.
Both expose ``lookup_org`` (may do I/O) and ``cached_org`` (never does).
"""

from __future__ import annotations

import ipaddress
import json
import logging
from typing import Any, Mapping, Optional

from .cache import LookupCache
from .errors import NoOrgFound, RdapUnavailable

logger = logging.getLogger(__name__)

BOOTSTRAP_URLS = {
    4: "https://data.iana.org/rdap/ipv4.json",
    6: "https://data.iana.org/rdap/ipv6.json",
}

__all__ = ["extract_org", "RdapClient", "RecordedRdap"]


def _require_global(ip: str) -> ipaddress.IPv4Address | ipaddress.IPv6Address:
    addr = ipaddress.ip_address(ip)
    if not addr.is_global:
        raise ValueError(f"{ip} is not a global unicast address")
    return addr


def _vcard_fn(entity: Mapping[str, Any]) -> Optional[str]:
    vcard = entity.get("vcardArray")
    if not (isinstance(vcard, list) and len(vcard) == 2 and isinstance(vcard[1], list)):
        return None
    for item in vcard[1]:
        if isinstance(item, list) and len(item) >= 4 and item[0] == "fn" and item[3]:
            return str(item[3])
    return None


def extract_org(doc: Mapping[str, Any]) -> Optional[str]:
    """Registrant/owner organization of an RDAP IP response.

    Preference: an entity with the registrant role, then any entity with a
    vCard name, then the network's own name (ARIN-style handles such as
    CLOUDFLARENET live there).
    """
    found: list[tuple[int, str]] = []

    def walk(entities: Any) -> None:
        if not isinstance(entities, list):
            return
        for entity in entities:
            if not isinstance(entity, dict):
                continue
            fn = _vcard_fn(entity)
            if fn:
                roles = entity.get("roles") or []
                priority = 0 if "registrant" in roles else 1
                found.append((priority, fn))
            walk(entity.get("entities"))

    walk(doc.get("entities"))
    if found:
        found.sort(key=lambda item: item[0])
        return found[0][1]
    name = doc.get("name")
    if isinstance(name, str) and name:
        return name
    return None


class RdapClient:
    """Live RDAP client: bootstrap registry -> authoritative server."""

    def __init__(
        self,
        session: Any = None,
        cache: Optional[LookupCache] = None,
        timeout: float = 10.0,
        bootstrap_urls: Optional[Mapping[int, str]] = None,
    ) -> None:
        if session is None:
            import requests

            session = requests.Session()
        self._session = session
        self._cache = cache or LookupCache()
        self._timeout = timeout
        self._bootstrap_urls = dict(bootstrap_urls or BOOTSTRAP_URLS)
        self._services: dict[int, list[tuple[Any, str]]] = {}

    def _get_json(self, url: str) -> Any:
        try:
            response = self._session.get(
                url, timeout=self._timeout, headers={"Accept": "application/rdap+json, application/json"}
            )
        except Exception as exc:  # requests.RequestException and friends
            raise RdapUnavailable(f"RDAP request to {url} failed: {exc}") from exc
        if response.status_code != 200:
            raise RdapUnavailable(f"RDAP request to {url} returned {response.status_code}")
        try:
            return response.json()
        except ValueError as exc:
            raise RdapUnavailable(f"RDAP response from {url} is not JSON") from exc

    def _service_for(self, addr: ipaddress.IPv4Address | ipaddress.IPv6Address) -> str:
        version = addr.version
        if version not in self._services:
            doc = self._get_json(self._bootstrap_urls[version])
            services = []
            for prefixes, urls in doc.get("services", []):
                networks = [ipaddress.ip_network(p) for p in prefixes]
                if urls:
                    services.append((networks, urls[0]))
            self._services[version] = services
        for networks, url in self._services[version]:
            if any(addr in network for network in networks):
                return url
        raise RdapUnavailable(f"no RDAP service covers {addr}")

    def lookup_org(self, ip: str) -> str:
        addr = _require_global(ip)
        cached = self._cache.get("rdap-org", ip)
        if cached is not None:
            return str(cached)
        base = self._service_for(addr).rstrip("/")
        doc = self._get_json(f"{base}/ip/{ip}")
        org = extract_org(doc)
        if not org:
            raise NoOrgFound(f"RDAP response for {ip} carries no organization")
        self._cache.put("rdap-org", ip, org)
        return org

    def cached_org(self, ip: str) -> Optional[str]:
        value = self._cache.get("rdap-org", ip)
        return str(value) if value is not None else None


class RecordedRdap:
    """Replays recorded RDAP responses: map ip -> response document (or
    ``{"error": "unavailable"}``)."""

    def __init__(self, table: Mapping[str, Any]) -> None:
        self._table = dict(table)

    @classmethod
    def from_json_file(cls, path: str) -> "RecordedRdap":
        with open(path, "rb") as fh:
            return cls(json.load(fh))

    def lookup_org(self, ip: str) -> str:
        _require_global(ip)
        doc = self._table.get(ip)
        if doc is None:
            raise RdapUnavailable(f"no recorded RDAP response for {ip}")
        if isinstance(doc, dict) and doc.get("error"):
            raise RdapUnavailable(f"recorded RDAP error for {ip}: {doc['error']}")
        org = extract_org(doc)
        if not org:
            raise NoOrgFound(f"recorded RDAP response for {ip} carries no organization")
        return org

    def cached_org(self, ip: str) -> Optional[str]:
        doc = self._table.get(ip)
        if not isinstance(doc, dict) or doc.get("error"):
            return None
        return extract_org(doc)
