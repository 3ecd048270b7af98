"""CDN attribution: CNAME-chain fingerprinting with RDAP ownership fallback.

A host is attributed to one of nine CDN providers when either a link of its
CNAME chain carries a provider-owned suffix, or the RDAP registrant of a
terminal IP matches a provider pattern. CNAME evidence outranks RDAP because
shared cloud IP ranges are ambiguous; anything unmatched is deliberately
*not* a CDN (the whole pipeline underestimates exposure).
"""

from __future__ import annotations

import json
import logging
import re
import threading
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Sequence

from .cache import LookupCache
from .errors import ChainTooLong, NxDomain, RdapError, ResolveError, ResolveTimeout, SchemaError
from .rdap import RdapClient, RecordedRdap
from .resolver import Resolver

logger = logging.getLogger(__name__)

__all__ = [
    "PROVIDERS",
    "ProviderFingerprint",
    "DnsChain",
    "CdnAttribution",
    "load_fingerprints",
    "default_fingerprints",
    "resolve_chain",
    "attribute",
    "dns_provider",
    "Attributor",
]

PROVIDERS = frozenset(
    {
        "Cloudflare",
        "Akamai",
        "Fastly",
        "Highwinds",
        "Edgecast",
        "Incapsula",
        "Quantil",
        "CDNetworks",
        "Limelight",
    }
)

_SUFFIX_RE = re.compile(r"^[a-z0-9]([a-z0-9.-]*[a-z0-9])?$")

MAX_CHAIN_LINKS = 10
DEFAULT_INFLIGHT_LIMIT = 16


@dataclass(frozen=True)
class ProviderFingerprint:
    provider: str
    cname_suffixes: frozenset[str]
    rdap_org_patterns: frozenset[str]
    ns_suffixes: frozenset[str]

    def __post_init__(self) -> None:
        if self.provider not in PROVIDERS:
            raise SchemaError(f"unknown CDN provider {self.provider!r}")
        for suffix in list(self.cname_suffixes) + list(self.ns_suffixes):
            if not _SUFFIX_RE.match(suffix):
                raise SchemaError(f"{self.provider}: invalid DNS suffix {suffix!r}")


@dataclass(frozen=True)
class DnsChain:
    queried_host: str
    cname_links: tuple[str, ...] = ()
    terminal_ips: tuple[str, ...] = ()
    nameservers: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "queried_host": self.queried_host,
            "cname_links": list(self.cname_links),
            "terminal_ips": list(self.terminal_ips),
            "nameservers": list(self.nameservers),
        }


@dataclass(frozen=True)
class CdnAttribution:
    host: str
    provider: Optional[str]
    basis: str  # "cname" | "rdap" | "nameserver" | "none"
    chain: DnsChain
    cached: bool = False
    diagnostic: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "host": self.host,
            "provider": self.provider,
            "basis": self.basis,
            "chain": self.chain.to_dict(),
            "cached": self.cached,
            "diagnostic": self.diagnostic,
        }


def _fingerprints_from_doc(doc: object) -> tuple[ProviderFingerprint, ...]:
    if not isinstance(doc, list):
        raise SchemaError("fingerprint file must be a JSON array")
    fingerprints = []
    for entry in doc:
        if not isinstance(entry, dict):
            raise SchemaError("each fingerprint must be an object")
        try:
            fingerprints.append(
                ProviderFingerprint(
                    provider=entry["provider"],
                    cname_suffixes=frozenset(s.lower().strip(".") for s in entry["cname_suffixes"]),
                    rdap_org_patterns=frozenset(s.lower() for s in entry["rdap_org_patterns"]),
                    ns_suffixes=frozenset(s.lower().strip(".") for s in entry["ns_suffixes"]),
                )
            )
        except KeyError as exc:
            raise SchemaError(f"fingerprint entry missing key {exc}") from exc
    return tuple(fingerprints)


def load_fingerprints(path: str) -> tuple[ProviderFingerprint, ...]:
    with open(path, "rb") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"fingerprint file is not valid JSON: {exc}") from exc
    return _fingerprints_from_doc(doc)


def default_fingerprints() -> tuple[ProviderFingerprint, ...]:
    doc = json.loads(resources.files("cdnpass.data").joinpath("fingerprints.json").read_text("utf-8"))
    return _fingerprints_from_doc(doc)


def _check_coverage(fingerprints: Sequence[ProviderFingerprint]) -> None:
    covered = {fp.provider for fp in fingerprints}
    missing = PROVIDERS - covered
    if missing:
        raise SchemaError(f"fingerprints do not cover providers: {sorted(missing)}")


def _suffix_match(name: str, suffix: str) -> bool:
    name = name.lower().rstrip(".")
    return name == suffix or name.endswith("." + suffix)


def resolve_chain(host: str, resolver: Resolver) -> DnsChain:
    """Follow CNAMEs (max 10 links), collect terminal A/AAAA records and the
    NS records of the nearest enclosing zone."""
    links: list[str] = []
    seen = {host.lower().rstrip(".")}
    current = host
    while True:
        cnames = resolver.query(current, "CNAME")
        if not cnames:
            break
        target = cnames[0].rstrip(".")
        links.append(target)
        if len(links) > MAX_CHAIN_LINKS or target.lower() in seen:
            raise ChainTooLong(f"CNAME chain from {host} exceeds {MAX_CHAIN_LINKS} links")
        seen.add(target.lower())
        current = target

    ips = list(resolver.query(current, "A"))
    try:
        ips.extend(resolver.query(current, "AAAA"))
    except NxDomain:
        pass
    if not ips:
        raise NxDomain(f"{current} has no address records")

    nameservers: tuple[str, ...] = ()
    labels = host.rstrip(".").split(".")
    for i in range(len(labels) - 1):
        zone = ".".join(labels[i:])
        try:
            ns = resolver.query(zone, "NS")
        except (NxDomain, ResolveError):
            continue
        if ns:
            nameservers = tuple(n.rstrip(".") for n in ns)
            break
    return DnsChain(
        queried_host=host,
        cname_links=tuple(links),
        terminal_ips=tuple(ips),
        nameservers=nameservers,
    )


def _match_cname(chain: DnsChain, fingerprints: Sequence[ProviderFingerprint]) -> Optional[str]:
    for link in chain.cname_links:
        for fp in fingerprints:
            if any(_suffix_match(link, suffix) for suffix in fp.cname_suffixes):
                return fp.provider
    return None


def _match_org(org: str, fingerprints: Sequence[ProviderFingerprint]) -> Optional[str]:
    lowered = org.lower()
    for fp in fingerprints:
        if any(pattern in lowered for pattern in fp.rdap_org_patterns):
            return fp.provider
    return None


def attribute(
    host: str,
    fingerprints: Sequence[ProviderFingerprint],
    *,
    resolver: Resolver,
    rdap: Optional[RdapClient | RecordedRdap] = None,
    cache: Optional[LookupCache] = None,
) -> CdnAttribution:
    """Attribute a hostname to a CDN provider, or to none of them.

    CNAME evidence wins; RDAP ownership of terminal IPs is the fallback. When
    both are at hand and disagree, the conflict is logged and CNAME stands.
    Resolver failures surface as basis "none" with a diagnostic.
    """
    _check_coverage(fingerprints)
    key = host.lower().rstrip(".")
    if cache is not None:
        hit = cache.get("attribution", key)
        if hit is not None:
            return CdnAttribution(
                host=host,
                provider=hit["provider"],
                basis=hit["basis"],
                chain=DnsChain(
                    queried_host=hit["chain"]["queried_host"],
                    cname_links=tuple(hit["chain"]["cname_links"]),
                    terminal_ips=tuple(hit["chain"]["terminal_ips"]),
                    nameservers=tuple(hit["chain"]["nameservers"]),
                ),
                cached=True,
            )

    try:
        chain = resolve_chain(host, resolver)
    except ResolveError as exc:
        return CdnAttribution(
            host=host, provider=None, basis="none", chain=DnsChain(queried_host=host), diagnostic=str(exc)
        )

    provider = _match_cname(chain, fingerprints)
    basis = "cname" if provider else "none"

    if provider is None and rdap is not None:
        for ip in chain.terminal_ips:
            try:
                org = rdap.lookup_org(ip)
            except (ValueError, RdapError) as exc:  # non-global or unanswerable IPs
                logger.debug("RDAP lookup for %s failed: %s", ip, exc)
                continue
            matched = _match_org(org, fingerprints)
            if matched:
                provider, basis = matched, "rdap"
                break
    elif provider is not None and rdap is not None:
        # Opportunistic conflict check: never issues fresh lookups.
        for ip in chain.terminal_ips:
            org = rdap.cached_org(ip)
            if org:
                rdap_provider = _match_org(org, fingerprints)
                if rdap_provider and rdap_provider != provider:
                    logger.warning(
                        "attribution conflict for %s: cname says %s, rdap says %s; cname wins",
                        host,
                        provider,
                        rdap_provider,
                    )

    result = CdnAttribution(host=host, provider=provider, basis=basis, chain=chain)
    if cache is not None:
        cache.put(
            "attribution",
            key,
            {"provider": provider, "basis": basis, "chain": chain.to_dict()},
        )
    return result


def dns_provider(
    registrable_domain: str,
    fingerprints: Sequence[ProviderFingerprint],
    *,
    resolver: Resolver,
) -> Optional[str]:
    """Provider operating the domain's nameservers, if any (DNS-transfer
    signal used to explain anycast termination)."""
    try:
        nameservers = resolver.query(registrable_domain, "NS")
    except NxDomain:
        return None
    for ns in nameservers:
        for fp in fingerprints:
            if any(_suffix_match(ns, suffix) for suffix in fp.ns_suffixes):
                return fp.provider
    return None


class Attributor:
    """Shared attribution front end for scan workers: one cache, one
    resolver/RDAP pair, and a global in-flight bound on external lookups."""

    def __init__(
        self,
        fingerprints: Optional[Sequence[ProviderFingerprint]] = None,
        resolver: Optional[Resolver] = None,
        rdap: Optional[RdapClient | RecordedRdap] = None,
        cache: Optional[LookupCache] = None,
        inflight_limit: int = DEFAULT_INFLIGHT_LIMIT,
    ) -> None:
        from .resolver import SystemResolver

        self.fingerprints = tuple(fingerprints) if fingerprints else default_fingerprints()
        _check_coverage(self.fingerprints)
        self.resolver = resolver if resolver is not None else SystemResolver()
        self.rdap = rdap
        self.cache = cache or LookupCache()
        self._gate = threading.BoundedSemaphore(inflight_limit)

    def attribute(self, host: str) -> CdnAttribution:
        with self._gate:
            return attribute(
                host,
                self.fingerprints,
                resolver=self.resolver,
                rdap=self.rdap,
                cache=self.cache,
            )

    def dns_provider(self, registrable_domain: str) -> Optional[str]:
        cached = self.cache.get("dns-provider", registrable_domain.lower())
        if cached is not None:
            return cached or None
        with self._gate:
            try:
                provider = dns_provider(
                    registrable_domain, self.fingerprints, resolver=self.resolver
                )
            except ResolveTimeout:
                raise
            except ResolveError:
                provider = None
        self.cache.put("dns-provider", registrable_domain.lower(), provider or "")
        return provider
