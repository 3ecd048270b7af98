"""Exception hierarchy shared across the scanner."""


class CdnpassError(Exception):
    """Base class for all scanner errors."""


class SchemaError(CdnpassError):
    """A document (snapshot, lexicon, weights, JSONL record) is malformed."""


class InvariantError(CdnpassError):
    """A structurally valid document violates a model invariant."""


class ConfigError(CdnpassError):
    """Bad CLI arguments or configuration files."""


class BundleError(CdnpassError):
    """A fixture bundle is missing, empty, or inconsistent."""


class DepthExceeded(CdnpassError):
    """Recursion past the configured page-transition budget."""


# --- session driver ---

class DriverError(CdnpassError):
    """Browser session failure not covered by a more specific class."""


class NavigationTimeout(DriverError):
    """Page did not finish loading within the configured timeout."""


class BlockedBySite(DriverError):
    """The site challenged the session (HTTP authentication)."""


class ElementGone(DriverError):
    """A planned element disappeared or went stale before interaction."""


class CaptchaDetected(DriverError):
    """A CAPTCHA widget is present; the site is skipped, never solved."""


class EthicsViolation(DriverError):
    """An action would break a hard ethics guard (e.g. a second login trial)."""


# --- resolver / RDAP ---

class ResolveError(CdnpassError):
    """DNS lookup failure not covered by a more specific class."""


class NxDomain(ResolveError):
    """The queried name does not exist (or has no usable records)."""


class ResolveTimeout(ResolveError):
    """No DNS answer within the timeout."""


class ChainTooLong(ResolveError):
    """CNAME chain exceeded the 10-link cap (or looped)."""


class RdapError(CdnpassError):
    """RDAP lookup failure."""


class RdapUnavailable(RdapError):
    """No RDAP server answered for the address."""


class NoOrgFound(RdapError):
    """RDAP answered but carried no registrant organization."""


class MissingAttribution(CdnpassError):
    """A captured request's destination host has no CDN attribution."""
