"""cdnpass: measure whether website login flows expose passwords to the CDN
terminating their HTTPS connections."""

__version__ = "0.1.0"
