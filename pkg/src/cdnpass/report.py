"""Fold per-site scan records into ranking-interval, provider, and category
statistics, and emit deterministic CSV / JSONL / plot-data artifacts.

Percentages use round-half-up (computed in exact rational arithmetic), the
rule that reproduces every published figure this pipeline is checked against.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import InvariantError, SchemaError
from .exposure import Verdict

__all__ = [
    "INTERVAL_SIZE",
    "SiteRecord",
    "IntervalStat",
    "ProviderRow",
    "CategoryRow",
    "interval_of",
    "interval_percentages",
    "cdf_series",
    "provider_table",
    "category_table",
    "encryption_share",
    "emit_report",
    "records_to_jsonl",
    "records_from_jsonl",
    "pct_round_half_up",
]

INTERVAL_SIZE = 500
MAX_RANK = 500 * 100
CATEGORY_MIN_CDN_ENABLED = 20

# Scan-level outcome strings: the five analyzer verdicts plus "error" for
# sites whose scan failed outright (kept in-band so a re-aggregation run sees
# the same dataset the scan saw).
RECORD_VERDICTS = frozenset(v.value for v in Verdict) | {"error"}

_JSONL_KEYS = ("domain", "rank", "https", "login_detected", "cdn_providers", "verdict", "dns_provider", "category")


@dataclass(frozen=True)
class SiteRecord:
    domain: str
    rank: int
    https: bool
    login_detected: bool
    cdn_providers: frozenset[str]
    verdict: str
    dns_provider: Optional[str] = None
    category: Optional[str] = None

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise InvariantError(f"{self.domain}: rank must be positive")
        if self.verdict not in RECORD_VERDICTS:
            raise InvariantError(f"{self.domain}: unknown verdict {self.verdict!r}")
        if self.verdict == Verdict.PASSWORD_EXPOSED.value and not self.cdn_providers:
            raise InvariantError(f"{self.domain}: password-exposed record without a CDN provider")

    @property
    def cdn_enabled(self) -> bool:
        return self.login_detected and bool(self.cdn_providers)

    def to_jsonl_dict(self) -> dict:
        return {
            "domain": self.domain,
            "rank": self.rank,
            "https": self.https,
            "login_detected": self.login_detected,
            "cdn_providers": sorted(self.cdn_providers),
            "verdict": self.verdict,
            "dns_provider": self.dns_provider,
            "category": self.category,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SiteRecord":
        missing = [k for k in _JSONL_KEYS if k not in doc]
        if missing:
            raise SchemaError(f"site record missing keys {missing}")
        return cls(
            domain=doc["domain"],
            rank=doc["rank"],
            https=bool(doc["https"]),
            login_detected=bool(doc["login_detected"]),
            cdn_providers=frozenset(doc["cdn_providers"]),
            verdict=doc["verdict"],
            dns_provider=doc["dns_provider"],
            category=doc["category"],
        )


@dataclass(frozen=True)
class IntervalStat:
    index: int
    rank_lo: int
    rank_hi: int
    cdn_enabled: int
    password_exposed: int
    password_encrypted: int
    percent_exposed: Optional[int]
    percent_encrypted: Optional[int]


@dataclass(frozen=True)
class ProviderRow:
    name: str
    cdn_enabled: int
    password_exposed: int
    percent: int


@dataclass(frozen=True)
class CategoryRow:
    name: str
    cdn_enabled: int
    password_exposed: int
    percent: int


def pct_round_half_up(numerator: int, denominator: int, decimals: int = 0) -> Fraction:
    """100 * numerator / denominator, rounded half-up to `decimals` places,
    in exact arithmetic."""
    if denominator <= 0:
        raise ValueError("denominator must be positive")
    scale = 10**decimals
    scaled = Fraction(100 * numerator * scale, denominator) + Fraction(1, 2)
    return Fraction(math.floor(scaled), scale)


def interval_of(rank: int) -> int:
    if rank < 1:
        raise ValueError("rank must be >= 1")
    return (rank + INTERVAL_SIZE - 1) // INTERVAL_SIZE


def interval_percentages(records: Sequence[SiteRecord]) -> list[IntervalStat]:
    """Per-interval counts and percentages over CDN-enabled records."""
    if not records:
        return []
    for record in records:
        if record.rank > MAX_RANK:
            raise ValueError(f"{record.domain}: rank {record.rank} beyond interval range")
    max_interval = max(interval_of(r.rank) for r in records)
    enabled = [0] * (max_interval + 1)
    exposed = [0] * (max_interval + 1)
    encrypted = [0] * (max_interval + 1)
    for record in records:
        if not record.cdn_enabled:
            continue
        j = interval_of(record.rank)
        enabled[j] += 1
        if record.verdict == Verdict.PASSWORD_EXPOSED.value:
            exposed[j] += 1
        elif record.verdict == Verdict.PASSWORD_ENCRYPTED.value:
            encrypted[j] += 1
    stats = []
    for j in range(1, max_interval + 1):
        pct_exp = int(pct_round_half_up(exposed[j], enabled[j])) if enabled[j] else None
        pct_enc = int(pct_round_half_up(encrypted[j], enabled[j])) if enabled[j] else None
        stats.append(
            IntervalStat(
                index=j,
                rank_lo=1 + INTERVAL_SIZE * (j - 1),
                rank_hi=INTERVAL_SIZE * j,
                cdn_enabled=enabled[j],
                password_exposed=exposed[j],
                password_encrypted=encrypted[j],
                percent_exposed=pct_exp,
                percent_encrypted=pct_enc,
            )
        )
    return stats


def cdf_series(records: Sequence[SiteRecord]) -> list[tuple[int, float]]:
    """Cumulative fraction of login-detected sites by rank; ends at 1.0."""
    ranks = sorted(r.rank for r in records if r.login_detected)
    total = len(ranks)
    return [(rank, i / total) for i, rank in enumerate(ranks, start=1)]


def provider_table(records: Sequence[SiteRecord]) -> list[ProviderRow]:
    """One row per provider; a multi-CDN site counts once in each of its
    providers."""
    enabled: dict[str, int] = {}
    exposed: dict[str, int] = {}
    for record in records:
        if not record.cdn_enabled:
            continue
        for provider in record.cdn_providers:
            enabled[provider] = enabled.get(provider, 0) + 1
            if record.verdict == Verdict.PASSWORD_EXPOSED.value:
                exposed[provider] = exposed.get(provider, 0) + 1
    rows = [
        ProviderRow(
            name=name,
            cdn_enabled=enabled[name],
            password_exposed=exposed.get(name, 0),
            percent=int(pct_round_half_up(exposed.get(name, 0), enabled[name])),
        )
        for name in enabled
    ]
    rows.sort(key=lambda row: (-row.cdn_enabled, row.name))
    return rows


def category_table(
    records: Sequence[SiteRecord], category_map: Optional[Mapping[str, str]] = None
) -> list[CategoryRow]:
    """Per-category counts, omitting categories with fewer than 20
    CDN-enabled sites (too small to be representative)."""
    enabled: dict[str, int] = {}
    exposed: dict[str, int] = {}
    for record in records:
        if not record.cdn_enabled:
            continue
        category = (category_map or {}).get(record.domain, record.category)
        if not category:
            continue
        enabled[category] = enabled.get(category, 0) + 1
        if record.verdict == Verdict.PASSWORD_EXPOSED.value:
            exposed[category] = exposed.get(category, 0) + 1
    rows = [
        CategoryRow(
            name=name,
            cdn_enabled=enabled[name],
            password_exposed=exposed.get(name, 0),
            percent=int(pct_round_half_up(exposed.get(name, 0), enabled[name])),
        )
        for name in enabled
        if enabled[name] >= CATEGORY_MIN_CDN_ENABLED
    ]
    rows.sort(key=lambda row: (-row.cdn_enabled, row.name))
    return rows


def encryption_share(records: Sequence[SiteRecord]) -> tuple[int, Fraction]:
    """(count, percent to one decimal) of password-encrypted sites among
    CDN-enabled ones."""
    enabled = sum(1 for r in records if r.cdn_enabled)
    encrypted = sum(
        1 for r in records if r.cdn_enabled and r.verdict == Verdict.PASSWORD_ENCRYPTED.value
    )
    if enabled == 0:
        return 0, Fraction(0)
    return encrypted, pct_round_half_up(encrypted, enabled, decimals=1)


def format_fraction(value: Fraction, decimals: int) -> str:
    scaled = value * 10**decimals
    if scaled.denominator != 1:
        raise ValueError(f"{value} is not exact at {decimals} decimals")
    text = str(scaled.numerator).rjust(decimals + 1, "0")
    if decimals == 0:
        return text
    return f"{text[:-decimals]}.{text[-decimals:]}"


# --- serialization ---

def records_to_jsonl(records: Iterable[SiteRecord]) -> str:
    lines = [json.dumps(r.to_jsonl_dict(), separators=(",", ":")) for r in records]
    return "\n".join(lines) + ("\n" if lines else "")


def records_from_jsonl(text: str) -> list[SiteRecord]:
    records = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {lineno}: invalid JSON record: {exc}") from exc
        try:
            records.append(SiteRecord.from_dict(doc))
        except (TypeError, KeyError, InvariantError) as exc:
            raise SchemaError(f"line {lineno}: {exc}") from exc
    return records


def _write(path: Path, lines: list[str]) -> Path:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def emit_report(
    records: Sequence[SiteRecord],
    out_dir: str | Path,
    format: str = "csv",
    category_map: Optional[Mapping[str, str]] = None,
) -> list[Path]:
    """Write report artifacts with deterministic bytes for a given dataset."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = sorted(records, key=lambda r: r.rank)
    written: list[Path] = []

    if format == "jsonl":
        path = out / "records.jsonl"
        path.write_text(records_to_jsonl(ordered), encoding="utf-8", newline="\n")
        return [path]

    if format == "plotdata":
        payload = {
            "intervals": [
                {
                    "interval": s.index,
                    "cdn_enabled": s.cdn_enabled,
                    "pct_exposed": s.percent_exposed,
                    "pct_encrypted": s.percent_encrypted,
                }
                for s in interval_percentages(ordered)
            ],
            "cdf": [[rank, round(frac, 6)] for rank, frac in cdf_series(ordered)],
        }
        path = out / "plotdata.json"
        path.write_text(json.dumps(payload, separators=(",", ":")) + "\n", encoding="utf-8", newline="\n")
        return [path]

    if format != "csv":
        raise ValueError(f"unknown report format {format!r}")

    interval_lines = ["interval,rank_lo,rank_hi,cdn_enabled,exposed,encrypted,pct_exposed,pct_encrypted"]
    for stat in interval_percentages(ordered):
        pct_exp = "" if stat.percent_exposed is None else str(stat.percent_exposed)
        pct_enc = "" if stat.percent_encrypted is None else str(stat.percent_encrypted)
        interval_lines.append(
            f"{stat.index},{stat.rank_lo},{stat.rank_hi},{stat.cdn_enabled},"
            f"{stat.password_exposed},{stat.password_encrypted},{pct_exp},{pct_enc}"
        )
    written.append(_write(out / "intervals.csv", interval_lines))

    provider_lines = ["provider,cdn_enabled,exposed,pct"]
    for row in provider_table(ordered):
        provider_lines.append(f"{row.name},{row.cdn_enabled},{row.password_exposed},{row.percent}")
    written.append(_write(out / "providers.csv", provider_lines))

    category_lines = ["category,cdn_enabled,exposed,pct"]
    for row in category_table(ordered, category_map):
        category_lines.append(f"{row.name},{row.cdn_enabled},{row.password_exposed},{row.percent}")
    written.append(_write(out / "categories.csv", category_lines))

    cdf_lines = ["rank,cum_fraction"]
    for rank, fraction in cdf_series(ordered):
        cdf_lines.append(f"{rank},{fraction:.6f}")
    written.append(_write(out / "cdf.csv", cdf_lines))
    return written
