"""Embedded regression dataset for the report stage.

A synthetic 17,111-site scan (12,451 of them CDN-enabled) whose provider,
category, DNS-transfer, and encryption aggregates are pinned as golden
values for the table tests. Construction is deterministic.
"""

from __future__ import annotations

import random

from .exposure import Verdict
from .report import SiteRecord

__all__ = [
    "PROVIDER_COUNTS",
    "CATEGORY_COUNTS",
    "SMALL_CATEGORY_COUNTS",
    "LOGIN_DETECTED_TOTAL",
    "CDN_ENABLED_TOTAL",
    "EXPOSED_TOTAL",
    "ENCRYPTED_TOTAL",
    "CLOUDFLARE_DNS_TRANSFERRED",
    "CLOUDFLARE_DNS_TRANSFERRED_EXPOSED",
    "reference_records",
]

# (provider, cdn_enabled, password_exposed)
PROVIDER_COUNTS: tuple[tuple[str, int, int], ...] = (
    ("Cloudflare", 6356, 2803),
    ("Akamai", 3280, 818),
    ("Fastly", 1631, 291),
    ("Highwinds", 504, 26),
    ("Edgecast", 241, 16),
    ("Incapsula", 216, 142),
    ("Quantil", 161, 10),
    ("CDNetworks", 32, 3),
    ("Limelight", 30, 5),
)

# (category, cdn_enabled, password_exposed) - categories large enough to report
CATEGORY_COUNTS: tuple[tuple[str, int, int], ...] = (
    ("Retail", 304, 175),
    ("Internet", 231, 69),
    ("Business", 225, 72),
    ("Entertain", 213, 76),
    ("News", 181, 62),
    ("Finance", 159, 60),
    ("Technology", 155, 42),
    ("Education", 145, 14),
    ("Society", 99, 31),
    ("Travel", 79, 34),
    ("Science", 50, 18),
    ("Sports", 49, 15),
    ("Health", 43, 17),
    ("Reference", 36, 13),
)

# Categorized but below the 20-site reporting threshold.
SMALL_CATEGORY_COUNTS: tuple[tuple[str, int, int], ...] = (
    ("Government", 19, 6),
    ("Recreation", 12, 4),
    ("Home", 10, 3),
)

LOGIN_DETECTED_TOTAL = 17_111
CDN_ENABLED_TOTAL = sum(enabled for _, enabled, _ in PROVIDER_COUNTS)  # 12,451
EXPOSED_TOTAL = sum(exposed for _, _, exposed in PROVIDER_COUNTS)  # 4,114
ENCRYPTED_TOTAL = 2_057

# Cloudflare sites that also moved their DNS to Cloudflare (anycast signal):
# 63% of the transferred expose the password, 83% of the rest do not.
CLOUDFLARE_DNS_TRANSFERRED = 3_745
CLOUDFLARE_DNS_TRANSFERRED_EXPOSED = 2_360

_SEED = 20201001


class _Slot:
    __slots__ = ("provider", "exposed", "encrypted", "category", "dns_provider")

    def __init__(self, provider: str | None, exposed: bool) -> None:
        self.provider = provider
        self.exposed = exposed
        self.encrypted = False
        self.category: str | None = None
        self.dns_provider: str | None = None


def _build_slots() -> list[_Slot]:
    slots: list[_Slot] = []
    for provider, enabled, exposed in PROVIDER_COUNTS:
        slots.extend(_Slot(provider, True) for _ in range(exposed))
        slots.extend(_Slot(provider, False) for _ in range(enabled - exposed))
    slots.extend(_Slot(None, False) for _ in range(LOGIN_DETECTED_TOTAL - CDN_ENABLED_TOTAL))

    # Encrypted sites: CDN-enabled, no recoverable password anywhere.
    encrypted_left = ENCRYPTED_TOTAL
    for slot in slots:
        if encrypted_left == 0:
            break
        if slot.provider is not None and not slot.exposed:
            slot.encrypted = True
            encrypted_left -= 1

    exposed_pool = (s for s in slots if s.provider is not None and s.exposed)
    clean_pool = (s for s in slots if s.provider is not None and not s.exposed)
    for category, enabled, exposed in CATEGORY_COUNTS + SMALL_CATEGORY_COUNTS:
        for _ in range(exposed):
            next(exposed_pool).category = category
        for _ in range(enabled - exposed):
            next(clean_pool).category = category

    transferred_exposed = CLOUDFLARE_DNS_TRANSFERRED_EXPOSED
    transferred_clean = CLOUDFLARE_DNS_TRANSFERRED - CLOUDFLARE_DNS_TRANSFERRED_EXPOSED
    for slot in slots:
        if slot.provider != "Cloudflare":
            continue
        if slot.exposed and transferred_exposed > 0:
            slot.dns_provider = "Cloudflare"
            transferred_exposed -= 1
        elif not slot.exposed and transferred_clean > 0:
            slot.dns_provider = "Cloudflare"
            transferred_clean -= 1
    return slots


def reference_records() -> list[SiteRecord]:
    slots = _build_slots()
    ranks = list(range(1, LOGIN_DETECTED_TOTAL + 1))
    random.Random(_SEED).shuffle(ranks)
    records = []
    for slot, rank in zip(slots, ranks):
        if slot.exposed:
            verdict = Verdict.PASSWORD_EXPOSED.value
        elif slot.encrypted:
            verdict = Verdict.PASSWORD_ENCRYPTED.value
        else:
            verdict = Verdict.NOT_CDN_TERMINATED.value
        records.append(
            SiteRecord(
                domain=f"site{rank:05d}.example",
                rank=rank,
                https=True,
                login_detected=True,
                cdn_providers=frozenset({slot.provider}) if slot.provider else frozenset(),
                verdict=verdict,
                dns_provider=slot.dns_provider,
                category=slot.category,
            )
        )
    records.sort(key=lambda r: r.rank)
    return records
