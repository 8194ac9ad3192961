"""MovieLens-1M ingestion (``::``-delimited ``ratings.dat``, ``users.dat``, ``movies.dat``).

Ratings above three stars become implicit positives. Movies released before
``year_threshold`` form the source domain, the rest the target domain. Only
users with positives in both domains are kept.
"""

from __future__ import annotations

import re
from collections import defaultdict

import numpy as np

from ..errors import ConfigError, ParseError
from .types import Attribute, InteractionLog, PrivateAttributeTable

AGE_CODES = (1, 18, 25, 35, 45, 50, 56)
AGE_GROUPS = ("under-35", "35-45", "over-45")
GENDERS = ("F", "M")

_YEAR = re.compile(r"\((\d{4})\)\s*$")


def age_bucket(age: int) -> int:
    """Map an age to 0 (under 35), 1 (35 up to 45) or 2 (45 and over)."""
    if age < 35:
        return 0
    if age < 45:
        return 1
    return 2


def _fields(path, expected: int):
    with open(path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("::")
            if len(parts) != expected:
                raise ParseError(f"expected {expected} '::'-separated fields, got {len(parts)}",
                                 path, lineno)
            yield lineno, parts


def _int(value, path, lineno, what):
    try:
        return int(value)
    except ValueError:
        raise ParseError(f"{what} {value!r} is not an integer", path, lineno) from None


def read_movies(path) -> dict[int, int]:
    years = {}
    for lineno, (movie, title, _genres) in _fields(path, 3):
        m = _YEAR.search(title)
        if m is None:
            raise ParseError(f"no release year in title {title!r}", path, lineno)
        years[_int(movie, path, lineno, "MovieID")] = int(m.group(1))
    return years


def read_users(path) -> dict[int, tuple[int, int]]:
    users = {}
    for lineno, (uid, gender, age, _occ, _zip) in _fields(path, 5):
        if gender not in GENDERS:
            raise ParseError(f"unknown gender {gender!r}", path, lineno)
        age = _int(age, path, lineno, "Age")
        if age not in AGE_CODES:
            raise ParseError(f"unknown age code {age}", path, lineno)
        users[_int(uid, path, lineno, "UserID")] = (GENDERS.index(gender), age_bucket(age))
    return users


def load_movielens(ratings_path, users_path, movies_path, year_threshold: int):
    """Return ``(source_log, target_log, attribute_table)``.

    Events are ordered by timestamp with ties kept in file order; users and
    items are re-indexed densely in ascending original-id order.
    """
    if year_threshold is None:
        raise ConfigError("year_threshold is required for MovieLens")
    years = read_movies(movies_path)
    profiles = read_users(users_path)

    events = defaultdict(list)  # uid -> [(ts, order, movie)]
    for order, (lineno, (uid, mid, rating, ts)) in enumerate(_fields(ratings_path, 4)):
        uid = _int(uid, ratings_path, lineno, "UserID")
        mid = _int(mid, ratings_path, lineno, "MovieID")
        rating = _int(rating, ratings_path, lineno, "Rating")
        ts = _int(ts, ratings_path, lineno, "Timestamp")
        if mid not in years:
            raise ParseError(f"rating for unknown movie {mid}", ratings_path, lineno)
        if uid not in profiles:
            raise ParseError(f"rating for unknown user {uid}", ratings_path, lineno)
        if rating > 3:
            events[uid].append((ts, order, mid))

    per_domain = {"source": {}, "target": {}}
    for uid, evs in events.items():
        evs.sort()
        seen = set()
        for ts, _, mid in evs:
            if mid in seen:
                continue
            seen.add(mid)
            dom = "source" if years[mid] < year_threshold else "target"
            per_domain[dom].setdefault(uid, []).append((mid, ts))

    shared = sorted(set(per_domain["source"]) & set(per_domain["target"]))
    logs = []
    for dom in ("source", "target"):
        movies = sorted({mid for uid in shared for mid, _ in per_domain[dom][uid]})
        index = {mid: k for k, mid in enumerate(movies)}
        items = [[index[mid] for mid, _ in per_domain[dom][uid]] for uid in shared]
        stamps = [[ts for _, ts in per_domain[dom][uid]] for uid in shared]
        logs.append(InteractionLog(dom, len(movies), items, stamps))
    table = PrivateAttributeTable(
        [Attribute("gender", 2, GENDERS), Attribute("age", 3, AGE_GROUPS)],
        np.array([profiles[uid] for uid in shared], dtype=np.int64).reshape(-1, 2))
    return logs[0], logs[1], table
