"""Ordered CAMEO action codebook and dyadic event ingestion.

Event records are ``(date, source, target, action)`` tuples. Ingestion bins
them into calendar months (UTC) and counts them into a
:class:`~omd.dpt.CountTensor` whose action axis follows the codebook order,
cooperative first.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from datetime import date, datetime, timezone
from types import MappingProxyType

import numpy as np

from .dpt import CountTensor, DptParams, dpt_generate
from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ActionType:
    """One codebook row.

    ``rank`` is the 0-based position under the sort key (Goldstein value
    descending, CAMEO root id ascending); ``table_index`` is the index printed
    in the reference ordering table, which skips 8.
    """

    rank: int
    table_index: int
    cameo_id: int
    name: str
    goldstein: float


# (cameo root id, name, goldstein value, reference table index)
_ROOTS = (
    (7, "provide aid", 7.0, 0),
    (6, "engage material cooperation", 6.0, 1),
    (8, "yield", 5.0, 2),
    (3, "express intent cooperate", 4.0, 3),
    (5, "engage diplomatic cooperation", 3.5, 4),
    (2, "appeal", 3.0, 5),
    (4, "consult", 1.0, 6),
    (1, "make public statement", 0.0, 7),
    (9, "investigate", -2.0, 9),
    (11, "disapprove", -2.0, 10),
    (12, "reject", -4.0, 11),
    (16, "reduce relations", -4.0, 12),
    (10, "demand", -5.0, 13),
    (13, "threaten", -6.0, 14),
    (14, "protest", -6.5, 15),
    (17, "coerce", -7.0, 16),
    (15, "exhibit force posture", -7.2, 17),
    (18, "assault", -9.0, 18),
    (19, "fight", -10.0, 19),
    (20, "unconventional mass violence", -10.0, 20),
)

# common spellings of the CAMEO root names
_ALIASES = {
    "express intent to cooperate": 3,
    "engage in diplomatic cooperation": 5,
    "engage in material cooperation": 6,
    "use unconventional mass violence": 20,
    "use conventional military force": 19,
    "exhibit military posture": 15,
}


class ActionCodebook:
    """Immutable sequence of the 20 ordered :class:`ActionType` rows."""

    def __init__(self, rows):
        self._rows = tuple(rows)
        self._by_name = MappingProxyType({r.name: r for r in self._rows})
        self._by_id = MappingProxyType({r.cameo_id: r for r in self._rows})

    def __len__(self):
        return len(self._rows)

    def __iter__(self):
        return iter(self._rows)

    def __getitem__(self, rank) -> ActionType:
        return self._rows[rank]

    @property
    def names(self):
        return [r.name for r in self._rows]

    @property
    def goldstein(self) -> np.ndarray:
        return np.array([r.goldstein for r in self._rows])

    def index(self, name) -> int:
        """Rank of an action given by name, alias or CAMEO root id."""
        row = self.lookup(name)
        if row is None:
            raise KeyError(name)
        return row.rank

    def lookup(self, action):
        """Row for a name, alias, integer id or zero-padded id string; ``None`` if unknown."""
        if isinstance(action, (int, np.integer)):
            return self._by_id.get(int(action))
        key = str(action).strip().lower()
        if key.isdigit():
            return self._by_id.get(int(key))
        if key in self._by_name:
            return self._by_name[key]
        if key in _ALIASES:
            return self._by_id[_ALIASES[key]]
        return None


def load_codebook() -> ActionCodebook:
    """The 20 CAMEO root actions sorted by Goldstein value, ties by CAMEO id."""
    ordered = sorted(_ROOTS, key=lambda r: (-r[2], r[0]))
    rows = [ActionType(rank, idx, cid, name, value) for rank, (cid, name, value, idx) in enumerate(ordered)]
    return ActionCodebook(rows)


CODEBOOK = load_codebook()


@dataclass(frozen=True)
class EventRecord:
    """``source`` took ``action`` towards ``target`` on ``date``.

    ``date`` may be a :class:`datetime.date`, :class:`datetime.datetime` or
    ISO-8601 string; ``action`` a codebook name or CAMEO root id.
    """

    date: object
    source: str
    target: str
    action: object


def _month_of(value):
    """``(year, month)`` in UTC, or ``None`` if unparsable."""
    if isinstance(value, datetime):
        dt = value
    elif isinstance(value, date):
        return value.year, value.month
    else:
        try:
            dt = datetime.fromisoformat(str(value).strip().replace("Z", "+00:00"))
        except ValueError:
            return None
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc)
    return dt.year, dt.month


def _parse_month(value):
    if value is None:
        return None
    if isinstance(value, tuple):
        return value
    text = str(value).strip()
    if len(text) == 7:
        text += "-01"
    month = _month_of(text)
    if month is None:
        raise InvalidArgumentError(f"cannot parse month {value!r}")
    return month


def month_label(year, month) -> str:
    return f"{year:04d}-{month:02d}"


def _add_months(start, n):
    y, m = start
    total = y * 12 + (m - 1) + n
    return total // 12, total % 12 + 1


@dataclass
class IngestStats:
    """Counts of kept and dropped records, by reason."""

    kept: int = 0
    self_targeted: int = 0
    skipped: Counter = None

    def __post_init__(self):
        if self.skipped is None:
            self.skipped = Counter()

    @property
    def n_skipped(self) -> int:
        return sum(self.skipped.values())


def ingest_events(records, countries=None, start=None, n_months=None, codebook=None,
                  return_stats=False):
    """Aggregate event records into a monthly ``V x V x A x T`` count tensor.

    Parameters
    ----------
    records : iterable of EventRecord
    countries : sequence of str, optional
        Fixed country vocabulary. Records naming other countries are skipped.
        By default the sorted set of countries seen in the kept records.
    start : str or (year, month), optional
        First month (``"YYYY-MM"``). Defaults to the earliest record.
    n_months : int, optional
        Number of monthly bins. Defaults to cover the latest record; records
        outside the window are skipped.
    return_stats : bool
        Also return an :class:`IngestStats`.

    Self-targeted records are dropped. Unresolvable actions or countries and
    malformed dates are skipped and counted; a single warning summarises them.
    The result does not depend on record order.
    """
    codebook = CODEBOOK if codebook is None else codebook
    stats = IngestStats()
    vocab = None if countries is None else {c: k for k, c in enumerate(countries)}
    start = _parse_month(start)
    parsed = []
    for rec in records:
        month = _month_of(rec.date)
        if month is None:
            stats.skipped["bad_date"] += 1
            continue
        row = codebook.lookup(rec.action)
        if row is None:
            stats.skipped["unknown_action"] += 1
            continue
        src, tgt = str(rec.source).strip(), str(rec.target).strip()
        if not src or not tgt or (vocab is not None and (src not in vocab or tgt not in vocab)):
            stats.skipped["unknown_country"] += 1
            continue
        if src == tgt:
            stats.self_targeted += 1
            continue
        parsed.append((month, src, tgt, row.rank))
    if start is None:
        start = min((p[0] for p in parsed), default=None)
    if n_months is None:
        if parsed:
            last = max(p[0] for p in parsed)
            n_months = (last[0] - start[0]) * 12 + last[1] - start[1] + 1
        else:
            n_months = 0
    cells = []
    for month, src, tgt, a in parsed:
        t = (month[0] - start[0]) * 12 + month[1] - start[1]
        if not 0 <= t < n_months:
            stats.skipped["out_of_range"] += 1
            continue
        cells.append((src, tgt, a, t))
    if vocab is None:
        countries = sorted({c for cell in cells for c in cell[:2]})
        vocab = {c: k for k, c in enumerate(countries)}
    coords = np.array([(vocab[s], vocab[g], a, t) for s, g, a, t in cells], dtype=np.int64).reshape(-1, 4)
    stats.kept = len(cells)
    if stats.n_skipped:
        logger.warning("skipped %d event records: %s", stats.n_skipped, dict(stats.skipped))
    months = [month_label(*_add_months(start, k)) for k in range(n_months)] if start else []
    labels = {"countries": list(countries), "actions": codebook.names, "months": months}
    dims = (len(vocab), len(vocab), len(codebook), n_months)
    tensor = CountTensor(dims, coords, np.ones(len(coords), dtype=np.int64), labels=labels)
    return (tensor, stats) if return_stats else tensor


def tensor_to_events(tensor: CountTensor, countries=None, start="2000-01", rng=None, codebook=None):
    """Expand counts into individual records, one per unit of count.

    Each record gets a day drawn uniformly within its month when ``rng`` is
    given and the 1st otherwise. Records are ordered by date, then cell.
    """
    codebook = CODEBOOK if codebook is None else codebook
    if tensor.A != len(codebook):
        raise InvalidArgumentError(f"tensor has {tensor.A} actions; the codebook has {len(codebook)}")
    countries = list(countries if countries is not None else tensor.labels.get("countries")
                     or [f"C{k:03d}" for k in range(tensor.V)])
    start = _parse_month(start)
    out = []
    for (i, j, a, t), c in zip(tensor.coords, tensor.counts):
        if i == j:
            continue
        y, m = _add_months(start, int(t))
        ndays = (date(*_add_months((y, m), 1), 1) - date(y, m, 1)).days
        days = rng.integers(1, ndays + 1, size=int(c)) if rng is not None else np.ones(int(c), dtype=int)
        for d in days:
            out.append(EventRecord(date(y, m, int(d)), countries[i], countries[j], codebook[int(a)].name))
    out.sort(key=lambda r: (r.date, r.source, r.target, codebook.index(r.action)))
    return out


PRESETS = ("armenia-azerbaijan-like",)


def preset_params(name="armenia-azerbaijan-like", T=36) -> tuple:
    """Hand-built DPT parameters and country codes for a named preset.

    ``armenia-azerbaijan-like``: six countries in three communities. The
    first two countries form their own community, whose interactions drift
    from a cooperative state to a conflictual one over the last third of the
    range; the others interact at a steady, mostly neutral level.
    """
    if name not in PRESETS:
        raise InvalidArgumentError(f"unknown preset {name!r}; have {PRESETS}")
    countries = ["ARM", "AZE", "RUS", "TUR", "IRN", "GEO"]
    V, C, K, A = len(countries), 3, 3, len(CODEBOOK)
    psi = np.full((V, C), 0.05)
    psi[0:2, 0] = 1.0
    psi[2:4, 1] = 1.0
    psi[4:6, 2] = 1.0
    psi[0:2, 1] = 0.2
    # states are cooperative, neutral and conflictual bumps over ranked actions
    centres = np.array([2.0, 7.5, 17.5])
    emission = np.exp(-0.5 * ((np.arange(A)[None, :] - centres[:, None]) / 2.0) ** 2)
    emission /= emission.sum(axis=1, keepdims=True)
    transition = np.array([[0.9, 0.1, 0.0], [0.05, 0.9, 0.05], [0.0, 0.1, 0.9]])
    shift = 1.0 / (1.0 + np.exp(-(np.arange(T) - 0.8 * T) / (0.04 * T)))
    core = np.full((T, C, C, K), 0.02)
    core[:, 0, 0, 0] = 2.0 * (1.0 - shift) + 0.05
    core[:, 0, 0, 2] = 3.0 * shift + 0.05
    core[:, 1, 1, 1] = 0.6
    core[:, 2, 2, 1] = 0.4
    core[:, 1, 2, 0] = 0.2
    core[:, 2, 1, 0] = 0.2
    params = DptParams(psi, core, emission, transition, np.ones(A), np.ones(T))
    return params, countries


def generate_event_stream(params_or_preset, rng, countries=None, start="2000-01"):
    """Sample counts from a DPT (or named preset) and expand them to records.

    Returns ``(records, tensor)``; ingesting the records with the same
    country vocabulary, start month and length gives back ``tensor``.
    """
    if isinstance(params_or_preset, str):
        params, preset_countries = preset_params(params_or_preset)
        countries = countries or preset_countries
    else:
        params = params_or_preset
    countries = countries or [f"C{k:03d}" for k in range(params.V)]
    tensor = dpt_generate(params, rng)
    tensor.labels = {"countries": list(countries), "actions": CODEBOOK.names,
                     "months": [month_label(*_add_months(_parse_month(start), k)) for k in range(params.T)]}
    return tensor_to_events(tensor, countries, start, rng), tensor
