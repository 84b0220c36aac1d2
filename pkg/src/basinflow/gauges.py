"""Gauge inventory, observed discharge loading, and the deterministic
outlet-selection rule engine.

Selection applies six ordered rules: (0) a user hint wins outright,
(1) gauges on or below a reservoir are disqualified, (2) lowest elevation
wins, (3) elevation ties break by drainage area then accumulation,
(4) remaining ties break by record completeness then span, and (5) the
winner is re-checked for upstream reservoirs, dropping it and repeating
from rule 2 when the check fails. Identical inputs always give the same
answer.
"""

import csv
import re
from dataclasses import dataclass
from datetime import date, datetime

import numpy as np

from .errors import (
    AmbiguousHintError,
    DataRangeError,
    MissingDataError,
    NoViableGaugeError,
    ParseError,
)
from .forcing import TIMESTAMP_FORMAT

GAUGE_CSV_COLUMNS = (
    "id", "name", "row", "col", "elevation_m", "drainage_area_km2", "fam_value",
    "record_start", "record_end", "completeness",
    "on_or_below_reservoir", "upstream_reservoir_free",
)


@dataclass(frozen=True)
class GaugeCandidate:
    id: str
    name: str
    row: int
    col: int
    elevation_m: float
    drainage_area_km2: float
    fam_value: int
    record_start: date
    record_end: date
    completeness: float
    on_or_below_reservoir: bool
    upstream_reservoir_free: bool

    @property
    def record_span_days(self):
        return (self.record_end - self.record_start).days


@dataclass(frozen=True)
class SelectionResult:
    gauge_id: str
    explanation: str
    rule_trace: tuple  # ordered (rule, survivor count) pairs covering rules 0..5


def _parse_bool(text, context):
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ParseError(f"{context}: expected a boolean, got {text!r}")


def _parse_date(text, context):
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(f"{context}: expected YYYY-MM-DD, got {text!r}")


def load_gauges(path):
    """Read the gauge inventory CSV (exact column set, header required)."""
    candidates = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise ParseError(f"{path}: empty file, expected a CSV header")
        if tuple(reader.fieldnames) != GAUGE_CSV_COLUMNS:
            raise ParseError(
                f"{path}: unexpected columns {reader.fieldnames}; "
                f"expected {list(GAUGE_CSV_COLUMNS)}")
        for rownum, rec in enumerate(reader, start=2):
            ctx = f"{path}:{rownum}"
            try:
                candidate = GaugeCandidate(
                    id=rec["id"].strip(),
                    name=rec["name"].strip(),
                    row=int(rec["row"]),
                    col=int(rec["col"]),
                    elevation_m=float(rec["elevation_m"]),
                    drainage_area_km2=float(rec["drainage_area_km2"]),
                    fam_value=int(rec["fam_value"]),
                    record_start=_parse_date(rec["record_start"], ctx),
                    record_end=_parse_date(rec["record_end"], ctx),
                    completeness=float(rec["completeness"]),
                    on_or_below_reservoir=_parse_bool(rec["on_or_below_reservoir"], ctx),
                    upstream_reservoir_free=_parse_bool(rec["upstream_reservoir_free"], ctx),
                )
            except ParseError:
                raise
            except (TypeError, ValueError, KeyError) as exc:
                raise ParseError(f"{ctx}: bad row ({exc})")
            if not (0.0 <= candidate.completeness <= 1.0):
                raise DataRangeError(
                    f"{ctx}: completeness {candidate.completeness} outside [0, 1]")
            if candidate.record_start > candidate.record_end:
                raise DataRangeError(f"{ctx}: record_start after record_end")
            candidates.append(candidate)
    return candidates


def _match_hint(candidates, hint):
    """Exact id match first, then case-insensitive name substring."""
    hint = hint.strip()
    if not hint:
        return None
    for cand in candidates:
        if cand.id == hint:
            return cand
    lowered = hint.lower()
    by_name = [c for c in candidates if c.name and lowered in c.name.lower()]
    if len(by_name) > 1:
        ids = ", ".join(c.id for c in by_name)
        raise AmbiguousHintError(f"hint {hint!r} matches several gauges: {ids}")
    if by_name:
        return by_name[0]
    return None


def select_outlet(candidates, user_hint=None):
    """Apply the ordered selection rules; pure function of its inputs."""
    if not candidates:
        raise NoViableGaugeError("no gauge candidates supplied")
    trace = []

    if user_hint:
        hinted = _match_hint(candidates, user_hint)
        if hinted is not None:
            # the hint overrides every later rule
            trace = [(rule, 1) for rule in range(6)]
            return SelectionResult(
                gauge_id=hinted.id,
                explanation=f"rule 0: user hint names gauge {hinted.id}",
                rule_trace=tuple(trace),
            )
    trace.append((0, len(candidates)))

    pool = [c for c in candidates if not c.on_or_below_reservoir]
    trace.append((1, len(pool)))
    if not pool:
        raise NoViableGaugeError("every candidate sits on or below a reservoir")

    while pool:
        lowest = min(c.elevation_m for c in pool)
        stage2 = [c for c in pool if c.elevation_m == lowest]
        trace.append((2, len(stage2)))

        best_area = max((c.drainage_area_km2, c.fam_value) for c in stage2)
        stage3 = [c for c in stage2 if (c.drainage_area_km2, c.fam_value) == best_area]
        trace.append((3, len(stage3)))

        best_record = max((c.completeness, c.record_span_days) for c in stage3)
        stage4 = [c for c in stage3 if (c.completeness, c.record_span_days) == best_record]
        trace.append((4, len(stage4)))

        winner = min(stage4, key=lambda c: c.id)  # total order via id
        if winner.upstream_reservoir_free:
            trace.append((5, 1))
            decisive = _decisive_rule(len(pool), len(stage2), len(stage3), len(stage4), winner)
            return SelectionResult(gauge_id=winner.id, explanation=decisive,
                                   rule_trace=tuple(trace))
        # rule 5 failed: discard the winner and re-evaluate from rule 2
        trace.append((5, 0))
        pool = [c for c in pool if c.id != winner.id]

    raise NoViableGaugeError("rule 5 re-evaluation exhausted all candidates")


def _decisive_rule(n_pool, n2, n3, n4, winner):
    if n_pool == 1:
        return f"rule 1: only reservoir-free candidate is {winner.id}"
    if n2 == 1:
        return f"rule 2: lowest gauge elevation ({winner.elevation_m:g} m)"
    if n3 == 1:
        return (f"rule 3: largest drainage area ({winner.drainage_area_km2:g} km^2, "
                f"accumulation {winner.fam_value})")
    if n4 == 1:
        return (f"rule 4: best record (completeness {winner.completeness:g}, "
                f"{winner.record_span_days} days)")
    return f"tie broken lexicographically on gauge id ({winner.id})"


def render_selection(result):
    """Two-line output: selected gauge id, then the explanation."""
    explanation = result.explanation.strip() or "rule-based selection"
    return f"Selected gauge: {result.gauge_id}\nExplanation: {explanation}"


_RENDER_RE = re.compile(r"^Selected gauge: (\S+)\nExplanation: (.+)$", re.DOTALL)


def parse_selection(text):
    """Inverse of render_selection; returns (gauge_id, explanation)."""
    match = _RENDER_RE.match(text.strip())
    if match is None:
        raise ParseError("selection text does not match the two-line format")
    return match.group(1), match.group(2)


def load_discharge(path, window):
    """Observed discharge aligned to the window; gaps become NaN.

    The CSV holds (timestamp, q_m3s) rows; rows outside the window are
    dropped, steps without a row are marked missing.
    """
    try:
        fh = open(path, "r", newline="", encoding="utf-8")
    except FileNotFoundError:
        raise MissingDataError(f"no discharge file at {path}")
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["timestamp", "q_m3s"]:
            raise ParseError(f"{path}: expected header 'timestamp,q_m3s', got {header}")
        by_time = {}
        for rownum, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != 2:
                raise ParseError(f"{path}:{rownum}: expected 2 columns, got {len(rec)}")
            try:
                stamp = datetime.strptime(rec[0].strip(), TIMESTAMP_FORMAT)
                value = float(rec[1])
            except ValueError as exc:
                raise ParseError(f"{path}:{rownum}: {exc}")
            by_time[stamp] = value

    stamps = window.timestamps()
    q = np.full(len(stamps), np.nan)
    for i, stamp in enumerate(stamps):
        if stamp in by_time:
            q[i] = by_time[stamp]
    return stamps, q
