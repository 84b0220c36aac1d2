"""Parameter ranges, validation, heuristic initialization, and the
external-decider JSON contract.

The thirteen calibration parameters carry fixed admissible ranges. A
deterministic heuristic maps basin descriptors onto first-guess values;
an external decider (subprocess or HTTP endpoint) may replace it, its
one-line JSON reply parsed and clamped through the same validator.
"""

import json
import logging
import math
import re
import subprocess
import urllib.request
from dataclasses import dataclass, replace

from .errors import DataRangeError, DeciderFormatError
from .grid import BasinDescriptors
from .routing import RoutingParams
from .waterbalance import CrestParams

log = logging.getLogger(__name__)

PARAM_NAMES = ("wm", "b", "im", "ke", "fc", "iwu",
               "th", "under", "leaki", "isu", "alpha", "beta", "alpha0")

CREST_NAMES = ("wm", "b", "im", "ke", "fc", "iwu")
ROUTING_NAMES = ("th", "under", "leaki", "isu", "alpha", "beta", "alpha0")


@dataclass(frozen=True)
class ParamSpec:
    name: str
    lower: float
    upper: float
    unit: str
    effect: str  # qualitative response when the value increases

    @property
    def midpoint(self):
        return 0.5 * (self.lower + self.upper)


def default_ranges():
    """Admissible range table for all 13 parameters."""
    specs = [
        ParamSpec("wm", 5.0, 250.0, "mm",
                  "higher storage capacity reduces direct runoff"),
        ParamSpec("b", 0.1, 20.0, "-",
                  "steeper infiltration curve raises surface runoff"),
        ParamSpec("im", 0.01, 0.50, "fraction",
                  "more impervious area raises runoff"),
        ParamSpec("ke", 0.001, 1.0, "-",
                  "higher ET use lowers runoff"),
        ParamSpec("fc", 0.0, 150.0, "mm/h",
                  "faster infiltration lowers surface runoff"),
        ParamSpec("iwu", 0.0, 25.0, "mm",
                  "wetter start raises early runoff"),
        ParamSpec("th", 30.0, 300.0, "km^2",
                  "smaller threshold gives a finer channel network"),
        ParamSpec("under", 0.0001, 3.0, "m/s",
                  "faster interflow quickens the runoff response"),
        ParamSpec("leaki", 0.01, 1.0, "fraction/step",
                  "higher leakage steepens the hydrograph rise"),
        ParamSpec("isu", 0.0, 1e-5, "mm",
                  "non-zero seeding risks a spurious early peak"),
        ParamSpec("alpha", 0.01, 3.0, "-",
                  "scales channel wave speed"),
        ParamSpec("beta", 0.01, 1.0, "-",
                  "shapes the channel depth-velocity relation"),
        ParamSpec("alpha0", 0.01, 5.0, "-",
                  "scales overland wave speed (exponent fixed at 0.6)"),
    ]
    return {s.name: s for s in specs}


def write_ranges_csv(path):
    """Export the range table for inclusion alongside a report."""
    table = default_ranges()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("name,lower,upper,unit,effect_when_increased\n")
        for name in PARAM_NAMES:
            s = table[name]
            fh.write(f"{name},{s.lower},{s.upper},{s.unit},{s.effect}\n")


@dataclass(frozen=True)
class ParamProposal:
    """A full parameter vector plus a short rationale per parameter."""

    crest: CrestParams
    routing: RoutingParams
    rationale: dict

    def value(self, name):
        if name in CREST_NAMES:
            return getattr(self.crest, name)
        if name in ROUTING_NAMES:
            return getattr(self.routing, name)
        raise KeyError(name)

    def as_dict(self):
        return {name: self.value(name) for name in PARAM_NAMES}

    def with_value(self, name, value, rationale=None):
        notes = dict(self.rationale)
        if rationale is not None:
            notes[name] = rationale
        if name in CREST_NAMES:
            return ParamProposal(replace(self.crest, **{name: value}), self.routing, notes)
        if name in ROUTING_NAMES:
            return ParamProposal(self.crest, replace(self.routing, **{name: value}), notes)
        raise KeyError(name)


def _lerp(spec, t):
    t = min(max(t, 0.0), 1.0)
    return spec.lower + t * (spec.upper - spec.lower)


# descriptor normalization anchors
RELIEF_ANCHOR_M = 2000.0
SLOPE_ANCHOR = 0.3
AREA_ANCHOR_KM2 = (10.0, 10000.0)  # log-scaled


def _normalized(desc):
    relief_n = min(max(desc.relief_m / RELIEF_ANCHOR_M, 0.0), 1.0)
    slope_n = min(max(desc.mean_slope / SLOPE_ANCHOR, 0.0), 1.0)
    density_n = min(max(desc.drainage_density, 0.0), 1.0)
    lo, hi = (math.log10(AREA_ANCHOR_KM2[0]), math.log10(AREA_ANCHOR_KM2[1]))
    area_n = min(max((math.log10(max(desc.area_km2, 1e-6)) - lo) / (hi - lo), 0.0), 1.0)
    imperv_n = min(max((desc.impervious_fraction - 0.01) / (0.50 - 0.01), 0.0), 1.0)
    return relief_n, slope_n, density_n, area_n, imperv_n


def heuristic_init(desc):
    """Deterministic first-guess parameters from basin descriptors.

    Steep basins get less storage, a steeper curve, and faster waves;
    dense drainage lowers the channel threshold; imperviousness maps
    straight onto im and inversely onto fc. Fixed anchors cover the
    parameters with no reliable morphological cue (ke, under, leaki,
    isu, beta).
    """
    table = default_ranges()
    _, slope_n, density_n, _, imperv_n = _normalized(desc)

    wm = _lerp(table["wm"], 1.0 - slope_n)
    values = {
        "wm": wm,
        "b": _lerp(table["b"], slope_n),
        "im": min(max(desc.impervious_fraction, table["im"].lower), table["im"].upper),
        "ke": 0.7,
        "fc": _lerp(table["fc"], 1.0 - imperv_n),
        "iwu": min(0.3 * wm, table["iwu"].upper),
        "th": _lerp(table["th"], 1.0 - density_n),
        "under": 0.001,
        "leaki": 0.05,
        "isu": 0.0,
        "alpha": _lerp(table["alpha"], slope_n),
        "beta": 0.6,
        "alpha0": _lerp(table["alpha0"], slope_n),
    }
    rationale = {
        "wm": f"storage from inverse slope signal (slope {desc.mean_slope:.4f})",
        "b": "curve exponent from slope signal",
        "im": f"impervious fraction {desc.impervious_fraction:.3f} used directly",
        "ke": "fixed mid-high ET use anchor",
        "fc": "infiltration capacity inverse to imperviousness",
        "iwu": "30% of storage capacity, capped at range top",
        "th": f"channel threshold from drainage density {desc.drainage_density:.3f}",
        "under": "slow interflow anchor",
        "leaki": "mild leakage anchor",
        "isu": "zero to avoid a spurious early peak",
        "alpha": "channel wave speed from slope signal",
        "beta": "standard depth-velocity exponent anchor",
        "alpha0": "overland wave speed from slope signal",
    }
    proposal = ParamProposal(
        crest=CrestParams(**{k: values[k] for k in CREST_NAMES}),
        routing=RoutingParams(**{k: values[k] for k in ROUTING_NAMES}),
        rationale=rationale,
    )
    clamped, _ = validate(proposal)
    return clamped


def validate(proposal):
    """Clamp out-of-range values to the nearest bound.

    Returns (clamped proposal, violation strings). iwu is additionally
    capped at wm. Non-finite values raise DataRangeError.
    """
    table = default_ranges()
    violations = []
    out = proposal
    for name in PARAM_NAMES:
        value = out.value(name)
        if not math.isfinite(value):
            raise DataRangeError(f"parameter {name} is not finite: {value}")
        spec = table[name]
        clamped = min(max(value, spec.lower), spec.upper)
        if clamped != value:
            violations.append(
                f"{name}={value:g} clamped to {clamped:g} (range [{spec.lower:g}, {spec.upper:g}])")
            out = out.with_value(name, clamped)
    if out.crest.iwu > out.crest.wm:
        violations.append(
            f"iwu={out.crest.iwu:g} clamped to wm={out.crest.wm:g}")
        out = out.with_value("iwu", out.crest.wm)
    return out, violations


def neutral_proposal():
    """Range midpoints with the fixed heuristic anchors; used to backfill
    parameters an external decider omits."""
    table = default_ranges()
    anchors = {"ke": 0.7, "under": 0.001, "leaki": 0.05, "isu": 0.0, "beta": 0.6}
    values = {name: anchors.get(name, table[name].midpoint) for name in PARAM_NAMES}
    values["iwu"] = min(values["iwu"], values["wm"])
    rationale = {name: "neutral default" for name in PARAM_NAMES}
    return ParamProposal(
        crest=CrestParams(**{k: values[k] for k in CREST_NAMES}),
        routing=RoutingParams(**{k: values[k] for k in ROUTING_NAMES}),
        rationale=rationale,
    )


_ASSIGN_RE = re.compile(
    r"\b(" + "|".join(PARAM_NAMES) + r")\b\s*=\s*([-+]?\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)")
_UNKNOWN_RE = re.compile(
    r"\b([A-Za-z_][A-Za-z0-9_]*)\s*=\s*[-+]?\d+(?:\.\d*)?(?:[eE][-+]?\d+)?")


def parse_decider_json(line):
    """Parse a decider reply: exactly one line of JSON with keys "code"
    and "explanation".

    name=value pairs inside the code string become the proposal (missing
    parameters fall back to neutral defaults, unknown names are ignored
    with a warning); values are then clamped through validate() and the
    explanation is kept as the shared rationale.
    """
    if not isinstance(line, str):
        raise DeciderFormatError("decider reply must be text")
    stripped = line.strip("\r\n")
    if "\n" in stripped or "\r" in stripped:
        raise DeciderFormatError("decider reply must be exactly one line")
    try:
        payload = json.loads(stripped)
    except json.JSONDecodeError as exc:
        raise DeciderFormatError(f"decider reply is not valid JSON: {exc}")
    if not isinstance(payload, dict) or "code" not in payload or "explanation" not in payload:
        raise DeciderFormatError('decider reply must be a JSON object with "code" and "explanation"')

    code = str(payload["code"])
    explanation = str(payload["explanation"])

    found = {}
    for match in _ASSIGN_RE.finditer(code):
        found[match.group(1)] = float(match.group(2))
    for match in _UNKNOWN_RE.finditer(code):
        name = match.group(1)
        if name not in PARAM_NAMES and name not in ("crest_args", "types", "SimpleNamespace"):
            log.warning("decider proposed unknown parameter %r; ignored", name)

    proposal = neutral_proposal()
    note = explanation if len(explanation) <= 160 else explanation[:157] + "..."
    for name, value in found.items():
        proposal = proposal.with_value(name, value, rationale=f"decider: {note}")
    clamped, violations = validate(proposal)
    for v in violations:
        log.warning("decider value out of range: %s", v)
    return clamped


def decider_request_text(desc, user_note=""):
    """Serialize descriptors plus the range table for an external decider."""
    table = default_ranges()
    lines = ["# first-guess parameter request"]
    if user_note:
        lines.append(f"note = {user_note}")
    lines += [
        f"basin.area_km2 = {desc.area_km2:.6g}",
        f"basin.relief_m = {desc.relief_m:.6g}",
        f"basin.mean_slope = {desc.mean_slope:.6g}",
        f"basin.drainage_density = {desc.drainage_density:.6g}",
        f"basin.impervious_fraction = {desc.impervious_fraction:.6g}",
    ]
    for name in PARAM_NAMES:
        s = table[name]
        lines.append(f"param.{name} = [{s.lower:g}, {s.upper:g}] {s.unit} ({s.effect})")
    lines.append('respond with exactly one line of JSON: '
                 '{"code":"crest_args = types.SimpleNamespace(wm=<value>, b=<value>, ...)",'
                 '"explanation":"..."}')
    return "\n".join(lines) + "\n"


DECIDER_TIMEOUT_S = 60.0


class SubprocessDecider:
    """Runs an executable; request on stdin, one JSON line on stdout."""

    def __init__(self, command, timeout=DECIDER_TIMEOUT_S):
        self.command = command
        self.timeout = timeout

    def propose(self, desc, user_note=""):
        request = decider_request_text(desc, user_note)
        result = subprocess.run(
            self.command, input=request, capture_output=True, text=True,
            timeout=self.timeout, shell=False)
        if result.returncode != 0:
            raise DeciderFormatError(
                f"decider exited with status {result.returncode}: {result.stderr.strip()[:200]}")
        return parse_decider_json(result.stdout.strip("\n"))


class HttpDecider:
    """POSTs the request text; the response body is the one JSON line."""

    def __init__(self, url, timeout=DECIDER_TIMEOUT_S):
        self.url = url
        self.timeout = timeout

    def propose(self, desc, user_note=""):
        request = urllib.request.Request(
            self.url, data=decider_request_text(desc, user_note).encode("utf-8"),
            headers={"Content-Type": "text/plain"})
        with urllib.request.urlopen(request, timeout=self.timeout) as response:
            body = response.read().decode("utf-8")
        return parse_decider_json(body.strip("\n"))
