"""Campaign files: a line-oriented key=value grammar.

::

    # comment
    set out=reports workers=2 levels=4000
    job id=osc type=spectrum problem=oscillator domain="kind=interval a=-8 b=8" h=0.005

``set`` lines update campaign-wide settings; ``job`` lines add one job.
Values containing spaces are quoted (shell rules).  Every job needs a
unique ``id`` and a ``type`` among check, scan, solve, spectrum and
profile; the other keys depend on the type (see ``JOB_KEYS``).
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from pathlib import Path

from .domains import DomainError, make_domain
from .testbed import catalog
from .verify import DEFAULT_GRIDS

__all__ = ["ConfigError", "Job", "Campaign", "parse_campaign", "load_campaign", "field_names",
           "JOB_KEYS", "SETTINGS"]

#: campaign-wide settings and their defaults
SETTINGS = {"out": "reports", "workers": "1", "levels": "4000", "seed": "0"}

_COMMON = {"id", "type"}
JOB_KEYS = {
    "check": {"inequality", "field", "domain", "p", "lambda", "tol", "levels"},
    "scan": {"inequality", "grid", "p", "delta", "lambda", "levels"},
    "solve": {"problem", "domain", "h", "field", "g", "center", "tol"},
    "spectrum": {"problem", "domain", "h", "k", "weighting", "p", "subspace"},
    "profile": {"field", "domain", "levels"},
}
REQUIRED = {
    "check": {"inequality", "field"},
    "scan": {"inequality"},
    "solve": {"problem", "domain", "h", "field"},
    "spectrum": {"problem", "domain", "h"},
    "profile": {"field"},
}
CHECKED = ("Gross", "EmbedP", "EmbedInf", "TraceLogP", "TraceExp", "PoincareWirtinger",
           "TraceL2", "PoincareTrace")
SOLVE_PROBLEMS = ("neumann", "nonhomogeneous")
SPECTRUM_PROBLEMS = ("oscillator", "steklov", "trace", "poincare")
_NUMERIC = {"p", "lambda", "tol", "levels", "delta", "h", "k"}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


@dataclass
class Job:
    id: str
    type: str
    params: dict
    line: int

    def get(self, key, default=None):
        return self.params.get(key, default)


@dataclass
class Campaign:
    jobs: list[Job] = field(default_factory=list)
    settings: dict = field(default_factory=lambda: dict(SETTINGS))
    source: str = "<config>"

    @property
    def out(self) -> str:
        return self.settings["out"]

    @property
    def workers(self) -> int:
        return int(self.settings["workers"])

    @property
    def levels(self) -> int:
        return int(self.settings["levels"])

    @property
    def seed(self) -> int:
        return int(self.settings["seed"])


def field_names() -> list[str]:
    return [e.name for e in catalog()] + ["zero"]


def _pairs(tokens, lineno, source):
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise ConfigError(f"expected key=value, got {tok!r}", lineno, source)
        k, v = tok.split("=", 1)
        k = k.strip().lower()
        if not k:
            raise ConfigError(f"empty key in {tok!r}", lineno, source)
        if k in out:
            raise ConfigError(f"key {k!r} given twice", lineno, source)
        out[k] = v
    return out


def _validate_job(params: dict, lineno: int, source: str) -> Job:
    def fail(msg):
        raise ConfigError(msg, lineno, source)

    jid = params.get("id")
    jtype = params.get("type")
    if not jid:
        fail("job needs an id")
    if jtype not in JOB_KEYS:
        fail(f"unknown job type {jtype!r} (expected one of {', '.join(JOB_KEYS)})")
    extra = set(params) - _COMMON - JOB_KEYS[jtype]
    if extra:
        fail(f"unknown key(s) for {jtype} job: {', '.join(sorted(extra))}")
    missing = REQUIRED[jtype] - set(params)
    if missing:
        fail(f"{jtype} job {jid!r} is missing: {', '.join(sorted(missing))}")
    for key in _NUMERIC & set(params):
        try:
            float(params[key])
        except ValueError:
            fail(f"{key}={params[key]!r} is not a number")
    if "field" in params and params["field"] not in field_names():
        fail(f"unknown field {params['field']!r}")
    if "g" in params and params["g"] not in field_names():
        fail(f"unknown boundary field {params['g']!r}")
    if "domain" in params:
        try:
            make_domain(params["domain"])
        except DomainError as exc:
            fail(f"bad domain: {exc}")
    if jtype == "check" and params["inequality"] not in CHECKED:
        fail(f"no check for inequality {params['inequality']!r}")
    if jtype == "scan":
        if params["inequality"] not in DEFAULT_GRIDS:
            fail(f"no sharpness scan for {params['inequality']!r}")
        if "grid" in params:
            try:
                [float(v) for v in params["grid"].split(",")]
            except ValueError:
                fail(f"grid must be a comma-separated list of numbers, got {params['grid']!r}")
    if jtype == "solve" and params["problem"] not in SOLVE_PROBLEMS:
        fail(f"unknown solve problem {params['problem']!r}")
    if jtype == "spectrum" and params["problem"] not in SPECTRUM_PROBLEMS:
        fail(f"unknown spectrum problem {params['problem']!r}")
    return Job(jid, jtype, {k: v for k, v in params.items() if k not in _COMMON}, lineno)


def parse_campaign(text: str, source: str = "<config>") -> Campaign:
    camp = Campaign(source=source)
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            tokens = shlex.split(line, comments=True)
        except ValueError as exc:
            raise ConfigError(str(exc), lineno, source) from None
        if not tokens:
            continue
        head, rest = tokens[0].lower(), tokens[1:]
        if head not in ("set", "job"):
            raise ConfigError(f"expected 'set' or 'job', got {tokens[0]!r}", lineno, source)
        pairs = _pairs(rest, lineno, source)
        if head == "set":
            unknown = set(pairs) - set(SETTINGS)
            if unknown:
                raise ConfigError(f"unknown setting(s): {', '.join(sorted(unknown))}", lineno,
                                  source)
            for k in ("workers", "levels", "seed"):
                if k in pairs and not pairs[k].isdigit():
                    raise ConfigError(f"{k} must be a non-negative integer", lineno, source)
            camp.settings.update(pairs)
        else:
            job = _validate_job(pairs, lineno, source)
            if job.id in seen:
                raise ConfigError(f"duplicate job id {job.id!r} (first on line {seen[job.id]})",
                                  lineno, source)
            seen[job.id] = lineno
            camp.jobs.append(job)
    return camp


def load_campaign(path) -> Campaign:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read campaign: {exc}", None, str(p)) from None
    return parse_campaign(text, str(p))
