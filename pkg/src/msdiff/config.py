"""Plain-text run configuration: dotted keys, one assignment per line.

Grammar: ``key = value`` with ``#`` comments and blank lines; values are
scalars or whitespace-separated lists. Keys are dotted lowercase paths.
Species indices in keys and values are 1-based (``D.1.2`` couples the
first two species). All errors carry the offending line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .flux import DiffusionMatrix, admissible_delta_max
from .grid import PeriodicGrid
from .sim import Perturbation, Scenario

KNOWN_SUITES = (
    "flux-certify",
    "spectral-certify",
    "identity-study",
    "mollifier-study",
    "twin-study",
    "convergence-study",
)

_SCALAR_KEYS = {
    "n",
    "dim",
    "t_final",
    "dt",
    "cfl",
    "scheme",
    "delta",
    "cadence",
    "preset",
    "amplitude",
    "mode",
    "seed",
    "out",
    "workers",
    "perturb.amplitude",
    "perturb.mode",
}
_LIST_KEYS = {"cells", "lengths", "weights", "suites", "perturb.species"}


class ParseError(ValueError):
    """Malformed configuration text."""


class ValidationError(ValueError):
    """Well-formed configuration with inadmissible values."""


@dataclass
class RunConfig:
    scenario: Scenario
    suites: list
    out_dir: str = "out"
    seed: int = 0
    workers: int = 1
    params: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)


def _split_lines(text):
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ParseError(f"line {lineno}: empty key")
        if not value:
            raise ParseError(f"line {lineno}: empty value for {key!r}")
        if key in entries:
            raise ParseError(
                f"line {lineno}: duplicate key {key!r} (first set on line {entries[key][1]})"
            )
        entries[key] = (value, lineno)
    return entries


class _Reader:
    def __init__(self, entries):
        self.entries = entries
        self.used = set()

    def take(self, key, default=None):
        self.used.add(key)
        return self.entries.get(key, (default, None))

    def scalar(self, key, conv, default=None, required=False):
        value, lineno = self.take(key)
        if value is None:
            if required:
                raise ValidationError(f"missing required key {key!r}")
            return default
        try:
            return conv(value)
        except (TypeError, ValueError):
            raise ValidationError(
                f"line {lineno}: {key} must be a {conv.__name__}, got {value!r}"
            ) from None

    def list(self, key, conv, default=None):
        value, lineno = self.take(key)
        if value is None:
            return default
        try:
            return [conv(tok) for tok in value.split()]
        except (TypeError, ValueError):
            raise ValidationError(
                f"line {lineno}: {key} must be a list of {conv.__name__}, got {value!r}"
            ) from None

    def line_of(self, key):
        return self.entries[key][1] if key in self.entries else "?"


def _parse_int(s):
    return int(s)


def _parse_float(s):
    return float(s)


def parse_config(text):
    """Parse and validate configuration text into a RunConfig."""
    entries = _split_lines(text)
    rd = _Reader(entries)

    n = rd.scalar("n", _parse_int, required=True)
    if n < 2:
        raise ValidationError(f"line {rd.line_of('n')}: need at least two species")
    dim = rd.scalar("dim", _parse_int, default=1)
    if not 1 <= dim <= 3:
        raise ValidationError(f"line {rd.line_of('dim')}: dim must be 1, 2, or 3")
    cells = rd.list("cells", _parse_int, default=[64])
    if len(cells) == 1:
        cells = cells * dim
    if len(cells) != dim:
        raise ValidationError(
            f"line {rd.line_of('cells')}: cells needs one entry or {dim}"
        )
    if any(m < 2 for m in cells):
        raise ValidationError(f"line {rd.line_of('cells')}: cells must be at least 2")
    lengths = rd.list("lengths", _parse_float, default=[1.0])
    if len(lengths) == 1:
        lengths = lengths * dim
    if len(lengths) != dim:
        raise ValidationError(
            f"line {rd.line_of('lengths')}: lengths needs one entry or {dim}"
        )
    if any(L <= 0 for L in lengths):
        raise ValidationError(f"line {rd.line_of('lengths')}: lengths must be positive")

    D = _parse_diffusivities(rd, entries, n)

    t_final = rd.scalar("t_final", _parse_float, default=0.01)
    if t_final <= 0:
        raise ValidationError(f"line {rd.line_of('t_final')}: t_final must be positive")
    dt = rd.scalar("dt", _parse_float)
    if dt is not None and dt <= 0:
        raise ValidationError(f"line {rd.line_of('dt')}: dt must be positive")
    cfl = rd.scalar("cfl", _parse_float, default=0.25)
    if not 0 < cfl <= 1:
        raise ValidationError(f"line {rd.line_of('cfl')}: cfl must lie in (0, 1]")
    scheme = rd.scalar("scheme", str, default="euler")
    if scheme not in ("euler", "heun"):
        raise ValidationError(
            f"line {rd.line_of('scheme')}: scheme must be 'euler' or 'heun'"
        )
    cadence = rd.scalar("cadence", _parse_int, default=1)
    if cadence < 1:
        raise ValidationError(f"line {rd.line_of('cadence')}: cadence must be >= 1")

    preset = rd.scalar("preset", str, default="sine_mix")
    amplitude = rd.scalar("amplitude", _parse_float, default=0.2)
    mode = rd.scalar("mode", _parse_int, default=1)
    weights = rd.list("weights", _parse_float)
    if weights is not None and len(weights) != n:
        raise ValidationError(
            f"line {rd.line_of('weights')}: weights needs {n} entries"
        )

    suites = rd.list("suites", str, default=[])
    seed = rd.scalar("seed", _parse_int, default=0)
    out_dir = rd.scalar("out", str, default="out")
    workers = rd.scalar("workers", _parse_int, default=1)
    if workers < 1:
        raise ValidationError(f"line {rd.line_of('workers')}: workers must be >= 1")
    for name in suites:
        if name not in KNOWN_SUITES:
            raise ValidationError(
                f"line {rd.line_of('suites')}: unknown suite {name!r}; "
                f"known: {', '.join(KNOWN_SUITES)}"
            )

    delta = rd.scalar("delta", _parse_float, default=0.05)
    if delta <= 0:
        raise ValidationError(f"line {rd.line_of('delta')}: delta must be positive")
    warnings = []
    if "twin-study" in suites:
        cap = admissible_delta_max(D)
        if delta >= 1.0:
            raise ValidationError(
                f"line {rd.line_of('delta')}: twin certificates need "
                f"0 < delta < min(1, mu/(4 c4)) = {cap:.6g}; got {delta}"
            )
        if delta >= cap:
            warnings.append(
                f"delta={delta} is above the certified dissipation window "
                f"(mu/(4 c4) = {cap:.6g}); the twin certificate will carry the "
                f"eroded margin explicitly"
            )
    if delta >= 1.0:
        raise ValidationError(
            f"line {rd.line_of('delta')}: delta must lie in (0, 1), got {delta}"
        )

    perturbation = _parse_perturbation(rd, n)

    grid = PeriodicGrid(tuple(cells), tuple(lengths))
    try:
        scenario = Scenario(
            n=n,
            D=D,
            grid=grid,
            t_final=t_final,
            preset=preset,
            amplitude=amplitude,
            mode=mode,
            weights=None if weights is None else np.asarray(weights, float),
            dt=dt,
            cfl=cfl,
            scheme=scheme,
            delta=delta,
            cadence=cadence,
            perturbation=perturbation,
        )
        scenario.initial_state()
        scenario.resolve_steps()
    except ValueError as exc:
        raise ValidationError(f"scenario rejected: {exc}") from None

    params = {}
    for key, (value, lineno) in entries.items():
        if key in rd.used or _is_diffusivity_key(key):
            continue
        head = key.split(".", 1)[0]
        if head in KNOWN_SUITES:
            params[key] = value
            continue
        raise ValidationError(f"line {lineno}: unknown key {key!r}")

    return RunConfig(
        scenario=scenario,
        suites=list(suites),
        out_dir=out_dir,
        seed=seed,
        workers=workers,
        params=params,
        warnings=warnings,
    )


def _is_diffusivity_key(key):
    parts = key.split(".")
    return len(parts) == 3 and parts[0] == "D"


def _parse_diffusivities(rd, entries, n):
    pairs = {}
    lines = {}
    for key, (value, lineno) in entries.items():
        if not _is_diffusivity_key(key):
            continue
        rd.used.add(key)
        _, si, sj = key.split(".")
        try:
            i, j = int(si), int(sj)
        except ValueError:
            raise ValidationError(
                f"line {lineno}: species indices in {key!r} must be integers"
            ) from None
        if not (1 <= i <= n and 1 <= j <= n) or i == j:
            raise ValidationError(
                f"line {lineno}: {key} needs two distinct species in 1..{n}"
            )
        try:
            val = float(value)
        except ValueError:
            raise ValidationError(f"line {lineno}: {key} must be a number") from None
        if val <= 0:
            raise ValidationError(
                f"line {lineno}: diffusivities must satisfy positivity, got {val}"
            )
        pair = (min(i, j) - 1, max(i, j) - 1)
        if pair in pairs and pairs[pair] != val:
            raise ValidationError(
                f"line {lineno}: {key} breaks symmetry with line {lines[pair]} "
                f"({pairs[pair]} vs {val})"
            )
        pairs[pair] = val
        lines[pair] = lineno
    missing = [
        (i + 1, j + 1)
        for i in range(n)
        for j in range(i + 1, n)
        if (i, j) not in pairs
    ]
    if missing:
        raise ValidationError(
            f"missing diffusivities for species pairs {missing}; "
            f"set D.i.j for every unordered pair"
        )
    return DiffusionMatrix.from_pairs(n, pairs)


def _parse_perturbation(rd, n):
    amp = rd.scalar("perturb.amplitude", _parse_float)
    mode = rd.scalar("perturb.mode", _parse_int, default=1)
    species = rd.list("perturb.species", _parse_int, default=[1, 2])
    if amp is None:
        return None
    if len(species) != 2 or species[0] == species[1]:
        raise ValidationError(
            f"line {rd.line_of('perturb.species')}: perturb.species needs two "
            f"distinct species"
        )
    if not all(1 <= s <= n for s in species):
        raise ValidationError(
            f"line {rd.line_of('perturb.species')}: species must lie in 1..{n}"
        )
    return Perturbation(
        amplitude=amp, mode=mode, species=(species[0] - 1, species[1] - 1)
    )


def load_config(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)
