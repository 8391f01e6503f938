"""Patient records, subgroup indexing and the (D, U, V, n) sufficient statistics.

Array conventions used throughout the package:

* ``D[a, w, g]`` primary-event count, ``U[a, w, g]`` person-time, for arm
  ``a`` (0 control, 1 treatment), adverse-event status ``w`` and zero-based
  subgroup ``g``.
* ``V[a, g]`` adverse-event count and ``n[a, g]`` patient count.

Subgroup numbers exposed to users are one-based; arrays are zero-based.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

SUMMARY_FORMAT = "bivariate-subgroup-summary"
SUMMARY_VERSION = 1
BASE_COLUMNS = ("id", "arm", "time", "event", "ae")


class TrialDataError(ValueError):
    """Raised when patient-level input cannot be turned into valid records."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MalformedRow(TrialDataError):
    pass


class UnknownLevel(TrialDataError):
    pass


class NegativeTime(TrialDataError):
    pass


class NonBinaryValue(TrialDataError):
    pass


@dataclass(frozen=True)
class Factor:
    name: str
    levels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))
        if len(self.levels) < 2:
            raise ValueError(f"factor {self.name!r} needs at least two levels")
        if len(set(self.levels)) != len(self.levels):
            raise ValueError(f"factor {self.name!r} has duplicate level labels")

    @property
    def n_levels(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class FactorScheme:
    """Ordered baseline factors whose level combinations define the subgroups.

    Subgroup numbers are a mixed-radix encoding of the level tuple with the
    first factor most significant, so for two binary factors (1, 1) -> 1,
    (1, 2) -> 2, (2, 1) -> 3 and (2, 2) -> 4.
    """

    factors: tuple[Factor, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise ValueError("a factor scheme needs at least one factor")
        names = [f.name for f in self.factors]
        if len(set(names)) != len(names):
            raise ValueError("factor names must be unique")
        clash = set(names) & set(BASE_COLUMNS)
        if clash:
            raise ValueError(f"factor names clash with reserved columns: {sorted(clash)}")

    @classmethod
    def from_levels(cls, spec: Sequence[tuple[str, Sequence[str]]]) -> "FactorScheme":
        return cls(tuple(Factor(name, tuple(levels)) for name, levels in spec))

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(f.n_levels for f in self.factors)

    @property
    def n_subgroups(self) -> int:
        return int(np.prod(self.sizes))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)

    def subgroup_label(self, g: int) -> str:
        """Human-readable label such as ``sex=Male/age=lt75`` for subgroup ``g``."""
        levels = subgroup_levels(g, self)
        return "/".join(f"{f.name}={f.levels[k - 1]}" for f, k in zip(self.factors, levels))

    def to_dict(self) -> dict:
        return {"factors": [{"name": f.name, "levels": list(f.levels)} for f in self.factors]}

    @classmethod
    def from_dict(cls, d: dict) -> "FactorScheme":
        return cls(tuple(Factor(f["name"], tuple(f["levels"])) for f in d["factors"]))


@dataclass(frozen=True)
class PatientRecord:
    id: str
    arm: int
    time: float
    event: int
    ae: int
    levels: tuple[int, ...]

    def __post_init__(self):
        if not (self.time >= 0 and math.isfinite(self.time)):
            raise NegativeTime(f"time must be finite and nonnegative, got {self.time!r}")
        for name in ("arm", "event", "ae"):
            if getattr(self, name) not in (0, 1):
                raise NonBinaryValue(f"{name} must be 0 or 1, got {getattr(self, name)!r}")
        object.__setattr__(self, "levels", tuple(int(k) for k in self.levels))


def assign_subgroup(levels: Sequence[int], scheme: FactorScheme) -> int:
    """Map a tuple of one-based factor levels to a one-based subgroup number."""
    sizes = scheme.sizes
    if len(levels) != len(sizes):
        raise ValueError(f"expected {len(sizes)} levels, got {len(levels)}")
    g = 0
    for k, p in zip(levels, sizes):
        if not 1 <= k <= p:
            raise ValueError(f"level {k} out of range 1..{p}")
        g = g * p + (k - 1)
    return g + 1


def subgroup_levels(g: int, scheme: FactorScheme) -> tuple[int, ...]:
    """Inverse of :func:`assign_subgroup`."""
    G = scheme.n_subgroups
    if not 1 <= g <= G:
        raise ValueError(f"subgroup {g} out of range 1..{G}")
    rem = g - 1
    out = []
    for p in reversed(scheme.sizes):
        rem, k = divmod(rem, p)
        out.append(k + 1)
    return tuple(reversed(out))


def _parse_binary(value: str, name: str, line: int) -> int:
    try:
        x = float(value)
    except ValueError:
        raise NonBinaryValue(f"{name} must be 0 or 1, got {value!r}", line) from None
    if x not in (0.0, 1.0):
        raise NonBinaryValue(f"{name} must be 0 or 1, got {value!r}", line)
    return int(x)


def ingest_patients(source: TextIO | str | Path, scheme: FactorScheme) -> list[PatientRecord]:
    """Read a comma-separated patient file into validated records.

    The header must name ``id, arm, time, event, ae`` and one column per
    factor in ``scheme`` (matched by name, any order). Extra columns are
    ignored. Line numbers in errors count the header as line 1.
    """
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            return ingest_patients(fh, scheme)

    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise MalformedRow("empty input, no header row", 1) from None
    missing = [c for c in BASE_COLUMNS + scheme.names if c not in header]
    if missing:
        raise MalformedRow(f"header is missing columns {missing}", 1)
    pos = {name: header.index(name) for name in BASE_COLUMNS + scheme.names}
    lookup = [{label: k + 1 for k, label in enumerate(f.levels)} for f in scheme.factors]

    records = []
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise MalformedRow(f"expected {len(header)} fields, got {len(row)}", line)
        row = [c.strip() for c in row]
        try:
            time = float(row[pos["time"]])
        except ValueError:
            raise MalformedRow(f"time is not a number: {row[pos['time']]!r}", line) from None
        if not math.isfinite(time):
            raise MalformedRow(f"time is not finite: {row[pos['time']]!r}", line)
        if time < 0:
            raise NegativeTime(f"negative follow-up time {time!r}", line)
        levels = []
        for f, table in zip(scheme.factors, lookup):
            label = row[pos[f.name]]
            if label not in table:
                raise UnknownLevel(f"unknown level {label!r} for factor {f.name!r}", line)
            levels.append(table[label])
        records.append(
            PatientRecord(
                id=row[pos["id"]],
                arm=_parse_binary(row[pos["arm"]], "arm", line),
                time=time,
                event=_parse_binary(row[pos["event"]], "event", line),
                ae=_parse_binary(row[pos["ae"]], "ae", line),
                levels=tuple(levels),
            )
        )
    return records


def write_patients(records: Iterable[PatientRecord], scheme: FactorScheme, dest: TextIO | str | Path) -> None:
    """Write records in the format read by :func:`ingest_patients`."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as fh:
            write_patients(records, scheme, fh)
        return
    writer = csv.writer(dest, lineterminator="\n")
    writer.writerow(BASE_COLUMNS + scheme.names)
    for r in records:
        labels = [f.levels[k - 1] for f, k in zip(scheme.factors, r.levels)]
        writer.writerow([r.id, r.arm, repr(float(r.time)), r.event, r.ae, *labels])


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SummaryTable:
    """Sufficient statistics of a two-arm trial over ``G`` subgroups."""

    D: np.ndarray
    U: np.ndarray
    V: np.ndarray
    n: np.ndarray
    scheme: FactorScheme
    notes: tuple[str, ...] = field(default=())

    def __post_init__(self):
        G = self.scheme.n_subgroups
        object.__setattr__(self, "D", _frozen(self.D, np.int64))
        object.__setattr__(self, "U", _frozen(self.U, np.float64))
        object.__setattr__(self, "V", _frozen(self.V, np.int64))
        object.__setattr__(self, "n", _frozen(self.n, np.int64))
        object.__setattr__(self, "notes", tuple(self.notes))
        for name, shape in (("D", (2, 2, G)), ("U", (2, 2, G)), ("V", (2, G)), ("n", (2, G))):
            if getattr(self, name).shape != shape:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def n_subgroups(self) -> int:
        return self.scheme.n_subgroups

    def __eq__(self, other):
        if not isinstance(other, SummaryTable):
            return NotImplemented
        return (
            self.scheme == other.scheme
            and self.notes == other.notes
            and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in "DUVn")
        )

    def to_dict(self) -> dict:
        G = self.n_subgroups
        cells = [
            {"arm": a, "ae": w, "subgroup": g + 1, "events": int(self.D[a, w, g]), "exposure": float(self.U[a, w, g])}
            for a in (0, 1) for w in (0, 1) for g in range(G)
        ]
        arms = [
            {"arm": a, "subgroup": g + 1, "ae_count": int(self.V[a, g]), "n": int(self.n[a, g])}
            for a in (0, 1) for g in range(G)
        ]
        return {
            "format": SUMMARY_FORMAT,
            "version": SUMMARY_VERSION,
            "scheme": self.scheme.to_dict(),
            "cells": cells,
            "arm_subgroups": arms,
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SummaryTable":
        if d.get("format") != SUMMARY_FORMAT:
            raise ValueError(f"not a summary table document (format={d.get('format')!r})")
        if d.get("version") != SUMMARY_VERSION:
            raise ValueError(f"unsupported summary table version {d.get('version')!r}")
        scheme = FactorScheme.from_dict(d["scheme"])
        G = scheme.n_subgroups
        D = np.zeros((2, 2, G), dtype=np.int64)
        U = np.zeros((2, 2, G))
        V = np.zeros((2, G), dtype=np.int64)
        n = np.zeros((2, G), dtype=np.int64)
        seen = set()
        for c in d["cells"]:
            key = (c["arm"], c["ae"], c["subgroup"])
            if key in seen:
                raise ValueError(f"duplicate cell {key}")
            seen.add(key)
            D[c["arm"], c["ae"], c["subgroup"] - 1] = c["events"]
            U[c["arm"], c["ae"], c["subgroup"] - 1] = c["exposure"]
        if len(seen) != 4 * G:
            raise ValueError(f"expected {4 * G} cells, got {len(seen)}")
        seen = set()
        for c in d["arm_subgroups"]:
            key = (c["arm"], c["subgroup"])
            if key in seen:
                raise ValueError(f"duplicate arm/subgroup entry {key}")
            seen.add(key)
            V[c["arm"], c["subgroup"] - 1] = c["ae_count"]
            n[c["arm"], c["subgroup"] - 1] = c["n"]
        if len(seen) != 2 * G:
            raise ValueError(f"expected {2 * G} arm/subgroup entries, got {len(seen)}")
        return cls(D, U, V, n, scheme, tuple(d.get("notes", ())))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SummaryTable":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "SummaryTable":
        return cls.from_json(Path(path).read_text())


def compute_summaries(records: Sequence[PatientRecord], scheme: FactorScheme) -> SummaryTable:
    G = scheme.n_subgroups
    D = np.zeros((2, 2, G), dtype=np.int64)
    U = np.zeros((2, 2, G))
    V = np.zeros((2, G), dtype=np.int64)
    n = np.zeros((2, G), dtype=np.int64)
    if records:
        arm = np.array([r.arm for r in records])
        ae = np.array([r.ae for r in records])
        event = np.array([r.event for r in records])
        time = np.array([r.time for r in records], dtype=float)
        g = np.array([assign_subgroup(r.levels, scheme) - 1 for r in records])
        np.add.at(D, (arm, ae, g), event)
        # sort before summing so U does not depend on record order
        order = np.lexsort((time, g, ae, arm))
        np.add.at(U, (arm[order], ae[order], g[order]), time[order])
        np.add.at(V, (arm, g), ae)
        np.add.at(n, (arm, g), 1)
    return SummaryTable(D, U, V, n, scheme)


@dataclass
class CheckResult:
    name: str
    passed: bool
    cells: list[tuple[int, ...]] = field(default_factory=list)


@dataclass
class ValidationReport:
    checks: list[CheckResult]

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def __str__(self) -> str:
        lines = []
        for c in self.checks:
            status = "ok" if c.passed else f"FAIL at {c.cells}"
            lines.append(f"{c.name}: {status}")
        return "\n".join(lines)


def validate_summaries(table: SummaryTable) -> ValidationReport:
    """Check the table invariants; offending cells are reported one-based in g.

    Poisson cells are reported as ``(a, w, g)`` and arm/subgroup cells as
    ``(a, g)``.
    """
    D, U, V, n = table.D, table.U, table.V, table.n

    def awg(mask):
        return [(int(a), int(w), int(g) + 1) for a, w, g in zip(*np.nonzero(mask))]

    def ag(mask):
        return [(int(a), int(g) + 1) for a, g in zip(*np.nonzero(mask))]

    in_cell = np.stack([n - V, V], axis=1)  # patients per (a, w, g)
    checks = [
        ("negative event count", awg(D < 0)),
        ("negative or non-finite exposure", awg(~(U >= 0) | ~np.isfinite(U))),
        ("negative AE count or cell size", ag((V < 0) | (n < 0))),
        ("events without exposure", awg((U == 0) & (D > 0))),
        ("AE count exceeds cell size", ag(V > n)),
        ("events exceed patients in cell", awg(D > in_cell)),
        ("exposure without patients", awg((U > 0) & (in_cell <= 0))),
    ]
    return ValidationReport([CheckResult(name, not cells, cells) for name, cells in checks])


def check_summary_table(X) -> SummaryTable:
    """Coerce ``X`` to a validated :class:`SummaryTable` or raise ``ValueError``."""
    if isinstance(X, (str, Path)):
        X = SummaryTable.load(X)
    elif isinstance(X, dict):
        X = SummaryTable.from_dict(X)
    if not isinstance(X, SummaryTable):
        raise TypeError(f"expected a SummaryTable, got {type(X).__name__}")
    report = validate_summaries(X)
    if not report.ok:
        raise ValueError(f"summary table failed validation:\n{report}")
    return X


def read_patients_text(text: str, scheme: FactorScheme) -> list[PatientRecord]:
    return ingest_patients(io.StringIO(text), scheme)
