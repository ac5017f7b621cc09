"""JSON system and report files, plus CSV emission."""

import json
import os
import tempfile
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .errors import PosredError
from .lti import DOMAINS, StateSpace
from .positivity import PositivityReport, SignStructureReport

FORMAT_VERSION = 1


class SchemaError(PosredError, ValueError):
    """Input file is not valid JSON or does not follow the schema."""


def plain(obj):
    """Recursively convert numpy scalars/arrays and tuples to JSON types."""
    if isinstance(obj, dict):
        return {str(k): plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj):
    return json.dumps(plain(obj), indent=2, allow_nan=False) + "\n"


def write_atomic(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".posred-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _reject_constant(name):
    raise SchemaError(f"non-finite number {name} is not allowed")


def _matrix(doc, key):
    if key not in doc:
        raise SchemaError(f"missing field {key!r}")
    rows = doc[key]
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise SchemaError(f"{key} must be a non-empty list of rows")
    width = len(rows[0])
    for r in rows:
        if len(r) != width:
            raise SchemaError(f"{key} is not rectangular")
        for x in r:
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise SchemaError(f"{key} has a non-numeric entry {x!r}")
    return np.array(rows, dtype=float).reshape(len(rows), width)


def system_from_dict(doc):
    if not isinstance(doc, dict):
        raise SchemaError("system file must hold a JSON object")
    fmt = doc.get("format", FORMAT_VERSION)
    if fmt != FORMAT_VERSION:
        raise SchemaError(f"unsupported format {fmt!r}")
    domain = doc.get("domain")
    if domain not in DOMAINS:
        raise SchemaError(f"domain must be one of {DOMAINS}")
    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        raise SchemaError("meta must be an object")
    mats = [_matrix(doc, k) for k in "ABCD"]
    try:
        sys = StateSpace(*mats, domain=domain)
    except (ValueError, PosredError) as exc:
        raise SchemaError(str(exc)) from None
    return sys, meta


def system_to_dict(sys, meta=None):
    doc = {"format": FORMAT_VERSION, "domain": sys.domain}
    for name, mat in zip("ABCD", sys.matrices()):
        doc[name] = mat.tolist()
    if meta:
        doc["meta"] = meta
    return doc


def loads_system(text):
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed JSON: {exc}") from None
    return system_from_dict(doc)


def load_system(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from None
    return loads_system(text)


def dumps_system(sys, meta=None):
    return dumps(system_to_dict(sys, meta))


def save_system(path, sys, meta=None):
    write_atomic(path, dumps_system(sys, meta))


@dataclass(eq=False)
class Report:
    """Bundle written by the analyze, reduce and verify commands."""

    command: str
    config: dict
    system: dict
    stability: dict
    symmetry: str
    hsv: list
    positivity: Optional[PositivityReport] = None
    sign_structure: Optional[SignStructureReport] = None
    reductions: list = field(default_factory=list)
    reduction: Optional[dict] = None
    version: str = __version__

    def to_dict(self):
        return plain({
            "format": FORMAT_VERSION,
            "tool": "posred",
            "version": self.version,
            "command": self.command,
            "config": self.config,
            "system": self.system,
            "stability": self.stability,
            "symmetry": self.symmetry,
            "hsv": self.hsv,
            "positivity": self.positivity.to_dict() if self.positivity else None,
            "sign_structure": self.sign_structure.to_dict() if self.sign_structure else None,
            "reductions": self.reductions,
            "reduction": self.reduction,
        })

    @classmethod
    def from_dict(cls, d):
        pos, sgn = d.get("positivity"), d.get("sign_structure")
        return cls(
            command=d["command"],
            config=d["config"],
            system=d["system"],
            stability=d["stability"],
            symmetry=d["symmetry"],
            hsv=d["hsv"],
            positivity=PositivityReport.from_dict(pos) if pos else None,
            sign_structure=SignStructureReport.from_dict(sgn) if sgn else None,
            reductions=d.get("reductions", []),
            reduction=d.get("reduction"),
            version=d.get("version", __version__),
        )

    def __eq__(self, other):
        if not isinstance(other, Report):
            return NotImplemented
        return self.to_dict() == other.to_dict()


def dumps_report(report):
    return dumps(report.to_dict())


def save_report(path, report):
    write_atomic(path, dumps_report(report))


def load_report(path):
    with open(path) as fh:
        return Report.from_dict(json.load(fh))


def csv_text(header, rows):
    """CSV with every float printed to 17 significant digits."""
    def fmt(x):
        if isinstance(x, (float, np.floating)):
            return f"{float(x):.17g}"
        return str(x)

    lines = [",".join(header)]
    lines.extend(",".join(fmt(x) for x in row) for row in rows)
    return "\n".join(lines) + "\n"
