"""Scenario documents (JSON), panel/dataset tables (CSV) and report emission.

Formats are strict: unknown keys are rejected, every numeric must be finite,
and all errors name the offending key or line. Floats in CSV output are
rendered with 17 significant digits so write/read round-trips are lossless.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import DomainError, ParseError, SchemaError, SpecValidationError
from .estimators import BoundsReport, EstimateReport, FirstStageDiagnostic
from .inference import BootstrapResult, McStudyResult
from .model import (
    ConfounderLaw,
    CounterfactualPanel,
    GlimSpec,
    InstrumentPropensity,
    ObservedDataset,
    OutcomeSpec,
    PolyMean,
    ScenarioSpec,
    ThresholdLaw,
    ValidatedScenario,
    validate_spec,
)
from .oracle import ConditionReport

SCHEMA_VERSION = 1

PANEL_HEADER = ("u", "l", "z", "a0", "a1", "y0", "y1", "ctype", "nudge")

logger = logging.getLogger(__name__)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# scenario documents
# ---------------------------------------------------------------------------


def _require_keys(obj: Mapping, where: str, required: tuple[str, ...],
                  optional: tuple[str, ...] = ()) -> None:
    if not isinstance(obj, Mapping):
        raise SchemaError(f"{where}: expected an object")
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise SchemaError(f"{where}: unknown key(s) {sorted(unknown)}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise SchemaError(f"{where}: missing key(s) {missing}")


def _finite(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}: expected a number, got {value!r}")
    x = float(value)
    if not np.isfinite(x):
        raise SchemaError(f"{where}: must be finite, got {value!r}")
    return x


def _number_or_map(value, where: str):
    if isinstance(value, Mapping):
        return {str(k): _finite(v, f"{where}.{k}") for k, v in value.items()}
    return _finite(value, where)


def _coeff_list(value, where: str) -> tuple[float, ...]:
    if not isinstance(value, (list, tuple)) or not value:
        raise SchemaError(f"{where}: expected a nonempty coefficient list")
    return tuple(_finite(c, f"{where}[{i}]") for i, c in enumerate(value))


def _poly(value, where: str) -> PolyMean:
    if isinstance(value, Mapping):
        return PolyMean({str(k): _coeff_list(v, f"{where}.{k}")
                         for k, v in value.items()})
    return PolyMean(_coeff_list(value, where))


def scenario_from_document(doc: Any, source: str = "<document>") -> ValidatedScenario:
    """Build and validate a scenario from a parsed JSON document."""
    _require_keys(doc, source, ("schema_version", "name", "glim", "outcome"))
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SchemaError(
            f"{source}: schema_version must be {SCHEMA_VERSION}, "
            f"got {doc['schema_version']!r}")
    if not isinstance(doc["name"], str) or not doc["name"]:
        raise SchemaError(f"{source}: name must be a nonempty string")

    g = doc["glim"]
    _require_keys(g, f"{source}: glim",
                  ("threshold", "link", "propensity", "confounder"),
                  ("covariate_law",))
    th = g["threshold"]
    _require_keys(th, f"{source}: glim.threshold", ("kind",), ("coupling",))
    if not isinstance(th["kind"], str):
        raise SchemaError(f"{source}: glim.threshold.kind must be a string")
    link = g["link"]
    if link not in ("additive", "multiplicative"):
        raise SchemaError(
            f"{source}: glim.link must be 'additive' or 'multiplicative', "
            f"got {link!r}")

    pr = g["propensity"]
    _require_keys(pr, f"{source}: glim.propensity", ("p0", "p1"), ("assign_prob",))
    propensity = InstrumentPropensity(
        p0=_number_or_map(pr["p0"], f"{source}: glim.propensity.p0"),
        p1=_number_or_map(pr["p1"], f"{source}: glim.propensity.p1"),
        assign_prob=_number_or_map(
            pr.get("assign_prob", 0.5), f"{source}: glim.propensity.assign_prob"))

    cf = g["confounder"]
    _require_keys(cf, f"{source}: glim.confounder", ("kind",),
                  ("support", "bounds"))
    if cf["kind"] == "discrete":
        support = cf.get("support")
        if not isinstance(support, list):
            raise SchemaError(f"{source}: glim.confounder.support must be a list")
        pairs = []
        for i, pair in enumerate(support):
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise SchemaError(
                    f"{source}: glim.confounder.support[{i}] must be [value, prob]")
            pairs.append((_finite(pair[0], f"{source}: support[{i}].value"),
                          _finite(pair[1], f"{source}: support[{i}].prob")))
        confounder = ConfounderLaw.discrete(pairs)
    elif cf["kind"] == "uniform_interval":
        bounds = cf.get("bounds")
        if not isinstance(bounds, (list, tuple)) or len(bounds) != 2:
            raise SchemaError(f"{source}: glim.confounder.bounds must be [lo, hi]")
        confounder = ConfounderLaw.uniform(
            _finite(bounds[0], f"{source}: bounds[0]"),
            _finite(bounds[1], f"{source}: bounds[1]"))
    else:
        raise SchemaError(
            f"{source}: glim.confounder.kind must be 'discrete' or "
            f"'uniform_interval', got {cf['kind']!r}")

    law = g.get("covariate_law", [["all", 1.0]])
    if not isinstance(law, list):
        raise SchemaError(f"{source}: glim.covariate_law must be a list")
    cov_law = []
    for i, pair in enumerate(law):
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise SchemaError(
                f"{source}: glim.covariate_law[{i}] must be [label, prob]")
        cov_law.append((str(pair[0]),
                        _finite(pair[1], f"{source}: covariate_law[{i}].prob")))

    o = doc["outcome"]
    _require_keys(o, f"{source}: outcome", ("m0", "m1"),
                  ("noise_sd", "binary_mode"))
    binary = o.get("binary_mode", False)
    if not isinstance(binary, bool):
        raise SchemaError(f"{source}: outcome.binary_mode must be a boolean")
    outcome = OutcomeSpec(
        m0=_poly(o["m0"], f"{source}: outcome.m0"),
        m1=_poly(o["m1"], f"{source}: outcome.m1"),
        noise_sd=_finite(o.get("noise_sd", 0.0), f"{source}: outcome.noise_sd"),
        binary_mode=binary)

    try:
        threshold = ThresholdLaw(kind=th["kind"],
                                 coupling=th.get("coupling", "independent"))
        spec = ScenarioSpec(
            name=doc["name"],
            glim=GlimSpec(threshold=threshold, link=link, propensity=propensity,
                          confounder=confounder, covariate_law=tuple(cov_law)),
            outcome=outcome)
        return validate_spec(spec)
    except SpecValidationError as exc:
        raise type(exc)(f"{source}: glim: {exc}") from exc


def parse_scenario(text: str, source: str = "<string>") -> ValidatedScenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(
            f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return scenario_from_document(doc, source)


def load_scenario(path) -> ValidatedScenario:
    """Read, parse and validate a scenario JSON file."""
    path = Path(path)
    return parse_scenario(path.read_text(encoding="utf-8"), str(path))


def scenario_to_document(scn: ValidatedScenario | ScenarioSpec) -> dict:
    """Inverse of scenario_from_document (write -> read is lossless)."""
    spec = scn.spec if isinstance(scn, ValidatedScenario) else scn
    g = spec.glim

    def poly_doc(m: PolyMean):
        if isinstance(m.coeffs, Mapping):
            return {k: list(v) for k, v in m.coeffs.items()}
        return list(m.coeffs)

    def num_doc(v):
        return dict(v) if isinstance(v, Mapping) else v

    conf: dict[str, Any] = {"kind": g.confounder.kind}
    if g.confounder.is_discrete:
        conf["support"] = [[v, p] for v, p in g.confounder.support]
    else:
        conf["bounds"] = list(g.confounder.interval())
    return {
        "schema_version": SCHEMA_VERSION,
        "name": spec.name,
        "glim": {
            "threshold": {"kind": g.threshold.kind,
                          "coupling": g.threshold.coupling},
            "link": g.link,
            "propensity": {"p0": num_doc(g.propensity.p0),
                           "p1": num_doc(g.propensity.p1),
                           "assign_prob": num_doc(g.propensity.assign_prob)},
            "confounder": conf,
            "covariate_law": [[lab, p] for lab, p in g.covariate_law],
        },
        "outcome": {"m0": poly_doc(spec.outcome.m0),
                    "m1": poly_doc(spec.outcome.m1),
                    "noise_sd": spec.outcome.noise_sd,
                    "binary_mode": spec.outcome.binary_mode},
    }


def write_scenario(scn: ValidatedScenario | ScenarioSpec, path) -> None:
    Path(path).write_text(
        json.dumps(scenario_to_document(scn), indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# panels and datasets (CSV)
# ---------------------------------------------------------------------------


def write_panel(panel: CounterfactualPanel, path) -> None:
    """Counterfactual panel as CSV with the fixed column layout."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(PANEL_HEADER)
        for i in range(len(panel)):
            w.writerow((_fmt(panel.u[i]), str(panel.l[i]),
                        int(panel.z[i]), int(panel.a0[i]), int(panel.a1[i]),
                        _fmt(panel.y0[i]), _fmt(panel.y1[i]),
                        str(panel.ctype[i]), int(panel.nudge[i])))


def _parse_bit(raw: str, where: str) -> int:
    if raw not in ("0", "1"):
        raise DomainError(f"{where}: expected 0 or 1, got {raw!r}")
    return int(raw)


def _parse_float(raw: str, where: str) -> float:
    try:
        x = float(raw)
    except ValueError:
        raise DomainError(f"{where}: not a number: {raw!r}") from None
    if not np.isfinite(x):
        raise DomainError(f"{where}: must be finite, got {raw!r}")
    return x


def read_panel(path) -> CounterfactualPanel:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PANEL_HEADER:
            raise SchemaError(
                f"{path}: expected header {','.join(PANEL_HEADER)}")
        cols: list[list] = [[] for _ in PANEL_HEADER]
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(PANEL_HEADER):
                raise ParseError(f"{path}:{lineno}: expected "
                                 f"{len(PANEL_HEADER)} fields, got {len(row)}")
            where = f"{path}:{lineno}"
            cols[0].append(_parse_float(row[0], f"{where}: u"))
            cols[1].append(row[1])
            cols[2].append(_parse_bit(row[2], f"{where}: z"))
            cols[3].append(_parse_bit(row[3], f"{where}: a0"))
            cols[4].append(_parse_bit(row[4], f"{where}: a1"))
            cols[5].append(_parse_float(row[5], f"{where}: y0"))
            cols[6].append(_parse_float(row[6], f"{where}: y1"))
            if row[7] not in ("nt", "at", "de", "co"):
                raise DomainError(f"{where}: ctype: bad value {row[7]!r}")
            cols[7].append(row[7])
            cols[8].append(_parse_bit(row[8], f"{where}: nudge"))
    if not cols[0]:
        raise SchemaError(f"{path}: panel has no rows")
    a0 = np.array(cols[3], dtype=np.int8)
    a1 = np.array(cols[4], dtype=np.int8)
    return CounterfactualPanel(
        u=np.array(cols[0]), l=np.array(cols[1]),
        z=np.array(cols[2], dtype=np.int8), a0=a0, a1=a1,
        y0=np.array(cols[5]), y1=np.array(cols[6]),
        ctype=np.array(cols[7]), nudge=np.array(cols[8], dtype=np.int8))


@dataclass(frozen=True)
class DatasetSchema:
    """Column-name mapping for observed CSV files.

    covariates = None infers covariate columns as every header column other
    than z, a, y (in header order).
    """

    z: str = "z"
    a: str = "a"
    y: str = "y"
    covariates: tuple[str, ...] | None = None


def read_dataset(path, schema: DatasetSchema = DatasetSchema()) -> ObservedDataset:
    """Typed CSV ingestion with per-line error reporting."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: empty file, header required")
        for col in (schema.z, schema.a, schema.y):
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r} in header")
        if schema.covariates is None:
            cov_names = tuple(c for c in header
                              if c not in (schema.z, schema.a, schema.y))
        else:
            cov_names = schema.covariates
            for col in cov_names:
                if col not in header:
                    raise SchemaError(f"{path}: missing column {col!r} in header")
        pos = {c: header.index(c) for c in (schema.z, schema.a, schema.y, *cov_names)}

        z, a, y = [], [], []
        covs: dict[str, list] = {c: [] for c in cov_names}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            z.append(_parse_bit(row[pos[schema.z]], f"{path}:{lineno}: {schema.z}"))
            a.append(_parse_bit(row[pos[schema.a]], f"{path}:{lineno}: {schema.a}"))
            y.append(_parse_float(row[pos[schema.y]], f"{path}:{lineno}: {schema.y}"))
            for c in cov_names:
                covs[c].append(row[pos[c]])
    if not z:
        raise SchemaError(f"{path}: dataset has no rows")
    data = ObservedDataset(
        z=np.array(z, dtype=np.int8), a=np.array(a, dtype=np.int8),
        y=np.array(y), covariates={c: np.array(v) for c, v in covs.items()})
    counts = (dict(Counter(zip(*(covs[c] for c in cov_names))))
              if cov_names else {})
    logger.info("read %d rows from %s; strata: %s", data.n, path,
                counts or "none")
    return data


def write_observed(data: ObservedDataset, path) -> None:
    """Observed dataset as CSV: z, a, y then covariate columns."""
    names = data.covariate_names
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(("z", "a", "y", *names))
        for i in range(data.n):
            w.writerow((int(data.z[i]), int(data.a[i]), _fmt(data.y[i]),
                        *(str(data.covariates[c][i]) for c in names)))


# ---------------------------------------------------------------------------
# reports (JSON)
# ---------------------------------------------------------------------------


def _plain(value):
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: _plain(getattr(value, f.name))
                for f in dataclasses.fields(value)}
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


_REPORT_KINDS = {
    EstimateReport: "estimate",
    BoundsReport: "bounds",
    ConditionReport: "conditions",
    McStudyResult: "mc_study",
    BootstrapResult: "bootstrap",
    FirstStageDiagnostic: "first_stage",
}


def report_to_dict(report) -> dict:
    """JSON-ready dict for any report object (or a plain dict passthrough)."""
    if isinstance(report, dict):
        out = dict(report)
    else:
        kind = _REPORT_KINDS.get(type(report))
        if kind is None:
            raise SchemaError(f"cannot serialize report of type {type(report)!r}")
        out = {"kind": kind, **_plain(report)}
    out.setdefault("schema_version", SCHEMA_VERSION)
    # keep schema_version first for readability
    return {"schema_version": out.pop("schema_version"), **out}


def write_report(report, path) -> None:
    Path(path).write_text(
        json.dumps(report_to_dict(report), indent=2) + "\n", encoding="utf-8")
