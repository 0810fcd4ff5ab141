"""Ranked-explanation reports and counterfactual manifests.

Reports render to canonical JSON (full float precision, machine round-trip),
markdown (the Domain | Attribute | Score table layout), and RFC-4180 CSV.
Human formats show six significant digits. Every report embeds the
configuration that produced it, so a table is reproducible from the file
alone.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

from .scoring import ScoreCache
from .search import RankedExplanations

REPORT_SCHEMA = "diffex-report/1"
RENDER_FORMATS = ("json", "markdown", "csv")


def _fmt6(value: float) -> str:
    return f"{value:.6g}"


@dataclass(frozen=True)
class ReportRow:
    attribute: str
    paths: tuple[tuple[str, ...], ...]
    depth: int
    f_score: float
    influence: float
    n: int
    key: str = ""
    parent_key: str | None = None


@dataclass(frozen=True)
class HierarchyAnnotation:
    parent: str
    parent_f: float
    child: str
    child_f: float


@dataclass(frozen=True)
class ExplanationReport:
    domain: str
    classifier: str
    target_class: str
    rows: tuple[ReportRow, ...]
    hierarchy: tuple[HierarchyAnnotation, ...] = ()
    config: Mapping | None = None
    trace: Mapping | None = None

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "domain": self.domain,
            "classifier": self.classifier,
            "target_class": self.target_class,
            "rows": [
                {
                    "attribute": r.attribute,
                    "paths": [list(p) for p in r.paths],
                    "depth": r.depth,
                    "f_score": r.f_score,
                    "influence": r.influence,
                    "n": r.n,
                    "key": r.key,
                    "parent_key": r.parent_key,
                }
                for r in self.rows
            ],
            "hierarchy": [
                {
                    "parent": h.parent,
                    "parent_f": h.parent_f,
                    "child": h.child,
                    "child_f": h.child_f,
                }
                for h in self.hierarchy
            ],
            "config": dict(self.config) if self.config is not None else None,
            "trace": dict(self.trace) if self.trace is not None else None,
        }


def build_report(
    result: RankedExplanations,
    *,
    domain: str,
    classifier: str,
    target_class: str,
    config_echo: Mapping | None = None,
    include_trace: bool = True,
) -> ExplanationReport:
    """Turn search output into a report; rows keep the result's ranking."""
    rows = tuple(
        ReportRow(
            attribute=e.candidate.display(),
            paths=tuple(m.path_labels for m in e.candidate.members),
            depth=e.depth,
            f_score=e.score.f_score,
            influence=e.score.influence,
            n=e.score.n,
            key=e.candidate.key(),
            parent_key=e.parent_key,
        )
        for e in result.entries
    )
    by_key = {r.key: r for r in rows}
    hierarchy = tuple(
        HierarchyAnnotation(
            parent=by_key[r.parent_key].attribute,
            parent_f=by_key[r.parent_key].f_score,
            child=r.attribute,
            child_f=r.f_score,
        )
        for r in rows
        if r.parent_key is not None and r.parent_key in by_key
    )
    config: dict = {
        "scoring": result.scoring.to_dict(),
        "beam": result.config.to_dict() if result.config else None,
    }
    if config_echo:
        config.update(config_echo)
    return ExplanationReport(
        domain=domain,
        classifier=classifier,
        target_class=target_class,
        rows=rows,
        hierarchy=hierarchy,
        config=config,
        trace=result.trace.to_dict() if include_trace else None,
    )


def render(report: ExplanationReport, format: str = "json") -> bytes:
    """Serialize the report; identical reports render to identical bytes."""
    if format == "json":
        text = json.dumps(report.to_dict(), sort_keys=True, indent=2, ensure_ascii=False)
        return (text + "\n").encode("utf-8")
    if format == "markdown":
        lines = ["| Domain | Attribute | Score |", "| --- | --- | --- |"]
        for row in report.rows:
            lines.append(f"| {report.domain} | {row.attribute} | {_fmt6(row.f_score)} |")
        return ("\n".join(lines) + "\n").encode("utf-8")
    if format == "csv":
        buffer = io.StringIO()
        writer = csv.writer(buffer)  # RFC-4180: CRLF terminators, minimal quoting
        writer.writerow(["domain", "attribute", "depth", "f_score", "influence", "n"])
        for row in report.rows:
            writer.writerow(
                [report.domain, row.attribute, row.depth, _fmt6(row.f_score), _fmt6(row.influence), row.n]
            )
        return buffer.getvalue().encode("utf-8")
    raise ValueError(f"format must be one of {RENDER_FORMATS}, got {format!r}")


def parse_report(data: bytes) -> ExplanationReport:
    doc = json.loads(data.decode("utf-8"))
    if doc.get("schema") != REPORT_SCHEMA:
        raise ValueError(f"'schema' must be {REPORT_SCHEMA!r}, got {doc.get('schema')!r}")
    rows = tuple(
        ReportRow(
            attribute=r["attribute"],
            paths=tuple(tuple(p) for p in r["paths"]),
            depth=r["depth"],
            f_score=r["f_score"],
            influence=r["influence"],
            n=r["n"],
            key=r.get("key", ""),
            parent_key=r.get("parent_key"),
        )
        for r in doc["rows"]
    )
    hierarchy = tuple(
        HierarchyAnnotation(h["parent"], h["parent_f"], h["child"], h["child_f"])
        for h in doc.get("hierarchy", [])
    )
    return ExplanationReport(
        domain=doc["domain"],
        classifier=doc["classifier"],
        target_class=doc["target_class"],
        rows=rows,
        hierarchy=hierarchy,
        config=doc.get("config"),
        trace=doc.get("trace"),
    )


def top_k(report: ExplanationReport, k: int) -> ExplanationReport:
    """First k rows; configuration is preserved untouched."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    rows = report.rows[:k]
    keep = {r.attribute for r in rows}
    hierarchy = tuple(h for h in report.hierarchy if h.child in keep and h.parent in keep)
    return replace(report, rows=rows, hierarchy=hierarchy)


# ---------------------------------------------------------------------------
# Counterfactual manifest


@dataclass(frozen=True)
class ManifestRow:
    original_id: str
    edited_id: str
    semantics: str
    params_digest: str
    original_value: float
    edited_value: float


@dataclass(frozen=True)
class CounterfactualManifest:
    rows: tuple[ManifestRow, ...]


def _semantics_text(semantics: Sequence[tuple[str, str]]) -> str:
    return ";".join(f"{guidance}:{fragment}" for fragment, guidance in semantics)


def export_manifest(
    cache: ScoreCache,
    predicate: Callable | None = None,
) -> CounterfactualManifest:
    """Export the (original, edited) pairs recorded while scoring.

    ``predicate`` receives each cache entry and filters rows; an empty cache
    exports an empty manifest. Each distinct edit appears exactly once no
    matter how many times it was looked up.
    """
    rows = []
    for entry in sorted(cache.entries(), key=lambda e: (e.candidate_key, e.image_id, e.params_digest)):
        if predicate is not None and not predicate(entry):
            continue
        rows.append(
            ManifestRow(
                original_id=entry.image_id,
                edited_id=entry.edited_image_id,
                semantics=_semantics_text(entry.semantics),
                params_digest=entry.params_digest,
                original_value=entry.original_value,
                edited_value=entry.edited_value,
            )
        )
    return CounterfactualManifest(rows=tuple(rows))


def manifest_to_csv(manifest: CounterfactualManifest) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["original_id", "edited_id", "semantics", "params_digest", "original_value", "edited_value"])
    for row in manifest.rows:
        writer.writerow(
            [row.original_id, row.edited_id, row.semantics, row.params_digest, repr(row.original_value), repr(row.edited_value)]
        )
    return buffer.getvalue().encode("utf-8")
