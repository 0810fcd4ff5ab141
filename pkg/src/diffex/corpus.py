"""Hierarchical semantic corpus: domain types, file round-trip, validation,
keyword-extraction prompt construction, and VLM response ingestion.

A corpus is a forest of attributes ordered from coarse groups (level 1) to
fine-grained subtypes (level 2+). Each node carries the text fragment used to
drive a counterfactual edit. Corpora are immutable after construction and safe
to share across threads.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

from .errors import (
    CorpusFormatError,
    CorpusParseError,
    CorpusValidationError,
    VlmIngestError,
    VlmPromptError,
)

CORPUS_SCHEMA = "diffex-corpus/1"
GUIDANCE_VALUES = ("add", "remove")

_NODE_FIELDS = {"label", "prompt_fragment", "guidance", "children"}
_DOC_FIELDS = {"schema", "domain", "version", "provenance", "roots"}


def slugify(text: str) -> str:
    """Lowercase ``text`` and collapse runs of non-alphanumerics to hyphens."""
    return re.sub(r"[^a-z0-9]+", "-", text.casefold()).strip("-")


@dataclass(frozen=True)
class SemanticNode:
    """One attribute in the hierarchy.

    ``id`` is the slug of the label path from the root (e.g.
    ``"beak/beak-color"``) and ``level`` counts from 1 at the roots; both are
    derived during construction and never stored in corpus files.
    """

    id: str
    label: str
    level: int
    prompt_fragment: str
    guidance: str = "add"
    children: tuple["SemanticNode", ...] = ()

    def is_leaf(self) -> bool:
        return not self.children


@dataclass(frozen=True)
class Corpus:
    domain: str
    version: str = ""
    roots: tuple[SemanticNode, ...] = ()
    provenance: str = ""

    def iter_nodes(self) -> Iterator[tuple[tuple[str, ...], SemanticNode]]:
        """Pre-order traversal yielding (label path, node) pairs."""

        def walk(node: SemanticNode, path: tuple[str, ...]):
            here = path + (node.label,)
            yield here, node
            for child in node.children:
                yield from walk(child, here)

        for root in self.roots:
            yield from walk(root, ())

    def node_by_id(self, node_id: str) -> SemanticNode:
        for _, node in self.iter_nodes():
            if node.id == node_id:
                return node
        raise KeyError(node_id)

    def path_labels(self, node_id: str) -> tuple[str, ...]:
        for path, node in self.iter_nodes():
            if node.id == node_id:
                return path
        raise KeyError(node_id)

    def parent_of(self, node_id: str) -> SemanticNode | None:
        """Parent node, or None for roots."""
        for _, node in self.iter_nodes():
            for child in node.children:
                if child.id == node_id:
                    return node
        return None

    def depth(self) -> int:
        return max((node.level for _, node in self.iter_nodes()), default=0)


def build_node(
    label: str,
    prompt_fragment: str | None = None,
    guidance: str = "add",
    children: Sequence[Mapping] | None = None,
    *,
    path: tuple[str, ...] = (),
    level: int = 1,
) -> SemanticNode:
    """Construct a frozen node subtree from plain label/fragment mappings."""
    here = path + (label,)
    built = tuple(
        build_node(
            c["label"] if isinstance(c, Mapping) else c,
            c.get("prompt_fragment") if isinstance(c, Mapping) else None,
            c.get("guidance", "add") if isinstance(c, Mapping) else "add",
            c.get("children") if isinstance(c, Mapping) else None,
            path=here,
            level=level + 1,
        )
        for c in (children or ())
    )
    return SemanticNode(
        id="/".join(slugify(part) for part in here),
        label=label,
        level=level,
        prompt_fragment=label if prompt_fragment is None else prompt_fragment,
        guidance=guidance,
        children=built,
    )


def build_corpus(
    domain: str,
    roots: Sequence[Mapping],
    *,
    version: str = "",
    provenance: str = "",
) -> Corpus:
    """Convenience constructor mirroring the corpus file structure."""
    return Corpus(
        domain=domain,
        version=version,
        roots=tuple(
            build_node(
                r["label"],
                r.get("prompt_fragment"),
                r.get("guidance", "add"),
                r.get("children"),
            )
            for r in roots
        ),
        provenance=provenance,
    )


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Finding:
    rule: str
    path: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.findings

    def summary(self) -> str:
        if self.ok:
            return "ok: no findings"
        return "\n".join(f"[{f.rule}] {f.path}: {f.message}" for f in self.findings)


def _display_path(path: tuple[str, ...]) -> str:
    return " > ".join(path) if path else "(corpus)"


def validate_corpus(corpus: Corpus) -> ValidationReport:
    """Check every corpus invariant; findings are data, not failures.

    Rules: empty-roots, empty-label, empty-prompt-fragment, invalid-guidance,
    level-mismatch, duplicate-sibling-label, duplicate-node-id, node-aliased,
    id-mismatch.
    """
    findings: list[Finding] = []
    if not corpus.roots:
        findings.append(Finding("empty-roots", "(corpus)", "corpus must declare at least one root"))

    seen_objects: dict[int, tuple[str, ...]] = {}
    ids: dict[str, list[tuple[str, ...]]] = {}

    def walk(node: SemanticNode, path: tuple[str, ...], level: int):
        here = path + (node.label,)
        label = _display_path(here)
        if id(node) in seen_objects:
            first = seen_objects[id(node)]
            findings.append(
                Finding(
                    "node-aliased",
                    label,
                    f"node also reachable at {_display_path(first)}; the hierarchy must be a forest",
                )
            )
            return  # do not descend twice
        seen_objects[id(node)] = here
        if not node.label.strip():
            findings.append(Finding("empty-label", label, "label must be non-empty"))
        if not node.prompt_fragment.strip():
            findings.append(Finding("empty-prompt-fragment", label, "prompt_fragment must be non-empty"))
        if node.guidance not in GUIDANCE_VALUES:
            findings.append(Finding("invalid-guidance", label, f"guidance {node.guidance!r} not in {GUIDANCE_VALUES}"))
        if node.level != level:
            findings.append(Finding("level-mismatch", label, f"level is {node.level}, expected {level}"))
        expected_id = "/".join(slugify(part) for part in here)
        if node.id != expected_id:
            findings.append(Finding("id-mismatch", label, f"id is {node.id!r}, expected {expected_id!r}"))
        ids.setdefault(node.id, []).append(here)
        seen_labels: dict[str, str] = {}
        for child in node.children:
            key = child.label.casefold().strip()
            if key in seen_labels:
                findings.append(
                    Finding(
                        "duplicate-sibling-label",
                        _display_path(here + (child.label,)),
                        f"label collides case-insensitively with sibling {seen_labels[key]!r}",
                    )
                )
            else:
                seen_labels[key] = child.label
            walk(child, here, level + 1)

    seen_root_labels: dict[str, str] = {}
    for root in corpus.roots:
        key = root.label.casefold().strip()
        if key in seen_root_labels:
            findings.append(
                Finding(
                    "duplicate-sibling-label",
                    _display_path((root.label,)),
                    f"label collides case-insensitively with sibling root {seen_root_labels[key]!r}",
                )
            )
        else:
            seen_root_labels[key] = root.label
        walk(root, (), 1)

    for node_id, paths in ids.items():
        if len(paths) > 1:
            where = "; ".join(_display_path(p) for p in paths)
            findings.append(
                Finding("duplicate-node-id", where, f"id {node_id!r} derived from {len(paths)} distinct paths")
            )

    return ValidationReport(tuple(findings))


# ---------------------------------------------------------------------------
# File round-trip


def _node_from_doc(doc, location: str, path: tuple[str, ...], level: int) -> SemanticNode:
    if not isinstance(doc, dict):
        raise CorpusFormatError(f"{location}: node must be an object", location=location)
    unknown = set(doc) - _NODE_FIELDS
    if unknown:
        raise CorpusFormatError(
            f"{location}: unknown field(s) {sorted(unknown)}", location=location
        )
    label = doc.get("label")
    if not isinstance(label, str):
        raise CorpusFormatError(f"{location}: 'label' must be a string", location=location)
    fragment = doc.get("prompt_fragment", label)
    if not isinstance(fragment, str):
        raise CorpusFormatError(f"{location}: 'prompt_fragment' must be a string", location=location)
    guidance = doc.get("guidance", "add")
    if guidance not in GUIDANCE_VALUES:
        raise CorpusFormatError(
            f"{location}: 'guidance' must be one of {GUIDANCE_VALUES}", location=location
        )
    children_doc = doc.get("children", [])
    if not isinstance(children_doc, list):
        raise CorpusFormatError(f"{location}: 'children' must be a list", location=location)
    here = path + (label,)
    children = tuple(
        _node_from_doc(child, f"{location}.children[{i}]", here, level + 1)
        for i, child in enumerate(children_doc)
    )
    return SemanticNode(
        id="/".join(slugify(part) for part in here),
        label=label,
        level=level,
        prompt_fragment=fragment,
        guidance=guidance,
        children=children,
    )


def corpus_from_dict(doc) -> Corpus:
    """Build and validate a Corpus from a parsed corpus document."""
    if not isinstance(doc, dict):
        raise CorpusFormatError("top level must be an object")
    unknown = set(doc) - _DOC_FIELDS
    if unknown:
        raise CorpusFormatError(f"unknown field(s) {sorted(unknown)}")
    if doc.get("schema") != CORPUS_SCHEMA:
        raise CorpusFormatError(f"'schema' must be {CORPUS_SCHEMA!r}, got {doc.get('schema')!r}")
    domain = doc.get("domain")
    if not isinstance(domain, str) or not domain:
        raise CorpusFormatError("'domain' must be a non-empty string")
    version = doc.get("version", "")
    if not isinstance(version, str):
        raise CorpusFormatError("'version' must be a string")
    provenance = doc.get("provenance", "")
    if not isinstance(provenance, str):
        raise CorpusFormatError("'provenance' must be a string")
    roots_doc = doc.get("roots")
    if not isinstance(roots_doc, list):
        raise CorpusFormatError("'roots' must be a list")
    roots = tuple(
        _node_from_doc(r, f"roots[{i}]", (), 1) for i, r in enumerate(roots_doc)
    )
    corpus = Corpus(domain=domain, version=version, roots=roots, provenance=provenance)
    report = validate_corpus(corpus)
    if not report.ok:
        raise CorpusValidationError(report)
    return corpus


def load_corpus(path) -> Corpus:
    """Load a corpus file, raising on malformed documents or invariant breaks."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorpusParseError(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}", line=exc.lineno, column=exc.colno
        ) from exc
    return corpus_from_dict(doc)


def _node_to_dict(node: SemanticNode) -> dict:
    return {
        "label": node.label,
        "prompt_fragment": node.prompt_fragment,
        "guidance": node.guidance,
        "children": [_node_to_dict(c) for c in node.children],
    }


def corpus_to_dict(corpus: Corpus) -> dict:
    doc = {
        "schema": CORPUS_SCHEMA,
        "domain": corpus.domain,
        "version": corpus.version,
        "roots": [_node_to_dict(r) for r in corpus.roots],
    }
    if corpus.provenance:
        doc["provenance"] = corpus.provenance
    return doc


def save_corpus(corpus: Corpus, path) -> None:
    """Write the canonical corpus document (byte-stable for equal corpora)."""
    data = json.dumps(corpus_to_dict(corpus), indent=2, ensure_ascii=False, sort_keys=True)
    Path(path).write_text(data + "\n", encoding="utf-8")


def nodes_at_level(corpus: Corpus, level: int) -> list[SemanticNode]:
    """All nodes with the given level, in pre-order; empty beyond the depth."""
    if level < 1:
        raise ValueError(f"level must be >= 1, got {level}")
    return [node for _, node in corpus.iter_nodes() if node.level == level]


# ---------------------------------------------------------------------------
# Keyword-extraction prompt


@dataclass(frozen=True)
class VlmPromptSpec:
    """Inputs for one keyword-extraction prompt.

    ``example_image_refs`` identifies the sample images the caller attaches to
    the model request; they are not inlined into the prompt text.
    """

    domain_name: str
    sample_attribute_names: tuple[str, ...]
    example_image_refs: tuple[str, ...] = ()


_PROMPT_TEMPLATE = """[
    {{"role": "system",
     "content": 'You are an expert at finding features important for text-based
     image editing using diffusion models, given a set of images. Upon receiving
     a set of images, analyze the given inputs and extract important features and
     keywords that can be used for text-based image editing using diffusion models.
     Analyze the set of images and identify key features that define or are significant
     within the specified domain. These features are encoded to guide generative
     diffusion model for fine-grained image editing of subjects.
     List all different categories related to that specific feature.
     For example, for {domain}, it ranges from {attributes}, etc.
     Output must be in the format given, a sample output is given below, give the output
     only without any other descriptive text. Do not restrict your answers to the given
     sample, come up with all features. I want detailed fine-grained features.
[{{
        "ATTRIBUTE_1": {{"sub_attribute_1_1" , "sub_attribute_1_2", "sub_attribute_1_3",}}
        "ATTRIBUTE_2": {{"sub_attribute_2_1", "sub_attribute_2_2", "sub_attribute_2_3"}},
        "ATTRIBUTE_3": {{"sub_attribute_3_1", "sub_attribute_3_2"}},
        "ATTRIBUTE_4": {{"sub_attribute_4_1", "sub_attribute_4_2"}},
        "ATTRIBUTE_5": {{"sub_attribute_5_1", "sub_attribute_5_2", "sub_attribute_5_3"}},
}}]
"""


def build_vlm_prompt(spec: VlmPromptSpec) -> str:
    """Render the keyword-extraction prompt; byte-stable for identical input.

    The trailing bracketed block is the literal output format the model is
    instructed to produce; its ATTRIBUTE_k/sub_attribute tokens are part of
    that instruction, not substitution slots.
    """
    if not spec.domain_name.strip():
        raise VlmPromptError("DOMAIN_NAME", "missing value for placeholder DOMAIN_NAME")
    attrs = [a for a in spec.sample_attribute_names]
    if len(attrs) == 0:
        raise VlmPromptError("ATTRIBUTE_1", "missing value for placeholder ATTRIBUTE_1")
    if len(attrs) == 1:
        raise VlmPromptError("ATTRIBUTE_2", "missing value for placeholder ATTRIBUTE_2")
    attributes = f"{attrs[0]} to " + ", ".join(attrs[1:])
    return _PROMPT_TEMPLATE.format(domain=spec.domain_name, attributes=attributes)


# ---------------------------------------------------------------------------
# VLM response ingestion

_GROUP_RE = re.compile(r'"((?:[^"\\]|\\.)*)"\s*:\s*\{([^{}]*)\}', re.DOTALL)
_STRING_RE = re.compile(r'"((?:[^"\\]|\\.)*)"')

STRAY_GROUP_LABEL = "Accessories"


@dataclass(frozen=True)
class IngestResult:
    corpus: Corpus
    warnings: tuple[str, ...] = ()


def ingest_vlm_response(text: str, domain: str, *, version: str = "1") -> IngestResult:
    """Parse a keyword-extraction response into a two-level corpus.

    Tolerates the rough edges the models actually produce: trailing commas,
    missing separators between groups, and loose quoted stragglers outside any
    group (collected into a synthesized group, flagged in provenance).
    """
    groups: list[tuple[int, str, list[str]]] = []  # (position, key, members)
    covered: list[tuple[int, int]] = []
    for match in _GROUP_RE.finditer(text):
        key = match.group(1).strip()
        members = [m.group(1).strip() for m in _STRING_RE.finditer(match.group(2))]
        members = [m for m in members if m]
        if key:
            groups.append((match.start(), key, members))
            covered.append(match.span())
    if not groups:
        raise VlmIngestError("no parsable attribute group in response")

    residue = list(text)
    for start, end in covered:
        for i in range(start, end):
            residue[i] = " "
    residue_text = "".join(residue)
    strays: list[str] = []
    for match in _STRING_RE.finditer(residue_text):
        for part in match.group(1).split(","):
            part = part.strip()
            if part:
                strays.append(part)

    warnings: list[str] = []
    leftover = _STRING_RE.sub(" ", residue_text).strip(" \t\r\n[]{},:")
    if leftover:
        warnings.append(f"unparsed content ignored: {leftover[:60]!r}")
    merged: dict[str, tuple[str, list[str]]] = {}  # casefolded key -> (label, members)
    order: list[str] = []
    for _, key, members in sorted(groups, key=lambda g: g[0]):
        fold = key.casefold()
        if fold in merged:
            warnings.append(f"duplicate group {key!r} merged")
            label, existing = merged[fold]
            known = {m.casefold() for m in existing}
            for member in members:
                if member.casefold() in known:
                    warnings.append(f"duplicate member {member!r} under {label!r} dropped")
                else:
                    existing.append(member)
                    known.add(member.casefold())
        else:
            deduped: list[str] = []
            known = set()
            for member in members:
                if member.casefold() in known:
                    warnings.append(f"duplicate member {member!r} under {key!r} dropped")
                else:
                    deduped.append(member)
                    known.add(member.casefold())
            merged[fold] = (key, deduped)
            order.append(fold)

    provenance = f"ingested from VLM response for domain {domain!r} ({len(order)} groups)"
    if strays:
        fold = STRAY_GROUP_LABEL.casefold()
        if fold not in merged:
            merged[fold] = (STRAY_GROUP_LABEL, [])
            order.append(fold)
        label, existing = merged[fold]
        known = {m.casefold() for m in existing}
        for stray in strays:
            if stray.casefold() not in known:
                existing.append(stray)
                known.add(stray.casefold())
        warnings.append(
            f"{len(strays)} stray item(s) attached to synthesized {STRAY_GROUP_LABEL!r} group"
        )
        provenance += f"; synthesized {STRAY_GROUP_LABEL!r} group from {len(strays)} stray item(s)"

    roots = [
        {
            "label": merged[fold][0],
            "prompt_fragment": merged[fold][0],
            "children": [{"label": m, "prompt_fragment": m} for m in merged[fold][1]],
        }
        for fold in order
    ]
    corpus = build_corpus(domain, roots, version=version, provenance=provenance)
    report = validate_corpus(corpus)
    if not report.ok:
        raise CorpusValidationError(report)
    return IngestResult(corpus=corpus, warnings=tuple(warnings))


def render_vlm_response(corpus: Corpus) -> str:
    """Serialize the first two corpus levels back into the bracketed key/set
    format accepted by ingest_vlm_response (ingest of the result is a no-op)."""
    lines = ["[{"]
    for root in corpus.roots:
        members = ", ".join(f'"{child.label}"' for child in root.children)
        lines.append(f'    "{root.label}": {{{members}}},')
    lines.append("}]")
    return "\n".join(lines)
