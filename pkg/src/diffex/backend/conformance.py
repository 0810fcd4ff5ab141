"""Backend-agnostic conformance suite.

Every backend session, in-process or remote, must pass these checks before the
search engine will trust it: a sane handshake, exact identity edits,
per-(input, seed) determinism, and the agreed error codes. The suite treats
the session purely through the BackendSession surface.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from ..errors import BackendError, ProtocolError
from .types import BackendSession, EditInstruction, EditParams, ImageRef, VALUE_SPACES


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class ConformanceReport:
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> tuple[CheckResult, ...]:
        return tuple(c for c in self.checks if not c.passed)

    def summary(self) -> str:
        return "\n".join(
            f"{'PASS' if c.passed else 'FAIL'} {c.name}" + (f" ({c.detail})" if c.detail else "")
            for c in self.checks
        )


def _ref(session: BackendSession, image_id: str) -> ImageRef:
    domain = session.domains[0] if session.domains else ""
    return ImageRef(id=image_id, domain=domain)


def run_conformance(
    session: BackendSession,
    *,
    sample_images: Sequence[str],
    known_semantic: str,
    params: EditParams,
    unknown_semantic_probe: str | None = "conformance-no-such-semantic",
) -> ConformanceReport:
    """Run the full suite against ``session`` using the given sample images.

    Pass ``unknown_semantic_probe=None`` for open-vocabulary backends (any
    prompt fragment is editable); the suite then checks that an arbitrary
    fragment is accepted instead of rejected.
    """
    checks: list[CheckResult] = []

    def check(name: str, fn) -> None:
        try:
            detail = fn()
            checks.append(CheckResult(name, True, detail or ""))
        except Exception as exc:  # a failing check is data, not a crash
            checks.append(CheckResult(name, False, f"{type(exc).__name__}: {exc}"))

    def handshake():
        if not session.labels:
            raise AssertionError("no labels announced")
        if session.value_space not in VALUE_SPACES:
            raise AssertionError(f"value_space {session.value_space!r} not in {VALUE_SPACES}")
        return f"labels={list(session.labels)} value_space={session.value_space}"

    check("handshake", handshake)

    def classify_deterministic():
        for image_id in sample_images:
            a = session.classify(_ref(session, image_id))
            b = session.classify(_ref(session, image_id))
            if a.values != b.values or a.class_labels != b.class_labels:
                raise AssertionError(f"classify({image_id}) differs between calls")
        return f"{len(sample_images)} image(s)"

    check("classify-deterministic", classify_deterministic)

    def value_space_contract():
        for image_id in sample_images:
            out = session.classify(_ref(session, image_id))
            if out.value_space != session.value_space:
                raise AssertionError("per-call value_space disagrees with handshake")
            if any(not math.isfinite(v) for v in out.values):
                raise AssertionError("non-finite classifier values")
        return ""

    check("value-space", value_space_contract)

    def identity_edit():
        for image_id in sample_images:
            original = _ref(session, image_id)
            before = session.classify(original)
            copied = session.edit(original, [], params)
            untouched = session.classify(original)
            after = session.classify(copied)
            if before.values != untouched.values:
                raise AssertionError(f"edit mutated the original image {image_id}")
            if before.values != after.values:
                raise AssertionError(f"identity edit changed classification of {image_id}")
        return ""

    check("identity-edit", identity_edit)

    def edits_leave_originals_alone():
        original = _ref(session, sample_images[0])
        before = session.classify(original)
        session.edit(original, [EditInstruction(known_semantic)], params)
        if session.classify(original).values != before.values:
            raise AssertionError("a real edit mutated the original image")
        return ""

    check("original-immutable", edits_leave_originals_alone)

    def edit_parentage():
        original = _ref(session, sample_images[0])
        edited = session.edit(original, [EditInstruction(known_semantic)], params)
        if edited.origin != "edited" or edited.parent_id != original.id:
            raise AssertionError("edited image must carry origin='edited' and parent_id")
        return f"edited id {edited.id}"

    check("edit-parentage", edit_parentage)

    def edit_deterministic():
        original = _ref(session, sample_images[0])
        semantics = [EditInstruction(known_semantic)]
        first = session.classify(session.edit(original, semantics, params))
        second = session.classify(session.edit(original, semantics, params))
        if first.values != second.values:
            raise AssertionError("repeated edit yields different classifications")
        return ""

    check("edit-deterministic", edit_deterministic)

    def unknown_image():
        try:
            session.classify(_ref(session, "conformance-no-such-image"))
        except ProtocolError as exc:
            if exc.code != "unknown_image":
                raise AssertionError(f"expected code unknown_image, got {exc.code}")
            return ""
        except BackendError as exc:
            raise AssertionError(f"expected ProtocolError(unknown_image), got {type(exc).__name__}")
        raise AssertionError("classify accepted an unknown image id")

    check("unknown-image", unknown_image)

    if unknown_semantic_probe is not None:

        def unknown_semantic():
            original = _ref(session, sample_images[0])
            try:
                session.edit(original, [EditInstruction(unknown_semantic_probe)], params)
            except ProtocolError as exc:
                if exc.code != "unknown_semantic":
                    raise AssertionError(f"expected code unknown_semantic, got {exc.code}")
                return ""
            except BackendError as exc:
                raise AssertionError(f"expected ProtocolError(unknown_semantic), got {type(exc).__name__}")
            raise AssertionError("edit accepted an unknown semantic")

        check("unknown-semantic", unknown_semantic)
    else:

        def open_vocabulary():
            original = _ref(session, sample_images[0])
            edited = session.edit(original, [EditInstruction("conformance-arbitrary-fragment")], params)
            session.classify(edited)
            return ""

        check("open-vocabulary-edit", open_vocabulary)

    return ConformanceReport(tuple(checks))
