"""Self-contained conformance selftest against any wire-protocol endpoint.

Speaks raw HTTP so it can vet third-party adapters without importing their
code (or anything else): handshake shape, classify determinism, exact identity
edits, original immutability, edit determinism, error codes, batch ordering,
and the probability contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import requests

from .server import PROTOCOL_VERSION

_PARAMS = {"edit_threshold": 0.75, "skipped_steps": 25, "seed": 99}


@dataclass(frozen=True)
class SelftestCheck:
    name: str
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class SelftestReport:
    endpoint: str
    checks: tuple[SelftestCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = [f"selftest against {self.endpoint}:"]
        for c in self.checks:
            lines.append(f"  {'PASS' if c.passed else 'FAIL'} {c.name}" + (f" ({c.detail})" if c.detail else ""))
        lines.append("RESULT: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def _post(endpoint: str, path: str, body, timeout: float = 10.0):
    response = requests.post(endpoint.rstrip("/") + path, json=body, timeout=timeout)
    return response.json()


def conformance_selftest(endpoint: str, *, image_id: str = "stub-0000", timeout: float = 10.0) -> SelftestReport:
    checks: list[SelftestCheck] = []

    def check(name, fn):
        try:
            detail = fn()
            checks.append(SelftestCheck(name, True, detail or ""))
        except Exception as exc:
            checks.append(SelftestCheck(name, False, f"{type(exc).__name__}: {exc}"))

    state = {}

    def handshake():
        body = _post(endpoint, "/v1/handshake", {}, timeout)
        if body.get("protocol") != PROTOCOL_VERSION:
            raise AssertionError(f"protocol {body.get('protocol')!r}, expected {PROTOCOL_VERSION!r}")
        if not body.get("labels"):
            raise AssertionError("no labels announced")
        if body.get("value_space") not in ("logit", "probability"):
            raise AssertionError(f"bad value_space {body.get('value_space')!r}")
        state["labels"] = body["labels"]
        state["value_space"] = body["value_space"]
        return f"labels={body['labels']} value_space={body['value_space']}"

    check("handshake", handshake)

    def classify(target: str):
        body = _post(endpoint, "/v1/classify", {"request_id": "st", "image_id": target}, timeout)
        if "error" in body:
            raise AssertionError(f"classify error: {body['error']}")
        return body["values"]

    def edit(target: str, semantics):
        body = _post(
            endpoint,
            "/v1/edit",
            {"request_id": "st", "image_id": target, "semantics": semantics, "params": _PARAMS},
            timeout,
        )
        if "error" in body:
            raise AssertionError(f"edit error: {body['error']}")
        return body["edited_image_id"]

    def classify_deterministic():
        if classify(image_id) != classify(image_id):
            raise AssertionError("classify is not deterministic")
        return ""

    check("classify-deterministic", classify_deterministic)

    def identity_edit():
        before = classify(image_id)
        copied = edit(image_id, [])
        untouched = classify(image_id)
        after = classify(copied)
        if before != untouched:
            raise AssertionError("identity edit mutated the original image")
        if before != after:
            raise AssertionError("identity edit changed the classification")
        return ""

    check("identity-edit", identity_edit)

    def original_immutable():
        before = classify(image_id)
        edit(image_id, [{"prompt_fragment": "selftest semantic", "guidance": "add"}])
        if classify(image_id) != before:
            raise AssertionError("a real edit mutated the original image")
        return ""

    check("original-immutable", original_immutable)

    def edit_deterministic():
        semantics = [{"prompt_fragment": "selftest semantic", "guidance": "add"}]
        first = edit(image_id, semantics)
        second = edit(image_id, semantics)
        if first != second or classify(first) != classify(second):
            raise AssertionError("repeated identical edits disagree")
        if classify(first) == classify(image_id):
            raise AssertionError("edit had no effect at all")
        return ""

    check("edit-deterministic", edit_deterministic)

    def unknown_image():
        body = _post(endpoint, "/v1/classify", {"request_id": "st", "image_id": "selftest-no-such"}, timeout)
        code = body.get("error", {}).get("code")
        if code != "unknown_image":
            raise AssertionError(f"expected unknown_image, got {code!r}")
        return ""

    check("unknown-image-code", unknown_image)

    def bad_params_code():
        body = _post(
            endpoint,
            "/v1/edit",
            {"request_id": "st", "image_id": image_id, "semantics": [],
             "params": {"edit_threshold": 2.0, "seed": 1}},
            timeout,
        )
        code = body.get("error", {}).get("code")
        if code != "bad_params":
            raise AssertionError(f"expected bad_params, got {code!r}")
        return ""

    check("bad-params-code", bad_params_code)

    def batch_order():
        batch = [
            {"request_id": "b1", "image_id": image_id},
            {"request_id": "b2", "image_id": "selftest-no-such"},
            {"request_id": "b3", "image_id": image_id},
        ]
        results = _post(endpoint, "/v1/classify_batch", batch, timeout)
        if [r.get("request_id") for r in results] != ["b1", "b2", "b3"]:
            raise AssertionError("batch results out of order")
        if results[1].get("error", {}).get("code") != "unknown_image":
            raise AssertionError("batch error code missing")
        return ""

    check("batch-order", batch_order)

    def value_space_contract():
        values = classify(image_id)
        if state.get("value_space") == "probability":
            if any(not 0.0 <= v <= 1.0 for v in values):
                raise AssertionError("probability out of range")
            if abs(math.fsum(values) - 1.0) > 1e-6:
                raise AssertionError("probabilities do not sum to 1")
        if any(not math.isfinite(v) for v in values):
            raise AssertionError("non-finite value")
        return ""

    check("value-space", value_space_contract)

    return SelftestReport(endpoint=endpoint, checks=tuple(checks))
