#!/usr/bin/env python3
"""Independent brute-force scorer for synthetic-world fixtures.

Deliberately self-contained: reads the corpus and world JSON directly and
recomputes every candidate score with plain loops, so the committed golden
files never depend on the library under test. Enumerates every semantic path
plus every unordered pair (canonical pre-order), scores each over all world
images, and writes the ranking golden file.

Usage:
    python3 tools/golden_oracle.py tests/data/wildcat_toy_corpus.json \
        tests/data/wildcat_toy_world.json tests/data/wildcat_toy_golden.json
"""

import itertools
import json
import math
import sys


def walk(nodes, prefix):
    """Pre-order (path, fragment, guidance) triples for a corpus subtree."""
    out = []
    for node in nodes:
        path = prefix + [node["label"]]
        out.append((path, node.get("prompt_fragment", node["label"]), node.get("guidance", "add")))
        out.extend(walk(node.get("children", []), path))
    return out


def apply_edits(vector, features, effects, semantics):
    values = list(vector)
    for fragment, guidance in semantics:
        effect = effects[fragment]
        index = features.index(effect["feature"])
        op = effect.get("op", "add")
        if op == "add":
            values[index] += effect["value"] if guidance == "add" else -effect["value"]
        else:
            values[index] = effect["value"] if guidance == "add" else 0.0
    return values


def classify(world, vector, target):
    labels = world["class_labels"]
    score = sum(w * x for w, x in zip(world["weights"], vector)) + world.get("bias", 0.0)
    link = world.get("link", "identity")
    if link == "identity":
        values = [score] if len(labels) == 1 else [-score, score]
    elif link == "sigmoid":
        p = 1.0 / (1.0 + math.exp(-score))
        values = [1.0 - p, p]
    else:
        raise SystemExit("softmax worlds are not used by the committed goldens")
    return values[labels.index(target)]


def main(corpus_path, world_path, out_path):
    corpus = json.loads(open(corpus_path, encoding="utf-8").read())
    world = json.loads(open(world_path, encoding="utf-8").read())
    target = world["class_labels"][-1] if world.get("link") == "sigmoid" else world["class_labels"][0]
    features = world["feature_names"]
    effects = world["effects"]
    image_ids = sorted(world["images"])

    paths = walk(corpus["roots"], [])
    candidates = [[p] for p in paths]
    candidates += [list(pair) for pair in itertools.combinations(paths, 2)]

    rows = []
    for members in candidates:
        semantics = [(fragment, guidance) for _, fragment, guidance in members]
        per_image = []
        for image_id in image_ids:
            original = classify(world, world["images"][image_id], target)
            edited_vec = apply_edits(world["images"][image_id], features, effects, semantics)
            edited = classify(world, edited_vec, target)
            per_image.append((image_id, original, edited))
        n = len(per_image)
        rows.append(
            {
                "display": " + ".join(" > ".join(path) for path, _, _ in members),
                "paths": [list(path) for path, _, _ in members],
                "mean_edited_score": sum(e for _, _, e in per_image) / n,
                "mean_signed_delta": sum(e - o for _, o, e in per_image) / n,
                "mean_abs_delta": sum(abs(e - o) for _, o, e in per_image) / n,
                "n": n,
            }
        )

    # Same total order as the engine: score descending, then path tuples.
    rows.sort(key=lambda r: (-r["mean_signed_delta"], tuple(tuple(p) for p in r["paths"])))
    golden = {
        "corpus": corpus_path.split("/")[-1],
        "world": world_path.split("/")[-1],
        "target_class": target,
        "image_ids": image_ids,
        "rank_key": "mean_signed_delta",
        "rows": rows,
    }
    with open(out_path, "w", encoding="utf-8") as handle:
        json.dump(golden, handle, indent=2)
        handle.write("\n")
    print(f"wrote {out_path}: {len(rows)} candidates")


if __name__ == "__main__":
    main(*sys.argv[1:4])
