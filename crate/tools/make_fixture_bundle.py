#!/usr/bin/env python3
"""Writes the checked-in trace-bundle fixtures used by the Rust reader's
conformance tests.

Standard library only, so it runs anywhere the harness does. The layout
mirrors what the extraction harness emits: one bundle per capture kind,
each a directory with manifest.json, activations/*.bin and records/*.jsonl.
Every value is exactly representable in float32 and prints identically in
Python and Rust, so readers can be checked bit for bit.

Usage: python3 tools/make_fixture_bundle.py [OUT_DIR]
"""

import json
import math
import re
import struct
import sys
from pathlib import Path

MAGIC = b"LMCT"
TENSOR_VERSION = 1
DTYPE_F32 = 0
BUNDLE_VERSION = 1

MODEL = "fixture-tiny-4L"
CORPUS = "medmap-corpus"
N_LAYERS = 4
HIDDEN = 8


def tensor_bytes(shape, values):
    out = bytearray(MAGIC)
    out += struct.pack("<I", TENSOR_VERSION)
    out += struct.pack("<BB", DTYPE_F32, len(shape))
    for d in shape:
        out += struct.pack("<Q", d)
    for v in values:
        out += struct.pack("<f", v)
    return bytes(out)


def file_stem(index, prompt_id):
    clean = re.sub(r"[^A-Za-z0-9_.-]", "_", prompt_id)
    return f"{index:05d}_{clean}"


def activation_value(prompt, row, col):
    # Multiples of 1/8 in [-8, 8): exact in float32.
    return ((prompt * 37 + row * HIDDEN + col) % 128 - 64) / 8.0


def write_manifest(root, kind, records):
    manifest = {
        "format_version": BUNDLE_VERSION,
        "model_name": MODEL,
        "n_layers": N_LAYERS,
        "hidden_dim": HIDDEN,
        "corpus_id": CORPUS,
        "capture_kind": kind,
        "capture_position": "last_token",
        "records": records,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def write_jsonl(root, name, rows):
    (root / "records").mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(r, separators=(",", ":"), ensure_ascii=False) for r in rows]
    (root / "records" / f"{name}.jsonl").write_text("".join(l + "\n" for l in lines))
    return {"file": f"records/{name}.jsonl"}


def activations(root):
    ids = ["symptoms-umap-0000", "symptoms-umap-0001", "symptoms-umap-0002", "symptoms-umap-nan"]
    (root / "activations").mkdir(parents=True, exist_ok=True)
    refs = []
    for p, pid in enumerate(ids):
        values = [activation_value(p, r, c) for r in range(N_LAYERS + 1) for c in range(HIDDEN)]
        degenerate = pid.endswith("nan")
        if degenerate:
            values[HIDDEN + 3] = math.nan
        rel = f"activations/{file_stem(p, pid)}.bin"
        (root / rel).write_bytes(tensor_bytes([N_LAYERS + 1, HIDDEN], values))
        ref = {"id": pid, "file": rel}
        if degenerate:
            ref["degenerate"] = True
        refs.append(ref)
    write_manifest(root, "activations", refs)


def saliency(root):
    rows = [
        {"prompt_id": f"drugs-saliency-{i:04d}", "per_layer": [(i + 1) * (l + 1) / 16.0 for l in range(N_LAYERS)]}
        for i in range(3)
    ]
    write_manifest(root, "saliency", [write_jsonl(root, "saliency", rows)])


def lesions(root):
    rows = []
    for layer in range(N_LAYERS):
        row = {
            "prompt_id": "diseases-lesioning-0000",
            "layer": layer,
            "original_response": "Angina pectoris.",
            "lesioned_response": "Angina." if layer < 2 else "the the the",
        }
        if layer % 2 == 0:
            row["judge_score"] = 1 + 3 * layer
            row["judge_reply"] = f"Score: {1 + 3 * layer}/10"
        rows.append(row)
    write_manifest(root, "lesion_responses", [write_jsonl(root, "lesions", rows)])


def patches(root):
    rows = []
    for layer in range(N_LAYERS):
        for site in ("attention", "mlp"):
            rows.append(
                {
                    "pair_id": "symptoms-patching-0000",
                    "layer": layer,
                    "site": site,
                    "logit_clean_r": 12.5,
                    "logit_clean_rp": 4.25,
                    "logit_corrupt_r": 3.0,
                    "logit_corrupt_rp": 9.75,
                    "logit_patched_r": 3.0 + layer * 2.5 + (1.0 if site == "mlp" else 0.0),
                    "logit_patched_rp": 9.75 - layer * 0.5,
                }
            )
    write_manifest(root, "patch_logits", [write_jsonl(root, "patches", rows)])


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("crates/core/tests/fixtures/harness")
    for name, build in [
        ("activations", activations),
        ("saliency", saliency),
        ("lesion_responses", lesions),
        ("patch_logits", patches),
    ]:
        root = out / name
        root.mkdir(parents=True, exist_ok=True)
        build(root)
    print(f"wrote fixtures under {out}")


if __name__ == "__main__":
    main()
