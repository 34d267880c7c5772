"""Regenerate golden/*.json by running the rankbucket CLI.

Usage: python scripts/make_golden.py [path/to/rankbucket]
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
BIN = sys.argv[1] if len(sys.argv) > 1 else str(ROOT / "target/release/rankbucket")

E1 = [(3.0, None), (2.5, None), (2.0, 0.9), (1.0, None), (0.5, 0.6), (0.0, None)]
E2 = [(2.0, 0.6), (0.5, 0.9)]
E3 = [(0.0, 0.7), (1.0, None)]
ALL_NEG = [(1.0, None), (-0.5, None), (0.25, None)]
ALL_POS = [(1.0, 0.3), (0.5, 0.8), (-2.0, 0.5)]


def write_jsonl(path, pairs):
    with open(path, "w") as f:
        for s, iou in pairs:
            rec = {"score": s, "label": int(iou is not None)}
            if iou is not None:
                rec["iou"] = iou
            f.write(json.dumps(rec) + "\n")


def read_jsonl(path):
    pairs = []
    for line in open(path):
        rec = json.loads(line)
        if "meta" in rec:
            continue
        pairs.append((rec["score"], rec.get("iou")))
    return pairs


def eval_cli(path, kind, delta):
    out = subprocess.run(
        [BIN, "eval", "--loss", kind, "--delta", repr(delta), "--in", str(path)],
        check=True, capture_output=True, text=True,
    ).stdout
    return json.loads(out)


def case(tmp, name, pairs, kind, delta):
    src = Path(tmp) / f"{name}.jsonl"
    write_jsonl(src, pairs)
    doc = {
        "version": 1,
        "name": name,
        "kind": kind,
        "delta": delta,
        "scores": [s for s, _ in pairs],
        "labels": [int(i is not None) for _, i in pairs],
        "ious": [i for _, i in pairs],
        "expected": eval_cli(src, kind, delta),
    }
    out = ROOT / "golden" / f"{name}.json"
    out.write_text(json.dumps(doc, indent=1) + "\n")
    print("wrote", out.relative_to(ROOT))


def main():
    with tempfile.TemporaryDirectory() as tmp:
        gen = Path(tmp) / "gen.jsonl"
        subprocess.run(
            [BIN, "gen", "--num-logits", "300", "--positive-pct", "10", "--seed", "3", "--out", str(gen)],
            check=True,
        )
        synth = read_jsonl(gen)
        for kind in ["ap", "bap", "rs", "brs", "oracle-ap"]:
            case(tmp, f"e1_{kind.replace('-', '_')}", E1, kind, 0.0)
        for kind in ["rs", "brs", "oracle-rs"]:
            case(tmp, f"e2_{kind.replace('-', '_')}", E2, kind, 0.0)
        case(tmp, "e3_ap", E3, "ap", 0.0)
        case(tmp, "all_negative_ap", ALL_NEG, "ap", 0.5)
        case(tmp, "all_negative_brs", ALL_NEG, "brs", 0.5)
        case(tmp, "all_positive_ap", ALL_POS, "ap", 0.5)
        for kind in ["ap", "bap", "rs", "brs", "oracle-rs"]:
            case(tmp, f"synthetic_{kind.replace('-', '_')}", synth, kind, 0.5)
        for kind in ["ap", "bap", "rs", "brs"]:
            case(tmp, f"synthetic_d0_{kind}", synth, kind, 0.0)


if __name__ == "__main__":
    main()
