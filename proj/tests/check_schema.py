"""Validate lesionlens reports against the shipped JSON schema.

Usage: check_schema.py <lesionlens-binary> <report.schema.json>

Builds a small synthetic input set, runs `analyze` in several configurations
and validates every report. Exits nonzero on the first violation.
"""

import json
import math
import struct
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema


def write_ppm(path, size, radius):
    rows = []
    c = (size - 1) / 2
    for r in range(size):
        for col in range(size):
            d = math.hypot(r - c, col - c)
            if d <= radius * 0.6:
                rows.append(bytes((70, 40, 30)))
            elif d <= radius:
                rows.append(bytes((120, 80, 50)))
            else:
                rows.append(bytes((225, 190, 170)))
    path.write_bytes(b"P6\n%d %d\n255\n" % (size, size) + b"".join(rows))


def write_mnt(path, dims, values):
    assert len(values) == math.prod(dims)
    header = b"MNT1" + bytes((1, len(dims))) + struct.pack("<%dI" % len(dims), *dims)
    path.write_bytes(header + struct.pack("<%df" % len(values), *values))


def run(cli, *args):
    proc = subprocess.run([cli, *map(str, args)], capture_output=True, text=True)
    if proc.returncode != 0:
        sys.exit("lesionlens %s failed (%d): %s" % (" ".join(map(str, args)), proc.returncode, proc.stderr))
    return proc.stdout


def main():
    cli, schema_path = sys.argv[1], sys.argv[2]
    schema = json.loads(Path(schema_path).read_text())
    jsonschema.Draft202012Validator.check_schema(schema)
    validator = jsonschema.Draft202012Validator(schema)

    with tempfile.TemporaryDirectory() as tmp:
        d = Path(tmp)
        write_ppm(d / "lesion.ppm", 64, 20)

        acts, grads = [], []
        for k in range(2):
            for r in range(8):
                for c in range(8):
                    acts.append(1.0 / (1.0 + (r - 3.5) ** 2 + (c - 3.5) ** 2) + 0.1 * k)
                    grads.append(0.5 - 0.2 * k + 0.01 * (r + c))
        write_mnt(d / "acts.mnt", [2, 8, 8], acts)
        write_mnt(d / "grads.mnt", [2, 8, 8], grads)

        probs = []
        for t in range(5):
            row = [1.0 + ((t * 3 + c * 5) % 7) for c in range(8)]
            s = sum(row)
            probs.extend(v / s for v in row)
        write_mnt(d / "mc.mnt", [5, 8], probs)

        pos = [3.0 + 0.1 * ((i * 7 + j) % 5) if j == 0 else 0.1 * ((i + j) % 3) for i in range(20) for j in range(4)]
        neg = [-3.0 + 0.1 * ((i * 3 + j) % 5) if j == 0 else 0.1 * ((i * 2 + j) % 3) for i in range(20) for j in range(4)]
        write_mnt(d / "pos.mnt", [20, 4], pos)
        write_mnt(d / "neg.mnt", [20, 4], neg)
        run(cli, "cav-train", "--positives", d / "pos.mnt", "--negatives", d / "neg.mnt",
            "--name", "dark_center", "--cav-out", d / "dark_center.mnt")
        write_mnt(d / "feats.mnt", [6, 4], [0.05 * (i + j) for i in range(6) for j in range(4)])
        write_mnt(d / "head.mnt", [8, 5], [0.1 * ((c * 5 + j) % 7) - 0.3 for c in range(8) for j in range(5)])

        image = ["--image", d / "lesion.ppm"]
        attention = ["--activations", d / "acts.mnt", "--gradients", d / "grads.mnt", "--class-index", "2"]
        concepts = ["--features", d / "feats.mnt", "--head", d / "head.mnt", "--cav", d / "dark_center.mnt"]
        cases = {
            "image only": image,
            "attention": image + attention,
            "uncertainty": image + ["--mc-samples", d / "mc.mnt", "--threshold", "0.9"],
            "concepts": image + concepts,
            "full": image + attention + ["--mc-samples", d / "mc.mnt"] + concepts
                    + ["--overlay-dir", d / "overlays"],
            "max asymmetry": image + ["--asymmetry-agg", "max", "--seed", "7"],
        }
        failures = 0
        for name, args in cases.items():
            report = json.loads(run(cli, "analyze", *args))
            errors = sorted(validator.iter_errors(report), key=lambda e: list(e.path))
            for e in errors:
                print("%s: %s at %s" % (name, e.message, "/".join(map(str, e.path))))
            failures += len(errors)
            print("%s: %s" % (name, "valid" if not errors else "INVALID"))
        broken = json.loads(run(cli, "analyze", *image))
        broken["abcde"]["risk"] = "extreme"
        del broken["config"]
        if validator.is_valid(broken):
            print("schema accepted a malformed report")
            failures += 1
        if failures:
            sys.exit(1)


if __name__ == "__main__":
    main()
