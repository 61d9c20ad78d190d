"""Runs every subcommand of the command-line tool and validates its JSON
against the shipped schemas and its CSV against the documented headers."""

import csv
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema

TOOL, ROOT = Path(sys.argv[1]), Path(sys.argv[2])
SCHEMAS = ROOT / "schemas"
CONFIGS = ROOT / "configs"

HEADERS = {
    "spectrum.csv": ["lambda", "interval_lo", "interval_hi", "multiplicity"],
    "evans.csv": ["lambda", "E", "m_plus", "m_minus"],
    "branch.csv": ["lambda", "amplitude", "residual"],
}

RUNS = [
    ["spectrum", "example10.toml", "--lambda", "0", "--lambda", "0.4"],
    ["spectrum", "example9_diag2.toml", "--range", "-0.5", "0.5", "--count", "3"],
    ["evans", "example10.toml", "--interval", "-0.5", "0.5", "--grid", "21"],
    ["parity", "example10.toml", "--interval", "-0.5", "0.5", "--grid", "21", "--split", "0.2", "--index", "0"],
    ["bifurcate", "example9_square.toml", "--interval", "-0.5", "0.5", "--grid", "21"],
    ["bifurcate", "saddle.toml", "--interval", "-0.5", "0.5", "--grid", "11"],
    ["branch", "example10.toml", "--lambda-star", "0", "--stop", "0.2"],
]

SCHEMA_FOR = {
    "spectrum.json": "spectrum.schema.json",
    "evans.json": "evans.schema.json",
    "parity.json": "parity.schema.json",
    "bifurcations.json": "bifurcations.schema.json",
    "branch_solutions.json": "branch_solutions.schema.json",
    "manifest.json": "manifest.schema.json",
}


def check_dir(out: Path) -> int:
    checked = 0
    for f in sorted(out.iterdir()):
        if f.name in SCHEMA_FOR:
            schema = json.loads((SCHEMAS / SCHEMA_FOR[f.name]).read_text())
            jsonschema.validate(json.loads(f.read_text(encoding="utf-8")), schema)
            checked += 1
        elif f.name in HEADERS:
            raw = f.read_bytes()
            assert b"\r" not in raw, f"{f}: CRLF line ending"
            rows = list(csv.reader(raw.decode().splitlines()))
            assert rows[0] == HEADERS[f.name], f"{f}: header {rows[0]}"
            for row in rows[1:]:
                assert len(row) == len(HEADERS[f.name]), f"{f}: row {row}"
                [float(x) for x in row]
            checked += 1
    return checked


def main() -> int:
    total = 0
    with tempfile.TemporaryDirectory() as tmp:
        for i, run in enumerate(RUNS):
            out = Path(tmp) / str(i)
            cmd = [str(TOOL), run[0], str(CONFIGS / run[1]), *run[2:], "--out", str(out)]
            res = subprocess.run(cmd, capture_output=True, text=True)
            if res.returncode != 0:
                print("FAILED:", " ".join(cmd), res.stderr, sep="\n")
                return 1
            total += check_dir(out)
    print(f"validated {total} output files")
    return 0


if __name__ == "__main__":
    sys.exit(main())
