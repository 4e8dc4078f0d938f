#!/usr/bin/env python3
"""Materialize the UCI classification datasets as CSV files under data/.

Usage: python3 scripts/fetch_datasets.py [--out data]

Each dataset is looked up in this order:
  1. the UCI archive (needs network access to archive.ics.uci.edu),
  2. copies redistributed inside published packages:
     - Mushroom: `xgboost/demo/binary_classification/agaricus-lepiota.data`
       in the `xgboost-sys` crate source (found in CARGO_HOME),
     - Adult: `pytorch_widedeep/datasets/data/adult.parquet.brotli`
       in the `pytorch-widedeep` wheel (downloaded with pip).
Shuttle and Magic are only fetched from UCI.

The CSV files carry a header row. Column types and the label column live in
the `<name>.schema.toml` sidecars next to them.
"""
import argparse
import csv
import glob
import io
import os
import subprocess
import sys
import tempfile
import urllib.request
import zipfile

UCI = "https://archive.ics.uci.edu/ml/machine-learning-databases"

MUSHROOM_COLS = [
    "class", "cap-shape", "cap-surface", "cap-color", "bruises", "odor",
    "gill-attachment", "gill-spacing", "gill-size", "gill-color",
    "stalk-shape", "stalk-root", "stalk-surface-above-ring",
    "stalk-surface-below-ring", "stalk-color-above-ring",
    "stalk-color-below-ring", "veil-type", "veil-color", "ring-number",
    "ring-type", "spore-print-color", "population", "habitat",
]
ADULT_COLS = [
    "age", "workclass", "fnlwgt", "education", "education-num",
    "marital-status", "occupation", "relationship", "race", "sex",
    "capital-gain", "capital-loss", "hours-per-week", "native-country",
    "income",
]
SHUTTLE_COLS = [f"a{i}" for i in range(1, 10)] + ["class"]
MAGIC_COLS = [
    "fLength", "fWidth", "fSize", "fConc", "fConc1", "fAsym", "fM3Long",
    "fM3Trans", "fAlpha", "fDist", "class",
]


def http_get(url, timeout=20):
    with urllib.request.urlopen(url, timeout=timeout) as r:
        return r.read()


def write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)
    print(f"wrote {path}: {len(rows)} rows")


def parse_plain(text, sep=","):
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("|"):
            continue
        parts = [p.strip() for p in (line.split(sep) if sep else line.split())]
        rows.append(parts)
    return rows


def mushroom(out):
    try:
        text = http_get(f"{UCI}/mushroom/agaricus-lepiota.data").decode()
    except Exception:
        cargo_home = os.environ.get("CARGO_HOME", os.path.expanduser("~/.cargo"))
        hits = glob.glob(os.path.join(
            cargo_home, "registry/src/*/xgboost-sys-*/xgboost/demo/"
            "binary_classification/agaricus-lepiota.data"))
        if not hits:
            print("mushroom: not found (try `cargo fetch` of xgboost-sys)", file=sys.stderr)
            return
        text = open(hits[0]).read()
    rows = parse_plain(text)
    write_csv(os.path.join(out, "mushroom.csv"), MUSHROOM_COLS, rows)


def adult(out):
    rows = []
    try:
        for name, skip in (("adult.data", 0), ("adult.test", 1)):
            text = http_get(f"{UCI}/adult/{name}").decode()
            for r in parse_plain(text)[skip:]:
                r[-1] = r[-1].rstrip(".")
                rows.append(r)
    except Exception:
        rows = []
        import pandas as pd
        with tempfile.TemporaryDirectory() as tmp:
            subprocess.run([sys.executable, "-m", "pip", "download", "--no-deps",
                            "pytorch-widedeep", "-d", tmp], check=True,
                           capture_output=True)
            whl = glob.glob(os.path.join(tmp, "*.whl"))[0]
            blob = zipfile.ZipFile(whl).read(
                "pytorch_widedeep/datasets/data/adult.parquet.brotli")
            df = pd.read_parquet(io.BytesIO(blob))
        for rec in df.itertuples(index=False):
            rows.append([str(v).strip() for v in rec])
    write_csv(os.path.join(out, "adult.csv"), ADULT_COLS, rows)


def shuttle(out):
    try:
        rows = []
        for name in ("shuttle.trn.Z", "shuttle.tst"):
            raw = http_get(f"{UCI}/statlog/shuttle/{name}")
            if name.endswith(".Z"):
                raw = subprocess.run(["uncompress", "-c"], input=raw,
                                     capture_output=True, check=True).stdout
            rows += parse_plain(raw.decode(), sep=None)
        write_csv(os.path.join(out, "shuttle.csv"), SHUTTLE_COLS, rows)
    except Exception as e:
        print(f"shuttle: unavailable ({e})", file=sys.stderr)


def magic(out):
    try:
        text = http_get(f"{UCI}/magic/magic04.data").decode()
        write_csv(os.path.join(out, "magic.csv"), MAGIC_COLS, parse_plain(text))
    except Exception as e:
        print(f"magic: unavailable ({e})", file=sys.stderr)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    for f in (mushroom, adult, shuttle, magic):
        f(args.out)


if __name__ == "__main__":
    main()
