#!/usr/bin/env python3
"""Place MovieLens 100K ratings at data/ml-100k/u.data (tab separated).

Tries the GroupLens archive first. If that is unreachable, falls back to the
copy bundled in the pytorch-widedeep wheel, which needs pip, pandas and
pyarrow.
"""

import glob
import io
import pathlib
import subprocess
import sys
import tempfile
import urllib.request
import zipfile

URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
WHEEL = "pytorch-widedeep==1.7.0"
MEMBER = "pytorch_widedeep/datasets/data/MovieLens100k_data.parquet.brotli"

ROOT = pathlib.Path(__file__).resolve().parent.parent
TARGET = ROOT / "data" / "ml-100k" / "u.data"


def from_grouplens():
    with urllib.request.urlopen(URL, timeout=30) as resp:
        archive = zipfile.ZipFile(io.BytesIO(resp.read()))
    return archive.read("ml-100k/u.data")


def from_wheel():
    import pandas as pd

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-d", tmp, WHEEL],
            check=True,
        )
        wheel = zipfile.ZipFile(glob.glob(f"{tmp}/*.whl")[0])
        df = pd.read_parquet(io.BytesIO(wheel.read(MEMBER)))
    cols = ["user_id", "movie_id", "rating", "timestamp"]
    return df[cols].to_csv(sep="\t", header=False, index=False).encode()


def main():
    if TARGET.exists():
        print(f"{TARGET} already present")
        return
    try:
        data = from_grouplens()
    except Exception as err:
        print(f"GroupLens download failed ({err}); using the wheel copy", file=sys.stderr)
        data = from_wheel()
    TARGET.parent.mkdir(parents=True, exist_ok=True)
    TARGET.write_bytes(data)
    print(f"wrote {len(data.splitlines())} ratings to {TARGET}")


if __name__ == "__main__":
    main()
