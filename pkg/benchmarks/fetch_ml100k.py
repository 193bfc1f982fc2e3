"""Materialize MovieLens-100K ``u.data`` (user<TAB>item<TAB>rating<TAB>timestamp).

Sources tried in order:
  1. an existing file at the target path;
  2. the official GroupLens zip;
  3. the copy bundled in the ``pytorch-widedeep`` wheel, fetched with
     ``pip download`` (works behind a package-only mirror).

The data is under the GroupLens license and is not redistributed with this
repository.

    python benchmarks/fetch_ml100k.py [target]
"""
from __future__ import annotations

import glob
import io
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path

DEFAULT_TARGET = Path(__file__).resolve().parents[1] / "data" / "ml-100k" / "u.data"
GROUPLENS_URL = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
WIDEDEEP_MEMBER = "pytorch_widedeep/datasets/data/MovieLens100k_data.parquet.brotli"


def _from_grouplens() -> bytes:
    with urllib.request.urlopen(GROUPLENS_URL, timeout=20) as resp:
        archive = zipfile.ZipFile(io.BytesIO(resp.read()))
    return archive.read("ml-100k/u.data")


def _from_widedeep() -> bytes:
    import pandas as pd

    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "--no-deps", "-q", "-d", tmp,
             "pytorch-widedeep==1.7.0"],
            check=True,
        )
        wheel = glob.glob(f"{tmp}/pytorch_widedeep-*.whl")[0]
        raw = zipfile.ZipFile(wheel).read(WIDEDEEP_MEMBER)
    df = pd.read_parquet(io.BytesIO(raw))
    cols = ["user_id", "movie_id", "rating", "timestamp"]
    return df[cols].to_csv(sep="\t", header=False, index=False).encode()


def fetch(target: Path = DEFAULT_TARGET) -> Path:
    target = Path(target)
    if target.exists():
        return target
    errors = []
    for source in (_from_grouplens, _from_widedeep):
        try:
            payload = source()
        except Exception as exc:  # noqa: BLE001
            errors.append(f"{source.__name__}: {exc}")
            continue
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(payload)
        return target
    raise RuntimeError("could not obtain MovieLens-100K:\n  " + "\n  ".join(errors))


if __name__ == "__main__":
    out = fetch(Path(sys.argv[1]) if len(sys.argv) > 1 else DEFAULT_TARGET)
    print(out)
