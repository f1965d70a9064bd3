#!/usr/bin/env python3
"""Download the four MNIST IDX files.

Usage: fetch_mnist.py [--dest DIR]

Default destination is ~/data/mnist (the engine's default data root).
Set BNN_DATA_DIR or pass --data-dir to the CLI to point somewhere else.
"""

import argparse
import gzip
import struct
import sys
import urllib.request
from pathlib import Path

FILES = [
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
]

MIRRORS = [
    "https://ossci-datasets.s3.amazonaws.com/mnist/",
    "https://storage.googleapis.com/cvdf-datasets/mnist/",
    "https://raw.githubusercontent.com/fgnt/mnist/master/",
]

EXPECTED_MAGIC = {"idx3": 2051, "idx1": 2049}


def check(path: Path) -> bool:
    try:
        with gzip.open(path, "rb") as f:
            magic, count = struct.unpack(">II", f.read(8))
    except OSError:
        return False
    kind = "idx3" if "idx3" in path.name else "idx1"
    return magic == EXPECTED_MAGIC[kind] and count in (60000, 10000)


def fetch(name: str, dest: Path) -> bool:
    target = dest / name
    if target.exists() and check(target):
        print(f"{name}: already present")
        return True
    for mirror in MIRRORS:
        url = mirror + name
        try:
            print(f"{name}: fetching {url}")
            urllib.request.urlretrieve(url, target)
            if check(target):
                return True
            print(f"{name}: bad payload from {mirror}, trying next mirror")
            target.unlink(missing_ok=True)
        except OSError as e:
            print(f"{name}: {e}")
    return False


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--dest", type=Path, default=Path.home() / "data" / "mnist", help="output directory"
    )
    args = parser.parse_args()
    args.dest.mkdir(parents=True, exist_ok=True)
    ok = all(fetch(name, args.dest) for name in FILES)
    if ok:
        print(f"MNIST ready in {args.dest}")
        return 0
    print("some files could not be fetched", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
