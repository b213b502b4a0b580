#!/usr/bin/env python3
"""Build a 10000-digit MNIST subset in IDX format from the npm `mnist` package.

The package stores genuine MNIST digits as JSON arrays of 784 intensities in
[0, 1] rounded to three decimals; round(v * 255) recovers the original byte.

    python3 scripts/mnist_subset_from_npm.py                # fetches via npm
    python3 scripts/mnist_subset_from_npm.py --src DIR      # DIR/0.json ... 9.json
"""

import argparse
import json
import struct
import subprocess
import tarfile
import tempfile
from pathlib import Path

import numpy as np

PACKAGE = "mnist@1.1.0"


def fetch(tmp: Path) -> Path:
    out = subprocess.run(
        ["npm", "pack", PACKAGE, "--silent"], cwd=tmp, check=True, capture_output=True, text=True
    )
    with tarfile.open(tmp / out.stdout.strip().splitlines()[-1]) as tar:
        tar.extractall(tmp, filter="data")
    return tmp / "package" / "src" / "digits"


def load(src: Path):
    images, labels = [], []
    for digit in range(10):
        flat = np.asarray(json.loads((src / f"{digit}.json").read_text())["data"], dtype=np.float64)
        if flat.size % 784:
            raise SystemExit(f"{digit}.json: {flat.size} values is not a multiple of 784")
        block = np.rint(flat.reshape(-1, 784) * 255).clip(0, 255).astype(np.uint8)
        images.append(block)
        labels.append(np.full(len(block), digit, dtype=np.uint8))
    return np.concatenate(images), np.concatenate(labels)


def write_images(path: Path, images: np.ndarray):
    path.write_bytes(struct.pack(">IIII", 0x803, len(images), 28, 28) + images.tobytes())


def write_labels(path: Path, labels: np.ndarray):
    path.write_bytes(struct.pack(">II", 0x801, len(labels)) + labels.tobytes())


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--src", type=Path, help="directory holding 0.json ... 9.json")
    ap.add_argument("--out", type=Path, default=Path("data/mnist-subset"))
    ap.add_argument("--test", type=int, default=2000, help="digits held out as t10k")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        src = args.src or fetch(Path(tmp))
        images, labels = load(src)

    order = np.random.default_rng(args.seed).permutation(len(images))
    images, labels = images[order], labels[order]
    n_train = len(images) - args.test
    args.out.mkdir(parents=True, exist_ok=True)
    write_images(args.out / "train-images-idx3-ubyte", images[:n_train])
    write_labels(args.out / "train-labels-idx1-ubyte", labels[:n_train])
    write_images(args.out / "t10k-images-idx3-ubyte", images[n_train:])
    write_labels(args.out / "t10k-labels-idx1-ubyte", labels[n_train:])
    print(f"{args.out}: {n_train} train, {len(images) - n_train} test")


if __name__ == "__main__":
    main()
