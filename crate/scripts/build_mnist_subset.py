#!/usr/bin/env python3
"""Build a 10,000-image MNIST subset in IDX format.

The source is the `mnist` npm package (v1.1.0), which ships 10,000 MNIST
digits as per-class JSON arrays of pixel intensities scaled to [0, 1] and
rounded to three decimals. Intensities are mapped back to bytes with
round(v * 255). Each class is shuffled with a fixed seed and split 80/20
into train/test, then both sets are shuffled again.

Usage:
    npm pack mnist@1.1.0
    python3 scripts/build_mnist_subset.py mnist-1.1.0.tgz data/mnist
"""
import json
import random
import struct
import sys
import tarfile
from pathlib import Path

SIDE = 28
PIXELS = SIDE * SIDE
SEED = 20200101
TRAIN_FRACTION = 0.8


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), SIDE, SIDE))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def main():
    tgz, out = sys.argv[1], Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(SEED)
    train, test = [], []
    with tarfile.open(tgz) as tar:
        for digit in range(10):
            raw = json.load(tar.extractfile(f"package/src/digits/{digit}.json"))["data"]
            count = len(raw) // PIXELS
            samples = [
                [min(255, max(0, round(v * 255))) for v in raw[i * PIXELS:(i + 1) * PIXELS]]
                for i in range(count)
            ]
            rng.shuffle(samples)
            cut = int(count * TRAIN_FRACTION)
            train += [(s, digit) for s in samples[:cut]]
            test += [(s, digit) for s in samples[cut:]]
    rng.shuffle(train)
    rng.shuffle(test)
    write_images(out / "train-images-idx3-ubyte", [s for s, _ in train])
    write_labels(out / "train-labels-idx1-ubyte", [d for _, d in train])
    write_images(out / "t10k-images-idx3-ubyte", [s for s, _ in test])
    write_labels(out / "t10k-labels-idx1-ubyte", [d for _, d in test])
    print(f"train={len(train)} test={len(test)}")


if __name__ == "__main__":
    main()
