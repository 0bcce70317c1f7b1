#!/usr/bin/env python3
"""Write a class-balanced MNIST subset as IDX files.

Source: the `mnist` npm package (MIT), which ships 10k MNIST digits as JSON
arrays of pixel intensities normalized to [0, 1] with three decimals. The
original bytes are recovered exactly by round(v * 255).

    npm pack mnist && tar xzf mnist-*.tgz
    python3 tools/make_mnist_subset.py package/src/digits data/mnist
"""
import json
import struct
import sys
from pathlib import Path

PIXELS = 28 * 28


def write_idx(out_dir, stem, images, labels):
    with open(out_dir / f"{stem}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))
    with open(out_dir / f"{stem}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(bytes(labels))


def main():
    digits_dir = Path(sys.argv[1])
    out_dir = Path(sys.argv[2])
    train_per_class = int(sys.argv[3]) if len(sys.argv) > 3 else 200
    val_per_class = int(sys.argv[4]) if len(sys.argv) > 4 else 100
    out_dir.mkdir(parents=True, exist_ok=True)

    per_digit = []
    for d in range(10):
        raw = json.loads((digits_dir / f"{d}.json").read_text())["data"]
        count = len(raw) // PIXELS
        per_digit.append([[round(v * 255) for v in raw[i * PIXELS:(i + 1) * PIXELS]]
                          for i in range(count)])

    def take(start, per_class):
        images, labels = [], []
        for i in range(per_class * 10):
            d, j = i % 10, start + i // 10
            images.append(per_digit[d][j])
            labels.append(d)
        return images, labels

    write_idx(out_dir, "train", *take(0, train_per_class))
    write_idx(out_dir, "val", *take(train_per_class, val_per_class))


if __name__ == "__main__":
    main()
