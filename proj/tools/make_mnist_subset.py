#!/usr/bin/env python3
"""Write a small MNIST subset as IDX files.

Source is the 5000-image MNIST sample shipped inside the mlxtend wheel
(mlxtend/data/data/mnist_5k.csv.gz, 784 pixel columns then the label).
The rows are shuffled with a fixed seed and split into train/test files
that use the standard MNIST file names, so the C++ loader treats them
exactly like the full dataset.

    pip download mlxtend --no-deps -d /tmp/mlx
    python3 tools/make_mnist_subset.py /tmp/mlx/mlxtend-*.whl data/mnist
"""
import argparse
import gzip
import pathlib
import random
import struct
import zipfile

MEMBER = "mlxtend/data/data/mnist_5k.csv.gz"


def read_rows(source: pathlib.Path):
    if source.suffix == ".whl":
        raw = zipfile.ZipFile(source).read(MEMBER)
    else:
        raw = source.read_bytes()
    text = gzip.decompress(raw).decode()
    rows = []
    for line in text.strip().splitlines():
        values = [int(float(v)) for v in line.split(",")]
        rows.append((values[:-1], values[-1]))
    return rows


def write_idx(out: pathlib.Path, prefix: str, rows):
    with open(out / f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">iiii", 2051, len(rows), 28, 28))
        for pixels, _ in rows:
            f.write(bytes(pixels))
    with open(out / f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">ii", 2049, len(rows)))
        f.write(bytes(label for _, label in rows))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("source", type=pathlib.Path, help="mlxtend wheel or mnist_5k.csv.gz")
    parser.add_argument("out", type=pathlib.Path)
    parser.add_argument("--test", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=20191019)
    args = parser.parse_args()

    rows = read_rows(args.source)
    random.Random(args.seed).shuffle(rows)
    args.out.mkdir(parents=True, exist_ok=True)
    write_idx(args.out, "train", rows[args.test:])
    write_idx(args.out, "t10k", rows[: args.test])
    print(f"wrote {len(rows) - args.test} train / {args.test} test images to {args.out}")


if __name__ == "__main__":
    main()
