#!/usr/bin/env python3
"""Build a desk-scale MNIST subset in IDX format.

The npm package `mnist` ships 10 000 genuine MNIST digits as JSON
(pixels pre-scaled to [0, 1] and rounded to three decimals). This script
fetches it through `npm pack`, restores byte pixels, shuffles with a fixed
seed and writes

    data/mnist/train-images-idx3-ubyte   (6000 images)
    data/mnist/train-labels-idx1-ubyte
    data/mnist/t10k-images-idx3-ubyte    (remaining images)
    data/mnist/t10k-labels-idx1-ubyte

Full-size MNIST IDX files can be used instead by pointing the experiment
config at them.
"""

import argparse
import json
import os
import random
import struct
import subprocess
import tarfile
import tempfile

TRAIN = 6000


def write_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))


def load_digits(tarball):
    samples = []
    with tarfile.open(tarball) as tar:
        for digit in range(10):
            member = tar.getmember(f"package/src/digits/{digit}.json")
            data = json.load(tar.extractfile(member))["data"]
            assert len(data) % 784 == 0
            for k in range(len(data) // 784):
                px = [min(255, max(0, round(v * 255))) for v in data[k * 784:(k + 1) * 784]]
                samples.append((px, digit))
    return samples


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data", "mnist"))
    ap.add_argument("--tarball", help="pre-downloaded mnist-*.tgz from `npm pack mnist`")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        tarball = args.tarball
        if tarball is None:
            out = subprocess.run(["npm", "pack", "mnist@1.1.0", "--silent"], cwd=tmp,
                                 check=True, capture_output=True, text=True)
            tarball = os.path.join(tmp, out.stdout.strip().splitlines()[-1])
        samples = load_digits(tarball)

    random.Random(args.seed).shuffle(samples)
    os.makedirs(args.out, exist_ok=True)
    train, test = samples[:TRAIN], samples[TRAIN:]
    write_images(os.path.join(args.out, "train-images-idx3-ubyte"), [s[0] for s in train])
    write_labels(os.path.join(args.out, "train-labels-idx1-ubyte"), [s[1] for s in train])
    write_images(os.path.join(args.out, "t10k-images-idx3-ubyte"), [s[0] for s in test])
    write_labels(os.path.join(args.out, "t10k-labels-idx1-ubyte"), [s[1] for s in test])
    print(f"wrote {len(train)} train / {len(test)} test samples to {os.path.abspath(args.out)}")


if __name__ == "__main__":
    main()
