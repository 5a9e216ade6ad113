#!/usr/bin/env python3
# Copyright 2026 The tclif-eprop Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Builds the bundled MNIST subset from the `mnist` npm package.

The package stores 10,000 MNIST digits as value/255 rounded to three
decimals; round(v * 255) recovers the original byte. The digits are shuffled
with a fixed seed and split into train and test IDX files (gzipped).

    npm pack mnist@1.1.0 && tar xzf mnist-1.1.0.tgz
    python3 tools/make_mnist_subset.py package/src/digits data --test 2000
"""

import argparse
import gzip
import json
import pathlib
import random
import struct


def load_digits(src):
    samples = []
    for label in range(10):
        data = json.loads((src / f"{label}.json").read_text())["data"]
        if len(data) % 784:
            raise SystemExit(f"{label}.json: length {len(data)} is not a multiple of 784")
        for k in range(0, len(data), 784):
            pixels = bytes(min(255, max(0, round(v * 255))) for v in data[k:k + 784])
            samples.append((pixels, label))
    return samples


def write_idx(path, magic, dims, payload):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + payload)


def write_split(out, stem, samples):
    write_idx(out / f"{stem}-images-idx3-ubyte.gz", 0x803, (len(samples), 28, 28),
              b"".join(p for p, _ in samples))
    write_idx(out / f"{stem}-labels-idx1-ubyte.gz", 0x801, (len(samples),),
              bytes(l for _, l in samples))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("src", type=pathlib.Path, help="directory holding 0.json .. 9.json")
    ap.add_argument("out", type=pathlib.Path)
    ap.add_argument("--test", type=int, default=2000, help="samples held out for test")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    samples = load_digits(args.src)
    random.Random(args.seed).shuffle(samples)
    args.out.mkdir(parents=True, exist_ok=True)
    write_split(args.out, "t10k", samples[:args.test])
    write_split(args.out, "train", samples[args.test:])
    print(f"train {len(samples) - args.test}, test {args.test}")


if __name__ == "__main__":
    main()
