#!/usr/bin/env python3
# Copyright 2026 The bifsnn Authors
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
"""Writes the 5000-image MNIST sample bundled with mlxtend as IDX files.

The CSV is sorted by class, so it is shuffled with a fixed seed and split
4000 train / 1000 test.  Usage:

    pip download mlxtend --no-deps -d /tmp/mlx
    python3 scripts/make_mnist_subset.py /tmp/mlx/mlxtend-*.whl data/mnist5k
"""
import gzip
import io
import struct
import sys
import zipfile

import numpy as np


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def main():
    wheel, out_dir = sys.argv[1], sys.argv[2]
    with zipfile.ZipFile(wheel) as z:
        raw = z.read("mlxtend/data/data/mnist_5k.csv.gz")
    table = np.genfromtxt(io.BytesIO(gzip.decompress(raw)), delimiter=",")
    images, labels = table[:, :-1], table[:, -1].astype(int)
    order = np.random.RandomState(20210113).permutation(len(labels))
    images, labels = images[order], labels[order]
    write_idx_images(f"{out_dir}/train-images-idx3-ubyte", images[:4000])
    write_idx_labels(f"{out_dir}/train-labels-idx1-ubyte", labels[:4000])
    write_idx_images(f"{out_dir}/t10k-images-idx3-ubyte", images[4000:])
    write_idx_labels(f"{out_dir}/t10k-labels-idx1-ubyte", labels[4000:])


if __name__ == "__main__":
    main()
