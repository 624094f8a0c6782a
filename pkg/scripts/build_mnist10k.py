"""Convert the digits bundled with the npm ``mnist`` package into gzipped IDX files.

Usage::

    npm pack mnist && tar xzf mnist-*.tgz
    python scripts/build_mnist10k.py package/src/digits data/mnist10k

The package stores each class as a flat list of pixel intensities in [0, 1]
rounded to three decimals; ``round(v * 255)`` recovers the original bytes.
"""
import gzip
import json
import struct
import sys
from pathlib import Path

import numpy as np


def main(src: str, dst: str) -> None:
    images, labels = [], []
    for digit in range(10):
        raw = np.asarray(json.loads(Path(src, f"{digit}.json").read_text())["data"])
        pix = np.round(raw * 255).astype(np.uint8).reshape(-1, 28, 28)
        images.append(pix)
        labels.append(np.full(len(pix), digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    # interleave classes with a fixed permutation so the file is not class-sorted
    order = np.random.default_rng(20170831).permutation(len(labels))
    images, labels = images[order], labels[order]

    out = Path(dst)
    out.mkdir(parents=True, exist_ok=True)
    with gzip.GzipFile(out / "images-idx3-ubyte.gz", "wb", mtime=0) as fh:
        fh.write(struct.pack(">IIII", 0x00000803, len(images), 28, 28))
        fh.write(images.tobytes())
    with gzip.GzipFile(out / "labels-idx1-ubyte.gz", "wb", mtime=0) as fh:
        fh.write(struct.pack(">II", 0x00000801, len(labels)))
        fh.write(labels.tobytes())
    print(f"wrote {len(labels)} examples to {out}")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
