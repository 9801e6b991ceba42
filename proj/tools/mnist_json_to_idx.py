"""Convert the per-digit JSON files shipped with the npm `mnist` package
(mnist@1.1.0, src/digits/<d>.json, 28x28 floats in [0, 1]) into IDX files.

    python3 tools/mnist_json_to_idx.py node_modules/mnist/src/digits data/mnist

Examples are shuffled with a fixed seed so class blocks are interleaved.
"""
import argparse
import json
import os
import struct

import numpy as np


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("src", help="directory holding 0.json .. 9.json")
    ap.add_argument("out", help="output directory")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    imgs, labs = [], []
    for d in range(10):
        with open(os.path.join(args.src, f"{d}.json")) as f:
            a = np.array(json.load(f)["data"]).reshape(-1, 784)
        imgs.append(np.rint(a * 255).clip(0, 255).astype(np.uint8))
        labs.append(np.full(len(a), d, np.uint8))
    x = np.concatenate(imgs)
    y = np.concatenate(labs)
    perm = np.random.default_rng(args.seed).permutation(len(y))
    x, y = x[perm], y[perm]

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "train-images-idx3-ubyte"), "wb") as f:
        f.write(struct.pack(">4B3I", 0, 0, 8, 3, len(y), 28, 28))
        f.write(x.tobytes())
    with open(os.path.join(args.out, "train-labels-idx1-ubyte"), "wb") as f:
        f.write(struct.pack(">4BI", 0, 0, 8, 1, len(y)))
        f.write(y.tobytes())
    print(f"wrote {len(y)} examples to {args.out}")


if __name__ == "__main__":
    main()
