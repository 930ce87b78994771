"""Build data/mnist_10k.csv.gz from the digits bundled in the npm `mnist` package.

The package ships 10,000 MNIST digits grouped by class, already scaled to [0, 1].
Rows are interleaved with a fixed-seed shuffle so the file reads like a stream.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/make_mnist_csv.py package/src/digits data/mnist_10k.csv.gz
"""
import gzip
import json
import sys

import numpy as np


def main(digits_dir, out_path, seed=20201):
    xs, ys = [], []
    for d in range(10):
        with open(f"{digits_dir}/{d}.json") as f:
            flat = np.asarray(json.load(f)["data"], dtype=np.float64)
        rows = flat.reshape(-1, 784)
        xs.append(rows)
        ys.append(np.full(len(rows), d, dtype=np.int64))
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    order = np.random.default_rng(seed).permutation(len(y))
    with gzip.open(out_path, "wt", compresslevel=9) as f:
        f.write("label," + ",".join(f"px{i}" for i in range(784)) + "\n")
        for i in order:
            feats = ",".join("0" if v == 0 else f"{v:g}" for v in x[i])
            f.write(f"{y[i]},{feats}\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
