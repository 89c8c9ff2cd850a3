"""
Reading and writing IDX (MNIST-format) files
============================================
"""

import tempfile
from pathlib import Path

import numpy as np

from rmda.data import Dataset, idx_bytes, load_mnist_idx

rng = np.random.default_rng(0)
pix = rng.integers(0, 256, (6, 28, 28)).astype(np.uint8)
d = Dataset(pix.reshape(6, -1) / 255.0, rng.integers(0, 10, 6), 10)

images, labels = idx_bytes(d)
print("image header:", images[:16].hex(" ", 4))   # magic 0x803, count, rows, cols

with tempfile.TemporaryDirectory() as tmp:
    Path(tmp, "img").write_bytes(images)
    Path(tmp, "lab").write_bytes(labels)
    back = load_mnist_idx(Path(tmp, "img"), Path(tmp, "lab"))

print("round trip exact:", np.array_equal(back.inputs, d.inputs), np.array_equal(back.labels, d.labels))
print("pixel range:", back.inputs.min(), back.inputs.max())

# real data: put the four MNIST files in a directory and
#   RMDA_DATA_DIR=/path/to/mnist rmda run mnist-logreg
