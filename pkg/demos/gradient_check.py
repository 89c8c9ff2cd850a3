"""
Hand-written backprop against finite differences
================================================
"""

import numpy as np

from rmda import models

rng = np.random.default_rng(0)

for spec in (models.LogisticRegression(5, 3), models.Mlp((5, 4, 3)),
             models.TinyConvNet(channels=1, height=5, width=5, filters=2, kh=3, kw=3, classes=3)):
    W = rng.standard_normal(models.dim(spec)) * 0.5
    X = rng.standard_normal((4, spec.in_dim))
    y = rng.integers(0, spec.classes, 4)
    loss, g = models.loss_and_grad(spec, W, (X, y))

    h = 1e-5
    fd = np.empty_like(W)
    for i in range(W.size):
        e = np.zeros_like(W)
        e[i] = h
        fd[i] = (models.loss_and_grad(spec, W + e, (X, y))[0]
                 - models.loss_and_grad(spec, W - e, (X, y))[0]) / (2 * h)
    rel = np.abs(fd - g).max() / np.abs(g).max()
    print(f"{type(spec).__name__:>18}: {W.size:4d} params, loss {loss:.4f}, max rel diff {rel:.1e}")
