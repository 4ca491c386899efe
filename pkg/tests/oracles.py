"""Independent reference computations shared by the unit and acceptance tests."""

import numpy as np

from trajphase.autoencoder import init_model, loss_and_gradients


def finite_difference_gradients(model, batch, h=1e-5):
    grads = []
    for p in model.params:
        g = np.empty_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up, _ = loss_and_gradients(model, batch)
            flat[i] = keep - h
            down, _ = loss_and_gradients(model, batch)
            flat[i] = keep
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def gradient_relative_error(seed):
    """Max over parameter arrays of ``max|g - fd| / max|g|`` for a random small model."""
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 11))
    width = int(rng.integers(2, 9))
    model = init_model((d, width, 2, width, d), seed)
    for b in model.biases:
        b[:] = rng.normal(scale=0.3, size=b.shape)
    batch = rng.normal(size=(int(rng.integers(1, 6)), d))
    _, grads = loss_and_gradients(model, batch)
    fd = finite_difference_gradients(model, batch)
    return max(
        np.max(np.abs(g - f)) / max(np.max(np.abs(g)), 1e-8) for g, f in zip(grads, fd)
    )
