import contextlib
import struct
import warnings

import numpy as np
import torch

import ebsmooth as ebs


@contextlib.contextmanager
def assert_no_warnings():

    with warnings.catch_warnings(record=True) as record:
        warnings.simplefilter("always")
        yield
        assert len(record) == 0, "got unexpected warning(s)"


def fd_grad(f, x, h=1e-5):
    """central finite-difference gradient of the scalar function ``f`` at ``x``"""

    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(actual, expected):
    actual, expected = np.asarray(actual), np.asarray(expected)
    return np.linalg.norm(actual - expected) / max(np.linalg.norm(expected), 1e-12)


def zero_energy_net(dim, sigma, hidden=(8,), seed=0):
    """EnergyNet with a zero output layer: constant energy, zero score"""

    net = ebs.EnergyNet(dim, hidden, sigma, gen=ebs.rng_stream(seed))
    last = list(net.net)[-1]
    with torch.no_grad():
        last.weight.zero_()
        last.bias.zero_()
    return net


def write_idx_images(path, pixels, magic=0x00000803):
    """write uint8 ``pixels`` of shape (n, rows, cols) as an IDX image file"""

    pixels = np.asarray(pixels, dtype=np.uint8)
    n, rows, cols = pixels.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", magic, n, rows, cols))
        f.write(pixels.tobytes())


def write_idx_labels(path, labels, magic=0x00000801):

    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", magic, labels.size))
        f.write(labels.tobytes())
