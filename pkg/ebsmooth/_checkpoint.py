"""binary checkpoint container for energies and classifiers

Layout (all integers unsigned little-endian, all floats IEEE 754 float64
little-endian)::

    [offset] [type]      [description]
    0000     8 bytes     magic b"EBSMCKPT"
    0008     uint32      format version
    0012     uint32      type tag (1: EnergyNet, 2: SoftClassifier, 3: LinearClassifier)
    0016     uint32      number of layer widths L
    0020     L x uint32  layer widths, input first (d, hidden..., output)
    ....     float64     sigma
    ....     uint64      number of parameters P
    ....     P x float64 parameters

Parameters are stored layer by layer, input layer first; per layer the weight
matrix in row-major order (output x input) followed by the bias. A
LinearClassifier stores ``w`` followed by ``b``.
"""

import struct

import numpy as np
import torch

from ebsmooth._classifier import LinearClassifier, SoftClassifier
from ebsmooth._energy import EnergyNet, _as_tensor, linear_layers
from ebsmooth._errors import FormatError

MAGIC = b"EBSMCKPT"
FORMAT_VERSION = 1

TAG_ENERGY = 1
TAG_SOFT = 2
TAG_LINEAR = 3


def _flat_parameters(module):
    chunks = []
    for linear in linear_layers(module):
        chunks.append(linear.weight.detach().numpy().ravel())
        chunks.append(linear.bias.detach().numpy().ravel())
    return np.concatenate(chunks)


def _load_flat_parameters(module, flat):
    pos = 0
    with torch.no_grad():
        for linear in linear_layers(module):
            for p in (linear.weight, linear.bias):
                n = p.numel()
                p.copy_(_as_tensor(flat[pos : pos + n]).reshape(p.shape))
                pos += n


def _describe(obj):
    if isinstance(obj, EnergyNet):
        return TAG_ENERGY, obj.widths, obj.sigma, _flat_parameters(obj)
    if isinstance(obj, SoftClassifier):
        return TAG_SOFT, obj.widths, obj.sigma, _flat_parameters(obj)
    if isinstance(obj, LinearClassifier):
        return TAG_LINEAR, (obj.dim, 1), 0.0, np.append(obj.w, obj.b)

    raise TypeError(f"Cannot checkpoint an object of type {type(obj)}")


def to_bytes(obj):
    """serialize an EnergyNet, SoftClassifier or LinearClassifier"""

    tag, widths, sigma, params = _describe(obj)

    header = MAGIC + struct.pack("<III", FORMAT_VERSION, tag, len(widths))
    header += struct.pack(f"<{len(widths)}I", *widths)
    header += struct.pack("<dQ", sigma, params.size)

    return header + params.astype("<f8").tobytes()


class _Reader:
    def __init__(self, data):
        self.data = data
        self.offset = 0

    def _check(self, size):
        if self.offset + size > len(self.data):
            raise FormatError(
                f"Truncated checkpoint: expected {size} bytes at offset {self.offset}",
                self.offset,
            )

    def unpack(self, fmt):
        size = struct.calcsize(fmt)
        self._check(size)
        out = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return out


def from_bytes(data):
    """inverse of ``to_bytes``"""

    reader = _Reader(data)

    (magic,) = reader.unpack("<8s")
    if magic != MAGIC:
        raise FormatError(f"Not a checkpoint: bad magic {magic!r} at offset 0", 0)

    version, tag, n_widths = reader.unpack("<III")
    if version != FORMAT_VERSION:
        raise FormatError(f"Unsupported checkpoint format version {version}", 8)

    widths = reader.unpack(f"<{n_widths}I")
    sigma, n_params = reader.unpack("<dQ")

    start = reader.offset
    reader._check(8 * n_params)
    reader.offset += 8 * n_params
    params = np.frombuffer(data, dtype="<f8", count=n_params, offset=start)
    params = params.astype(float)

    if reader.offset != len(data):
        raise FormatError(
            f"Trailing bytes after the parameters at offset {reader.offset}",
            reader.offset,
        )

    if tag == TAG_ENERGY:
        obj = EnergyNet(widths[0], widths[1:-1], sigma)
    elif tag == TAG_SOFT:
        obj = SoftClassifier(widths[0], widths[-1], widths[1:-1], sigma=sigma)
    elif tag == TAG_LINEAR:
        if n_params != widths[0] + 1:
            raise FormatError("Parameter count does not match the widths", start)
        return LinearClassifier(params[:-1].copy(), params[-1])
    else:
        raise FormatError(f"Unknown type tag {tag} at offset 12", 12)

    expected = sum(p.numel() for p in obj.parameters())
    if expected != n_params:
        raise FormatError(
            f"Parameter count {n_params} does not match the widths {widths}", start
        )

    _load_flat_parameters(obj, params)
    return obj


def save_checkpoint(obj, path):
    """write ``obj`` to ``path`` in the checkpoint container format"""
    with open(path, "wb") as f:
        f.write(to_bytes(obj))


def load_checkpoint(path, expected=None):
    """read a checkpoint written by ``save_checkpoint``

    Parameters
    ----------
    path : str or Path
        File to read.
    expected : type or tuple of type, optional
        Raise a FormatError if the checkpoint holds another type.
    """

    with open(path, "rb") as f:
        obj = from_bytes(f.read())

    if expected is not None and not isinstance(obj, expected):
        types = expected if isinstance(expected, tuple) else (expected,)
        names = " or ".join(t.__name__ for t in types)
        raise FormatError(
            f"Expected a {names} checkpoint in {path}, got {type(obj).__name__}"
        )

    return obj
