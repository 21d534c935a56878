"""labeled datasets: analytic class-conditional mixtures and IDX files

IDX layout (integers big-endian)::

    [offset] [type]          [description]
    0000     32 bit integer  magic number (0x00000803 images, 0x00000801 labels)
    0004     32 bit integer  number of items
    0008     32 bit integer  number of rows (images only)
    0012     32 bit integer  number of columns (images only)
    ....     unsigned byte   pixels (row-major) or labels

Files ending in ``.gz`` are decompressed on the fly.
"""

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ebsmooth._classifier import LinearClassifier
from ebsmooth._densities import IsoGaussian, IsoMixture
from ebsmooth._errors import ConfigError, DomainError, FormatError
from ebsmooth._stats import rng_stream

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

SPLITS = {"train": 0, "test": 1}

# first stream key of dataset generation, see rng_stream
_DATA_STREAM = 0


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """points ``x_i`` with class labels ``k_i``

    Parameters
    ----------
    points : ndarray of shape (n, d)
    labels : ndarray of int of shape (n,)
        Class indices in ``[0, num_classes)``.
    num_classes : int
    provenance : str, default: ""
        Where the data comes from (model parameters or file names).
    """

    points: np.ndarray
    labels: np.ndarray
    num_classes: int
    provenance: str = ""

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        labels = np.asarray(self.labels, dtype=np.int64)

        if points.ndim != 2:
            raise DomainError(f"points must have shape (n, d), got {points.shape}")
        if labels.shape != (points.shape[0],):
            raise DomainError(
                f"Got {labels.size} labels for {points.shape[0]} points"
            )
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DomainError(f"labels must lie in [0, {self.num_classes})")

        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def head(self, n):
        """the first ``n`` points"""
        return LabeledDataset(
            self.points[:n], self.labels[:n], self.num_classes, self.provenance
        )


@dataclass(frozen=True)
class DatasetSpec:
    """where an experiment's data comes from

    Parameters
    ----------
    kind : {"mixture", "gaussian", "idx"}, default: "mixture"
        ``mixture``: one isotropic Gaussian component per class. ``gaussian``: a
        single Gaussian, labelled by the linear rule ``<w, x> + b > 0``. ``idx``:
        IDX files.
    dim : int, optional
        Dimension (``gaussian``; inferred from the means for ``mixture``).
    sigma0 : float, default: 1.0
        Scale of the components.
    means : list of list of float, optional
        Class means (``mixture``).
    mu : list of float, optional
        Shortcut for the symmetric two-class mixture at ``+mu`` (class 0) and
        ``-mu`` (class 1).
    weights : list of float, optional
        Class weights, used when ``balanced`` is False.
    mean : list of float, optional
        Mean of the ``gaussian`` data.
    w, b : list of float, float
        Labelling rule of the ``gaussian`` data.
    n_train, n_test : int
        Number of generated points per split.
    balanced : bool, default: True
        Equal class counts (up to ``n mod K``) instead of sampling the labels.
    train_images, train_labels, test_images, test_labels : str, optional
        IDX files (``idx``).
    limit : int, optional
        Keep only the first ``limit`` points of each IDX split.
    """

    kind: str = "mixture"
    dim: int | None = None
    sigma0: float = 1.0
    means: tuple | None = None
    mu: tuple | None = None
    weights: tuple | None = None
    mean: tuple | None = None
    w: tuple | None = None
    b: float = 0.0
    n_train: int = 1000
    n_test: int = 200
    balanced: bool = True
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    limit: int | None = None

    def __post_init__(self):
        if self.kind not in ("mixture", "gaussian", "idx"):
            raise ConfigError(f"Unknown dataset kind {self.kind!r}")
        if self.n_train < 0 or self.n_test < 0:
            raise ConfigError("n_train and n_test must be non-negative")

        if self.kind == "mixture" and (self.means is None) == (self.mu is None):
            raise ConfigError("A mixture dataset needs exactly one of 'means' and 'mu'")
        if self.kind == "gaussian" and (self.dim is None or self.w is None):
            raise ConfigError("A gaussian dataset needs 'dim' and 'w'")
        if self.kind == "idx":
            for name in ("train_images", "train_labels", "test_images", "test_labels"):
                path = getattr(self, name)
                if path is None or not Path(path).exists():
                    raise ConfigError(f"dataset.{name}: file {path!r} does not exist")

    def model(self):
        """the analytic data model (``mixture`` and ``gaussian`` only)"""

        if self.kind == "mixture":
            if self.mu is not None:
                return IsoMixture.symmetric(self.mu, self.sigma0)
            weights = None if self.balanced else self.weights
            return IsoMixture(self.means, self.sigma0, weights)
        if self.kind == "gaussian":
            return IsoGaussian(self.dim, self.sigma0, self.mean)

        raise ConfigError("IDX datasets have no analytic model")

    def labelling_rule(self):
        return LinearClassifier(self.w, self.b)


def _balanced_labels(n, k, gen):
    labels = np.repeat(np.arange(k), n // k)
    labels = np.concatenate([labels, np.arange(n % k)])
    return gen.permutation(labels)


def gen_dataset(spec, seed, split="train"):
    """generate the ``split`` of an analytic dataset

    Parameters
    ----------
    spec : DatasetSpec
        Of kind ``mixture`` or ``gaussian``.
    seed : int
        Experiment seed; the result only depends on ``(spec, seed, split)``.
    split : {"train", "test"}, default: "train"

    Returns
    -------
    LabeledDataset
    """

    if split not in SPLITS:
        raise ConfigError(f"split must be one of {list(SPLITS)}, got {split!r}")

    n = spec.n_train if split == "train" else spec.n_test
    gen = rng_stream(seed, _DATA_STREAM, SPLITS[split])
    model = spec.model()

    if spec.kind == "gaussian":
        points = model.sample(n, gen) if n else np.empty((0, model.dim))
        labels = np.atleast_1d(spec.labelling_rule().predict(points))
        return LabeledDataset(
            points, labels, 2, f"gaussian(dim={model.dim}, sigma0={model.sigma0})"
        )

    k = model.num_components
    if spec.balanced:
        labels = _balanced_labels(n, k, gen)
    else:
        labels = gen.choice(k, size=n, p=model.weights)

    points = model.means[labels] + model.sigma0 * gen.standard_normal((n, model.dim))

    provenance = f"mixture(K={k}, dim={model.dim}, sigma0={model.sigma0})"
    return LabeledDataset(points, labels, k, provenance)


def _read_bytes(path):
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def _read_header(data, path, magic, n_ints):
    size = 4 * (1 + n_ints)
    if len(data) < size:
        raise FormatError(
            f"{path}: truncated header, expected {size} bytes at offset 0, "
            f"got {len(data)}",
            len(data),
        )

    (found,) = struct.unpack_from(">I", data, 0)
    if found != magic:
        raise FormatError(
            f"{path}: bad magic number 0x{found:08x} at offset 0, "
            f"expected 0x{magic:08x}",
            0,
        )

    return struct.unpack_from(f">{n_ints}I", data, 4), size


def _check_payload(data, path, start, size):
    end = start + size
    if len(data) < end:
        raise FormatError(
            f"{path}: truncated data, expected {size} bytes from offset {start}, "
            f"file ends at offset {len(data)}",
            len(data),
        )
    if len(data) > end:
        raise FormatError(f"{path}: trailing bytes at offset {end}", end)


def read_idx_images(path):
    """images of an IDX file, flattened and scaled to [0, 1]

    Returns
    -------
    images : ndarray of shape (n, rows * cols)
    """

    data = _read_bytes(path)
    (n, rows, cols), start = _read_header(data, path, IDX_IMAGES_MAGIC, 3)
    _check_payload(data, path, start, n * rows * cols)

    pixels = np.frombuffer(data, dtype=np.uint8, count=n * rows * cols, offset=start)
    return pixels.reshape(n, rows * cols) / 255.0


def read_idx_labels(path):
    """labels of an IDX file"""

    data = _read_bytes(path)
    (n,), start = _read_header(data, path, IDX_LABELS_MAGIC, 1)
    _check_payload(data, path, start, n)

    return np.frombuffer(data, dtype=np.uint8, count=n, offset=start).astype(np.int64)


def load_idx(images, labels, *, num_classes=10):
    """read a pair of IDX image and label files

    Parameters
    ----------
    images, labels : str or Path
        IDX files, optionally gzip-compressed.
    num_classes : int, default: 10

    Returns
    -------
    LabeledDataset
        Pixels scaled to [0, 1] as float64, i.e. 255 maps to 1.0.
    """

    points = read_idx_images(images)
    targets = read_idx_labels(labels)

    if points.shape[0] != targets.shape[0]:
        raise FormatError(
            f"{images} holds {points.shape[0]} images but {labels} holds "
            f"{targets.shape[0]} labels"
        )

    return LabeledDataset(points, targets, num_classes, f"idx({Path(images).name})")


def load_dataset(spec, seed, split="train"):
    """the ``split`` of the dataset described by ``spec``"""

    if spec.kind != "idx":
        return gen_dataset(spec, seed, split)

    if split == "train":
        data = load_idx(spec.train_images, spec.train_labels)
    else:
        data = load_idx(spec.test_images, spec.test_labels)

    return data if spec.limit is None else data.head(spec.limit)
