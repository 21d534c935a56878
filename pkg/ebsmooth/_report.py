import json
import logging
import warnings
from pathlib import Path

import numpy as np
import xarray as xr
from packaging.version import InvalidVersion, Version

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"

# 17 significant digits round-trip every float64
FLOAT_FORMAT = "%.17g"


def _is_correct(results, labels):
    predicted = np.array([r.predicted for r in results], dtype=int)
    return predicted == np.asarray(labels, dtype=int)


def results_dataset(results, labels, **extra):
    """per-point certification results as a Dataset over ``point``

    Parameters
    ----------
    results : list of CertResult
    labels : array_like of int
        True classes.
    **extra : array_like
        Further per-point variables, e.g. ``wall_time`` or oracle values.

    Returns
    -------
    xr.Dataset
        Variables ``label``, ``predicted``, ``abstained``, ``correct``, ``pa_lower``,
        ``radius`` and ``extra``. Abstentions have ``predicted = -1`` and
        ``radius = 0``.
    """

    n = len(results)
    if len(labels) != n:
        raise ValueError(f"Got {len(labels)} labels for {n} results")

    data = {
        "label": np.asarray(labels, dtype=int),
        "predicted": np.array([r.predicted for r in results], dtype=int),
        "abstained": np.array([r.abstained for r in results], dtype=bool),
        "correct": _is_correct(results, labels),
        "pa_lower": np.array([r.pa_lower for r in results], dtype=float),
        "radius": np.array([r.radius for r in results], dtype=float),
    }
    data.update({k: np.asarray(v) for k, v in extra.items()})

    ds = xr.Dataset({k: ("point", v) for k, v in data.items()})
    return ds.assign_coords(point=np.arange(n))


def certified_accuracy(results, labels, radii):
    """fraction of points certified correctly with radius at least ``r``

    Parameters
    ----------
    results : list of CertResult
    labels : array_like of int
    radii : array_like of float
        Radius grid.

    Returns
    -------
    xr.DataArray
        Over ``radius``; nonincreasing. Abstentions count as errors. Empty if there
        are no points.
    """

    radii = np.sort(np.asarray(radii, dtype=float))

    if len(results) == 0:
        return xr.DataArray(
            np.empty(0), dims="radius", coords={"radius": np.empty(0)},
            name="certified_accuracy",
        )

    correct = _is_correct(results, labels)
    radius = np.array([r.radius for r in results], dtype=float)

    certified = correct[None, :] & (radius[None, :] >= radii[:, None])
    accuracy = certified.mean(axis=1)

    return xr.DataArray(
        accuracy, dims="radius", coords={"radius": radii}, name="certified_accuracy"
    )


def average_certified_radius(results, labels):
    """mean certified radius, counting abstentions and errors as radius 0"""

    if len(results) == 0:
        return float("nan")

    correct = _is_correct(results, labels)
    radius = np.array([r.radius for r in results], dtype=float)
    return float(np.mean(np.where(correct, radius, 0.0)))


def write_csv(obj, path):
    """write a Dataset or DataArray as CSV with lossless floats"""

    if isinstance(obj, xr.DataArray):
        obj = obj.to_dataset()

    obj.to_dataframe().to_csv(path, float_format=FLOAT_FORMAT)
    logger.info(f"wrote {path}")


def _parse_version(text):
    try:
        return Version(str(text))
    except InvalidVersion:
        return None


def write_manifest(
    output_dir, *, command, config_hash, seed, version, wall_time, outputs
):
    """write ``manifest.json`` beside the outputs of a run

    Warns if the directory holds a manifest of another package version.

    Returns
    -------
    path : Path
    """

    path = Path(output_dir) / MANIFEST

    if path.exists():
        with open(path) as f:
            try:
                previous = json.load(f).get("version")
            except json.JSONDecodeError:
                previous = None

        if previous is not None:
            old, new = _parse_version(previous), _parse_version(version)
            differs = previous != version if old is None or new is None else old != new
            if differs:
                warnings.warn(
                    f"{output_dir} holds results of version {previous}, overwriting "
                    f"with version {version}"
                )

    manifest = {
        "command": command,
        "config_hash": config_hash,
        "seed": seed,
        "version": version,
        "wall_time": wall_time,
        "outputs": sorted(str(o) for o in outputs),
    }

    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")

    return path
