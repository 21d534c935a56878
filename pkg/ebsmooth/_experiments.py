"""experiment runs behind the command line interface

Every ``run_*`` function takes an ExperimentConfig, writes its outputs to
``cfg.output_dir`` and returns the names of the files it wrote. Random streams are
keyed by ``(seed, *keys)`` (see ``rng_stream``): certification uses ``(seed, i)`` for
test point ``i``, every other stream has two keys, the first naming its purpose.
"""

import logging
import time
from pathlib import Path

import numpy as np
import xarray as xr

from ebsmooth._adversarial import TrainMode, train_xhat
from ebsmooth._certify import ABSTAIN, certify_many, linear_margin, linear_oracle
from ebsmooth._checkpoint import load_checkpoint, save_checkpoint
from ebsmooth._classifier import EbClassifier, LinearClassifier, SoftClassifier
from ebsmooth._datasets import load_dataset
from ebsmooth._energy import EnergyNet, train_deen
from ebsmooth._errors import ConfigError
from ebsmooth._report import (
    average_certified_radius,
    certified_accuracy,
    results_dataset,
    write_csv,
)
from ebsmooth._sampler import (
    jump,
    trajectory_dataset,
    trajectory_energy,
    walk_jump,
)
from ebsmooth._stats import rng_stream, std_normal_cdf, std_normal_inv_cdf

logger = logging.getLogger(__name__)

# first keys of the random streams, see the module docstring
DEEN_STREAM = 1
TRAIN_STREAM = 2
WALK_STREAM = 3

# statistical violations tolerated by the oracle check
ORACLE_VIOLATIONS = 3


def _output_dir(cfg):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _points_dataset(data):
    variables = {f"x{j}": ("point", data.points[:, j]) for j in range(data.dim)}
    variables["label"] = ("point", data.labels)
    ds = xr.Dataset(variables, coords={"point": np.arange(len(data))})
    ds.attrs["provenance"] = data.provenance
    return ds


def _load_classifier(cfg):
    cfg.require("classifier")
    return load_checkpoint(cfg.classifier, (LinearClassifier, SoftClassifier))


def _load_energy(cfg, name="energy"):
    cfg.require(name)
    return load_checkpoint(getattr(cfg, name), EnergyNet)


def _log_frame(records, record_timing):
    ds = xr.Dataset(
        {
            key: ("step", np.array([r[key] for r in records]))
            for key in records[0]
            if key != "step" and (record_timing or key != "wall_time")
        },
        coords={"step": [r["step"] for r in records]},
    )
    return ds


def run_gen_data(cfg):
    """write the train and test splits as ``train.csv`` and ``test.csv``"""

    out = _output_dir(cfg)
    outputs = []

    for split in ("train", "test"):
        data = load_dataset(cfg.dataset, cfg.seed, split)
        name = f"{split}.csv"
        write_csv(_points_dataset(data), out / name)
        outputs.append(name)

        logger.info(f"{split}: {len(data)} points, {data.num_classes} classes")

    return outputs


def run_train_energy(cfg):
    """fit an energy on the training split; writes the ``energy`` checkpoint"""

    out = _output_dir(cfg)
    data = load_dataset(cfg.dataset, cfg.seed, "train")
    gen = rng_stream(cfg.deen.seed, DEEN_STREAM, 0)

    records = []
    start = time.perf_counter()

    def callback(step, loss):
        records.append(
            {"step": step, "loss": loss, "wall_time": time.perf_counter() - start}
        )

    net = train_deen(data.points, cfg.deen, gen, callback=callback)
    save_checkpoint(net, cfg.energy)
    logger.info(f"wrote {cfg.energy}")

    write_csv(_log_frame(records, cfg.record_timing), out / "energy_log.csv")
    return [Path(cfg.energy).name, "energy_log.csv"]


def run_train_xhat(cfg):
    """train the soft classifier; writes the ``classifier`` checkpoint

    The XHAT modes use the energy checkpoint, or the closed-form estimator of the
    data model for the ``oracle`` pipeline.
    """

    out = _output_dir(cfg)
    data = load_dataset(cfg.dataset, cfg.seed, "train")

    if cfg.train.mode not in (TrainMode.XHAT, TrainMode.XHAT0):
        energy = None
    elif cfg.pipeline == "oracle":
        energy = cfg.dataset.model()
    else:
        energy = _load_energy(cfg)

    gen = rng_stream(cfg.train.seed, TRAIN_STREAM, 0)
    records = []

    classifier = train_xhat(
        data, energy, cfg.train, cfg.attack, gen, callback=records.append
    )
    save_checkpoint(classifier, cfg.classifier)
    logger.info(f"wrote {cfg.classifier}")

    write_csv(_log_frame(records, cfg.record_timing), out / "train_log.csv")
    return [Path(cfg.classifier).name, "train_log.csv"]


def _oracle_base(cfg):
    if Path(cfg.classifier).exists():
        return _load_classifier(cfg)
    if cfg.dataset.kind == "gaussian":
        return cfg.dataset.labelling_rule()
    raise ConfigError(f"classifier: file {cfg.classifier!r} does not exist")


def _smoothed(cfg, pipeline, base):
    if pipeline == "vanilla":
        return base
    if pipeline == "oracle":
        return EbClassifier(base, cfg.dataset.model(), cfg.sigma)
    return EbClassifier(base, _load_energy(cfg), cfg.sigma)


def _certify_pipelines(cfg):
    # {pipeline: (results, per-point Dataset)} for the test split

    test = load_dataset(cfg.dataset, cfg.seed, "test")
    if len(test) == 0:
        logger.warning("the test set is empty")

    if cfg.pipeline == "oracle":
        base = _oracle_base(cfg)
    else:
        base = _load_classifier(cfg)

    pipelines = ("vanilla", "eb") if cfg.pipeline == "compare" else (cfg.pipeline,)

    out = {}
    for pipeline in pipelines:
        c = _smoothed(cfg, pipeline, base)

        logger.info(f"certifying {len(test)} points, pipeline {pipeline}")
        results = certify_many(
            c, test.points, cfg.sigma, cfg.confidence, cfg.seed, workers=cfg.workers
        )

        extra = {}
        if cfg.record_timing:
            extra["wall_time"] = [r.wall_time for r in results]

        if pipeline == "oracle" and isinstance(base, LinearClassifier):
            sigma0 = cfg.dataset.model().sigma0
            oracle = [linear_oracle(base, x, cfg.sigma, sigma0) for x in test.points]
            extra["oracle_predicted"] = np.array(
                [o.predicted for o in oracle], dtype=int
            )
            extra["oracle_radius"] = np.array([o.radius for o in oracle], dtype=float)

        out[pipeline] = (results, results_dataset(results, test.labels, **extra))

    return out, test


def run_certify(cfg):
    """certify every test point

    Writes ``certify.csv``, or ``certify_vanilla.csv`` and ``certify_eb.csv`` for the
    ``compare`` pipeline.
    """

    out = _output_dir(cfg)
    certified, _ = _certify_pipelines(cfg)

    outputs = []
    for pipeline, (_, ds) in certified.items():
        name = "certify.csv" if len(certified) == 1 else f"certify_{pipeline}.csv"
        write_csv(ds, out / name)
        outputs.append(name)

    return outputs


def run_certification_curve(cfg):
    """certified accuracy over ``cfg.radii``

    Writes the per-point CSV(s) of ``run_certify``, ``curve.csv`` with one column
    per pipeline and ``summary.csv`` with clean accuracy, abstention rate and
    average certified radius per pipeline.
    """

    out = _output_dir(cfg)
    certified, test = _certify_pipelines(cfg)

    outputs = []
    curves = {}
    summary = {"n_points": [], "clean_accuracy": [], "abstain_rate": [], "acr": []}

    for pipeline, (results, ds) in certified.items():
        name = "certify.csv" if len(certified) == 1 else f"certify_{pipeline}.csv"
        write_csv(ds, out / name)
        outputs.append(name)

        curve = certified_accuracy(results, test.labels, cfg.radii)
        curves[f"certified_accuracy_{pipeline}"] = curve

        n = len(results)
        summary["n_points"].append(n)
        summary["clean_accuracy"].append(float(ds["correct"].mean()) if n else np.nan)
        summary["abstain_rate"].append(float(ds["abstained"].mean()) if n else np.nan)
        summary["acr"].append(average_certified_radius(results, test.labels))

        for r, acc in zip(curve["radius"].values, curve.values):
            logger.info(f"{pipeline}: certified accuracy at radius {r:g}: {acc:.3f}")

    write_csv(xr.Dataset(curves), out / "curve.csv")
    outputs.append("curve.csv")

    pipelines = list(certified)
    ds = xr.Dataset(
        {k: ("pipeline", np.array(v)) for k, v in summary.items()},
        coords={"pipeline": pipelines},
    )

    if cfg.pipeline == "compare":
        r_vanilla = certified["vanilla"][1]["radius"]
        r_eb = certified["eb"][1]["radius"]
        exceeds = int((r_vanilla > r_eb).sum())
        ds["vanilla_exceeds_eb"] = exceeds
        logger.info(f"vanilla radius larger than xhat radius at {exceeds} points")

    write_csv(ds, out / "summary.csv")
    outputs.append("summary.csv")

    return outputs


def run_walk_jump(cfg):
    """walk-jump sampling from noisy test points

    Each of ``cfg.walk_chains`` runs starts from a test point (cycling through the
    test split) plus noise of scale ``sigma``. Writes ``walk_jump.csv`` with the
    clean, noisy, single-step estimate and walk-jump points, ``walk_jump_summary.csv``
    with their per-coordinate variances and squared errors, and, with
    ``cfg.trajectory``, ``trajectory.csv``.
    """

    out = _output_dir(cfg)
    wj = cfg.walk_jump
    test = load_dataset(cfg.dataset, cfg.seed, "test")

    if len(test) == 0:
        logger.warning("the test set is empty")
        return []

    if cfg.pipeline == "oracle":
        coarse = fine = cfg.dataset.model()
    else:
        coarse, fine = _load_energy(cfg, "energy"), _load_energy(cfg, "energy_fine")

    gen = rng_stream(wj.seed, WALK_STREAM, 0)
    clean = test.points[np.arange(cfg.walk_chains) % len(test)]
    noisy = clean + cfg.sigma * gen.standard_normal(clean.shape)

    xhat = jump(coarse, noisy, cfg.sigma)
    result = walk_jump(
        coarse, fine, noisy, wj, gen, sigma=cfg.sigma, return_trajectory=cfg.trajectory
    )
    sampled, trajectory = result if cfg.trajectory else (result, None)

    dims = ("chain", "coord")
    coords = {"chain": np.arange(cfg.walk_chains), "coord": np.arange(test.dim)}
    points = xr.Dataset(
        {
            "clean": (dims, clean),
            "noisy": (dims, noisy),
            "xhat": (dims, xhat),
            "walk_jump": (dims, sampled),
        },
        coords=coords,
    )
    write_csv(points, out / "walk_jump.csv")
    outputs = ["walk_jump.csv"]

    summary = xr.Dataset(
        {
            "var_xhat": points["xhat"].var("chain"),
            "var_walk_jump": points["walk_jump"].var("chain"),
            "mse_xhat": ((points["xhat"] - points["clean"]) ** 2).mean("chain"),
            "mse_walk_jump": (
                (points["walk_jump"] - points["clean"]) ** 2
            ).mean("chain"),
        }
    )
    write_csv(summary, out / "walk_jump_summary.csv")
    outputs.append("walk_jump_summary.csv")

    logger.info(
        f"variance of the estimates: "
        f"{float(summary['var_xhat'].mean()):.4g} single step, "
        f"{float(summary['var_walk_jump'].mean()):.4g} walk-jump"
    )

    if trajectory is not None:
        energy = trajectory_energy(fine, trajectory, sigma=wj.sigma_prime)
        ds = trajectory_dataset(trajectory, energy)
        wide = ds["y"].to_dataset(dim="coord")
        wide["energy"] = ds["energy"]
        write_csv(wide, out / "trajectory.csv")
        outputs.append("trajectory.csv")

    return outputs


def run_oracle_check(cfg):
    """compare certification of a linear classifier with its analytic values

    Requires a zero-mean ``gaussian`` dataset, whose labelling rule is the linear
    classifier. With the closed-form estimator the certified class must equal the
    analytic class and the radius may not exceed the analytic radius; without an
    estimator the radius must lie between ``margin - slack`` and the margin, where
    ``slack = sigma * (Phi^-1(p_A) - Phi^-1(p_A_lower))``. Writes
    ``oracle_check.csv`` and ``oracle_summary.csv``.
    """

    spec = cfg.dataset
    if spec.kind != "gaussian":
        raise ConfigError("oracle-check requires a dataset of kind 'gaussian'")

    model = spec.model()
    if np.any(model.mean):
        raise ConfigError("oracle-check requires a zero-mean gaussian dataset")

    out = _output_dir(cfg)
    h = spec.labelling_rule()
    test = load_dataset(spec, cfg.seed, "test")
    points = test.points

    if len(test) == 0:
        logger.warning("the test set is empty")

    kwargs = {"workers": cfg.workers}
    eb = certify_many(
        EbClassifier(h, model, cfg.sigma), points, cfg.sigma, cfg.confidence, cfg.seed,
        **kwargs,
    )
    vanilla = certify_many(h, points, cfg.sigma, cfg.confidence, cfg.seed, **kwargs)
    oracle = [linear_oracle(h, x, cfg.sigma, model.sigma0) for x in points]

    eb_predicted = np.array([r.predicted for r in eb], dtype=int)
    eb_radius = np.array([r.radius for r in eb], dtype=float)
    oracle_predicted = np.array([o.predicted for o in oracle], dtype=int)
    oracle_radius = np.array([o.radius for o in oracle], dtype=float)

    v_predicted = np.array([r.predicted for r in vanilla], dtype=int)
    v_radius = np.array([r.radius for r in vanilla], dtype=float)
    v_pa_lower = np.array([r.pa_lower for r in vanilla], dtype=float)

    margin = linear_margin(h, points) if len(test) else np.empty(0)
    h_predicted = np.atleast_1d(h.predict(points)) if len(test) else np.empty(0, int)

    eb_abstained = eb_predicted == ABSTAIN
    v_abstained = v_predicted == ABSTAIN

    # probability of the class of h under the noise, and its quantile gap
    pa = std_normal_cdf(margin / cfg.sigma)
    with np.errstate(invalid="ignore"):
        slack = np.where(
            v_abstained,
            np.nan,
            cfg.sigma
            * (
                std_normal_inv_cdf(np.clip(pa, 1e-300, 1 - 1e-16))
                - std_normal_inv_cdf(np.clip(v_pa_lower, 1e-300, 1 - 1e-16))
            ),
        )

    eb_class_violation = ~eb_abstained & (eb_predicted != oracle_predicted)
    eb_radius_violation = eb_radius > oracle_radius + 1e-9
    v_class_violation = ~v_abstained & (v_predicted != h_predicted)
    v_radius_violation = ~v_abstained & (
        (v_radius > margin + 1e-9) | (v_radius < margin - slack - 1e-9)
    )

    ds = xr.Dataset(
        {
            "label": ("point", test.labels),
            "eb_predicted": ("point", eb_predicted),
            "eb_radius": ("point", eb_radius),
            "oracle_predicted": ("point", oracle_predicted),
            "oracle_radius": ("point", oracle_radius),
            "vanilla_predicted": ("point", v_predicted),
            "vanilla_radius": ("point", v_radius),
            "margin": ("point", margin),
            "slack": ("point", slack),
        },
        coords={"point": np.arange(len(test))},
    )
    write_csv(ds, out / "oracle_check.csv")

    violations = {
        "eb_class": int(eb_class_violation.sum()),
        "eb_radius": int(eb_radius_violation.sum()),
        "vanilla_class": int(v_class_violation.sum()),
        "vanilla_radius": int(v_radius_violation.sum()),
    }
    summary = xr.Dataset(
        {"violations": ("check", np.array(list(violations.values())))},
        coords={"check": list(violations)},
    )
    write_csv(summary, out / "oracle_summary.csv")

    for check, count in violations.items():
        if count > ORACLE_VIOLATIONS:
            logger.warning(f"{check}: {count} violations of the analytic values")
        else:
            logger.info(f"{check}: {count} violations of the analytic values")

    return ["oracle_check.csv", "oracle_summary.csv"]
