import json
import logging

import numpy as np
import pandas as pd
import pytest

import ebsmooth as ebs
from ebsmooth._cli import COMMANDS, EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, main


@pytest.fixture(autouse=True)
def restore_logging():
    """main configures the root logger; undo it after each test"""

    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)
    logging.captureWarnings(False)


MIXTURE = """\
sigma: 0.5
seed: 1
output_dir: out
dataset:
  mu: [1.5, 0.0]
  n_train: 64
  n_test: 4
confidence:
  n0: 20
  nc: 200
"""

GAUSSIAN = """\
sigma: 1.0
output_dir: out
pipeline: oracle
dataset:
  kind: gaussian
  dim: 2
  w: [1.0, -0.5]
  b: 0.3
  n_test: 6
confidence:
  n0: 20
  nc: 300
"""


def write_config(tmp_path, text, name="exp.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_manifest(out):
    with open(out / "manifest.json") as f:
        return json.load(f)


def test_gen_data(tmp_path):

    config = write_config(tmp_path, MIXTURE)

    assert main(["gen-data", config]) == EXIT_OK

    out = tmp_path / "out"
    train = pd.read_csv(out / "train.csv", index_col=0)
    test = pd.read_csv(out / "test.csv", index_col=0)

    assert list(train.columns) == ["x0", "x1", "label"]
    assert len(train) == 64
    assert len(test) == 4

    manifest = read_manifest(out)
    assert manifest["command"] == "gen-data"
    assert manifest["seed"] == 1
    assert manifest["outputs"] == ["test.csv", "train.csv"]
    assert manifest["version"] == ebs.__version__


def test_gen_data_matches_library(tmp_path):

    config = write_config(tmp_path, MIXTURE)
    main(["gen-data", config])

    expected = ebs.gen_dataset(ebs.load_config(config).dataset, 1, "train")
    train = pd.read_csv(tmp_path / "out" / "train.csv", index_col=0)

    np.testing.assert_array_equal(train[["x0", "x1"]].values, expected.points)
    np.testing.assert_array_equal(train["label"].values, expected.labels)


def test_overrides(tmp_path):

    config = write_config(tmp_path, MIXTURE)

    args = ["gen-data", config, "--seed", "5", "--output-dir", "other"]
    assert main(args + ["--set", "dataset.n_test=2"]) == EXIT_OK

    out = tmp_path / "other"
    assert read_manifest(out)["seed"] == 5
    assert len(pd.read_csv(out / "test.csv")) == 2


def test_config_hash_independent_of_output_dir(tmp_path):

    config = write_config(tmp_path, MIXTURE)

    main(["gen-data", config, "--output-dir", "a", "--workers", "1"])
    main(["gen-data", config, "--output-dir", "b", "--workers", "3"])

    hash_a = read_manifest(tmp_path / "a")["config_hash"]
    hash_b = read_manifest(tmp_path / "b")["config_hash"]
    assert hash_a == hash_b


def test_curve_oracle_pipeline(tmp_path):

    config = write_config(tmp_path, GAUSSIAN)

    assert main(["curve", config]) == EXIT_OK

    out = tmp_path / "out"
    curve = pd.read_csv(out / "curve.csv", index_col=0)
    certified = pd.read_csv(out / "certify.csv", index_col=0)
    summary = pd.read_csv(out / "summary.csv", index_col=0)

    assert len(curve) == 4
    np.testing.assert_array_equal(curve.index, [0.5, 1.0, 1.5, 2.0])
    assert np.all(np.diff(curve["certified_accuracy_oracle"]) <= 0)

    assert len(certified) == 6
    assert "oracle_radius" in certified.columns
    assert "wall_time" not in certified.columns
    # holds with probability 1 - alpha per point
    assert np.sum(certified["radius"] > certified["oracle_radius"] + 1e-9) <= 1

    assert list(summary.index) == ["oracle"]
    assert summary.loc["oracle", "n_points"] == 6


def test_curve_reruns_identical_across_workers(tmp_path):

    config = write_config(tmp_path, GAUSSIAN)

    assert main(["curve", config, "--output-dir", "w1", "--workers", "1"]) == EXIT_OK
    assert main(["curve", config, "--output-dir", "w2", "--workers", "2"]) == EXIT_OK

    for name in ("certify.csv", "curve.csv", "summary.csv"):
        a = (tmp_path / "w1" / name).read_bytes()
        b = (tmp_path / "w2" / name).read_bytes()
        assert a == b


def test_certify_record_timing(tmp_path):

    config = write_config(tmp_path, GAUSSIAN)

    assert main(["certify", config, "--set", "record_timing=true"]) == EXIT_OK

    certified = pd.read_csv(tmp_path / "out" / "certify.csv", index_col=0)
    assert np.all(certified["wall_time"] >= 0)


def test_curve_empty_test_set(tmp_path, caplog):

    config = write_config(tmp_path, GAUSSIAN)

    assert main(["curve", config, "--set", "dataset.n_test=0"]) == EXIT_OK
    assert "the test set is empty" in caplog.text

    curve = pd.read_csv(tmp_path / "out" / "curve.csv")
    assert len(curve) == 0


def test_oracle_check(tmp_path):

    config = write_config(tmp_path, GAUSSIAN)

    assert main(["oracle-check", config]) == EXIT_OK

    out = tmp_path / "out"
    points = pd.read_csv(out / "oracle_check.csv", index_col=0)
    summary = pd.read_csv(out / "oracle_summary.csv", index_col=0)

    assert len(points) == 6
    assert list(summary.index) == [
        "eb_class",
        "eb_radius",
        "vanilla_class",
        "vanilla_radius",
    ]
    assert summary.loc["eb_radius", "violations"] <= 1


def test_oracle_check_abstentions(tmp_path):

    config = write_config(tmp_path, GAUSSIAN)

    # five agreeing samples cannot push the bound above one half
    assert main(["oracle-check", config, "--set", "confidence.nc=5"]) == EXIT_OK

    out = tmp_path / "out"
    points = pd.read_csv(out / "oracle_check.csv", index_col=0)
    summary = pd.read_csv(out / "oracle_summary.csv", index_col=0)

    assert np.all(points["eb_predicted"] == ebs.ABSTAIN)
    assert np.all(points["vanilla_predicted"] == ebs.ABSTAIN)
    assert np.all(points["eb_radius"] == 0)
    assert points["slack"].isna().all()
    np.testing.assert_array_equal(summary["violations"], 0)


def test_oracle_check_requires_gaussian(tmp_path):

    config = write_config(tmp_path, MIXTURE)
    assert main(["oracle-check", config]) == EXIT_CONFIG


def test_walk_jump_oracle(tmp_path):

    config = write_config(tmp_path, MIXTURE)
    args = [
        "walk-jump",
        config,
        "--set",
        "pipeline=oracle",
        "--set",
        "walk_chains=10",
        "--set",
        "walk_jump.tau=5",
        "--set",
        "trajectory=true",
    ]

    assert main(args) == EXIT_OK

    out = tmp_path / "out"
    points = pd.read_csv(out / "walk_jump.csv", index_col=[0, 1])
    summary = pd.read_csv(out / "walk_jump_summary.csv", index_col=0)
    trajectory = pd.read_csv(out / "trajectory.csv", index_col=[0, 1])

    assert len(points) == 10 * 2
    assert list(points.columns) == ["clean", "noisy", "xhat", "walk_jump"]
    assert len(summary) == 2
    assert len(trajectory) == 6 * 10
    assert "energy" in trajectory.columns


def test_train_and_compare(tmp_path):

    config = write_config(tmp_path, MIXTURE)
    settings = [
        "--set",
        "deen.steps=20",
        "--set",
        "deen.hidden=[8]",
        "--set",
        "deen.log_every=5",
        "--set",
        "train.mode=standard",
        "--set",
        "train.steps=20",
        "--set",
        "train.hidden=[8]",
        "--set",
        "pipeline=compare",
    ]

    assert main(["train-energy", config] + settings) == EXIT_OK
    assert main(["train-xhat", config] + settings) == EXIT_OK
    assert main(["curve", config] + settings) == EXIT_OK

    out = tmp_path / "out"
    for name in ("energy.ckpt", "classifier.ckpt", "energy_log.csv", "train_log.csv"):
        assert (out / name).exists()

    assert isinstance(ebs.load_checkpoint(out / "energy.ckpt"), ebs.EnergyNet)
    assert isinstance(ebs.load_checkpoint(out / "classifier.ckpt"), ebs.SoftClassifier)

    log = pd.read_csv(out / "energy_log.csv", index_col=0)
    assert "loss" in log.columns
    assert "wall_time" not in log.columns

    curve = pd.read_csv(out / "curve.csv", index_col=0)
    assert list(curve.columns) == [
        "certified_accuracy_vanilla",
        "certified_accuracy_eb",
    ]
    assert (out / "certify_vanilla.csv").exists()
    assert (out / "certify_eb.csv").exists()

    summary = pd.read_csv(out / "summary.csv", index_col=0)
    assert list(summary.index) == ["vanilla", "eb"]
    assert "vanilla_exceeds_eb" in summary.columns

    assert read_manifest(out)["command"] == "curve"


@pytest.mark.parametrize(
    "text, args",
    (
        (MIXTURE + "sigmaa: 1\n", []),
        (MIXTURE, ["--set", "confidence.alpha=2"]),
        (MIXTURE, ["--set", "novalue"]),
    ),
)
def test_exit_config_error(tmp_path, caplog, text, args):

    config = write_config(tmp_path, text)

    assert main(["gen-data", config] + args) == EXIT_CONFIG
    assert "ERROR" in caplog.text


def test_exit_missing_checkpoint(tmp_path, caplog):

    config = write_config(tmp_path, MIXTURE)

    assert main(["certify", config]) == EXIT_CONFIG
    assert "classifier: file" in caplog.text


def test_exit_numerical_error(tmp_path, monkeypatch):

    def diverge(cfg):
        raise ebs.TrainingDivergedError("loss is nan at step 3", step=3)

    monkeypatch.setitem(COMMANDS, "train-energy", (diverge, "diverges"))
    config = write_config(tmp_path, MIXTURE)

    assert main(["train-energy", config]) == EXIT_NUMERICAL
    assert not (tmp_path / "out" / "manifest.json").exists()


def test_exit_corrupt_checkpoint(tmp_path, caplog):

    config = write_config(tmp_path, MIXTURE)
    out = tmp_path / "out"
    out.mkdir()
    (out / "classifier.ckpt").write_bytes(b"not a checkpoint")

    assert main(["certify", config, "--set", "pipeline=vanilla"]) == EXIT_IO
    assert "at offset" in caplog.text


def test_exit_missing_config(tmp_path):

    assert main(["gen-data", str(tmp_path / "missing.yaml")]) == EXIT_IO


def test_unknown_command():

    with pytest.raises(SystemExit):
        main(["fit", "exp.yaml"])
