import numpy as np
import pytest
import torch

import ebsmooth as ebs


def energy_net():
    return ebs.EnergyNet(3, (5, 4), 0.6, gen=ebs.rng_stream(1))


def soft_classifier():
    return ebs.SoftClassifier(3, 4, (6,), sigma=0.25, gen=ebs.rng_stream(2))


def assert_same_parameters(a, b):
    for pa, pb in zip(a.parameters(), b.parameters(), strict=True):
        torch.testing.assert_close(pa, pb, rtol=0, atol=0)


@pytest.mark.parametrize("make", (energy_net, soft_classifier))
def test_round_trip_networks(make, tmp_path):

    obj = make()
    path = tmp_path / "model.ckpt"
    ebs.save_checkpoint(obj, path)

    result = ebs.load_checkpoint(path, expected=type(obj))

    assert type(result) is type(obj)
    assert result.sigma == obj.sigma
    assert result.widths == obj.widths
    assert_same_parameters(result, obj)

    # bit-exact bytes
    assert ebs.to_bytes(result) == path.read_bytes()


def test_round_trip_linear():

    h = ebs.LinearClassifier([0.1, -2.0, 1 / 3], b=-0.4)
    result = ebs.from_bytes(ebs.to_bytes(h))

    np.testing.assert_array_equal(result.w, h.w)
    assert result.b == h.b


def test_header_layout():

    data = ebs.to_bytes(energy_net())

    assert data[:8] == b"EBSMCKPT"
    # version, tag, number of widths
    assert np.frombuffer(data, "<u4", count=3, offset=8).tolist() == [1, 1, 4]
    assert np.frombuffer(data, "<u4", count=4, offset=20).tolist() == [3, 5, 4, 1]
    assert np.frombuffer(data, "<f8", count=1, offset=36)[0] == 0.6


def test_bad_magic():

    data = b"NOTACKPT" + ebs.to_bytes(energy_net())[8:]

    with pytest.raises(ebs.FormatError, match="bad magic .* at offset 0") as excinfo:
        ebs.from_bytes(data)

    assert excinfo.value.offset == 0


def test_truncated():

    data = ebs.to_bytes(energy_net())

    with pytest.raises(ebs.FormatError, match="Truncated checkpoint") as excinfo:
        ebs.from_bytes(data[:-4])
    assert excinfo.value.offset == 52

    with pytest.raises(ebs.FormatError, match="Truncated checkpoint"):
        ebs.from_bytes(data[:10])


def test_trailing_bytes():

    data = ebs.to_bytes(energy_net())

    with pytest.raises(ebs.FormatError, match="Trailing bytes") as excinfo:
        ebs.from_bytes(data + b"\x00")

    assert excinfo.value.offset == len(data)


def test_unknown_tag():

    data = bytearray(ebs.to_bytes(energy_net()))
    data[12] = 9

    with pytest.raises(ebs.FormatError, match="Unknown type tag 9 at offset 12"):
        ebs.from_bytes(bytes(data))


def test_unsupported_version():

    data = bytearray(ebs.to_bytes(energy_net()))
    data[8] = 2

    with pytest.raises(ebs.FormatError, match="format version 2"):
        ebs.from_bytes(bytes(data))


def test_load_checkpoint_wrong_type(tmp_path):

    path = tmp_path / "energy.ckpt"
    ebs.save_checkpoint(energy_net(), path)

    with pytest.raises(ebs.FormatError, match="Expected a SoftClassifier or"):
        ebs.load_checkpoint(path, expected=(ebs.SoftClassifier, ebs.LinearClassifier))


def test_to_bytes_unsupported():

    with pytest.raises(TypeError, match="Cannot checkpoint"):
        ebs.to_bytes(ebs.IsoGaussian(2))


def test_missing_file_is_os_error(tmp_path):

    with pytest.raises(OSError):
        ebs.load_checkpoint(tmp_path / "missing.ckpt")
