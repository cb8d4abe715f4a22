import numpy as np
import pytest

from src.config.model_config import ModelConfig
from src.core.errors import FileFormatError
from src.core.tensor import Tensor
from src.network.checkpoint import MAGIC, read_checkpoint, write_checkpoint
from src.network.params import ModelParams, init_model_params


@pytest.fixture
def params():
    return init_model_params(ModelConfig(input_side=16, base_width=2), 5)


def test_round_trip_keeps_names_order_and_values(tmp_path, params):
    path = str(tmp_path / "model.pccckpt")
    write_checkpoint(path, params)
    loaded = read_checkpoint(path)
    assert list(loaded) == list(params)
    for name in params:
        assert loaded[name].shape == params[name].shape
        np.testing.assert_array_equal(loaded[name].data, params[name].data)
        assert loaded[name].requires_grad


def test_manifest_layout(tmp_path):
    path = tmp_path / "tiny.pccckpt"
    write_checkpoint(str(path), ModelParams({"gen.a": Tensor([[1.0, 2.0]]), "disc.b": Tensor([3.0])}))
    blob = path.read_bytes()
    header = MAGIC + b"2\ngen.a\t1 2\ndisc.b\t1\n"
    assert blob.startswith(header)
    np.testing.assert_array_equal(np.frombuffer(blob[len(header):], dtype="<f8"), [1.0, 2.0, 3.0])


def test_wrong_magic_is_rejected(tmp_path):
    path = tmp_path / "bad.pccckpt"
    path.write_bytes(b"PCCCKPT v9\n0\n")
    with pytest.raises(FileFormatError) as info:
        read_checkpoint(str(path))
    assert info.value.offset == 0


def test_truncated_payload_is_rejected(tmp_path, params):
    path = tmp_path / "model.pccckpt"
    write_checkpoint(str(path), params)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(FileFormatError, match="truncated"):
        read_checkpoint(str(path))


def test_trailing_bytes_are_rejected(tmp_path, params):
    path = tmp_path / "model.pccckpt"
    write_checkpoint(str(path), params)
    path.write_bytes(path.read_bytes() + bytes(8))
    with pytest.raises(FileFormatError, match="trailing"):
        read_checkpoint(str(path))


def test_bad_manifest_entry_is_rejected(tmp_path):
    path = tmp_path / "bad.pccckpt"
    path.write_bytes(MAGIC + b"1\ngen.a 1 2\n" + bytes(16))
    with pytest.raises(FileFormatError):
        read_checkpoint(str(path))
