import numpy as np
import pytest

from src.core.errors import FileFormatError
from src.core.volume import Volume
from src.data.volume_io import read_volume, volume_header, write_volume


def test_header_and_file_size(tmp_path):
    path = tmp_path / "v.pccvol"
    write_volume(str(path), Volume((2, 2, 2), fill_value=1.5))
    blob = path.read_bytes()
    assert volume_header((2, 2, 2)) == b"PCCVOL v1 2 2 2\n"
    assert blob.startswith(b"PCCVOL v1 2 2 2\n")
    assert len(blob) == 48
    np.testing.assert_array_equal(np.frombuffer(blob[16:], dtype="<f4"), np.full(8, 1.5))


def test_round_trip_of_float32_values(tmp_path):
    values = np.random.default_rng(0).random((3, 4, 5)).astype(np.float32).astype(np.float64)
    volume = Volume.from_array(values)
    path = str(tmp_path / "nested" / "v.pccvol")
    write_volume(path, volume)
    assert read_volume(path) == volume


def test_payload_is_in_lattice_order(tmp_path):
    path = str(tmp_path / "v.pccvol")
    write_volume(path, Volume.from_array(np.arange(24.0).reshape(2, 3, 4)))
    assert read_volume(path).voxels[1, 2, 3] == 23.0
    assert read_volume(path).voxels[0, 1, 2] == 6.0


@pytest.mark.parametrize("blob", [b"PCCVOL v2 1 1 1\n" + bytes(4), b"NOTAVOL\n", b"PCCVOL v1 1 x 1\n" + bytes(4),
                                  b"PCCVOL v1 0 1 1\n", b"no newline at all"])
def test_malformed_headers_are_rejected(tmp_path, blob):
    path = tmp_path / "bad.pccvol"
    path.write_bytes(blob)
    with pytest.raises(FileFormatError):
        read_volume(str(path))


def test_truncated_payload_names_the_offset(tmp_path):
    path = tmp_path / "short.pccvol"
    path.write_bytes(b"PCCVOL v1 2 2 2\n" + bytes(31))
    with pytest.raises(FileFormatError) as info:
        read_volume(str(path))
    assert info.value.offset == 47


def test_trailing_bytes_are_rejected(tmp_path):
    path = tmp_path / "long.pccvol"
    path.write_bytes(b"PCCVOL v1 1 1 1\n" + bytes(5))
    with pytest.raises(FileFormatError):
        read_volume(str(path))
