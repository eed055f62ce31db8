"""Binary tensor container: round trips and structured parse failures."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from beamforge.io_cli.container import read_container, write_container
from beamforge.validation import ContainerFormatError


def roundtrip(tmp_path, tensors):
    path = tmp_path / "tensors.bft"
    write_container(path, tensors)
    return read_container(path)


def test_empty_container_roundtrips(tmp_path):
    assert roundtrip(tmp_path, {}) == {}


def test_multi_tensor_roundtrip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    tensors = {
        "volume": rng.normal(size=(3, 4, 5)).astype(np.float32),
        "image": rng.normal(size=(6, 2)),
        "flags": rng.integers(0, 256, size=17).astype(np.uint8),
        "scalarish": np.array([3.5]),
    }
    loaded = roundtrip(tmp_path, tensors)
    assert set(loaded) == set(tensors)
    for name, tensor in tensors.items():
        assert loaded[name].dtype == tensor.dtype
        assert loaded[name].shape == tensor.shape
        assert np.array_equal(loaded[name], tensor)


def test_zero_dimensional_and_empty_tensors(tmp_path):
    tensors = {"scalar": np.float64(2.25), "empty": np.zeros((0, 3))}
    loaded = roundtrip(tmp_path, tensors)
    assert loaded["scalar"].shape == ()
    assert loaded["scalar"] == 2.25
    assert loaded["empty"].shape == (0, 3)


def test_unicode_tensor_names(tmp_path):
    tensors = {"weights/слой-1": np.arange(3.0)}
    loaded = roundtrip(tmp_path, tensors)
    assert np.array_equal(loaded["weights/слой-1"], np.arange(3.0))


def _arrays(dtype):
    if np.dtype(dtype) == np.uint8:
        elements = st.integers(0, 255)
    else:
        elements = st.floats(-1e6, 1e6, width=32).map(float)
    return hnp.arrays(dtype=dtype, elements=elements,
                      shape=hnp.array_shapes(max_dims=4, max_side=6))


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([np.float32, np.float64, np.uint8]).flatmap(_arrays))
def test_roundtrip_property(tmp_path_factory, array):
    path = tmp_path_factory.mktemp("bft") / "t.bft"
    write_container(path, {"t": array})
    loaded = read_container(path)["t"]
    assert loaded.dtype == array.dtype
    assert loaded.shape == array.shape
    assert np.array_equal(loaded, array)


def test_unsupported_dtype_rejected(tmp_path):
    with pytest.raises(TypeError):
        write_container(tmp_path / "t.bft", {"t": np.arange(3, dtype=np.int32)})


def test_wrong_magic_reports_offset_zero(tmp_path):
    path = tmp_path / "t.bft"
    write_container(path, {"t": np.arange(3.0)})
    data = bytearray(path.read_bytes())
    data[:4] = b"NOPE"
    path.write_bytes(bytes(data))
    with pytest.raises(ContainerFormatError) as excinfo:
        read_container(path)
    assert excinfo.value.offset == 0
    assert "offset 0" in str(excinfo.value)


def test_truncated_payload_reports_offset(tmp_path):
    path = tmp_path / "t.bft"
    write_container(path, {"t": np.arange(5.0)})
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(ContainerFormatError) as excinfo:
        read_container(path)
    assert excinfo.value.offset > 0


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "t.bft"
    write_container(path, {"t": np.arange(5.0)})
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(ContainerFormatError):
        read_container(path)


def test_unknown_version_rejected(tmp_path):
    path = tmp_path / "t.bft"
    write_container(path, {"t": np.arange(2.0)})
    data = bytearray(path.read_bytes())
    data[4:6] = (9999).to_bytes(2, "little")
    path.write_bytes(bytes(data))
    with pytest.raises(ContainerFormatError) as excinfo:
        read_container(path)
    assert excinfo.value.offset == 4


def test_duplicate_names_rejected_on_write(tmp_path):
    # dict keys are unique, so duplicates can only arrive via custom mappings
    class Dupes(dict):
        def items(self):
            return [("t", np.arange(2.0)), ("t", np.arange(2.0))]

    with pytest.raises(ValueError):
        write_container(tmp_path / "t.bft", Dupes())


def test_file_is_little_endian_and_deterministic(tmp_path):
    a = tmp_path / "a.bft"
    b = tmp_path / "b.bft"
    tensors = {"x": np.arange(4.0), "y": np.arange(6, dtype=np.uint8)}
    write_container(a, tensors)
    write_container(b, tensors)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes()[:4] == b"BFT1"
