import json
import math

import numpy as np
import pytest

from gmrfsel import io as gio
from gmrfsel.lattice import LatticeSpec
from gmrfsel.simulate import FieldObservations


def obs(p1=3, p2=4, n=2, toroidal=True, seed=0):
    x = np.random.default_rng(seed).normal(size=(n, p1, p2))
    return FieldObservations(LatticeSpec(p1, p2, toroidal), x)


def test_binary_round_trip(tmp_path):
    o = obs()
    gio.write_binary(o, tmp_path / "a.bin")
    back = gio.read_binary(tmp_path / "a.bin")
    assert np.array_equal(back.data, o.data)
    assert back.lattice.shape == (3, 4)
    raw = (tmp_path / "a.bin").read_bytes()
    assert len(raw) == 24 + 8 * 24
    assert np.frombuffer(raw[:24], "<i8").tolist() == [3, 4, 2]
    assert np.frombuffer(raw[24:32], "<f8")[0] == o.data[0, 0, 0]


def test_binary_rejects_truncated(tmp_path):
    gio.write_binary(obs(), tmp_path / "a.bin")
    raw = (tmp_path / "a.bin").read_bytes()
    (tmp_path / "b.bin").write_bytes(raw[:-8])
    with pytest.raises(ValueError, match="expected"):
        gio.read_binary(tmp_path / "b.bin")
    (tmp_path / "c.bin").write_bytes(raw[:10])
    with pytest.raises(ValueError, match="header"):
        gio.read_binary(tmp_path / "c.bin")


def test_csv_round_trip_exact(tmp_path):
    o = obs(seed=3)
    gio.write_csv(o, tmp_path / "a.csv")
    back = gio.read_csv(tmp_path / "a.csv")
    assert np.array_equal(back.data, o.data)


def test_csv_missing_node(tmp_path):
    gio.write_csv(obs(), tmp_path / "a.csv")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    (tmp_path / "b.csv").write_text("\n".join(lines[:5] + lines[6:]) + "\n")
    with pytest.raises(ValueError, match="missing"):
        gio.read_csv(tmp_path / "b.csv")


def test_sidecar_sets_lattice_type(tmp_path):
    o = obs(toroidal=False)
    gio.write_binary(o, tmp_path / "w.bin")
    gio.write_sidecar(tmp_path / "w.bin", {"lattice": o.lattice.to_dict()})
    back, meta = gio.load_dataset(tmp_path / "w.bin")
    assert not back.lattice.toroidal and meta is not None
    gio.write_binary(o, tmp_path / "t.bin")
    back, meta = gio.load_dataset(tmp_path / "t.bin")
    assert back.lattice.toroidal and meta is None


def test_dumps_deterministic():
    a = gio.dumps({"b": 0.1 + 0.2, "a": [np.float64(1 / 3), math.inf]})
    b = gio.dumps({"a": [1 / 3, math.inf], "b": 0.30000000000000004})
    assert a == b
    assert a.index('"a"') < a.index('"b"')
    assert json.loads(a)["a"][1] == math.inf
