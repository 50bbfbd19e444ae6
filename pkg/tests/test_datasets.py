import json

import numpy as np
import pytest

from afspin import datasets
from afspin.datasets import (
    MAGIC,
    ByteOrderError,
    DimensionError,
    MagicError,
    NonFiniteError,
    TruncatedPayloadError,
)
from afspin.dirac import spin_connection
from afspin.grid import Grid


def test_schwarzschild_metric_and_provenance():
    grid = Grid.centered(16, 4.0)
    d = datasets.schwarzschild_isotropic(grid, 2.0)
    phi = 1 + 1.0 / grid.r
    np.testing.assert_allclose(d.g[..., 0, 0], phi ** 4, rtol=1e-14)
    assert np.all(d.g[..., 0, 1] == 0)
    assert d.provenance["E"] == 2.0 and d.core_radius == 1.0
    assert not np.any(d.domain & (grid.r < 1.0))
    with pytest.raises(ValueError):
        datasets.schwarzschild_isotropic(grid, -1.0)


def test_bowen_york_trace_free_and_symmetric():
    grid = Grid.centered(24, 6.0)
    d = datasets.bowen_york(grid, (0.1, -0.2, 0.5), 1.0)
    np.testing.assert_allclose(np.einsum("...ii->...", d.h), 0.0, atol=1e-12)
    np.testing.assert_allclose(d.h, np.swapaxes(d.h, -1, -2), atol=1e-15)


def test_bowen_york_flat_divergence_free(rng):
    # central differences of the analytic tensor at random points
    P = (0.3, 0.0, -0.5)
    x = rng.uniform(-3, 3, (200, 3))
    x = x[np.linalg.norm(x, axis=-1) > 0.5]
    d = 1e-5
    div = np.zeros((len(x), 3))
    for j in range(3):
        e = np.zeros(3)
        e[j] = d
        Ap = datasets.bowen_york_extrinsic(x + e, P)
        Am = datasets.bowen_york_extrinsic(x - e, P)
        div += (Ap[:, :, j] - Am[:, :, j]) / (2 * d)
    scale = np.max(np.abs(datasets.bowen_york_extrinsic(x, P)), axis=(-2, -1)) / np.linalg.norm(x, axis=-1)
    assert np.max(np.abs(div) / scale[:, None]) < 1e-6


def test_bowen_york_energy_record():
    grid = Grid.centered(16, 6.0)
    d = datasets.bowen_york(grid, (0.0, 0.0, 0.5), 1.0)
    assert d.provenance["E"] == pytest.approx(1.28125, rel=1e-6)
    d0 = datasets.bowen_york(grid, (0.0, 0.0, 0.5), 1.0, dec_matter=False)
    assert d0.provenance["E"] == 1.0
    with pytest.raises(ValueError):
        datasets.bowen_york(grid, (0.0, 0.5), 1.0)


def test_bowen_york_dominant_energy_outside_core():
    grid = Grid.centered(48, 8.0)
    d = datasets.bowen_york(grid, (0.0, 0.0, 0.5), 1.0)
    R = spin_connection(d).script_R()
    gap = R[..., 0] - np.linalg.norm(R[..., 4:7], axis=-1)
    mask = grid.interior(3) & (grid.r >= 4.0)
    assert np.min(gap[mask]) > -2e-3


def test_perturbed_is_seeded():
    grid = Grid.centered(12, 2.0)
    a, b = datasets.perturbed(grid, seed=1), datasets.perturbed(grid, seed=1)
    c = datasets.perturbed(grid, seed=2)
    assert np.array_equal(a.g, b.g) and np.array_equal(a.h, b.h)
    assert not np.array_equal(a.h, c.h)


def test_generate_registry(small_grid):
    assert datasets.generate("flat", small_grid).name == "flat"
    with pytest.raises(ValueError, match="unknown generator"):
        datasets.generate("kerr", small_grid)


@pytest.fixture
def saved(tmp_path):
    grid = Grid.centered(12, 3.0)
    d = datasets.bowen_york(grid, (0.0, 0.3, 0.0), 1.0)
    path = tmp_path / "by.afid"
    datasets.save(d, path)
    return d, path


def test_afid_round_trip(saved):
    d, path = saved
    e = datasets.load(path)
    assert np.array_equal(d.g, e.g) and np.array_equal(d.h, e.h)
    assert e.grid == d.grid
    assert e.core_radius == d.core_radius
    assert e.provenance == json.loads(json.dumps(d.provenance))


def _rewrite_header(path, **changes):
    raw = path.read_bytes()
    end = raw.index(b"\n")
    header = json.loads(raw[len(MAGIC):end])
    header.update(changes)
    path.write_bytes(MAGIC + json.dumps(header).encode() + raw[end:])


def test_afid_bad_magic(saved):
    _, path = saved
    path.write_bytes(b"AFID2" + path.read_bytes()[5:])
    with pytest.raises(MagicError):
        datasets.load(path)


def test_afid_byte_order(saved):
    _, path = saved
    _rewrite_header(path, byte_order="big")
    with pytest.raises(ByteOrderError):
        datasets.load(path)


def test_afid_dimension_mismatch(saved):
    _, path = saved
    _rewrite_header(path, fields=[{"name": "g", "rank": 2, "components": 6}, {"name": "h", "rank": 2, "components": 9}])
    with pytest.raises(DimensionError):
        datasets.load(path)


def test_afid_truncated_payload(saved):
    _, path = saved
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(TruncatedPayloadError, match="truncated payload"):
        datasets.load(path)


def test_afid_oversized_payload(saved):
    _, path = saved
    path.write_bytes(path.read_bytes() + b"\0" * 8)
    with pytest.raises(DimensionError):
        datasets.load(path)


def test_afid_non_finite(saved):
    d, path = saved
    raw = bytearray(path.read_bytes())
    raw[-8:] = np.array([np.nan], "<f8").tobytes()
    path.write_bytes(bytes(raw))
    with pytest.raises(NonFiniteError):
        datasets.load(path)


def test_afid_errors_are_io_errors(saved):
    _, path = saved
    path.write_bytes(b"xx")
    with pytest.raises(OSError):
        datasets.load(path)
