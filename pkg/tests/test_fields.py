"""
Coefficient fields, data loaders and the block-parallel map.

Proves:
 Group 1 - Permeability
   1. Generators are deterministic per seed and stay >= 1
   2. Text and binary files load back the written values
   3. Bad headers, wrong counts and values below 1 are rejected

 Group 2 - Sources and boundary data
   4. two_region puts +a and -a in the two rectangles
   5. Unknown kinds are rejected; sparse_modes defers the load
   6. Nodal boundary files are looked up at lattice points

 Group 3 - Parallel map
   7. Results keep input order for any worker count
   8. GMSDG_THREADS is parsed leniently
"""

import struct

import numpy as np
import pytest

from src.fields.permeability import (
    BINARY_MAGIC, PermeabilityField, channels_field, inclusions_field, load_field_text, load_kappa,
    load_or_generate_kappa, save_field_text, save_kappa,
)
from src.fields.sources import (
    bilinear_boundary, load_boundary, load_or_generate_source, two_region_source, zero_boundary,
)
from src.parallel import block_map, worker_count


# ── Group 1: permeability ─────────────────────────────────────────────────────

@pytest.mark.parametrize('generator', [channels_field, inclusions_field])
def test_generators_deterministic(generator):
    a = generator(32, contrast=1e4, seed=7)
    b = generator(32, contrast=1e4, seed=7)
    c = generator(32, contrast=1e4, seed=8)
    np.testing.assert_array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)
    assert a.values.min() >= 1.0
    assert a.values.max() == pytest.approx(1e4)


def test_generate_from_spec():
    field = load_or_generate_kappa({'kind': 'channels', 'contrast': 100.0, 'seed': 1, 'nx': 3}, 16)
    assert field.shape == (16, 16)
    assert field.contrast == pytest.approx(100.0)
    assert load_or_generate_kappa({}, 4).contrast == 1.0
    with pytest.raises(ValueError):
        load_or_generate_kappa({'kind': 'fractal'}, 4)


@pytest.mark.parametrize('suffix', ['.txt', '.bin'])
def test_kappa_files(tmp_path, suffix):
    field = channels_field(8, contrast=1e3, seed=2, count=3)
    path = tmp_path / f'kappa{suffix}'
    save_kappa(path, field)
    np.testing.assert_array_equal(load_kappa(path).values, field.values)
    spec = {'kind': 'file', 'path': str(path)}
    np.testing.assert_array_equal(load_or_generate_kappa(spec, 8).values, field.values)
    with pytest.raises(ValueError):
        load_or_generate_kappa(spec, 16)


def test_binary_layout(tmp_path):
    path = tmp_path / 'k.bin'
    save_kappa(path, PermeabilityField(np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])))
    raw = path.read_bytes()
    assert raw[:8] == BINARY_MAGIC
    assert struct.unpack('<qq', raw[8:24]) == (3, 2)
    np.testing.assert_array_equal(np.frombuffer(raw[24:], '<f8'), [1, 2, 3, 4, 5, 6])


def test_text_file_errors(tmp_path):
    bad_header = tmp_path / 'a.txt'
    bad_header.write_text('SOURCE 2 2\n1 1 1 1\n')
    with pytest.raises(ValueError):
        load_field_text(bad_header)

    short = tmp_path / 'b.txt'
    short.write_text('KAPPA 2 2\n1 1 1\n')
    with pytest.raises(ValueError):
        load_field_text(short)

    low = tmp_path / 'c.txt'
    save_field_text(low, np.array([[1.0, 0.5], [1.0, 1.0]]))
    with pytest.raises(ValueError, match='cx=1, cy=0'):
        load_kappa(low)


def test_binary_file_errors(tmp_path):
    path = tmp_path / 'bad.bin'
    path.write_bytes(b'NOTKAPPA' + struct.pack('<qq', 1, 1) + np.ones(1).tobytes())
    with pytest.raises(ValueError):
        load_kappa(path)
    with pytest.raises(ValueError):
        PermeabilityField(np.ones(4))


# ── Group 2: sources and boundary data ────────────────────────────────────────

def test_two_region_signs():
    values = two_region_source(10, amplitude=2.0)
    assert values[2, 2] == 2.0
    assert values[8, 8] == -2.0
    assert values[5, 5] == 0.0
    assert values.sum() == pytest.approx(0.0)


def test_source_kinds(tmp_path):
    assert load_or_generate_source({'kind': 'constant', 'value': 3.0}, 4).sum() == pytest.approx(48.0)
    assert load_or_generate_source({'kind': 'sparse_modes', 'modes': [1]}, 4) is None
    with pytest.raises(ValueError):
        load_or_generate_source({'kind': 'wells'}, 4)
    with pytest.raises(ValueError):
        two_region_source(4, regions=[(0, 0, 1, 1)])

    path = tmp_path / 'f.txt'
    save_field_text(path, np.arange(16.0).reshape(4, 4), header='SOURCE')
    np.testing.assert_array_equal(load_or_generate_source({'kind': 'file', 'path': str(path)}, 4),
                                  np.arange(16.0).reshape(4, 4))


def test_boundary_kinds(tmp_path):
    x = np.array([0.0, 0.5, 1.0])
    y = np.array([1.0, 1.0, 0.5])
    assert load_boundary({}, 4) is zero_boundary
    np.testing.assert_array_equal(load_boundary({'kind': 'bilinear'}, 4)(x, y), bilinear_boundary(x, y))
    with pytest.raises(ValueError):
        load_boundary({'kind': 'neumann'}, 4)

    nodal = np.arange(9.0).reshape(3, 3)
    path = tmp_path / 'g.txt'
    save_field_text(path, nodal, header='NODAL')
    g = load_boundary({'kind': 'file', 'path': str(path)}, 2)
    np.testing.assert_array_equal(g(x, y), [6.0, 7.0, 5.0])
    with pytest.raises(ValueError):
        load_boundary({'kind': 'file', 'path': str(path)}, 4)


# ── Group 3: parallel map ─────────────────────────────────────────────────────

@pytest.mark.parametrize('workers', [1, 3, 8])
def test_block_map_order(workers):
    assert block_map(lambda i: i * i, range(20), workers=workers) == [i * i for i in range(20)]


@pytest.mark.parametrize('raw, expected', [('4', 4), ('0', 1), ('many', 1), ('', 1)])
def test_worker_count(monkeypatch, raw, expected):
    monkeypatch.setenv('GMSDG_THREADS', raw)
    assert worker_count() == expected
