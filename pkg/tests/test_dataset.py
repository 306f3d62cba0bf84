import numpy as np
import pytest

from ppde import coefficients as cf
from ppde import dataset as ds
from ppde import fem


@pytest.fixture(scope="module")
def small():
    return ds.generate(cf.chessboard(2, 0.1), 9, 3, seed=5)


def test_generate_shapes_and_invariants(small):
    assert len(small) == 3
    assert small.parameters.shape == (3, 4)
    assert small.solutions.shape == (3, 81)
    ds.check_records(small)


def test_zero_parameters_match_scaled_unit_problem():
    fam = cf.chessboard(2, 0.1)
    d = ds.generate(fam, 9, 1, seed=0, parameters=np.zeros((1, 4)))
    mesh = fem.build_mesh(9)
    unit = fem.solve(fem.assemble_system(mesh, np.ones(len(mesh.triangles)), ds.rhs))
    np.testing.assert_allclose(d.solutions[0], unit / 0.1, rtol=1e-11, atol=1e-14)


def test_same_seed_identical_bytes(tmp_path):
    fam = cf.trig_poly(2, 0.0)
    a, b = (ds.generate(fam, 9, 4, seed=7) for _ in range(2))
    ds.save(a, tmp_path / "a.bin")
    ds.save(b, tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_prefix_stability():
    fam = cf.cookies_variable(2, 0.1)
    short = ds.generate(fam, 9, 5, seed=3)
    long = ds.generate(fam, 9, 12, seed=3)
    assert short == long.head(5)


def test_norm_decreases_with_larger_diffusion():
    fam = cf.trig_poly(2, 0.0)
    sm = ds.SolutionMap(fam, 17)
    rng = np.random.default_rng(0)
    for _ in range(50):
        y = rng.random(2) * 0.8
        y_big = y + rng.random(2) * (1 - y) + 1e-3
        y_big = np.minimum(y_big, 1.0)
        assert fem.gram_norm(sm(y_big), sm.gram) < fem.gram_norm(sm(y), sm.gram)


def test_stored_solutions_reproduce_residual():
    fam = cf.clipped_poly(2, 0.1)
    d = ds.generate(fam, 17, 20, seed=1)
    sm = ds.SolutionMap(fam, 17)
    for j in np.random.default_rng(2).choice(20, 10, replace=False):
        system = sm.system(d.parameters[j])
        assert fem.residual(system, d.solutions[j]) <= 1e-8


def test_round_trip(tmp_path, small):
    path = tmp_path / "d.ppde"
    ds.save(small, path)
    loaded = ds.load(path)
    assert loaded == small
    assert loaded.parameters.tobytes() == small.parameters.tobytes()
    assert loaded.solutions.tobytes() == small.solutions.tobytes()


@pytest.mark.parametrize("family", [
    cf.trig_poly(3, -1.0, 1.0), cf.cookies_fixed(2, 1e-4, 0.8),
    cf.cookies_variable(2, 1e-4), cf.clipped_poly(2, 0.1),
])
def test_round_trip_every_family(tmp_path, family):
    d = ds.generate(family, 5, 2, seed=0)
    ds.save(d, tmp_path / "f.bin")
    assert ds.load(tmp_path / "f.bin") == d


def test_header_layout(tmp_path, small):
    path = tmp_path / "d.ppde"
    ds.save(small, path)
    raw = path.read_bytes()
    assert raw[:4] == b"PPDE"
    assert int.from_bytes(raw[4:8], "little") == 1
    assert raw[8] == 1  # chessboard tag
    assert len(raw) == ds.HEADER.size + 3 * (4 + 81) * 8
    assert ds.HEADER.size == 69


def test_header_only_inspection(tmp_path):
    # Construct a header followed by garbage that load() would reject.
    fam = cf.clipped_poly(3, 0.1)
    header = ds.HEADER.pack(b"PPDE", 1, 4, 10, 0, 3, 0.0, 0.1, 0.0, 5, 25, 1000, 9)
    path = tmp_path / "h.bin"
    path.write_bytes(header + b"\x00" * 17)
    h = ds.read_header(path)
    assert (h.family, h.p, h.D, h.count, h.seed) == (fam, 10, 25, 1000, 9)
    with pytest.raises(ds.DatasetFormatError):
        ds.load(path)


def test_truncated(tmp_path, small):
    path = tmp_path / "d.ppde"
    ds.save(small, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(ds.DatasetFormatError) as err:
        ds.load(path)
    assert "byte offset" in str(err.value)
    path.write_bytes(raw[:30])
    with pytest.raises(ds.DatasetFormatError):
        ds.load(path)


def test_bad_magic_and_version(tmp_path, small):
    path = tmp_path / "d.ppde"
    ds.save(small, path)
    raw = bytearray(path.read_bytes())
    bad = bytearray(raw)
    bad[:4] = b"XXXX"
    path.write_bytes(bytes(bad))
    with pytest.raises(ds.DatasetFormatError) as err:
        ds.load(path)
    assert err.value.offset == 0
    bad = bytearray(raw)
    bad[4] = 9
    path.write_bytes(bytes(bad))
    with pytest.raises(ds.DatasetFormatError) as err:
        ds.load(path)
    assert err.value.offset == 4


def test_failure_reports_sample_index():
    # mu stays positive but a forced negative parameter breaks ellipticity.
    fam = cf.chessboard(2, 0.1)
    params = np.array([[0.5] * 4, [0.5] * 4, [-1.0, 0, 0, 0]])
    with pytest.raises(ds.SampleSolveError) as err:
        ds.generate(fam, 5, 3, seed=0, parameters=params)
    assert err.value.index == 2


def test_train_test_split_uses_disjoint_seeds():
    fam = cf.chessboard(2, 0.1)
    train, test = ds.generate_split(fam, 5, 4, 3, seed=10)
    assert train.seed == 10 and test.seed == 11
    assert not np.array_equal(train.parameters[:3], test.parameters)
