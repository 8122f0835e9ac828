import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import dndarray as dnd
from dndarray.distribution import chunk_map
from dndarray.ndcore import DndArray, matmul_local, reduce, resplit
from dndarray.transport import run_loopback

SPLITS_3D = [None, 0, 1, 2]


def gathered(fn, p, *args):
    """Run ``fn(comm, *args) -> DndArray`` on p ranks and return rank 0's gathered content."""
    return run_loopback(lambda comm: fn(comm, *args).numpy(), p)[0]


def test_lshapes_of_five_over_three_ranks():
    out = run_loopback(lambda c: (dnd.zeros((5, 4, 3), split=0, comm=c).shape, dnd.zeros((5, 4, 3), split=0, comm=c).lshape), 3)
    assert [s for s, _ in out] == [(5, 4, 3)] * 3
    assert [l for _, l in out] == [(2, 4, 3), (2, 4, 3), (1, 4, 3)]


def test_replicated_tiles_identical():
    tiles = run_loopback(lambda c: dnd.ones((2, 2), comm=c).larray, 3)
    for t in tiles:
        np.testing.assert_array_equal(t, np.ones((2, 2)))


def test_full_leaves_high_rank_empty():
    out = run_loopback(lambda c: dnd.full((3,), 7.5, split=0, comm=c).larray, 4)
    assert [t.tolist() for t in out] == [[7.5], [7.5], [7.5], []]


def test_factory_rejects_bad_split():
    with pytest.raises(ValueError):
        dnd.zeros((2, 2), split=2)


def test_dtype_f32():
    a = dnd.zeros((3,), dtype="f32")
    assert a.dtype == np.float32


def test_arange_tiles():
    out = run_loopback(lambda c: dnd.arange(5, split=0, comm=c).larray.tolist(), 2)
    assert out == [[0, 1, 2], [3, 4]]


def test_arange_empty():
    out = run_loopback(lambda c: dnd.arange(0, split=0, comm=c).lshape, 3)
    assert out == [(0,)] * 3


@pytest.mark.parametrize("p", [1, 2, 3, 4])
@pytest.mark.parametrize("split", SPLITS_3D)
def test_random_uniform_split_invariant(p, split):
    want = np.random.default_rng(42).random((4, 5, 3))
    got = gathered(lambda c: dnd.random_uniform((4, 5, 3), split=split, seed=42, comm=c), p)
    np.testing.assert_array_equal(got, want)


def test_constructor_checks_tile_shape():
    comm = dnd.get_comm()
    with pytest.raises(ValueError, match="tile shape"):
        DndArray(np.zeros((2, 2)), (3, 2), 0, comm)


def test_elementwise_sub_and_sqrt():
    def prog(c):
        a = dnd.random_uniform((5, 3), split=0, seed=1, comm=c)
        return (a - a).numpy(), dnd.sqrt(dnd.full((4,), 4.0, split=0, comm=c)).numpy()

    zero, two = run_loopback(prog, 3)[0]
    assert not zero.any()
    assert (two == 2.0).all()


@pytest.mark.parametrize("p", [1, 2, 3])
@pytest.mark.parametrize("split", [None, 0, 1])
def test_elementwise_against_pointwise_oracle(p, split):
    x = np.random.default_rng(3).random((6, 7))
    y = np.random.default_rng(4).random((6, 7))

    def prog(c):
        a = dnd.random_uniform((6, 7), split=split, seed=3, comm=c)
        b = dnd.random_uniform((6, 7), split=split, seed=4, comm=c)
        out = dnd.zip_elementwise(a, b, lambda s, t: s * t + 1.0)
        out2 = dnd.map_elementwise(a, np.exp)
        return out.numpy(), out2.numpy(), (2.0 - a * 3 / b).numpy(), (a ** 2).numpy()

    got = run_loopback(prog, p)[0]
    np.testing.assert_array_equal(got[0], x * y + 1.0)
    np.testing.assert_array_equal(got[1], np.exp(x))
    np.testing.assert_array_equal(got[2], 2.0 - x * 3 / y)
    np.testing.assert_array_equal(got[3], x ** 2)


def test_zip_rejects_mismatch():
    def prog(c):
        a = dnd.zeros((4, 2), split=0, comm=c)
        with pytest.raises(ValueError, match="shape"):
            dnd.zip_elementwise(a, dnd.zeros((2, 4), split=0, comm=c), np.add)
        with pytest.raises(ValueError, match="split"):
            dnd.zip_elementwise(a, dnd.zeros((4, 2), split=1, comm=c), np.add)
        return True

    assert all(run_loopback(prog, 2))


def test_sum_of_arange_everywhere():
    assert run_loopback(lambda c: dnd.arange(5, split=0, comm=c).sum(), 3) == [10.0] * 3


def test_max_over_split_axis_is_replicated():
    def prog(c):
        m = dnd.array([[1.0, 2.0], [3.0, 4.0]], split=0, comm=c).max(axis=0)
        return m.split, m.larray.tolist()

    assert run_loopback(prog, 2) == [(None, [3.0, 4.0])] * 2


def naive_reduce(data, op, axis):
    """Loop oracle over every index, independent of numpy's reductions."""
    fold = {"sum": lambda a, b: a + b, "min": min, "max": max}[op]
    if axis is None:
        vals = [data[idx] for idx in itertools.product(*(range(n) for n in data.shape))]
        acc = vals[0]
        for v in vals[1:]:
            acc = fold(acc, v)
        return np.float64(acc)
    out_shape = data.shape[:axis] + data.shape[axis + 1 :]
    out = np.empty(out_shape)
    for idx in itertools.product(*(range(n) for n in out_shape)):
        vals = [data[idx[:axis] + (k,) + idx[axis:]] for k in range(data.shape[axis])]
        acc = vals[0]
        for v in vals[1:]:
            acc = fold(acc, v)
        out[idx] = acc
    return out


@pytest.mark.parametrize("p", [1, 2, 3, 4])
@pytest.mark.parametrize("split", [None, 0, 1])
@pytest.mark.parametrize("axis", [None, 0, 1])
@pytest.mark.parametrize("op", ["sum", "min", "max"])
def test_reduce_against_loop_oracle(p, split, axis, op):
    data = np.random.default_rng(8).random((6, 7))
    want = naive_reduce(data, op, axis)

    def prog(c):
        res = reduce(dnd.random_uniform((6, 7), split=split, seed=8, comm=c), op, axis)
        if isinstance(res, DndArray):
            cm_ok = res.split is None or res.lshape[res.split] == chunk_map(res.shape[res.split], c.size).extents[c.rank]
            return res.numpy(), cm_ok
        return res, True

    for got, balanced in run_loopback(prog, p):
        assert balanced
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=0)


def test_reduce_placement_rules():
    def prog(c):
        a = dnd.zeros((4, 6, 2), split=1, comm=c)
        return a.sum(axis=0).split, a.sum(axis=2).split, a.sum(axis=1).split

    assert run_loopback(prog, 3)[0] == (0, 1, None)


def test_reduce_invalid_axis_and_op():
    a = dnd.zeros((2, 2))
    with pytest.raises(ValueError):
        reduce(a, "sum", 2)
    with pytest.raises(ValueError):
        reduce(a, "prod", None)


def test_reduce_with_empty_tiles():
    out = run_loopback(lambda c: (dnd.arange(2, split=0, comm=c).min(), dnd.arange(2, split=0, comm=c).max()), 4)
    assert out == [(0.0, 1.0)] * 4


def test_resplit_fig3_case_split1_to_none():
    full = np.arange(12.0).reshape(3, 4)

    def prog(c):
        a = dnd.array(full, split=1, comm=c)
        r = resplit(a, None)
        return a.lshape, r.split, r.larray

    out = run_loopback(prog, 2)
    assert [o[0] for o in out] == [(3, 2), (3, 2)]
    for _, split, tile in out:
        assert split is None
        np.testing.assert_array_equal(tile, full)


def test_resplit_to_same_split_is_identity():
    def prog(c):
        a = dnd.random_uniform((5, 3), split=0, seed=2, comm=c)
        return np.array_equal(a.resplit(0).larray, a.larray)

    assert all(run_loopback(prog, 3))


@pytest.mark.parametrize("p", [1, 2, 3, 4])
def test_resplit_all_transitions_bitwise(p):
    want = np.random.default_rng(11).random((5, 7, 3))

    def prog(c):
        results = []
        for src, dst in itertools.product(SPLITS_3D, SPLITS_3D):
            a = dnd.random_uniform((5, 7, 3), split=src, seed=11, comm=c)
            b = a.resplit(dst)
            expected_lshape = dnd.zeros((5, 7, 3), split=dst, comm=c).lshape
            results.append((b.lshape == expected_lshape, b.numpy()))
        return results

    for balanced, content in run_loopback(prog, p)[0]:
        assert balanced
        np.testing.assert_array_equal(content, want)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.integers(1, 4))
def test_resplit_roundtrip_0_1_0(seed, p):
    def prog(c):
        a = dnd.random_uniform((5, 7, 3), split=0, seed=seed, comm=c)
        return np.array_equal(a.resplit(1).resplit(0).larray, a.larray)

    assert all(run_loopback(prog, p))


def test_resplit_preserves_f32():
    out = run_loopback(lambda c: dnd.random_uniform((4, 5), split=0, seed=1, dtype="f32", comm=c).resplit(1).dtype, 2)
    assert out == [np.float32] * 2


def test_stddev_api_demo():
    data = np.random.default_rng(0).random((10, 4))

    def prog(c):
        a = dnd.array(data, split=0, comm=c)
        return dnd.sqrt((a - a.mean()) ** 2).numpy()

    got = run_loopback(prog, 3)[0]
    np.testing.assert_allclose(got, np.sqrt((data - data.mean()) ** 2), rtol=1e-12, atol=1e-15)


def naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def test_matmul_local():
    a = np.array([[1.0, 2], [3, 4]])
    assert matmul_local(a, np.array([[5.0, 6], [7, 8]])).tolist() == [[19, 22], [43, 50]]
    np.testing.assert_array_equal(matmul_local(np.eye(2), a), a)
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(8, 5)), rng.normal(size=(5, 9))
    np.testing.assert_allclose(matmul_local(x, y), naive_matmul(x, y), rtol=1e-12, atol=1e-14)
    with pytest.raises(ValueError):
        matmul_local(x, x)
