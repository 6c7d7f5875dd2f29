import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meetransfer.ingest import (
    IngestError,
    WindowSpec,
    apply_standardize,
    export_csv,
    fit_standardize,
    load_csv,
    load_split,
    n_windows,
    save_windows,
)
from meetransfer.synthdata import ShiftScenario, gen_source


def _write(path, header, rows):
    path.write_text("\n".join([",".join(header)] + [",".join(map(str, r)) for r in rows]) + "\n")
    return path


def test_five_rows_window_three(tmp_path):
    p = _write(tmp_path / "a.csv", ["a", "b", "y"],
               [[i, 10 * i, 100 * i] for i in range(5)])
    w = load_csv(p, WindowSpec(3, ("a", "b"), "y"))
    assert len(w) == 3
    # time-major flattening: (a0, b0, a1, b1, a2, b2)
    np.testing.assert_array_equal(w.X[0], [0, 0, 1, 10, 2, 20])
    np.testing.assert_array_equal(w.y, [200, 300, 400])


def test_short_group_yields_no_windows(tmp_path):
    rows = [[1, 1, "g1"], [2, 2, "g1"]] + [[i, i, "g2"] for i in range(4)]
    p = _write(tmp_path / "g.csv", ["x", "y", "id"], rows)
    w = load_csv(p, WindowSpec(3, ("x",), "y", group_column="id"))
    assert len(w) == 2 and set(w.groups) == {"g2"}
    with pytest.raises(IngestError):
        load_csv(_write(tmp_path / "s.csv", ["x", "y"], [[1, 1], [2, 2]]), WindowSpec(3, ("x",), "y"))


def test_two_groups_of_four(tmp_path):
    rows = [[i, i, "a"] for i in range(4)] + [[i, -i, "b"] for i in range(4)]
    p = _write(tmp_path / "g.csv", ["x", "y", "id"], rows)
    w = load_csv(p, WindowSpec(2, ("x",), "y", group_column="id"))
    # 3 windows per group, none across the boundary
    assert len(w) == 6
    np.testing.assert_array_equal(w.y, [1, 2, 3, -1, -2, -3])


def test_stride(tmp_path):
    p = _write(tmp_path / "a.csv", ["x", "y"], [[i, i] for i in range(10)])
    w = load_csv(p, WindowSpec(3, ("x",), "y", stride=3))
    assert len(w) == n_windows(10, 3, 3) == 3
    np.testing.assert_array_equal(w.y, [2, 5, 8])


@settings(max_examples=10, deadline=None)
@given(st.lists(st.integers(1, 12), min_size=1, max_size=6), st.integers(1, 4), st.integers(1, 3))
def test_window_counts_match_enumeration(tmp_path_factory, lengths, window, stride):
    rows = [[t, t, f"g{g}"] for g, n in enumerate(lengths) for t in range(n)]
    p = _write(tmp_path_factory.mktemp("w") / "w.csv", ["x", "y", "id"], rows)
    expected = sum(len(range(0, n - window + 1, stride)) for n in lengths)
    spec = WindowSpec(window, ("x",), "y", stride=stride, group_column="id")
    if expected == 0:
        with pytest.raises(IngestError):
            load_csv(p, spec)
    else:
        assert len(load_csv(p, spec)) == expected
    assert expected == sum(n_windows(n, window, stride) for n in lengths)


def test_roundtrip_window_one(tmp_path):
    data = gen_source(ShiftScenario(dim=6, n_source=40))
    names = export_csv(data, tmp_path / "d.csv")
    back = load_csv(tmp_path / "d.csv", WindowSpec(1, tuple(names), "y"))
    assert np.max(np.abs(back.X - data.X)) <= 1e-12
    assert np.max(np.abs(back.y - data.y)) <= 1e-12


def test_save_windows(tmp_path):
    p = _write(tmp_path / "a.csv", ["x", "y"], [[i, i] for i in range(4)])
    w = load_csv(p, WindowSpec(2, ("x",), "y"))
    save_windows(w, tmp_path / "w.csv")
    lines = (tmp_path / "w.csv").read_text().splitlines()
    assert lines[0] == "f0,f1,label,group" and len(lines) == 4


def test_errors(tmp_path):
    spec = WindowSpec(1, ("x",), "y")
    with pytest.raises(IngestError, match="missing"):
        load_csv(_write(tmp_path / "m.csv", ["x", "z"], [[1, 2]]), spec)
    with pytest.raises(IngestError, match="row 2"):
        load_csv(_write(tmp_path / "n.csv", ["x", "y"], [[1, 2], ["abc", 3]]), spec)
    (tmp_path / "e.csv").write_text("")
    with pytest.raises(IngestError):
        load_csv(tmp_path / "e.csv", spec)
    with pytest.raises(IngestError):
        load_csv(_write(tmp_path / "h.csv", ["x", "y"], []), spec)
    with pytest.raises(ValueError):
        WindowSpec(0, ("x",), "y")
    with pytest.raises(ValueError):
        WindowSpec(1, ("x",), "y", group_column="x")


def test_standardize():
    X = np.array([[1.0, 5.0], [3.0, 5.0]])
    st_ = fit_standardize(X)
    Z = apply_standardize(st_, X)
    np.testing.assert_allclose(Z[:, 0], [-1.0, 1.0])
    # constant feature is flagged and passed through
    np.testing.assert_array_equal(Z[:, 1], [5.0, 5.0])
    assert st_.constant.tolist() == [False, True]
    np.testing.assert_allclose(apply_standardize(st_, [[2.0, 7.0]]), [[0.0, 7.0]])
    with pytest.raises(ValueError):
        apply_standardize(st_, np.ones((1, 3)))


def test_standardize_unit_moments(rng):
    X = rng.normal(3.0, 2.0, size=(500, 4))
    Z = apply_standardize(fit_standardize(X), X)
    np.testing.assert_allclose(Z.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(Z.std(axis=0), 1.0, atol=1e-12)


def test_load_split_uses_source_stats(tmp_path):
    src = _write(tmp_path / "s.csv", ["x", "y"], [[0, 0], [2, 1]])
    tgt = _write(tmp_path / "t.csv", ["x", "y"], [[4, 2]])
    out = load_split({"source": src, "target_test": tgt}, WindowSpec(1, ("x",), "y"))
    np.testing.assert_allclose(out["source"].X[:, 0], [-1.0, 1.0])
    np.testing.assert_allclose(out["target_test"].X[:, 0], [3.0])
    with pytest.raises(IngestError):
        load_split({"target_test": tgt}, WindowSpec(1, ("x",), "y"))
