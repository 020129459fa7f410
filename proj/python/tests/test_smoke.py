import numpy as np
import pytest

import xnn


@pytest.fixture(scope="module")
def shallow():
    x, y, names = xnn.synth_shallow(300, 12, seed=1)
    return xnn.split(x, y, 0.8, seed=1), names


def test_generators_are_deterministic():
    a = xnn.synth_deep(50, 6, seed=3)
    b = xnn.synth_deep(50, 6, seed=3)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    x, y, names = a
    assert x.shape == (50, 6) and y.shape == (50,)
    assert names == ["0", "1"]
    assert np.array_equal(y, (x[:, 0] * x[:, 1] < 0).astype(int))


def test_split_partitions_rows(shallow):
    (xt, yt, xv, yv), _ = shallow
    assert len(xt) == 240 and len(xv) == 60
    assert len(yt) == 240 and len(yv) == 60


def test_metrics_worked_examples():
    assert xnn.macro_f1([0, 0, 0, 0], [0, 0, 1, 1], 2) == pytest.approx(1 / 3, abs=1e-15)
    assert xnn.auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_fit_predict_attention(shallow, tmp_path):
    (xt, yt, xv, yv), _ = shallow
    m = xnn.Model(12, num_classes=2, base_width=16, d_model=8, heads=2, seed=0)
    assert m.kind == "xnn" and m.num_parameters > 0
    hist = m.fit(xt, yt, xv, yv, xnn.TrainConfig(epochs=30, seed=0))
    assert len(hist) == 30
    assert hist[-1]["train_loss"] < hist[0]["train_loss"]
    assert hist[-1]["accuracy"] > 0.65  # chance is about 0.5

    classes, probs = m.predict(xv)
    assert classes.shape == (60,) and probs.shape == (60, 2)
    assert np.allclose(probs.sum(axis=1), 1.0)

    att = m.attention(xv)
    assert att["per_head"].shape == (2, 3, 3)
    assert np.allclose(att["per_head"].sum(axis=2), 1.0, atol=1e-10)
    assert sum(att["stress"]) == pytest.approx(1.0, abs=1e-8)

    path = tmp_path / "m.ckpt"
    m.save(str(path))
    again = xnn.Model.load(str(path))
    assert np.array_equal(again.predict(xv)[1], probs)
    assert again.evaluate(xv, yv) == m.evaluate(xv, yv)


def test_control_has_no_attention(shallow):
    (xt, yt, xv, yv), _ = shallow
    c = xnn.Model(12, base_width=16, d_model=8, heads=2, kind="control")
    c.fit(xt, yt, xv, yv, xnn.TrainConfig(epochs=2))
    with pytest.raises(xnn.ConfigError):
        c.attention(xv)


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(xnn.ConfigError):
        xnn.Model(8, d_model=8, heads=3)
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(xnn.CheckpointError):
        xnn.Model.load(str(bad))
    ragged = tmp_path / "r.csv"
    ragged.write_text("a,b,label\n1,2,0\n1,0\n")
    with pytest.raises(xnn.DataError):
        xnn.load_csv(str(ragged))
    assert issubclass(xnn.DataError, xnn.Error)


def test_cli_entry_point(tmp_path):
    out = tmp_path / "d.csv"
    code, stdout, stderr = xnn.run_cli(["synth", "shallow", "--n", "10", "--dim", "4", "--out", str(out)])
    assert code == 0, stderr
    assert len(out.read_text().splitlines()) == 11
    x, y, names = xnn.load_csv(str(out))
    assert x.shape == (10, 4)
    assert xnn.run_cli(["synth", "nope", "--out", str(out)])[0] == 2
