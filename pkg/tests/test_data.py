import numpy as np
import pytest

from grrm.errors import DataError
from grrm.harness.config import DatasetSpec
from grrm.harness.data import ingest_csv, inject_noise
from grrm.harness.tictactoe import endgame_corpus


def _write(path, rows):
    path.write_text("\n".join(rows) + "\n")
    return path


@pytest.fixture
def animals(tmp_path):
    rows = ["color,size,kind"]
    for k in range(16):
        color = "red" if k % 2 else "blue"
        kind = "cat" if k < 8 else "dog"
        rows.append(f"{color},{k + 1},{kind}")
    return _write(tmp_path / "animals.csv", rows)


def test_numeric_columns_are_binned_on_quantiles(animals):
    spec = DatasetSpec(path=animals, label_column="kind", positive_label="dog", numeric_columns=["size"], bins=8)
    data = ingest_csv(animals, spec)
    sizes = sorted({x[1] for x, _ in data.train}, key=lambda b: int(b[1:]))
    assert sizes == [f"b{k}" for k in range(1, 9)]
    assert data.train[0] == (("blue", "b1"), -1)
    assert data.train[-1][1] == 1
    assert data.test == []
    assert len(data.test_space) == 2 * len(data.feature_space)


def test_split_fits_on_training_rows_only(animals):
    spec = DatasetSpec(path=animals, label_column="kind", feature_columns=["color"])
    data = ingest_csv(animals, spec, train_rows=range(0, 16, 2))
    assert data.feature_space.elements == (("blue",),)
    # red only appears in the test rows and maps to the column fallback
    assert all(x == ("blue",) for x, _ in data.test)
    assert len(data.test) == 8
    # labels sort as cat < dog without a positive label
    assert data.encoder.label_values == ("cat", "dog")


def test_bad_inputs(tmp_path, animals):
    with pytest.raises(DataError):
        ingest_csv(tmp_path / "missing.csv", DatasetSpec(path=tmp_path / "missing.csv", label_column="y"))
    with pytest.raises(DataError):
        ingest_csv(animals, DatasetSpec(path=animals, label_column="nope"))
    with pytest.raises(DataError):
        ingest_csv(animals, DatasetSpec(path=animals, label_column="kind", positive_label="bird"))
    three = _write(tmp_path / "three.csv", ["f,y", "a,1", "b,2", "c,3"])
    with pytest.raises(DataError):
        ingest_csv(three, DatasetSpec(path=three, label_column="y"))


def test_inject_noise_without_noise_is_the_identity():
    samples = [(board, label) for board, label in endgame_corpus()[:50]]
    assert inject_noise(samples, 0.0, 0.0, 0.0, rng=1) == samples


def test_inject_noise_flips_at_the_requested_rates():
    samples = list(endgame_corpus())
    rho_minus, rho_plus = 0.1, 0.3
    noisy = inject_noise(samples, rho_minus, rho_plus, 0.0, rng=np.random.default_rng(5))
    for label, rate in ((-1, rho_minus), (1, rho_plus)):
        pairs = [(y, ny) for (_, y), (_, ny) in zip(samples, noisy) if y == label]
        flips = sum(1 for y, ny in pairs if y != ny)
        n = len(pairs)
        assert abs(flips / n - rate) < 4 * np.sqrt(rate * (1 - rate) / n)


def test_inject_noise_changes_cells_to_other_symbols():
    samples = list(endgame_corpus())
    noisy = inject_noise(samples, 0.0, 0.0, 0.2, rng=3)
    changed = total = 0
    for (x, _), (nx, _) in zip(samples, noisy):
        for before, after in zip(x, nx):
            total += 1
            changed += before != after
            assert after in ("x", "o", "b")
    assert abs(changed / total - 0.2) < 4 * np.sqrt(0.2 * 0.8 / total)
    with pytest.raises(DataError):
        inject_noise(samples, 0.0, 0.0, 1.5, rng=0)
