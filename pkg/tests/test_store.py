import numpy as np
import pytest

from flowembed.data import GeneratorSpec, generate_dataset
from flowembed.pipeline import GraphConfig, embed
from flowembed.store import load_result, save_result
from flowembed.trainer import TrainerConfig


@pytest.fixture(scope="module")
def result():
    ds = generate_dataset(GeneratorSpec("double_helix", 40))
    cfg = TrainerConfig(embedder_hidden=(6,), field_hidden=(6,), epochs=2, k=3, n_random=3)
    return embed(ds, cfg, GraphConfig(k=4, m=6))[0]


def test_round_trip_is_exact(tmp_path, result):
    save_result(result, tmp_path)
    back = load_result(tmp_path)
    assert np.array_equal(back.embeddings, result.embeddings)
    assert np.array_equal(back.field_at_points, result.field_at_points)
    assert np.array_equal(back.labels, result.labels)
    assert np.array_equal(back.pseudotime, result.pseudotime)
    assert np.array_equal(back.test_indices, result.test_indices)
    assert back.loss_curves == result.loss_curves
    for p, q in zip(back.xi.params + back.psi.params, result.xi.params + result.psi.params):
        assert np.array_equal(p, q)
    # the reloaded networks reproduce the stored field exactly
    assert np.array_equal(back.psi(back.embeddings), result.field_at_points)


def test_header(tmp_path, result):
    save_result(result, tmp_path)
    assert (tmp_path / "embedding.csv").read_text().splitlines()[0] == "id,e0,e1,psi0,psi1,label"


def test_missing_file_named(tmp_path, result):
    save_result(result, tmp_path)
    (tmp_path / "psi.json").unlink()
    with pytest.raises(FileNotFoundError, match="psi.json"):
        load_result(tmp_path)
