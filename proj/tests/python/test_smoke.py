"""End-to-end smoke tests for the python bindings."""
import numpy as np
import pytest

import antehoc


@pytest.fixture(scope="module")
def config():
    c = antehoc.ModelConfig()
    c.image_shape = (3, 32, 32)
    c.num_classes = 4
    c.num_concepts = 6
    c.backbone = "smallres-32"
    c.seed = 5
    return c


@pytest.fixture(scope="module")
def splits():
    spec = antehoc.SyntheticSpec()
    spec.num_classes = 4
    spec.num_attributes = 6
    spec.train_per_class = 10
    spec.seed = 5
    return antehoc.generate_synthetic(spec)


def test_forward_shapes(config, splits):
    model = antehoc.Model(config)
    x = np.random.default_rng(0).random((2, 3, 32, 32))
    assert model.forward_task(x).shape == (2, 4)
    concepts = model.extract_concepts(x)
    assert concepts.shape == (2, 6)
    assert model.predict_from_concepts(concepts).shape == (2, 4)
    assert model.reconstruct(x).shape == (2, 3, 32, 32)


def test_bad_input_raises(config):
    model = antehoc.Model(config)
    with pytest.raises(Exception):
        model.forward_task(np.zeros((2, 3, 8, 8)))


def test_fit_and_metrics(config, splits):
    opts = antehoc.TrainOptions()
    opts.epochs = 2
    opts.batch_size = 16
    result = antehoc.fit(config, splits.train, splits.val, opts)
    assert len(result.history) == 2

    acc = antehoc.task_accuracy(result.model, splits.test)
    assert 0.0 <= acc.value <= 100.0
    faith = antehoc.faithfulness(result.model, splits.test)
    interv = antehoc.intervention_accuracy(result.model, splits.test, 1.0)
    # Protocol identity: omega=1 intervention is faithfulness.
    assert interv.value == faith.value


def test_checkpoint_roundtrip(tmp_path, config, splits):
    model = antehoc.Model(config)
    path = str(tmp_path / "model.ckpt")
    antehoc.save_checkpoint(model, path)
    loaded = antehoc.load_checkpoint(path)
    x = np.random.default_rng(1).random((1, 3, 32, 32))
    np.testing.assert_array_equal(loaded.forward_task(x), model.forward_task(x))


def test_scaling_and_relevance():
    concepts = np.array([[1.0, 3.0, 5.0]])
    scaled = antehoc.scale_concepts(concepts)
    np.testing.assert_allclose(scaled, [[0.0, 0.5, 1.0]])
    rel = antehoc.relevance_from(scaled, [0], 2, 0.5)
    assert rel.at(0, 2) == 1.0
    assert antehoc.argmax_relevance_concepts(rel)[0] == 2
