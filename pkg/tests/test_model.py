import numpy as np
import pytest

from conftest import numeric_grad, rel_error
from miniconvnet.exceptions import LayerNotFoundError, ShapeError
from miniconvnet.layers import Dense
from miniconvnet.losses import categorical_cross_entropy, one_hot
from miniconvnet.model import ALL_FROZEN, build_vgg16, build_vgg_mini, predict, set_trainable_boundary

VGG16_LAYERS = [
    "input_1",
    "block1_conv1", "block1_conv2", "block1_pool",
    "block2_conv1", "block2_conv2", "block2_pool",
    "block3_conv1", "block3_conv2", "block3_conv3", "block3_pool",
    "block4_conv1", "block4_conv2", "block4_conv3", "block4_pool",
    "block5_conv1", "block5_conv2", "block5_conv3", "block5_pool",
    "flatten", "fc1", "dropout1", "fc2", "dropout2", "predictions",
]


def vgg16_param_count(class_count, h=224, w=224, c=3):
    """Analytic sum over the configuration: 3x3 convs, then three dense layers."""
    total, cin = 0, c
    for convs, filters in ((2, 64), (2, 128), (3, 256), (3, 512), (3, 512)):
        for _ in range(convs):
            total += 3 * 3 * cin * filters + filters
            cin = filters
    features = (h // 32) * (w // 32) * 512
    for n_in, n_out in ((features, 4096), (4096, 4096), (4096, class_count)):
        total += n_in * n_out + n_out
    return total


@pytest.fixture(scope="module")
def vgg16_shell():
    return build_vgg16((224, 224, 3), 1000, initialize=False)


class TestVGG16:
    def test_layer_names(self, vgg16_shell):
        assert vgg16_shell.layer_names == VGG16_LAYERS
        kinds = [layer.kind for layer in vgg16_shell.layers]
        assert kinds.count("conv2d") == 13 and kinds.count("maxpool2d") == 5
        assert kinds.count("dense") == 3 and kinds.count("dropout") == 2 and kinds.count("flatten") == 1

    def test_parameter_count(self, vgg16_shell):
        assert vgg16_param_count(1000) == 138_357_544
        assert vgg16_shell.count_params() == 138_357_544

    def test_pool_shapes(self, vgg16_shell):
        for n in range(1, 6):
            shape = vgg16_shell.shapes[vgg16_shell.index_of(f"block{n}_pool")]
            assert shape[:2] == (224 // 2**n, 224 // 2**n)
        assert vgg16_shell.shapes[vgg16_shell.index_of("block5_pool")] == (7, 7, 512)

    def test_ten_classes(self):
        model = build_vgg16((64, 64, 3), 10, initialize=False)
        assert model.shapes[-1] == (10,)
        assert model.count_params() == vgg16_param_count(10, 64, 64)

    def test_dropout_rates(self, vgg16_shell):
        assert vgg16_shell.layer("dropout1").rate == 0.5 and vgg16_shell.layer("dropout2").rate == 0.5

    def test_block5_freeze_boundary(self, vgg16_shell):
        set_trainable_boundary(vgg16_shell, "block5_conv1")
        cut = VGG16_LAYERS.index("block5_conv1")
        for i, layer in enumerate(vgg16_shell.layers):
            assert layer.trainable == (i >= cut)
        names = [n for n, _, _ in vgg16_shell.named_parameters(trainable_only=True)]
        expected = [f"{layer}/{p}" for layer in ("block5_conv1", "block5_conv2", "block5_conv3", "fc1", "fc2",
                                                 "predictions") for p in ("kernel", "bias")]
        assert names == expected

    @pytest.mark.parametrize("shape", [(16, 16, 3), (224, 200, 3), (224, 224)])
    def test_bad_input_shape(self, shape):
        with pytest.raises(ShapeError):
            build_vgg16(shape, 10, initialize=False)


class TestVGGMini:
    def test_output_and_pool_shapes(self):
        model = build_vgg_mini((32, 32, 1), 10)
        probs, _ = model.forward(np.zeros((3, 32, 32, 1), np.float32))
        assert probs.shape == (3, 10)
        assert model.shapes[model.index_of("block3_pool")] == (4, 4, 32)

    def test_zeros_input_is_uniform(self):
        # zero input -> zero conv/dense activations (zero biases) -> zero logits
        model = build_vgg_mini((32, 32, 1), 10, seed=3)
        probs, _ = model.forward(np.zeros((2, 32, 32, 1), np.float32))
        np.testing.assert_allclose(probs, 0.1, atol=1e-6)

    def test_rows_sum_to_one_and_inference_is_pure(self, rng):
        model = build_vgg_mini((16, 16, 3), 4, seed=1)
        x = rng.uniform(0, 1, size=(5, 16, 16, 3)).astype(np.float32)
        a, _ = model.forward(x)
        b, _ = model.forward(x)
        assert np.array_equal(a, b)
        np.testing.assert_allclose(a.sum(axis=1), 1.0, atol=1e-6)

    def test_seeded_init_reproducible(self):
        a, b = build_vgg_mini(seed=5), build_vgg_mini(seed=5)
        for (name, wa), wb in zip(a.get_weights().items(), b.get_weights().values()):
            assert np.array_equal(wa, wb), name
        fc1 = a.layer("fc1").params["kernel"]
        limit = np.sqrt(6 / sum(fc1.shape))
        assert np.abs(fc1).max() <= limit and not a.layer("fc1").params["bias"].any()

    def test_bad_shape(self):
        with pytest.raises(ShapeError):
            build_vgg_mini((30, 32, 1), 10)

    def test_batch_shape_checked(self):
        with pytest.raises(ShapeError):
            build_vgg_mini().forward(np.zeros((1, 16, 16, 1), np.float32))


class TestFreezing:
    def test_first_layer_means_all_trainable(self):
        model = set_trainable_boundary(build_vgg_mini(), "input_1")
        assert all(layer.trainable for layer in model.layers)

    def test_all_frozen(self):
        model = set_trainable_boundary(build_vgg_mini(), ALL_FROZEN)
        assert model.count_params(trainable_only=True) == 0
        assert model.backward(np.zeros((1, 10), np.float32), model.forward(np.zeros((1, 32, 32, 1), np.float32))[1]) == {}

    def test_unknown_name(self):
        with pytest.raises(LayerNotFoundError):
            set_trainable_boundary(build_vgg_mini(), "block9_conv1")

    def test_backward_only_returns_trainable(self):
        model = set_trainable_boundary(build_vgg_mini(), "block3_conv1")
        probs, ctx = model.forward(np.ones((2, 32, 32, 1), np.float32))
        grads = model.backward(probs - one_hot([0, 1], 10), ctx)
        assert sorted(grads) == sorted(n for n, _, _ in model.named_parameters(trainable_only=True))


def test_model_backward_matches_finite_differences():
    """Whole-network gradient on a tiny float64 vgg-mini, sampled coordinates.

    A smaller step than the per-layer checks: through a dozen ReLU and pooling
    layers a 1e-3 perturbation of an early weight flips activation patterns.
    """
    model = build_vgg_mini((8, 8, 2), 3, seed=11).astype(np.float64)
    rng = np.random.default_rng(0)
    for layer in model.layers:
        if "bias" in layer.params:
            layer.params["bias"] = rng.normal(scale=0.1, size=layer.params["bias"].shape)
    x = rng.normal(size=(2, 8, 8, 2))
    target = one_hot([0, 2], 3, np.float64)
    probs, ctx = model.forward(x)
    grads = model.backward(categorical_cross_entropy(probs, target).grad, ctx)

    def loss():
        return categorical_cross_entropy(model.forward(x)[0], target).value

    for name in ("block1_conv1/kernel", "block2_conv2/bias", "block3_conv1/kernel", "fc1/kernel", "predictions/bias"):
        layer, key = name.split("/")
        param = model.layer(layer).params[key]
        flat = param.reshape(-1)
        picks = rng.choice(flat.size, size=min(6, flat.size), replace=False)
        sub = np.zeros(len(picks))
        for j, p in enumerate(picks):
            view = flat[p : p + 1]
            sub[j] = numeric_grad(loss, view, h=1e-5)[0]
        assert rel_error(grads[name].reshape(-1)[picks], sub) < 1e-3, name


class TestPredict:
    def _model(self, bias):
        model = build_vgg_mini((8, 8, 1), 4, seed=0)
        out = model.layer("predictions")
        out.params["kernel"][:] = 0
        out.params["bias"][:] = bias
        return model

    def test_argmax(self):
        label, probs = predict(self._model([0.0, 3.0, 1.0, 0.0]), np.zeros((8, 8, 1), np.float32))
        assert label == 1 and probs.shape == (4,)

    def test_tie_goes_to_lowest_index(self):
        label, _ = predict(self._model([2.0, 0.0, 0.0, 2.0]), np.zeros((8, 8, 1), np.float32))
        assert label == 0

    def test_invariant_to_logit_shift(self, rng):
        model = build_vgg_mini((8, 8, 1), 4, seed=2)
        img = rng.uniform(size=(8, 8, 1)).astype(np.float32)
        before = predict(model, img)[0]
        model.layer("predictions").params["bias"] += 5.0
        assert predict(model, img)[0] == before

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            predict(build_vgg_mini((8, 8, 1), 4), np.zeros((8, 8, 3), np.float32))


def test_model_rejects_duplicate_names():
    from miniconvnet.layers import InputLayer
    from miniconvnet.model import Model

    layers = [InputLayer((2,)), Dense(2, 2, name="d"), Dense(2, 2, activation="softmax", name="d")]
    with pytest.raises(ValueError):
        Model(layers, 2)
