"""Sequential model container, VGG builders and the freezing boundary."""
from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np

from .exceptions import LayerNotFoundError, ShapeError
from .layers import Conv2D, Dense, Dropout, Flatten, InputLayer, Layer, MaxPool2D

ALL_FROZEN = "ALL_FROZEN"
NONE_FROZEN = "NONE"

# VGG-16 "configuration D": (block, convs, filters)
VGG16_BLOCKS = ((1, 2, 64), (2, 2, 128), (3, 3, 256), (4, 3, 512), (5, 3, 512))
VGG_MINI_BLOCKS = ((1, 2, 8), (2, 2, 16), (3, 2, 32))


class Model:
    """An ordered sequence of uniquely named layers ending in a softmax."""

    def __init__(self, layers: Sequence[Layer], class_count: int):
        if not layers or not isinstance(layers[0], InputLayer):
            raise ShapeError("a model starts with an InputLayer")
        names = [layer.name for layer in layers]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise ValueError(f"duplicate layer names: {sorted(dupes)}")
        self.layers = list(layers)
        self.input_shape = layers[0].shape
        self.class_count = int(class_count)
        self.shapes = self._shape_chain()
        if self.shapes[-1] != (self.class_count,):
            raise ShapeError(f"output shape {self.shapes[-1]} != ({self.class_count},)")
        last = self.layers[-1]
        if getattr(last, "activation", None) != "softmax":
            raise ShapeError("the final layer must use a softmax activation")

    def _shape_chain(self) -> list[tuple]:
        shapes = [self.input_shape]
        for layer in self.layers[1:]:
            shapes.append(tuple(layer.output_shape(shapes[-1])))
        return shapes

    def __repr__(self):
        return f"Model(input_shape={self.input_shape}, class_count={self.class_count}, layers={len(self.layers)})"

    @property
    def layer_names(self) -> list[str]:
        return [layer.name for layer in self.layers]

    def layer(self, name: str) -> Layer:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise LayerNotFoundError(name)

    def index_of(self, name: str) -> int:
        return self.layer_names.index(self.layer(name).name)

    def named_parameters(self, trainable_only: bool = False) -> Iterator[tuple[str, Layer, str]]:
        """Yield ``(full_name, layer, key)`` with full names like ``block1_conv1/kernel``."""
        for layer in self.layers:
            if trainable_only and not layer.trainable:
                continue
            for key in layer.params:
                yield f"{layer.name}/{key}", layer, key

    def get_weights(self, trainable_only: bool = False) -> dict[str, np.ndarray]:
        return {full: layer.params[key] for full, layer, key in self.named_parameters(trainable_only)}

    def count_params(self, trainable_only: bool = False) -> int:
        return sum(int(layer.params[key].size) for _, layer, key in self.named_parameters(trainable_only))

    def initialize(self, seed: int | np.random.Generator = 0) -> "Model":
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        for layer in self.layers:
            layer.initialize(rng)
        return self

    def astype(self, dtype) -> "Model":
        for layer in self.layers:
            layer.astype(dtype)
        return self

    def forward(self, batch: np.ndarray, training: bool = False, rng=None):
        """Run the batch through every layer.

        ``rng`` feeds dropout in training mode; pass one Generator per sample
        to make results independent of batch composition. Returns the class
        probabilities and the per-layer backward contexts.
        """
        if batch.ndim != len(self.input_shape) + 1 or tuple(batch.shape[1:]) != self.input_shape:
            raise ShapeError(f"batch shape {batch.shape} does not match input {self.input_shape}")
        contexts = []
        x = batch
        for layer in self.layers:
            x, ctx = layer.forward(x, training=training, rng=rng)
            contexts.append(ctx)
        return x, contexts

    def backward(self, grad, contexts, from_logits: bool = True) -> dict[str, np.ndarray]:
        """Backpropagate and return gradients of every trainable parameter.

        With ``from_logits`` the incoming gradient is taken w.r.t. the
        pre-softmax logits (the fused softmax + cross-entropy form).
        Propagation stops below the lowest trainable layer.
        """
        if len(contexts) != len(self.layers):
            raise ValueError("one context per layer is required")
        lowest = next((i for i, layer in enumerate(self.layers) if layer.trainable and layer.params), None)
        grads: dict[str, np.ndarray] = {}
        if lowest is None:
            return grads
        for i in range(len(self.layers) - 1, lowest - 1, -1):
            layer = self.layers[i]
            if i == len(self.layers) - 1 and from_logits:
                layer._check_context(grad, contexts[i])
                grad, pgrads = layer.backward_preactivation(grad, contexts[i])
            else:
                grad, pgrads = layer.backward(grad, contexts[i])
            if layer.trainable:
                for key, value in pgrads.items():
                    grads[f"{layer.name}/{key}"] = value
        return grads


def model_forward(model: Model, batch, training: bool = False, rng=None):
    return model.forward(batch, training=training, rng=rng)


def _vgg_stack(input_shape, class_count, blocks, dense_units, dropout):
    h, w, c = input_shape
    layers: list[Layer] = [InputLayer((h, w, c), name="input_1")]
    channels = c
    for block, convs, filters in blocks:
        for m in range(1, convs + 1):
            layers.append(Conv2D(channels, filters, 3, padding="same", activation="relu", name=f"block{block}_conv{m}"))
            channels = filters
        layers.append(MaxPool2D(2, 2, name=f"block{block}_pool"))
    layers.append(Flatten(name="flatten"))
    scale = 2 ** len(blocks)
    features = (h // scale) * (w // scale) * channels
    for k, units in enumerate(dense_units, start=1):
        layers.append(Dense(features, units, activation="relu", name=f"fc{k}"))
        layers.append(Dropout(dropout, name=f"dropout{k}"))
        features = units
    layers.append(Dense(features, class_count, activation="softmax", name="predictions"))
    return Model(layers, class_count)


def _check_image_shape(input_shape, multiple: int) -> tuple[int, int, int]:
    if len(input_shape) != 3:
        raise ShapeError(f"input shape must be (h, w, c), got {input_shape}")
    h, w, c = (int(v) for v in input_shape)
    if c < 1 or h < multiple or w < multiple or h % multiple or w % multiple:
        raise ShapeError(f"input extents must be positive multiples of {multiple}, got {input_shape}")
    return h, w, c


def build_vgg16(input_shape=(224, 224, 3), class_count: int = 1000, seed: int = 0,
                dropout: float = 0.5, initialize: bool = True) -> Model:
    """VGG-16 with Keras-style layer names and 0.5 dropout after both dense layers."""
    shape = _check_image_shape(input_shape, 32)
    if class_count < 1:
        raise ShapeError("class_count must be >= 1")
    model = _vgg_stack(shape, class_count, VGG16_BLOCKS, (4096, 4096), dropout)
    return model.initialize(seed) if initialize else model


def build_vgg_mini(input_shape=(32, 32, 1), class_count: int = 10, seed: int = 0,
                   dropout: float = 0.5, initialize: bool = True) -> Model:
    """Three-block, desk-scale network with the same naming and freezing mechanics."""
    shape = _check_image_shape(input_shape, 8)
    if class_count < 1:
        raise ShapeError("class_count must be >= 1")
    model = _vgg_stack(shape, class_count, VGG_MINI_BLOCKS, (64,), dropout)
    return model.initialize(seed) if initialize else model


ARCHITECTURES = {"vgg16": build_vgg16, "vgg-mini": build_vgg_mini}


def set_trainable_boundary(model: Model, first_trainable_layer: str | None) -> Model:
    """Freeze every layer strictly before ``first_trainable_layer``.

    ``ALL_FROZEN`` freezes everything; ``None`` or ``"NONE"`` freezes nothing.
    """
    if first_trainable_layer == ALL_FROZEN:
        boundary = len(model.layers)
    elif first_trainable_layer in (None, NONE_FROZEN):
        boundary = 0
    else:
        boundary = model.index_of(first_trainable_layer)
    for i, layer in enumerate(model.layers):
        layer.trainable = i >= boundary
    return model


def predict(model: Model, image: np.ndarray) -> tuple[int, np.ndarray]:
    """Classify one ``[h, w, c]`` image; ties go to the lowest class index."""
    if tuple(image.shape) != model.input_shape:
        raise ShapeError(f"image shape {image.shape} does not match input {model.input_shape}")
    probs, _ = model.forward(image[None], training=False)
    return int(np.argmax(probs[0])), probs[0]
