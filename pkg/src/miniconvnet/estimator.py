"""scikit-learn compatible wrappers around the training engine."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .augment import AugmentConfig, random_augment
from .data import Dataset
from .exceptions import ConfigError
from .model import ARCHITECTURES, predict as predict_one
from .parallel import AUGMENT, INIT, stream
from .training import TrainConfig, evaluate, train
from .validation import check_images, check_labels
from .weights import load_weights


def _augment_config(value) -> AugmentConfig:
    if value is None:
        return AugmentConfig.disabled()
    if isinstance(value, AugmentConfig):
        return value
    if isinstance(value, dict):
        return AugmentConfig(**value)
    raise ConfigError(f"augment must be None, a dict or an AugmentConfig, got {type(value).__name__}")


class ConvNetClassifier(ClassifierMixin, BaseEstimator):
    """VGG-style image classifier trained with RMSprop.

    Parameters
    ----------
    arch : {"vgg-mini", "vgg16"}
    epochs, batch_size, lr, beta, epsilon : training hyperparameters.
    freeze_boundary : str or None
        First trainable layer; everything before it keeps its initial (or
        ``init_weights``) values.
    augment : dict, AugmentConfig or None
        On-the-fly augmentation; ``None`` disables it.
    dropout : float
        Rate of every dropout layer.
    val_split : float
        Held-out fraction used for per-epoch validation when ``fit`` gets
        no ``eval_set``.
    init_weights : path or None
        Weight file loaded non-strictly before training.
    seed : int

    Attributes
    ----------
    model_ : Model
    classes_ : ndarray of the sorted class labels
    report_ : TrainReport
    optimizer_state_ : RMSpropState
    """

    def __init__(self, arch="vgg-mini", epochs=30, batch_size=32, lr=1e-3, beta=0.9, epsilon=1e-8,
                 freeze_boundary=None, augment=None, dropout=0.5, val_split=0.2, init_weights=None, seed=0):
        self.arch = arch
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.beta = beta
        self.epsilon = epsilon
        self.freeze_boundary = freeze_boundary
        self.augment = augment
        self.dropout = dropout
        self.val_split = val_split
        self.init_weights = init_weights
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, beta=self.beta,
                           epsilon=self.epsilon, freeze_boundary=self.freeze_boundary,
                           augment=_augment_config(self.augment), seed=self.seed, val_split=self.val_split)

    def fit(self, X, y, eval_set=None):
        X = check_images(X)
        y = check_labels(y, X.shape[0])
        if self.arch not in ARCHITECTURES:
            raise ConfigError(f"unknown arch {self.arch!r}; choose from {sorted(ARCHITECTURES)}")
        config = self._config()
        self.classes_, encoded = np.unique(y, return_inverse=True)
        names = [str(c) for c in self.classes_]
        model = ARCHITECTURES[self.arch](X.shape[1:], len(self.classes_), seed=stream(self.seed, INIT),
                                          dropout=self.dropout)
        if self.init_weights is not None:
            load_weights(model, self.init_weights, strict=False)
        data = Dataset.from_arrays(X, encoded, names)
        val = None
        if eval_set is not None:
            X_val, y_val = eval_set
            X_val = check_images(X_val, X.shape[1:])
            y_val = check_labels(y_val, X_val.shape[0])
            val = Dataset.from_arrays(X_val, self._encode(y_val), names)
        self.model_, self.optimizer_state_, self.report_ = train(model, data, config, val_data=val)
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        self.input_shape_ = tuple(X.shape[1:])
        return self

    def _encode(self, y):
        idx = np.searchsorted(self.classes_, y)
        idx = np.clip(idx, 0, len(self.classes_) - 1)
        if not np.all(self.classes_[idx] == y):
            raise ConfigError("labels contain classes unseen during fit")
        return idx

    def predict_proba(self, X, batch_size: int = 64):
        check_is_fitted(self, "model_")
        X = check_images(X, self.input_shape_)
        out = [self.model_.forward(X[i : i + batch_size], training=False)[0] for i in range(0, len(X), batch_size)]
        return np.concatenate(out)

    def predict(self, X):
        check_is_fitted(self, "model_")
        # argmax keeps the lowest index on ties
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def predict_image(self, image):
        """Label and probabilities for a single ``[h, w, c]`` image."""
        check_is_fitted(self, "model_")
        label, probs = predict_one(self.model_, check_images(image[None], self.input_shape_)[0])
        return self.classes_[label], probs

    def evaluate(self, X, y):
        check_is_fitted(self, "model_")
        X = check_images(X, self.input_shape_)
        y = check_labels(y, X.shape[0])
        return evaluate(self.model_, Dataset.from_arrays(X, self._encode(y), [str(c) for c in self.classes_]))


class RandomAugmenter(TransformerMixin, BaseEstimator):
    """Stateless transformer applying seeded random augmentation per image.

    Image ``i`` of a call uses the stream keyed by ``(seed, i)``, so a call
    is reproducible and independent of how it is chunked by index.
    """

    def __init__(self, flip_prob=0.5, max_shift_frac=0.1, max_rotate_deg=15.0, fill_value=0.0,
                 interpolation="nearest", seed=0):
        self.flip_prob = flip_prob
        self.max_shift_frac = max_shift_frac
        self.max_rotate_deg = max_rotate_deg
        self.fill_value = fill_value
        self.interpolation = interpolation
        self.seed = seed

    def fit(self, X, y=None):
        check_images(X)
        self.config_ = AugmentConfig(self.flip_prob, self.max_shift_frac, self.max_rotate_deg,
                                     self.fill_value, self.interpolation)
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        X = check_images(X)
        return np.stack([random_augment(img, self.config_, stream(self.seed, AUGMENT, 0, i))
                         for i, img in enumerate(X)])
