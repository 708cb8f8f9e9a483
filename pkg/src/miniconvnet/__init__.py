"""A small NumPy convolutional network engine for hand-gesture classification.

VGG-style sequential models with layer freezing, RMSprop training, seeded
augmentation, PPM/keypoint ingestion and a scikit-learn compatible
classifier.
"""
from .augment import AugmentConfig, hflip, random_augment, rotate, shift
from .data import (Dataset, KeypointSet, Sample, crop_from_keypoints, decode_ppm, encode_ppm, load_dataset,
                   normalize, read_keypoints_json, resize)
from .estimator import ConvNetClassifier, RandomAugmenter
from .exceptions import *  # noqa: F401,F403
from .layers import Conv2D, Dense, Dropout, Flatten, InputLayer, MaxPool2D, ReLU, Softmax, conv2d_reference, softmax
from .losses import accuracy, binary_cross_entropy, categorical_cross_entropy, confusion_counts
from .model import (ALL_FROZEN, Model, build_vgg16, build_vgg_mini, model_forward, predict,
                    set_trainable_boundary)
from .optim import RMSprop, RMSpropState, rmsprop_init, rmsprop_step
from .training import TrainConfig, TrainReport, evaluate, export_curves, split, train
from .weights import load_weights, save_weights

__version__ = "0.1.0"
