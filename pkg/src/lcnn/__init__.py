"""Label-consistent neural networks: hidden-layer supervision with ideal binary codes."""

__version__ = "0.1.0"

from .classify import ReferenceBank, embed, knn_predict, knn_probabilities, predict_argmax
from .data import Dataset, class_priority, gen_synthetic_clusters, load_csv, write_csv
from .head import (LabelConsistencyHead, NeuronAllocation, allocate_neurons, build_ideal_codes, combined_loss,
                   grad_A, grad_x, make_head, representation_error)
from .nn import Layer, Network, backward, forward, init_network, softmax_xent
from .optim import TrainConfig, TrainRecord, epochs_to_threshold, train
from .serialize import load_model, save_model
