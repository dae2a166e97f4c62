"""Multi-scale pyramidal pooling networks in NumPy.

Convolutional networks that accept images of any size: pyramidal max
pooling turns each feature map into a fixed-length vector, an optional
MLPDict layer encodes every pixel against a learnable dictionary, and taps
at several depths of the network are concatenated before classification.
"""
from .codebook import Codebook, kmeans_fit, llc_encode, llc_objective, vq_encode
from .data_io import Dataset, PreprocessPolicy, Sample, load_idx, load_image_dir, preprocess
from .encoding import MlpDictParams, mlpdict_backward, mlpdict_forward
from .errors import (
    ContractError,
    DomainError,
    FormatError,
    NumericError,
    ShapeError,
    SizeError,
    ValidationError,
)
from .netgraph import (
    LayerSpec,
    Network,
    NetworkSpec,
    TapSpec,
    build_network,
    load_checkpoint,
    net_backward,
    net_forward,
    parse_network_spec,
    save_checkpoint,
)
from .pyrpool import pyr_backward, pyr_forward, pyr_output_dim, tile_bounds
from .tensor import new_tensor, normalize_zmuv, reshape
from .training import TrainConfig, anneal_lr, grad_check, per_class_accuracy, sgd_step, train, train_epoch

__version__ = "0.1.0"
