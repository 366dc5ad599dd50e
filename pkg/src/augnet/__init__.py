"""augnet: a self-contained deep-learning mini-library and experiment CLI for
comparing data-augmentation strategies (affine transforms, style banks, and a
learned augmentation network trained jointly with a small CNN classifier)."""

from .tensor import (
    GradientMap,
    ShapeError,
    Tape,
    Tensor,
    backward,
    contains_nonfinite,
    elementwise,
    grad_check,
    matmul,
    reduce,
)
from .layers import (
    BatchNormParams,
    Conv2dParams,
    DenseParams,
    activation,
    batchnorm,
    conv2d,
    dense,
    dropout,
    maxpool2d,
)
from .models import (
    AugNet,
    InputSpec,
    SmallNet,
    augnet_forward,
    build_models,
    load_checkpoint,
    save_checkpoint,
    smallnet_forward,
)
from .losses import (
    LossConfig,
    accuracy,
    classification_loss,
    combined_loss,
    content_loss,
    gram,
    predict,
    style_loss,
)
from .augment import (
    AffineRanges,
    AffineSpec,
    PairSample,
    affine_apply,
    augment_dataset_traditional,
    concat_pair,
    load_style_bank,
    sample_affine_spec,
    sample_pair,
)
from .data import (
    DataError,
    LabeledDataset,
    SplitDataset,
    load_idx,
    load_image_dir,
    normalize,
    split,
)
from .train import (
    AdamState,
    MetricsHistory,
    TrainingDivergedError,
    adam_step,
    evaluate,
    init_adam,
    train_neural,
    train_plain,
)
from .config import ConfigError, ExperimentConfig, parse_config

__version__ = "0.1.0"
