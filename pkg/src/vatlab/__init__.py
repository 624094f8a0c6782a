"""Virtual adversarial training on a small reverse-mode autodiff core."""
from .autodiff import Rng
from .model import ClassifierSpec, ParamSet, init_params, logits
from .perturbation import PerturbConfig
from .objective import TrainConfig, train

__all__ = ["Rng", "ClassifierSpec", "ParamSet", "init_params", "logits", "PerturbConfig", "TrainConfig", "train"]
__version__ = "0.1.0"
