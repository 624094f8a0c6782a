"""scikit-learn compatible wrapper around the training loop."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .autodiff import Rng
from .data import Dataset
from .divergences import softmax
from .model import ClassifierSpec, logits
from .objective import TrainConfig, train
from .oracle import lds_per_example
from .perturbation import PerturbConfig

UNLABELED = -1


class VATClassifier(ClassifierMixin, BaseEstimator):
    """MLP classifier trained with virtual adversarial (or related) regularisation.

    Follows the scikit-learn semi-supervised convention: rows of ``y`` equal
    to ``-1`` are unlabeled and only feed the smoothness regulariser.

    Parameters
    ----------
    hidden_layer_sizes : tuple of int
        Widths of the ReLU hidden layers.
    method : {"vat", "rpt", "vat_entmin", "baseline", "adversarial_l2", "adversarial_linf"}
    epsilon : float
        Perturbation radius in input units.
    n_power_iterations : int
        Power-method steps used to find the virtual adversarial direction.
    alpha, beta : float
        Weights of the smoothness term and of the entropy term (``vat_entmin``).
    """

    def __init__(
        self,
        hidden_layer_sizes=(50,),
        method="vat",
        epsilon=1.0,
        xi=1e-6,
        n_power_iterations=1,
        alpha=1.0,
        beta=1.0,
        hidden_noise_sd=0.0,
        batch_size_labeled=64,
        batch_size_unlabeled=256,
        n_updates=1000,
        learning_rate=0.002,
        lr_schedule="constant",
        random_state=0,
    ):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.method = method
        self.epsilon = epsilon
        self.xi = xi
        self.n_power_iterations = n_power_iterations
        self.alpha = alpha
        self.beta = beta
        self.hidden_noise_sd = hidden_noise_sd
        self.batch_size_labeled = batch_size_labeled
        self.batch_size_unlabeled = batch_size_unlabeled
        self.n_updates = n_updates
        self.learning_rate = learning_rate
        self.lr_schedule = lr_schedule
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        k = 0 if self.method == "rpt" else self.n_power_iterations
        return TrainConfig(
            method=self.method,
            perturb=PerturbConfig(epsilon=self.epsilon, xi=self.xi, power_iterations=k),
            alpha=self.alpha,
            beta=self.beta,
            batch_labeled=self.batch_size_labeled,
            batch_unlabeled=self.batch_size_unlabeled,
            updates=self.n_updates,
            lr=self.learning_rate,
            lr_schedule=self.lr_schedule,
            lr_decay_start=self.n_updates // 2,
            record_every=max(self.n_updates // 100, 1),
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        labeled = y != UNLABELED
        if not labeled.any():
            raise ValueError("at least one labeled example is required")
        self.classes_, codes = np.unique(y[labeled], return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("need examples of at least two classes")
        self.n_features_in_ = X.shape[1]
        self.spec_ = ClassifierSpec(
            X.shape[1], tuple(self.hidden_layer_sizes), len(self.classes_), self.hidden_noise_sd
        )
        cfg = self._train_config()
        seed = 0 if self.random_state is None else int(self.random_state)
        unlabeled = Dataset(X[~labeled]) if (~labeled).any() else None
        self.params_, self.records_ = train(
            self.spec_, Dataset(X[labeled], codes), unlabeled, cfg, Rng(seed)
        )
        return self

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        z = logits(self.spec_, self.params_, X).data
        return z[:, 1] - z[:, 0] if len(self.classes_) == 2 else z

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        return softmax(logits(self.spec_, self.params_, X))

    def predict(self, X):
        check_is_fitted(self, "params_")
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def local_smoothness(self, X, epsilon=None, n_power_iterations=None, random_state=0):
        """Per-example LDS of the fitted model (higher means less smooth)."""
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        cfg = PerturbConfig(
            epsilon=self.epsilon if epsilon is None else epsilon,
            xi=self.xi,
            power_iterations=self.n_power_iterations if n_power_iterations is None else n_power_iterations,
        )
        return lds_per_example(self.spec_, self.params_, X, cfg, Rng(random_state))
