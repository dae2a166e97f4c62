"""Online SGD training, evaluation metrics and gradient checking."""
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DomainError, NumericError, ValidationError
from .netgraph import net_backward, net_forward, net_loss
from .tensor import as_tensor

METRICS = ("per_class", "overall")


@dataclass
class TrainConfig:
    initial_lr: float = 0.001
    anneal_factor: float = 0.97
    momentum: float = 0.9
    max_epochs: int = 30
    seed: int = 0
    stop_on_recognized: bool = False
    metric: str = "per_class"

    def violations(self):
        problems = []
        if not self.initial_lr > 0:
            problems.append(f"lr must be > 0, got {self.initial_lr}")
        if not 0 < self.anneal_factor <= 1:
            problems.append(f"anneal factor must be in (0, 1], got {self.anneal_factor}")
        if not 0 <= self.momentum < 1:
            problems.append(f"momentum must be in [0, 1), got {self.momentum}")
        if self.max_epochs < 1:
            problems.append(f"epochs must be >= 1, got {self.max_epochs}")
        if self.metric not in METRICS:
            problems.append(f"metric must be one of {METRICS}, got {self.metric!r}")
        return problems


@dataclass
class OptState:
    velocity: dict
    lr: float
    epoch: int = 0


def init_opt_state(params, lr):
    return OptState({k: np.zeros_like(v) for k, v in params.items()}, lr)


@dataclass
class EpochReport:
    epoch: int
    lr: float
    mean_loss: float
    train_acc: float
    val_acc: float = None

    CSV_HEADER = "epoch,lr,mean_loss,train_acc,val_acc"

    def csv_row(self):
        val = "" if self.val_acc is None else repr(self.val_acc)
        return f"{self.epoch},{self.lr!r},{self.mean_loss!r},{self.train_acc!r},{val}"


def anneal_lr(initial_lr, factor, epoch):
    if epoch < 0:
        raise DomainError(f"epoch must be >= 0, got {epoch}")
    return initial_lr * factor**epoch


def sgd_step(params, grads, state, lr, momentum):
    """Momentum update ``v <- m*v - lr*g; theta <- theta + v``, in place."""
    for name, theta in params.items():
        g = grads[name]
        v = state.velocity[name]
        if g.shape != theta.shape or v.shape != theta.shape:
            raise ContractError(f"{name}: parameter {theta.shape}, gradient {g.shape}, velocity {v.shape}")
        v *= momentum
        v -= lr * g
        theta += v
    return params, state


# -- metrics ----------------------------------------------------------------

def confusion_matrix(predictions, labels, n_classes):
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels), np.asarray(predictions)), 1)
    return cm


def per_class_accuracy(predictions, labels, n_classes):
    """Mean over the classes present in ``labels`` of their recognition rate."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise DomainError("per-class accuracy of an empty set")
    if predictions.shape != labels.shape:
        raise DomainError(f"{len(predictions)} predictions for {len(labels)} labels")
    cm = confusion_matrix(predictions, labels, n_classes)
    counts = cm.sum(axis=1)
    present = counts > 0
    return float(np.mean(np.diag(cm)[present] / counts[present]))


def overall_accuracy(predictions, labels):
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise DomainError("accuracy of an empty set")
    return float(np.mean(np.asarray(predictions) == labels))


def score(predictions, labels, n_classes, metric="per_class"):
    if metric == "overall":
        return overall_accuracy(predictions, labels)
    return per_class_accuracy(predictions, labels, n_classes)


@dataclass
class Evaluation:
    predictions: np.ndarray
    labels: np.ndarray
    mean_loss: float
    n_classes: int
    features: list = field(default_factory=list)

    @property
    def overall(self):
        return overall_accuracy(self.predictions, self.labels)

    @property
    def per_class(self):
        return per_class_accuracy(self.predictions, self.labels, self.n_classes)

    @property
    def confusion(self):
        return confusion_matrix(self.predictions, self.labels, self.n_classes)


def _check_classes(net, dataset):
    if dataset.n_classes != net.spec.classes:
        raise ValidationError(
            f"dataset has {dataset.n_classes} classes but the network outputs {net.spec.classes}"
        )


def evaluate(net, dataset, keep_features=False):
    _check_classes(net, dataset)
    preds, losses, feats = [], [], []
    for s in dataset.samples:
        post, cache = net_forward(net, s.image)
        preds.append(int(post.argmax()))
        losses.append(net_loss(cache, s.label))
        if keep_features:
            feats.append(cache.features)
    return Evaluation(np.array(preds), dataset.labels, float(np.mean(losses)), dataset.n_classes, feats)


# -- training loop ----------------------------------------------------------

def epoch_order(n, seed, epoch):
    """Per-epoch shuffle seeded by ``(seed, epoch)``."""
    return np.random.default_rng([seed, epoch]).permutation(n)


def train_epoch(net, dataset, config, state):
    """One shuffled pass of per-sample SGD updates.

    Training accuracy is scored from the prediction made for each sample
    just before its update. The learning rate is annealed at the end.
    """
    if len(dataset) == 0:
        raise DomainError("cannot train on an empty dataset")
    _check_classes(net, dataset)
    lr = state.lr
    preds, labels, losses = [], [], []
    for idx in epoch_order(len(dataset), config.seed, state.epoch):
        s = dataset.samples[idx]
        post, cache = net_forward(net, s.image)
        loss = net_loss(cache, s.label)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite loss at epoch {state.epoch}, sample {idx} ({s.source})")
        grads = net_backward(net, cache, s.label)
        sgd_step(net.params, grads, state, lr, config.momentum)
        net.touch()
        preds.append(int(post.argmax()))
        labels.append(s.label)
        losses.append(loss)
    report = EpochReport(
        epoch=state.epoch,
        lr=lr,
        mean_loss=float(np.mean(losses)),
        train_acc=score(preds, labels, dataset.n_classes, config.metric),
    )
    state.epoch += 1
    state.lr = anneal_lr(config.initial_lr, config.anneal_factor, state.epoch)
    return report


def train(net, dataset, config, val_set=None, on_epoch=None):
    """Train until ``max_epochs`` or, if enabled, until the training set is
    fully recognised (checked with a clean evaluation pass after each epoch).

    Returns the list of epoch reports.
    """
    problems = config.violations()
    if problems:
        raise ValidationError(problems)
    state = init_opt_state(net.params, config.initial_lr)
    reports = []
    for _ in range(config.max_epochs):
        report = train_epoch(net, dataset, config, state)
        if val_set is not None:
            ev = evaluate(net, val_set)
            report.val_acc = ev.overall if config.metric == "overall" else ev.per_class
        reports.append(report)
        if on_epoch is not None:
            on_epoch(report)
        if config.stop_on_recognized and evaluate(net, dataset).per_class == 1.0:
            break
    return reports


# -- gradient checking ------------------------------------------------------

def relative_error(a, n):
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def grad_check(net, sample, epsilon=1e-5, jitter=1e-3, seed=0, params=None, max_entries=None):
    """Largest relative error between analytic and central-difference gradients.

    The input image is first jittered by uniform noise of amplitude
    ``jitter`` so that no max-pooling window contains exact ties. The
    network parameters are restored afterwards.

    Parameters
    ----------
    sample : Sample or (image, label)
    params : iterable of str, optional
        Restrict the check to these parameter names.
    max_entries : int, optional
        Check at most this many randomly chosen entries per parameter array,
        which keeps the check affordable on full-size networks.
    """
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    image, label = (sample.image, sample.label) if hasattr(sample, "image") else sample
    image = as_tensor(image)
    if jitter:
        image = image + np.random.default_rng(seed).uniform(-jitter, jitter, image.shape)

    def loss():
        _, cache = net_forward(net, image)
        value = net_loss(cache, label)
        if not np.isfinite(value):
            raise NumericError("non-finite loss during gradient check")
        return value

    _, cache = net_forward(net, image)
    if not np.isfinite(net_loss(cache, label)):
        raise NumericError("non-finite loss during gradient check")
    analytic = net_backward(net, cache, label)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in params if params is not None else net.params:
        flat = net.params[name].reshape(-1)
        entries = range(flat.size)
        if max_entries is not None and flat.size > max_entries:
            entries = np.sort(rng.choice(flat.size, max_entries, replace=False))
        for i in entries:
            orig = flat[i]
            flat[i] = orig + epsilon
            plus = loss()
            flat[i] = orig - epsilon
            minus = loss()
            flat[i] = orig
            numeric = (plus - minus) / (2 * epsilon)
            worst = max(worst, float(relative_error(analytic[name].reshape(-1)[i], numeric)))
    return worst
