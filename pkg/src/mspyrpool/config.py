"""Run configuration files.

A run configuration is a flat list of ``key value...`` lines. Network lines
(``classes``, ``input_maps``, ``min_size``, ``layer``, ``tap``, ``head``)
are described in :mod:`mspyrpool.netgraph`; the remaining keys are::

    train_data PATH        image directory, or IDX images file
    train_labels PATH      IDX labels file (IDX datasets only)
    train_subset N         seeded random subset of the training data
    val_data / val_labels / val_subset    same, for held-out data
    normalize BOOL         zero-mean unit-variance per image
    pad_min N              centered zero padding up to N pixels per side
    max_edge N             bilinear downscaling of the longest edge
    lr X / anneal X / momentum X / epochs N / seed N
    stop_on_recognized BOOL
    metric per_class|overall
    out_dir PATH
    checkpoint_every N     extra checkpoint every N epochs (0 = final only)

Relative paths are resolved against the directory of the config file.
``#`` starts a comment. :func:`format_config` prints the canonical form and
``parse_config(format_config(c)) == c`` holds for every valid config.
"""
import os
from dataclasses import dataclass, field, replace

from .data_io import PreprocessPolicy
from .errors import ValidationError
from .netgraph import NetworkSpec, parse_network_lines, validate_spec
from .training import TrainConfig

NETWORK_KEYS = {"classes", "input_maps", "min_size", "layer", "tap", "head"}
_BOOLS = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


@dataclass
class RunConfig:
    network: NetworkSpec
    train: TrainConfig = field(default_factory=TrainConfig)
    policy: PreprocessPolicy = field(default_factory=PreprocessPolicy)
    train_data: str = None
    train_labels: str = None
    train_subset: int = None
    val_data: str = None
    val_labels: str = None
    val_subset: int = None
    out_dir: str = "run"
    checkpoint_every: int = 0
    base_dir: str = field(default=".", compare=False)

    def resolve(self, path):
        if path is None or os.path.isabs(path):
            return path
        return os.path.normpath(os.path.join(self.base_dir, path))

    def with_seed(self, seed):
        return replace(self, train=replace(self.train, seed=seed))


# key -> (section, field, parser)
_SCALARS = {
    "train_data": ("run", "train_data", str),
    "train_labels": ("run", "train_labels", str),
    "train_subset": ("run", "train_subset", int),
    "val_data": ("run", "val_data", str),
    "val_labels": ("run", "val_labels", str),
    "val_subset": ("run", "val_subset", int),
    "normalize": ("policy", "normalize", lambda s: _BOOLS[s.lower()]),
    "pad_min": ("policy", "min_size", int),
    "max_edge": ("policy", "max_edge", int),
    "lr": ("train", "initial_lr", float),
    "anneal": ("train", "anneal_factor", float),
    "momentum": ("train", "momentum", float),
    "epochs": ("train", "max_epochs", int),
    "seed": ("train", "seed", int),
    "stop_on_recognized": ("train", "stop_on_recognized", lambda s: _BOOLS[s.lower()]),
    "metric": ("train", "metric", str),
    "out_dir": ("run", "out_dir", str),
    "checkpoint_every": ("run", "checkpoint_every", int),
}


def parse_config(text, base_dir="."):
    """Parse and validate a run configuration.

    Raises ValidationError listing every problem found (syntax, network
    structure and training hyperparameters alike).
    """
    net_lines, values, problems = [], {"run": {}, "policy": {}, "train": {}}, []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *args = line.split()
        if key in NETWORK_KEYS:
            net_lines.append((lineno, line))
        elif key in _SCALARS:
            section, name, conv = _SCALARS[key]
            if len(args) != 1:
                problems.append(f"line {lineno}: {key} takes exactly one value")
                continue
            try:
                values[section][name] = conv(args[0])
            except (ValueError, KeyError):
                problems.append(f"line {lineno}: bad value {args[0]!r} for {key}")
        else:
            problems.append(f"line {lineno}: unknown key {key!r}")
    network = None
    try:
        network = parse_network_lines(net_lines)
    except ValidationError as exc:
        problems.extend(exc.violations)
    if network is not None:
        problems.extend(validate_spec(network))
    train = TrainConfig(**values["train"])
    problems.extend(train.violations())
    policy = PreprocessPolicy(**values["policy"])
    for name, v in (("pad_min", policy.min_size), ("max_edge", policy.max_edge)):
        if v is not None and v < 1:
            problems.append(f"{name} must be positive, got {v}")
    run = values["run"]
    for name in ("train_subset", "val_subset"):
        if run.get(name) is not None and run[name] < 1:
            problems.append(f"{name} must be positive, got {run[name]}")
    if run.get("checkpoint_every", 0) < 0:
        problems.append("checkpoint_every must be >= 0")
    if problems:
        raise ValidationError(problems)
    return RunConfig(network=network, train=train, policy=policy, base_dir=base_dir, **run)


def load_config(path):
    with open(path) as f:
        text = f.read()
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def format_config(cfg):
    """Canonical text form: network lines, then the other keys in fixed order."""
    lines = cfg.network.to_text().splitlines()
    sections = {"run": cfg, "policy": cfg.policy, "train": cfg.train}
    for key, (section, name, _) in _SCALARS.items():
        value = getattr(sections[section], name)
        if value is not None:
            lines.append(f"{key} {_fmt(value)}")
    return "\n".join(lines) + "\n"


def validate_paths(cfg):
    """Problems with data paths, checked before any training compute."""
    problems = []
    if cfg.train_data is None:
        problems.append("train_data is required for training")
    for data, labels in ((cfg.train_data, cfg.train_labels), (cfg.val_data, cfg.val_labels)):
        if data is None:
            continue
        path = cfg.resolve(data)
        if not os.path.exists(path):
            problems.append(f"data path does not exist: {path}")
        elif not os.path.isdir(path):
            if labels is None:
                problems.append(f"IDX images {path} need a labels path")
            elif not os.path.exists(cfg.resolve(labels)):
                problems.append(f"labels path does not exist: {cfg.resolve(labels)}")
    return problems
