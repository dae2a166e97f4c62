"""Multi-scale pyramidal pooling networks.

A network is a sequential *trunk* of feature-extraction layers (conv, tanh,
maxsub). Any trunk position may carry *taps*: an optional MLPDict encoder
followed by pyramidal pooling. All tap outputs are concatenated into one
fixed-length feature vector, which an FC stack with softmax classifies.

Trunk position ``i`` is the tensor after the first ``i`` trunk layers, so
position 0 is the input image itself.

Networks have a canonical line-oriented text form::

    classes 10
    input_maps 1
    min_size 28 28
    layer conv 5 5 20
    layer tanh
    layer maxsub 2
    tap 2 levels 1,2,4 dict 32 linear sparse
    tap 3 levels 1,2 dict 32 linear sparse
    head

``head`` optionally lists hidden FC widths (tanh units) before the output
layer. The checkpoint format stores that text followed by the parameters.
"""
from dataclasses import dataclass

import numpy as np

from . import layers
from .encoding import ACTIVATIONS, MlpDictParams, init_mlpdict, mlpdict_backward, mlpdict_forward
from .errors import ContractError, FormatError, ShapeError, ValidationError
from .layers import ConvParams, FcParams
from .pyrpool import pyr_backward, pyr_forward, pyr_output_dim
from .tensor import DTYPE, as_tensor

TRUNK_KINDS = {"conv": 3, "tanh": 0, "maxsub": 1}
CHECKPOINT_MAGIC = b"mspyrpool-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    args: tuple = ()

    def to_text(self):
        return " ".join(["layer", self.kind, *map(str, self.args)])


@dataclass(frozen=True)
class TapSpec:
    position: int
    levels: tuple
    dict_size: int = None
    activation: str = "linear"
    sparsify: bool = True

    def to_text(self):
        words = ["tap", str(self.position), "levels", ",".join(map(str, self.levels))]
        if self.dict_size is not None:
            words += ["dict", str(self.dict_size), self.activation,
                      "sparse" if self.sparsify else "dense"]
        return " ".join(words)


@dataclass(frozen=True)
class NetworkSpec:
    trunk: tuple
    taps: tuple
    classes: int
    input_maps: int = 1
    min_size: tuple = (1, 1)
    head: tuple = ()

    def to_text(self):
        lines = [
            f"classes {self.classes}",
            f"input_maps {self.input_maps}",
            f"min_size {self.min_size[0]} {self.min_size[1]}",
            *(l.to_text() for l in self.trunk),
            *(t.to_text() for t in self.taps),
            " ".join(["head", *map(str, self.head)]),
        ]
        return "\n".join(lines) + "\n"

    def trunk_shapes(self, rows=None, cols=None):
        """Shapes at every trunk position for an input of the given size.

        Defaults to the declared minimum size. Positions past a layer that
        cannot be applied are ``None``.
        """
        rows = self.min_size[0] if rows is None else rows
        cols = self.min_size[1] if cols is None else cols
        shapes = [(rows, cols, self.input_maps)]
        for layer in self.trunk:
            prev = shapes[-1]
            if prev is None:
                shapes.append(None)
                continue
            r, c, m = prev
            if layer.kind == "conv":
                fh, fw, out = layer.args
                nxt = (r - fh + 1, c - fw + 1, out)
            elif layer.kind == "maxsub":
                nxt = (r // layer.args[0], c // layer.args[0], m)
            else:
                nxt = prev
            shapes.append(nxt if min(nxt[:2]) >= 1 else None)
        return shapes

    def tap_dims(self):
        shapes = self.trunk_shapes()
        dims = []
        for tap in self.taps:
            maps = tap.dict_size if tap.dict_size is not None else shapes[tap.position][2]
            dims.append(pyr_output_dim(maps, [tap.levels]))
        return dims

    @property
    def feature_dim(self):
        return sum(self.tap_dims())


def validate_spec(spec):
    """Return the list of every violated constraint (empty when valid)."""
    problems = []
    if spec.classes < 2:
        problems.append(f"classes must be >= 2, got {spec.classes}")
    if spec.input_maps < 1:
        problems.append(f"input_maps must be >= 1, got {spec.input_maps}")
    if len(spec.min_size) != 2 or min(spec.min_size) < 1:
        problems.append(f"min_size must be two positive ints, got {spec.min_size}")
        return problems
    bad_layers = []
    for i, layer in enumerate(spec.trunk):
        if layer.kind not in TRUNK_KINDS:
            bad_layers.append(f"layer {i}: unknown kind {layer.kind!r}")
        elif len(layer.args) != TRUNK_KINDS[layer.kind]:
            bad_layers.append(f"layer {i}: {layer.kind} takes {TRUNK_KINDS[layer.kind]} arguments, got {len(layer.args)}")
        elif any(a < 1 for a in layer.args):
            bad_layers.append(f"layer {i}: {layer.kind} arguments must be positive, got {layer.args}")
    if bad_layers:
        # shapes are meaningless past a malformed layer
        return problems + bad_layers
    shapes = spec.trunk_shapes()
    for i, layer in enumerate(spec.trunk):
        if shapes[i] is not None and shapes[i + 1] is None:
            problems.append(
                f"layer {i} ({layer.kind} {' '.join(map(str, layer.args))}) cannot be applied to "
                f"{shapes[i][0]}x{shapes[i][1]} at min_size {spec.min_size[0]}x{spec.min_size[1]}"
            )
    if not spec.taps:
        problems.append("network needs at least one tap")
    for j, tap in enumerate(spec.taps):
        if not 0 <= tap.position <= len(spec.trunk):
            problems.append(f"tap {j}: position {tap.position} outside trunk 0..{len(spec.trunk)}")
            continue
        lv = tap.levels
        if not lv or lv[0] < 1 or any(b <= a for a, b in zip(lv, lv[1:])):
            problems.append(f"tap {j}: levels must be positive and strictly increasing, got {lv}")
            continue
        if tap.dict_size is not None:
            if tap.dict_size < 1:
                problems.append(f"tap {j}: dictionary size must be positive, got {tap.dict_size}")
            if tap.activation not in ACTIVATIONS:
                problems.append(f"tap {j}: activation must be one of {ACTIVATIONS}, got {tap.activation!r}")
        shape = shapes[tap.position]
        if shape is not None and lv[-1] > min(shape[:2]):
            problems.append(
                f"tap {j}: level {lv[-1]} exceeds the {shape[0]}x{shape[1]} maps at position "
                f"{tap.position} for min_size {spec.min_size[0]}x{spec.min_size[1]}"
            )
    if any(h < 1 for h in spec.head):
        problems.append(f"head widths must be positive, got {spec.head}")
    return problems


def parse_network_lines(lines):
    """Build a NetworkSpec from canonical ``key value...`` lines.

    Raises ValidationError listing every malformed line.
    """
    fields = {"trunk": [], "taps": []}
    problems = []
    seen = set()
    for lineno, line in lines:
        words = line.split()
        key, args = words[0], words[1:]
        seen.add(key)
        try:
            if key == "classes":
                (fields["classes"],) = map(int, args)
            elif key == "input_maps":
                (fields["input_maps"],) = map(int, args)
            elif key == "min_size":
                r, c = map(int, args)
                fields["min_size"] = (r, c)
            elif key == "layer":
                fields["trunk"].append(LayerSpec(args[0], tuple(int(a) for a in args[1:])))
            elif key == "tap":
                fields["taps"].append(_parse_tap(args))
            elif key == "head":
                fields["head"] = tuple(int(a) for a in args)
            else:
                problems.append(f"line {lineno}: unknown network key {key!r}")
        except (ValueError, IndexError):
            problems.append(f"line {lineno}: malformed {key!r} line: {line!r}")
    if "classes" not in seen:
        problems.append("missing 'classes' line")
    if problems:
        raise ValidationError(problems)
    fields["trunk"] = tuple(fields["trunk"])
    fields["taps"] = tuple(fields["taps"])
    return NetworkSpec(**fields)


def _parse_tap(args):
    position = int(args[0])
    if args[1] != "levels":
        raise ValueError("expected 'levels'")
    levels = tuple(int(l) for l in args[2].split(","))
    rest = args[3:]
    if not rest:
        return TapSpec(position, levels)
    if rest[0] != "dict" or len(rest) != 4 or rest[3] not in ("sparse", "dense"):
        raise ValueError("expected 'dict <size> <activation> sparse|dense'")
    return TapSpec(position, levels, int(rest[1]), rest[2], rest[3] == "sparse")


def parse_network_spec(text):
    lines = [
        (i, l.split("#", 1)[0].strip()) for i, l in enumerate(text.splitlines(), 1)
    ]
    return parse_network_lines([(i, l) for i, l in lines if l])


# -- materialized networks --------------------------------------------------

@dataclass
class Network:
    spec: NetworkSpec
    seed: int
    params: dict  # name -> ndarray, in canonical layer order
    generation: int = 0

    def touch(self):
        """Mark parameters as changed; caches from earlier passes go stale."""
        self.generation += 1

    @property
    def n_params(self):
        return sum(p.size for p in self.params.values())

    def conv(self, i):
        return ConvParams(self.params[f"layer{i}.filters"], self.params[f"layer{i}.bias"])

    def mlpdict(self, j):
        tap = self.spec.taps[j]
        return MlpDictParams(self.params[f"tap{j}.weights"], self.params[f"tap{j}.bias"],
                             tap.activation, tap.sparsify)

    def fc(self, k):
        return FcParams(self.params[f"fc{k}.weights"], self.params[f"fc{k}.bias"])

    @property
    def n_fc(self):
        return len(self.spec.head) + 1


def build_network(spec, seed=0):
    """Validate ``spec`` and initialize its parameters from ``seed``.

    Weights are uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``; biases
    start at zero. Parameters are drawn in canonical order (trunk, taps,
    head) from a single generator, so a (spec, seed) pair fixes them.
    """
    problems = validate_spec(spec)
    if problems:
        raise ValidationError(problems)
    rng = np.random.default_rng(seed)
    params = {}
    maps = spec.input_maps
    for i, layer in enumerate(spec.trunk):
        if layer.kind == "conv":
            fh, fw, out = layer.args
            p = layers.init_conv(rng, fh, fw, maps, out)
            params[f"layer{i}.filters"], params[f"layer{i}.bias"] = p.filters, p.bias
            maps = out
    shapes = spec.trunk_shapes()
    for j, tap in enumerate(spec.taps):
        if tap.dict_size is not None:
            p = init_mlpdict(rng, shapes[tap.position][2], tap.dict_size, tap.activation, tap.sparsify)
            params[f"tap{j}.weights"], params[f"tap{j}.bias"] = p.weights, p.bias
    widths = [spec.feature_dim, *spec.head, spec.classes]
    for k, (n_in, n_out) in enumerate(zip(widths, widths[1:])):
        p = layers.init_fc(rng, n_in, n_out)
        params[f"fc{k}.weights"], params[f"fc{k}.bias"] = p.weights, p.bias
    return Network(spec, seed, params)


@dataclass
class ForwardCache:
    network_id: int
    generation: int
    trunk: list  # tensor at every trunk position
    trunk_records: list  # per trunk layer: MaxSubRecord or None
    tap_inputs: list  # encoded tensor fed to each tap's pyramid
    tap_records: list  # (MlpDictRecord or None, PoolRecord)
    tap_slices: list
    fc_inputs: list
    logits: np.ndarray
    posteriors: np.ndarray

    @property
    def features(self):
        return self.fc_inputs[0]


def net_forward(net, image):
    """Run ``image`` through ``net``; returns ``(posteriors, cache)``."""
    spec = net.spec
    x = as_tensor(image)
    if x.shape[2] != spec.input_maps:
        raise ShapeError(f"network expects {spec.input_maps} input maps, got {x.shape[2]}")
    shapes = spec.trunk_shapes(x.shape[0], x.shape[1])
    for i, layer in enumerate(spec.trunk):
        if shapes[i + 1] is None:
            raise ShapeError(
                f"{x.shape[0]}x{x.shape[1]} input too small: layer {i} ({layer.kind}) "
                f"cannot be applied to {shapes[i][0]}x{shapes[i][1]}"
            )
    for j, tap in enumerate(spec.taps):
        r, c, _ = shapes[tap.position]
        if tap.levels[-1] > min(r, c):
            raise ShapeError(
                f"{x.shape[0]}x{x.shape[1]} input too small: tap {j} level {tap.levels[-1]} "
                f"exceeds its {r}x{c} maps at trunk position {tap.position}"
            )

    trunk, records = [x], []
    for i, layer in enumerate(spec.trunk):
        cur = trunk[-1]
        rec = None
        if layer.kind == "conv":
            out = layers.conv_forward(cur, net.conv(i))
        elif layer.kind == "tanh":
            out = layers.tanh_forward(cur)
        else:
            out, rec = layers.maxsub_forward(cur, layer.args[0])
        trunk.append(out)
        records.append(rec)

    tap_inputs, tap_records, parts, slices = [], [], [], []
    offset = 0
    for j, tap in enumerate(spec.taps):
        src = trunk[tap.position]
        enc_rec = None
        if tap.dict_size is not None:
            src, enc_rec = mlpdict_forward(src, net.mlpdict(j))
        y, pool_rec = pyr_forward(src, tap.levels)
        tap_inputs.append(src)
        tap_records.append((enc_rec, pool_rec))
        parts.append(y)
        slices.append(slice(offset, offset + y.size))
        offset += y.size

    h = np.concatenate(parts)
    fc_inputs = [h]
    for k in range(net.n_fc):
        z = layers.fc_forward(h, net.fc(k))
        if k < net.n_fc - 1:
            h = np.tanh(z)
            fc_inputs.append(h)
    logits = z
    post = layers.softmax(logits)
    cache = ForwardCache(id(net), net.generation, trunk, records, tap_inputs, tap_records,
                         slices, fc_inputs, logits, post)
    return post, cache


def net_loss(cache, label):
    return layers.softmax_xent(cache.logits, label)[0]


def net_backward(net, cache, label, taps=None):
    """Gradients of the cross-entropy loss for every parameter of ``net``.

    Parameters
    ----------
    taps : iterable of int, optional
        Restrict back-propagation to the deltas arriving through these taps.
        By default all taps contribute; deltas reaching the same trunk
        position from several consumers are summed.

    Returns
    -------
    dict
        Parameter name to gradient array, same keys and order as
        ``net.params``. The delta with respect to the input image is stored
        under ``"input"``.
    """
    if cache.network_id != id(net) or cache.generation != net.generation:
        raise ContractError("forward cache is stale: parameters changed since net_forward")
    spec = net.spec
    grads = {name: np.zeros_like(p) for name, p in net.params.items()}
    _, delta = layers.softmax_xent(cache.logits, label)

    for k in reversed(range(net.n_fc)):
        x = cache.fc_inputs[k]
        delta, g = layers.fc_backward(x, net.fc(k), delta)
        grads[f"fc{k}.weights"], grads[f"fc{k}.bias"] = g.weights, g.bias
        if k > 0:
            delta = layers.tanh_backward(x, delta)

    active = range(len(spec.taps)) if taps is None else set(taps)
    trunk_delta = [None] * len(cache.trunk)
    for j, tap in enumerate(spec.taps):
        if j not in active:
            continue
        enc_rec, pool_rec = cache.tap_records[j]
        d = pyr_backward(pool_rec, delta[cache.tap_slices[j]])
        if enc_rec is not None:
            d, g = mlpdict_backward(cache.trunk[tap.position], net.mlpdict(j), enc_rec, d)
            grads[f"tap{j}.weights"], grads[f"tap{j}.bias"] = g.weights, g.bias
        pos = tap.position
        trunk_delta[pos] = d if trunk_delta[pos] is None else trunk_delta[pos] + d

    for i in reversed(range(len(spec.trunk))):
        d = trunk_delta[i + 1]
        if d is None:
            continue
        layer = spec.trunk[i]
        if layer.kind == "conv":
            d, g = layers.conv_backward(cache.trunk[i], net.conv(i), d)
            grads[f"layer{i}.filters"], grads[f"layer{i}.bias"] = g.filters, g.bias
        elif layer.kind == "tanh":
            d = layers.tanh_backward(cache.trunk[i + 1], d)
        else:
            d = layers.maxsub_backward(cache.trunk_records[i], d)
        trunk_delta[i] = d if trunk_delta[i] is None else trunk_delta[i] + d
    grads["input"] = trunk_delta[0] if trunk_delta[0] is not None else np.zeros_like(cache.trunk[0])
    return grads


# -- checkpoints ------------------------------------------------------------

def save_checkpoint(path, net, metadata=""):
    """Write ``net`` as a versioned header, spec text, then parameter blobs.

    Layout (all integers ASCII, blobs little-endian float64)::

        mspyrpool-checkpoint <version>
        seed <seed>
        spec <nbytes>\\n<spec text>
        meta <nbytes>\\n<metadata text>
        params <count>
        param <name> <d0>x<d1>... \\n<blob>   (repeated)
    """
    spec_text = net.spec.to_text().encode()
    meta = metadata.encode()
    with open(path, "wb") as f:
        f.write(b"%s %d\n" % (CHECKPOINT_MAGIC, CHECKPOINT_VERSION))
        f.write(b"seed %d\n" % net.seed)
        f.write(b"spec %d\n" % len(spec_text) + spec_text)
        f.write(b"meta %d\n" % len(meta) + meta)
        f.write(b"params %d\n" % len(net.params))
        for name, arr in net.params.items():
            dims = "x".join(map(str, arr.shape))
            f.write(f"param {name} {dims}\n".encode())
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Return ``(network, metadata_text)``."""
    with open(path, "rb") as f:
        raw = f.read()
    pos = 0

    def line():
        nonlocal pos
        end = raw.find(b"\n", pos)
        if end < 0:
            raise FormatError(f"{path}: unexpected end of header", offset=pos)
        text, start, pos = raw[pos:end].decode(errors="replace"), pos, end + 1
        return text.split(), start

    def blob(n, at):
        nonlocal pos
        if pos + n > len(raw):
            raise FormatError(f"{path}: truncated data", offset=len(raw))
        pos += n
        return raw[pos - n : pos]

    words, at = line()
    if len(words) != 2 or words[0].encode() != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a checkpoint", offset=0)
    if int(words[1]) != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {words[1]}", offset=at)
    try:
        (_, seed), _ = line()
        (_, n), at = line()
        spec_text = blob(int(n), at).decode()
        (_, n), at = line()
        meta = blob(int(n), at).decode()
        (_, count), _ = line()
        spec = parse_network_spec(spec_text)
        net = build_network(spec, int(seed))
        for _ in range(int(count)):
            (_, name, dims), at = line()
            shape = tuple(int(d) for d in dims.split("x")) if dims else ()
            if name not in net.params or net.params[name].shape != shape:
                raise FormatError(f"{path}: parameter {name} {shape} does not match the spec", offset=at)
            data = blob(8 * int(np.prod(shape)), at)
            net.params[name] = np.frombuffer(data, dtype="<f8").astype(DTYPE).reshape(shape)
    except (ValueError, ValidationError) as exc:
        raise FormatError(f"{path}: {exc}", offset=pos) from None
    if pos != len(raw):
        raise FormatError(f"{path}: trailing bytes", offset=pos)
    return net, meta
