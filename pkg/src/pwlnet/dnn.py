"""Feed-forward piecewise-linear networks and their masking variant."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .errors import (
    DimMismatchError,
    InvalidWeightIdError,
    NetworkFormatError,
    UnsupportedLayerError,
)

__all__ = [
    "DenseLayer",
    "ReluLayer",
    "HardTanhLayer",
    "MaxPoolLayer",
    "Network",
    "MaskedDense",
    "MaskingNetwork",
    "WeightId",
    "eval_network",
    "to_masking",
    "eval_masking",
    "delta_response",
    "apply_patch",
    "network_from_json",
    "network_to_json",
    "load_network",
    "save_network",
    "masking_from_json",
    "load_masking_network",
    "lower_batchnorm",
    "lower_conv2d",
]

# activations that have no finite piecewise-linear representation
SMOOTH_ACTIVATIONS = {"tanh", "sigmoid", "softmax", "gelu", "elu", "softplus", "swish", "silu"}


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        W = _frozen(self.weights)
        b = _frozen(self.bias).reshape(-1)
        if W.ndim != 2:
            raise NetworkFormatError(f"dense weights must be 2D, got shape {W.shape}")
        if b.shape[0] != W.shape[0]:
            raise NetworkFormatError(f"bias length {b.shape[0]} != {W.shape[0]} rows")
        if not (np.isfinite(W).all() and np.isfinite(b).all()):
            raise NetworkFormatError("dense layer has non-finite entries")
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights.T + self.bias


@dataclass(frozen=True)
class ReluLayer:
    width: int

    in_dim = property(lambda self: self.width)
    out_dim = property(lambda self: self.width)

    def __call__(self, x):
        return np.maximum(x, 0.0)


@dataclass(frozen=True)
class HardTanhLayer:
    width: int

    in_dim = property(lambda self: self.width)
    out_dim = property(lambda self: self.width)

    def __call__(self, x):
        return np.clip(x, -1.0, 1.0)


@dataclass(frozen=True)
class MaxPoolLayer:
    """Max over disjoint index groups that together cover the input."""

    groups: tuple

    def __post_init__(self):
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        if not groups or any(len(g) == 0 for g in groups):
            raise NetworkFormatError("maxpool groups must be nonempty")
        flat = sorted(i for g in groups for i in g)
        if flat != list(range(len(flat))):
            raise NetworkFormatError("maxpool groups must partition the input indices")
        object.__setattr__(self, "groups", groups)

    @property
    def in_dim(self) -> int:
        return sum(len(g) for g in self.groups)

    @property
    def out_dim(self) -> int:
        return len(self.groups)

    def __call__(self, x):
        return np.stack([x[..., list(g)].max(axis=-1) for g in self.groups], axis=-1)


Layer = Union[DenseLayer, ReluLayer, HardTanhLayer, MaxPoolLayer]


class Network:
    """Sequence of layers applied in order."""

    def __init__(self, layers: Sequence[Layer]):
        layers = tuple(layers)
        if not layers:
            raise NetworkFormatError("network needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise DimMismatchError(
                    f"layer output {prev.out_dim} does not feed layer input {nxt.in_dim}"
                )
        self.layers = layers

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def __len__(self):
        return len(self.layers)

    def __repr__(self):
        names = ", ".join(type(layer).__name__ for layer in self.layers)
        return f"Network({self.input_dim}->{self.output_dim}: {names})"

    def __call__(self, x):
        return eval_network(self, x)

    def affine_layer_indices(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if isinstance(layer, DenseLayer)]


def eval_network(net: Network, x) -> np.ndarray:
    """Forward pass for one input (n,) or a batch (k, n)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.input_dim:
        raise DimMismatchError(f"expected input dim {net.input_dim}, got {x.shape[-1]}")
    for layer in net.layers:
        x = layer(x)
    return x


# masking networks


@dataclass(frozen=True, eq=False)
class MaskedDense:
    """Affine layer with separate activation and value parameters."""

    theta_a: DenseLayer
    theta_v: DenseLayer

    def __post_init__(self):
        if self.theta_a.weights.shape != self.theta_v.weights.shape:
            raise DimMismatchError("activation and value parameters differ in shape")

    in_dim = property(lambda self: self.theta_a.in_dim)
    out_dim = property(lambda self: self.theta_a.out_dim)


@dataclass(frozen=True)
class WeightId:
    """Address of one value-parameter entry.

    ``layer`` indexes the network's layer list and must point at an affine
    layer. ``col`` is ignored for bias entries.
    """

    layer: int
    kind: str
    row: int
    col: int = 0

    def __post_init__(self):
        if self.kind not in ("weight", "bias"):
            raise InvalidWeightIdError(f"unknown weight kind {self.kind!r}")
        if self.kind == "bias":
            object.__setattr__(self, "col", 0)

    def sort_key(self):
        return (self.layer, self.kind == "bias", self.row, self.col)

    def __str__(self):
        if self.kind == "bias":
            return f"L{self.layer}:b[{self.row}]"
        return f"L{self.layer}:W[{self.row},{self.col}]"


class MaskingNetwork:
    """Network whose affine layers carry paired (theta_a, theta_v) parameters.

    ReLU layers act as masked ReLUs: the activation path decides which
    coordinates are zeroed on both paths. Hard-tanh layers are masked the
    same way: the activation path picks the clamp region per coordinate and
    the value path follows it (clamped coordinates take the constant).
    """

    def __init__(self, layers: Sequence):
        layers = tuple(layers)
        for layer in layers:
            if isinstance(layer, MaxPoolLayer):
                raise UnsupportedLayerError("maxpool is not supported in masking networks")
            if isinstance(layer, DenseLayer):
                raise TypeError("use MaskedDense for affine layers of a masking network")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise DimMismatchError("layer dimensions do not chain")
        self.layers = layers

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def affine_layer_indices(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if isinstance(layer, MaskedDense)]

    def activation_network(self) -> Network:
        return Network([_plain(layer, "a") for layer in self.layers])

    def value_network(self) -> Network:
        """The plain network using theta_v everywhere (ignores masking)."""
        return Network([_plain(layer, "v") for layer in self.layers])

    def same_activation(self, other: "MaskingNetwork") -> bool:
        if len(self.layers) != len(other.layers):
            return False
        for a, b in zip(self.layers, other.layers):
            if type(a) is not type(b):
                return False
            if isinstance(a, MaskedDense):
                if not (
                    np.array_equal(a.theta_a.weights, b.theta_a.weights)
                    and np.array_equal(a.theta_a.bias, b.theta_a.bias)
                ):
                    return False
            elif a != b:
                return False
        return True

    def weight_ids(self, layer: int) -> list[WeightId]:
        """Every value-parameter entry of one affine layer, in canonical order."""
        dense = self._dense(layer)
        rows, cols = dense.theta_v.weights.shape
        ids = [WeightId(layer, "weight", r, c) for r in range(rows) for c in range(cols)]
        ids += [WeightId(layer, "bias", r) for r in range(rows)]
        return ids

    def _dense(self, layer: int) -> MaskedDense:
        if not 0 <= layer < len(self.layers) or not isinstance(self.layers[layer], MaskedDense):
            raise InvalidWeightIdError(f"layer {layer} is not an affine layer")
        return self.layers[layer]

    def _checked(self, w: WeightId) -> MaskedDense:
        dense = self._dense(w.layer)
        rows, cols = dense.theta_v.weights.shape
        if not 0 <= w.row < rows or (w.kind == "weight" and not 0 <= w.col < cols):
            raise InvalidWeightIdError(f"{w} out of range for a {rows}x{cols} layer")
        return dense

    def __call__(self, x):
        return eval_masking(self, x)[0]


def _plain(layer, which: str):
    if isinstance(layer, MaskedDense):
        return layer.theta_a if which == "a" else layer.theta_v
    return layer


def to_masking(net: Network) -> MaskingNetwork:
    """Equivalent masking network with theta_a = theta_v = theta."""
    layers = []
    for layer in net.layers:
        if isinstance(layer, DenseLayer):
            layers.append(
                MaskedDense(
                    DenseLayer(layer.weights.copy(), layer.bias.copy()),
                    DenseLayer(layer.weights.copy(), layer.bias.copy()),
                )
            )
        elif isinstance(layer, (ReluLayer, HardTanhLayer)):
            layers.append(layer)
        else:
            raise UnsupportedLayerError(f"{type(layer).__name__} cannot be converted to a masking layer")
    return MaskingNetwork(layers)


def _region_codes(layer, xa: np.ndarray) -> np.ndarray:
    """Mask for one nonlinearity given its activation-path input.

    ReLU: 1 keeps the coordinate, 0 zeroes it (``x <= 0``). Hard tanh:
    -1 clamps low (``x <= -1``), +1 clamps high (``x >= 1``), 0 passes.
    """
    if isinstance(layer, ReluLayer):
        return (xa > 0).astype(np.int8)
    return np.where(xa <= -1.0, -1, np.where(xa >= 1.0, 1, 0)).astype(np.int8)


def _apply_mask(layer, mask: np.ndarray, xv: np.ndarray) -> np.ndarray:
    if isinstance(layer, ReluLayer):
        return np.where(mask == 1, xv, 0.0)
    return np.where(mask == 0, xv, mask.astype(np.float64))


def _tangent_mask(layer, mask: np.ndarray) -> np.ndarray:
    if isinstance(layer, ReluLayer):
        return (mask == 1).astype(np.float64)
    return (mask == 0).astype(np.float64)


def eval_masking(mnet: MaskingNetwork, x, masks: Optional[Sequence[np.ndarray]] = None):
    """Run the tuple semantics of a masking network.

    Returns ``(values, masks)``: the value-path output and one mask array per
    nonlinearity. Passing ``masks`` pins the activation pattern instead of
    computing it (used to evaluate a partition's affine map at its
    boundary).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != mnet.input_dim:
        raise DimMismatchError(f"expected input dim {mnet.input_dim}, got {x.shape[-1]}")
    xa = x
    xv = x
    out_masks = []
    k = 0
    for layer in mnet.layers:
        if isinstance(layer, MaskedDense):
            xa = layer.theta_a(xa)
            xv = layer.theta_v(xv)
        else:
            mask = _region_codes(layer, xa) if masks is None else np.asarray(masks[k])
            k += 1
            out_masks.append(mask)
            xa = _apply_mask(layer, mask, xa)
            xv = _apply_mask(layer, mask, xv)
    return xv, out_masks


def delta_response(mnet: MaskingNetwork, x, w: WeightId, masks=None):
    """Output at ``x`` as an affine function ``y0 + delta * g`` of one value weight.

    The activation pattern stays fixed (theta_a is untouched), so the value
    path is affine in the perturbed entry and ``g`` is obtained by pushing
    the unit perturbation forward through the remaining layers.
    """
    dense = mnet._checked(w)
    rows = dense.theta_v.out_dim
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (mnet.input_dim,):
        raise DimMismatchError(f"expected a single input of dim {mnet.input_dim}")
    xa = x
    xv = x
    tangent = None
    k = 0
    for i, layer in enumerate(mnet.layers):
        if isinstance(layer, MaskedDense):
            if i == w.layer:
                seed = 1.0 if w.kind == "bias" else xv[w.col]
                tangent = np.zeros(rows)
                tangent[w.row] = seed
            elif tangent is not None:
                tangent = layer.theta_v.weights @ tangent
            xa = layer.theta_a(xa)
            xv = layer.theta_v(xv)
        else:
            mask = _region_codes(layer, xa) if masks is None else np.asarray(masks[k])
            k += 1
            xa = _apply_mask(layer, mask, xa)
            xv = _apply_mask(layer, mask, xv)
            if tangent is not None:
                tangent = tangent * _tangent_mask(layer, mask)
    return xv, tangent


def apply_patch(mnet: MaskingNetwork, w: WeightId, delta: float) -> MaskingNetwork:
    """New masking network with ``delta`` added to one theta_v entry."""
    dense = mnet._checked(w)
    W = dense.theta_v.weights.copy()
    b = dense.theta_v.bias.copy()
    if w.kind == "bias":
        b[w.row] += delta
    else:
        W[w.row, w.col] += delta
    layers = list(mnet.layers)
    layers[w.layer] = MaskedDense(dense.theta_a, DenseLayer(W, b))
    return MaskingNetwork(layers)


# lowering of structured affine layers


def lower_batchnorm(mean, var, gamma=None, beta=None, eps: float = 1e-5) -> DenseLayer:
    """Inference-mode batch normalization as a diagonal affine layer."""
    mean = np.asarray(mean, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    gamma = np.ones_like(mean) if gamma is None else np.asarray(gamma, dtype=np.float64)
    beta = np.zeros_like(mean) if beta is None else np.asarray(beta, dtype=np.float64)
    scale = gamma / np.sqrt(var + eps)
    return DenseLayer(np.diag(scale), beta - scale * mean)


def lower_conv2d(input_shape, kernel, bias, stride=1, padding=0) -> DenseLayer:
    """Dense equivalent of a 2D convolution on a flattened (C, H, W) input.

    ``kernel`` has shape (out_channels, in_channels, kh, kw); the output is
    flattened in (out_channels, out_h, out_w) order.
    """
    C, H, W = (int(s) for s in input_shape)
    kernel = np.asarray(kernel, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64).reshape(-1)
    O, Ck, kh, kw = kernel.shape
    if Ck != C or bias.shape[0] != O:
        raise NetworkFormatError("conv kernel/bias shape does not match input channels")
    sh, sw = (stride, stride) if np.isscalar(stride) else stride
    ph, pw = (padding, padding) if np.isscalar(padding) else padding
    oh = (H + 2 * ph - kh) // sh + 1
    ow = (W + 2 * pw - kw) // sw + 1
    M = np.zeros((O * oh * ow, C * H * W))
    b = np.repeat(bias, oh * ow)
    for o in range(O):
        for r in range(oh):
            for c in range(ow):
                row = (o * oh + r) * ow + c
                for ci in range(C):
                    for i in range(kh):
                        y = r * sh + i - ph
                        if not 0 <= y < H:
                            continue
                        for j in range(kw):
                            xx = c * sw + j - pw
                            if 0 <= xx < W:
                                M[row, (ci * H + y) * W + xx] += kernel[o, ci, i, j]
    return DenseLayer(M, b)


# serialization


def _finite_list(values, what):
    arr = np.asarray(values, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise NetworkFormatError(f"{what} contains NaN or Inf")
    return arr


def network_from_json(obj) -> Network:
    specs = obj["layers"] if isinstance(obj, dict) else obj
    layers: list = []
    width = obj.get("input_dim") if isinstance(obj, dict) else None

    for spec in specs:
        kind = spec.get("type", "").lower()
        if kind == "dense":
            layer = DenseLayer(_finite_list(spec["weights"], "weights"), _finite_list(spec["bias"], "bias"))
        elif kind == "relu":
            layer = ReluLayer(int(spec.get("width", width or 0)))
        elif kind in ("hard_tanh", "hardtanh"):
            layer = HardTanhLayer(int(spec.get("width", width or 0)))
        elif kind == "maxpool":
            layer = MaxPoolLayer(spec["groups"])
        elif kind == "batchnorm":
            layer = lower_batchnorm(
                _finite_list(spec["mean"], "mean"),
                _finite_list(spec["var"], "var"),
                spec.get("gamma"),
                spec.get("beta"),
                float(spec.get("eps", 1e-5)),
            )
        elif kind == "conv2d":
            layer = lower_conv2d(
                spec["input_shape"],
                _finite_list(spec["kernel"], "kernel"),
                _finite_list(spec["bias"], "bias"),
                spec.get("stride", 1),
                spec.get("padding", 0),
            )
        elif kind in SMOOTH_ACTIVATIONS:
            raise UnsupportedLayerError(
                f"{kind} is not piecewise-linear; no finite exact decomposition exists"
            )
        else:
            raise NetworkFormatError(f"unknown layer type {kind!r}")
        if isinstance(layer, (ReluLayer, HardTanhLayer)) and layer.width == 0:
            raise NetworkFormatError(f"cannot infer width of leading {kind} layer; give 'width'")
        layers.append(layer)
        width = layer.out_dim
    return Network(layers)


def network_to_json(net: Union[Network, MaskingNetwork], which: str = "v") -> dict:
    """JSON form of a network; masking networks are written as their value path
    unless ``which="both"``, which keeps activation weights in ``weights_a``."""
    out = []
    for layer in net.layers:
        if isinstance(layer, MaskedDense):
            d = {
                "type": "dense",
                "weights": layer.theta_v.weights.tolist(),
                "bias": layer.theta_v.bias.tolist(),
            }
            if which == "both":
                d["weights_a"] = layer.theta_a.weights.tolist()
                d["bias_a"] = layer.theta_a.bias.tolist()
            out.append(d)
        elif isinstance(layer, DenseLayer):
            out.append({"type": "dense", "weights": layer.weights.tolist(), "bias": layer.bias.tolist()})
        elif isinstance(layer, ReluLayer):
            out.append({"type": "relu", "width": layer.width})
        elif isinstance(layer, HardTanhLayer):
            out.append({"type": "hard_tanh", "width": layer.width})
        elif isinstance(layer, MaxPoolLayer):
            out.append({"type": "maxpool", "groups": [list(g) for g in layer.groups]})
    return {"layers": out}


def masking_from_json(obj) -> MaskingNetwork:
    """Inverse of ``network_to_json(mnet, which="both")``."""
    layers = []
    width = None
    for spec in obj["layers"]:
        kind = spec["type"]
        if kind == "dense":
            v = DenseLayer(_finite_list(spec["weights"], "weights"), _finite_list(spec["bias"], "bias"))
            if "weights_a" in spec:
                a = DenseLayer(_finite_list(spec["weights_a"], "weights"), _finite_list(spec["bias_a"], "bias"))
            else:
                a = DenseLayer(v.weights.copy(), v.bias.copy())
            layers.append(MaskedDense(a, v))
            width = v.out_dim
        elif kind == "relu":
            layers.append(ReluLayer(int(spec.get("width", width))))
        elif kind in ("hard_tanh", "hardtanh"):
            layers.append(HardTanhLayer(int(spec.get("width", width))))
        else:
            raise UnsupportedLayerError(f"{kind} cannot appear in a masking network")
    return MaskingNetwork(layers)


def _reject_constants(token):
    raise NetworkFormatError(f"non-finite number {token} in network file")


def load_network(path) -> Network:
    with open(path) as fh:
        obj = json.load(fh, parse_constant=_reject_constants)
    return network_from_json(obj)


def load_masking_network(path) -> MaskingNetwork:
    with open(path) as fh:
        obj = json.load(fh, parse_constant=_reject_constants)
    return masking_from_json(obj)


def save_network(net, path, which: str = "v") -> None:
    with open(path, "w") as fh:
        json.dump(network_to_json(net, which), fh, indent=1)
        fh.write("\n")
