"""The pose regression network: 13 bottleneck residual blocks + 2 FC layers.

Each block runs 1x1 -> 3x3 -> 1x1 convolutions, batch norm after every
convolution, ReLU after every batch norm, and a skip connection. Blocks
3, 5, 7, 9 and 11 halve the spatial size (stride 2 on the 3x3 and on the
1x1 projection shortcut). Spatial sizes follow ceil-mode same padding,
taking a 30x20x4 image down to 1x1x2048 before the two fully connected
layers emit 51 values (17 joints x 3).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from csipose import nn
from csipose.errors import CheckpointMismatchError, ShapeError
from csipose.nn.kernels import conv_output_size
from csipose.nn.params import ParamStore, load_checkpoint, save_checkpoint
from csipose.skeleton import NUM_JOINTS

INPUT_SHAPE = (30, 20, 4)
OUTPUT_SIZE = NUM_JOINTS * 3

# (out_channels, stride) for the 13 blocks, in order.
_BLOCK_PLAN = (
    (4, 1),
    (8, 1),
    (8, 2),
    (16, 1),
    (16, 2),
    (64, 1),
    (64, 2),
    (256, 1),
    (256, 2),
    (1024, 1),
    (1024, 2),
    (2048, 1),
    (2048, 1),
)
_FC1_OUT = 512


@dataclass(frozen=True)
class ResidualBlockSpec:
    name: str
    in_channels: int
    out_channels: int
    mid_channels: int
    stride: int

    @property
    def has_projection(self) -> bool:
        return self.stride != 1 or self.in_channels != self.out_channels


@dataclass(frozen=True)
class NetworkSpec:
    blocks: tuple
    fc1_in: int
    fc1_out: int
    fc2_out: int
    input_shape: tuple = INPUT_SHAPE
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5
    projection_batchnorm: bool = True


def pose_network_spec(
    width_divisor: int = 1,
    bottleneck_divisor: int = 4,
    bn_momentum: float = 0.9,
    bn_eps: float = 1e-5,
    projection_batchnorm: bool = True,
) -> NetworkSpec:
    """The standard 13-block layout, optionally width-reduced.

    ``width_divisor`` scales every channel width (floor, min 1); the
    input depth and the 51-way output are fixed by the data.
    """
    bottleneck_min = max(1, 4 // width_divisor)
    blocks = []
    in_ch = INPUT_SHAPE[2]
    for i, (out, stride) in enumerate(_BLOCK_PLAN, start=1):
        out_ch = max(1, out // width_divisor)
        mid = max(bottleneck_min, out_ch // bottleneck_divisor)
        blocks.append(
            ResidualBlockSpec(
                name=f"block{i:02d}",
                in_channels=in_ch,
                out_channels=out_ch,
                mid_channels=mid,
                stride=stride,
            )
        )
        in_ch = out_ch
    return NetworkSpec(
        blocks=tuple(blocks),
        fc1_in=in_ch,
        fc1_out=max(1, _FC1_OUT // width_divisor),
        fc2_out=OUTPUT_SIZE,
        bn_momentum=bn_momentum,
        bn_eps=bn_eps,
        projection_batchnorm=projection_batchnorm,
    )


def shape_trace(spec: NetworkSpec):
    """Layer-by-layer (name, input_shape, output_shape) rows."""
    h, w, c = spec.input_shape
    rows = []
    for block in spec.blocks:
        oh = conv_output_size(h, 3, block.stride, "same")
        ow = conv_output_size(w, 3, block.stride, "same")
        rows.append((block.name.upper(), (h, w, c), (oh, ow, block.out_channels)))
        h, w, c = oh, ow, block.out_channels
    flat = h * w * c
    rows.append(("FC1", (1, flat), (1, spec.fc1_out)))
    rows.append(("FC2", (1, spec.fc1_out), (1, spec.fc2_out)))
    return rows


class PoseNetwork:
    """Parameter container plus differentiable forward pass."""

    def __init__(self, spec: NetworkSpec | None = None, seed: int = 0,
                 params: ParamStore | None = None):
        self.spec = spec or pose_network_spec()
        self.params = params if params is not None else self._init_params(seed)

    # ---------------- parameters ----------------

    def _init_params(self, seed: int) -> ParamStore:
        rng = np.random.default_rng(seed)
        store = ParamStore()

        def conv(name, kh, kw, cin, cout):
            limit = 1.0 / np.sqrt(kh * kw * cin)
            store.add(name, rng.uniform(-limit, limit, size=(kh, kw, cin, cout)))

        def bn(prefix, c):
            store.add(f"{prefix}.scale", np.ones(c))
            store.add(f"{prefix}.shift", np.zeros(c))
            store.add(f"{prefix}.running_mean", np.zeros(c), trainable=False)
            store.add(f"{prefix}.running_var", np.ones(c), trainable=False)

        for b in self.spec.blocks:
            conv(f"{b.name}.conv1.kernel", 1, 1, b.in_channels, b.mid_channels)
            bn(f"{b.name}.bn1", b.mid_channels)
            conv(f"{b.name}.conv2.kernel", 3, 3, b.mid_channels, b.mid_channels)
            bn(f"{b.name}.bn2", b.mid_channels)
            conv(f"{b.name}.conv3.kernel", 1, 1, b.mid_channels, b.out_channels)
            bn(f"{b.name}.bn3", b.out_channels)
            if b.has_projection:
                conv(f"{b.name}.proj.kernel", 1, 1, b.in_channels, b.out_channels)
                if self.spec.projection_batchnorm:
                    bn(f"{b.name}.proj_bn", b.out_channels)

        limit = 1.0 / np.sqrt(self.spec.fc1_in)
        store.add("fc1.weight", rng.uniform(-limit, limit, (self.spec.fc1_in, self.spec.fc1_out)))
        store.add("fc1.bias", np.zeros(self.spec.fc1_out))
        limit = 1.0 / np.sqrt(self.spec.fc1_out)
        store.add("fc2.weight", rng.uniform(-limit, limit, (self.spec.fc1_out, self.spec.fc2_out)))
        store.add("fc2.bias", np.zeros(self.spec.fc2_out))
        return store

    # ---------------- forward ----------------

    def _bn(self, x, prefix, training):
        return nn.batch_norm(
            x,
            self.params[f"{prefix}.scale"],
            self.params[f"{prefix}.shift"],
            self.params[f"{prefix}.running_mean"],
            self.params[f"{prefix}.running_var"],
            training=training,
            momentum=self.spec.bn_momentum,
            eps=self.spec.bn_eps,
        )

    def forward(self, images, training: bool = False) -> nn.Tensor:
        """(N, 30, 20, 4) batch -> (N, 51) coordinates tensor."""
        x = images if isinstance(images, nn.Tensor) else nn.Tensor(images)
        expected = (self.spec.input_shape[0], self.spec.input_shape[1], self.spec.input_shape[2])
        if x.data.ndim != 4 or x.data.shape[1:] != expected:
            raise ShapeError(
                f"network input must be (N, {expected[0]}, {expected[1]}, {expected[2]}),"
                f" got {x.data.shape}"
            )
        for b in self.spec.blocks:
            stride = (b.stride, b.stride)
            y = nn.relu(self._bn(nn.conv2d(x, self.params[f"{b.name}.conv1.kernel"]), f"{b.name}.bn1", training))
            y = nn.relu(self._bn(nn.conv2d(y, self.params[f"{b.name}.conv2.kernel"], stride=stride), f"{b.name}.bn2", training))
            y = self._bn(nn.conv2d(y, self.params[f"{b.name}.conv3.kernel"]), f"{b.name}.bn3", training)
            if b.has_projection:
                shortcut = nn.conv2d(x, self.params[f"{b.name}.proj.kernel"], stride=stride)
                if self.spec.projection_batchnorm:
                    shortcut = self._bn(shortcut, f"{b.name}.proj_bn", training)
            else:
                shortcut = x
            x = nn.relu(nn.add(y, shortcut))
        n = x.data.shape[0]
        x = nn.reshape(x, (n, -1))
        x = nn.relu(nn.linear(x, self.params["fc1.weight"], self.params["fc1.bias"]))
        return nn.linear(x, self.params["fc2.weight"], self.params["fc2.bias"])

    def predict(self, images, batch_size: int = 64) -> np.ndarray:
        """Eval-mode poses (N, 17, 3) for a batch of images."""
        images = np.asarray(images, dtype=np.float64)
        outs = []
        for lo in range(0, len(images), batch_size):
            out = self.forward(images[lo : lo + batch_size], training=False)
            outs.append(out.data.reshape(-1, NUM_JOINTS, 3))
        return np.concatenate(outs) if outs else np.zeros((0, NUM_JOINTS, 3))

    # ---------------- persistence ----------------

    def save(self, path, adam_state=None):
        save_checkpoint(path, self.params, adam_state)

    @classmethod
    def load(cls, path, spec: NetworkSpec | None = None):
        """Bind a checkpoint to ``spec``; mismatches name the first bad entry."""
        loaded, adam_meta = load_checkpoint(path)
        spec = spec or pose_network_spec()
        reference = cls(spec, seed=0)
        expected = [(n, t.data.shape, tr) for n, t, tr in reference.params.items()]
        got = [(n, v[0].shape, v[1]) for n, v in loaded.items()]
        for i in range(max(len(expected), len(got))):
            if i >= len(expected):
                raise CheckpointMismatchError(
                    f"checkpoint has unexpected extra parameter {got[i][0]!r}"
                )
            if i >= len(got):
                raise CheckpointMismatchError(
                    f"checkpoint is missing parameter {expected[i][0]!r}"
                )
            if expected[i][0] != got[i][0] or expected[i][1] != got[i][1]:
                raise CheckpointMismatchError(
                    f"first divergent entry: expected {expected[i][0]!r} with shape "
                    f"{expected[i][1]}, checkpoint has {got[i][0]!r} with shape {got[i][1]}"
                )
        store = ParamStore()
        for name, (arr, trainable) in loaded.items():
            store.add(name, arr, trainable=trainable)
        model = cls(spec, params=store)
        return model, adam_meta
