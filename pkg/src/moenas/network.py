"""Macro-architecture assembly and analytic Mult-Adds / parameter counting.

Accounting conventions (they fix the absolute numbers, so they are listed):

* Only multiplies are counted. Pooling, identity and additions cost nothing.
* A k x k separable conv is one depthwise k x k conv followed by one pointwise
  conv: ``k*k*C_in*H*W + C_in*C_out*H*W`` mult-adds at the output resolution.
* Each cell first projects both inputs to ``F`` channels with a 1x1 conv. An
  input with twice the working resolution goes through a factorized reduction
  (two stride-2 1x1 convs producing ``F/2`` channels each), which costs the
  same as one 1x1 conv evaluated at the reduced resolution.
* In a reduction cell, operations that read a cell input run at stride 2. A
  stride-2 identity is realized as a factorized reduction; so are cell inputs
  routed straight to the concatenation.
* The concatenated sources are projected back to ``F`` channels by a 1x1 conv.
* Filters double at every reduction cell. The ImageNet template starts with a
  3x3 stride-2 conv with 32 output channels followed by two reduction cells of
  width ``ceil(F/4)`` and ``ceil(F/2)``.
* Parameters are weights only (no biases) plus, by default, ``2*C_out``
  batch-norm parameters per conv or separable conv.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .genome import OPERATIONS, CellGenome, Genome, concat_sources

STEM_CHANNELS = 32
IMAGE_CHANNELS = 3

TEMPLATES = {"cifar10": 32, "imagenet": 224}
_TEMPLATE_ALIASES = {"cifar": "cifar10", "cifar10": "cifar10", "imagenet": "imagenet"}


@dataclass(frozen=True)
class MacroConfig:
    template: str = "cifar10"
    n: int = 2
    f: int = 32
    resolution: int | None = None
    classes: int = 10
    batchnorm: bool = True

    def __post_init__(self):
        try:
            template = _TEMPLATE_ALIASES[self.template]
        except KeyError:
            raise ValueError(f"unknown macro template {self.template!r}") from None
        object.__setattr__(self, "template", template)
        if self.resolution is None:
            object.__setattr__(self, "resolution", TEMPLATES[template])
        if self.n < 1 or self.f < 1 or self.classes < 1 or self.resolution < 1:
            raise ValueError("n, f, classes and resolution must be positive")

    def to_dict(self) -> dict:
        return {
            "template": self.template,
            "n": self.n,
            "f": self.f,
            "resolution": self.resolution,
            "classes": self.classes,
        }


@dataclass(frozen=True)
class LayerShape:
    height: int
    width: int
    channels: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.channels < 1:
            raise ValueError(f"zero-size shape {self}")

    def reduced(self, channels: int | None = None) -> "LayerShape":
        return LayerShape(
            _ceil_half(self.height),
            _ceil_half(self.width),
            self.channels if channels is None else channels,
        )

    def with_channels(self, channels: int) -> "LayerShape":
        return LayerShape(self.height, self.width, channels)


@dataclass(frozen=True)
class CostReport:
    mult_adds: int = 0
    params: int = 0

    @property
    def flops(self) -> int:
        return 2 * self.mult_adds

    def __add__(self, other: "CostReport") -> "CostReport":
        return CostReport(self.mult_adds + other.mult_adds, self.params + other.params)

    def to_dict(self) -> dict:
        return {"mult_adds": self.mult_adds, "flops": self.flops, "params": self.params}


def _ceil_half(x: int) -> int:
    return -(-x // 2)


def _bn(channels: int, batchnorm: bool) -> int:
    return 2 * channels if batchnorm else 0


def conv_cost(
    in_shape: LayerShape, out_channels: int, kernel: int = 1, stride: int = 1, batchnorm: bool = True
) -> CostReport:
    """Dense ``kernel x kernel`` conv without bias."""
    h, w = _out_hw(in_shape, stride)
    k2 = kernel * kernel
    return CostReport(
        k2 * in_shape.channels * out_channels * h * w,
        k2 * in_shape.channels * out_channels + _bn(out_channels, batchnorm),
    )


def _out_hw(in_shape: LayerShape, stride: int) -> tuple[int, int]:
    if stride not in (1, 2):
        raise ValueError(f"stride must be 1 or 2, got {stride}")
    if stride == 1:
        return in_shape.height, in_shape.width
    return _ceil_half(in_shape.height), _ceil_half(in_shape.width)


def op_cost(
    op: str, in_shape: LayerShape, out_channels: int, stride: int = 1, batchnorm: bool = True
) -> tuple[int, int]:
    """``(mult_adds, params)`` of one block operation."""
    if op not in OPERATIONS:
        raise ValueError(f"unknown operation {op!r}")
    if out_channels < 1:
        raise ValueError("out_channels must be positive")
    h, w = _out_hw(in_shape, stride)
    c_in = in_shape.channels
    if op.startswith("sep_conv_"):
        k = int(op[-1])
        mult_adds = k * k * c_in * h * w + c_in * out_channels * h * w
        params = k * k * c_in + c_in * out_channels + _bn(out_channels, batchnorm)
        return mult_adds, params
    if c_in != out_channels:
        raise ValueError(f"{op} cannot change the channel count ({c_in} -> {out_channels})")
    if op == "identity" and stride == 2:
        r = conv_cost(in_shape, out_channels, 1, 2, batchnorm)
        return r.mult_adds, r.params
    return 0, 0


def op_output_shape(in_shape: LayerShape, out_channels: int, stride: int = 1) -> LayerShape:
    h, w = _out_hw(in_shape, stride)
    return LayerShape(h, w, out_channels)


def _calibrate(shape: LayerShape, target_hw: tuple[int, int], filters: int, batchnorm: bool) -> CostReport:
    if (shape.height, shape.width) == target_hw:
        return conv_cost(shape, filters, 1, 1, batchnorm)
    if (_ceil_half(shape.height), _ceil_half(shape.width)) == target_hw:
        return conv_cost(shape, filters, 1, 2, batchnorm)
    raise ValueError(
        f"cannot match input {shape.height}x{shape.width} to {target_hw[0]}x{target_hw[1]}"
    )


def cell_cost(
    cell: CellGenome,
    in_shapes: tuple[LayerShape, LayerShape],
    filters: int,
    is_reduction: bool,
    batchnorm: bool = True,
) -> tuple[CostReport, LayerShape]:
    """Cost and output shape of one cell; ``in_shapes`` is ``(c_{k-1}, c_{k-2})``."""
    prev, prev_prev = in_shapes
    hw = (prev.height, prev.width)
    cost = _calibrate(prev, hw, filters, batchnorm) + _calibrate(prev_prev, hw, filters, batchnorm)

    inner = LayerShape(hw[0], hw[1], filters)
    out = inner.reduced() if is_reduction else inner
    for b in cell.blocks:
        for src, op in ((b.input1, b.op1), (b.input2, b.op2)):
            from_input = src < 2
            stride = 2 if (is_reduction and from_input) else 1
            mult_adds, params = op_cost(op, inner if from_input else out, filters, stride, batchnorm)
            cost += CostReport(mult_adds, params)

    sources = concat_sources(cell)
    if is_reduction:
        for src in sources:
            if src < 2:
                cost += conv_cost(inner, filters, 1, 2, batchnorm)
    cost += conv_cost(out.with_channels(len(sources) * filters), filters, 1, 1, batchnorm)
    return cost, out


@dataclass(frozen=True)
class CellInstance:
    kind: str  # "normal" or "reduction"
    filters: int
    prev: LayerShape  # c_{k-1}
    prev_prev: LayerShape  # c_{k-2}
    out: LayerShape

    @property
    def is_reduction(self) -> bool:
        return self.kind == "reduction"


@dataclass(frozen=True)
class NetworkPlan:
    macro: MacroConfig
    input_shape: LayerShape
    stem: LayerShape | None
    cells: tuple[CellInstance, ...] = field(default_factory=tuple)

    @property
    def final_shape(self) -> LayerShape:
        return self.cells[-1].out

    def count(self, kind: str) -> int:
        return sum(c.kind == kind for c in self.cells)


def _halvings(macro: MacroConfig) -> int:
    return 2 + (3 if macro.template == "imagenet" else 0)


def build_network(g: Genome, macro: MacroConfig) -> NetworkPlan:
    """Lay out cell instances with their input/output shapes and widths."""
    halvings = _halvings(macro)
    if macro.resolution < 2**halvings:
        raise ValueError(
            f"resolution {macro.resolution} is too small for {halvings} spatial reductions"
        )
    image = LayerShape(macro.resolution, macro.resolution, IMAGE_CHANNELS)
    kinds: list[tuple[str, int]] = []
    stem = None
    if macro.template == "imagenet":
        stem = image.reduced(STEM_CHANNELS)
        kinds += [("reduction", -(-macro.f // 4)), ("reduction", -(-macro.f // 2))]
    width = macro.f
    for stack in range(3):
        if stack:
            width *= 2
            kinds.append(("reduction", width))
        kinds += [("normal", width)] * macro.n

    prev = prev_prev = stem or image
    cells = []
    for kind, filters in kinds:
        h, w = prev.height, prev.width
        out = LayerShape(h, w, filters)
        if kind == "reduction":
            out = out.reduced()
        cells.append(CellInstance(kind, filters, prev, prev_prev, out))
        prev_prev, prev = prev, out
    return NetworkPlan(macro, image, stem, tuple(cells))


def network_cost(g: Genome, macro: MacroConfig) -> CostReport:
    plan = build_network(g, macro)
    bn = macro.batchnorm
    total = CostReport()
    if plan.stem is not None:
        total += conv_cost(plan.input_shape, STEM_CHANNELS, 3, 2, bn)
    for inst in plan.cells:
        cell = g.reduction if inst.is_reduction else g.normal
        cost, _ = cell_cost(cell, (inst.prev, inst.prev_prev), inst.filters, inst.is_reduction, bn)
        total += cost
    total += classifier_cost(plan.final_shape.channels, macro.classes)
    return total


def classifier_cost(channels: int, classes: int) -> CostReport:
    """Global average pooling (free) followed by a bias-free linear layer."""
    return CostReport(channels * classes, channels * classes)


def speed(cost: CostReport | int | float) -> float:
    """Inferences per second proxy: ``2e9 / FLOPS``."""
    flops = cost.flops if isinstance(cost, CostReport) else cost
    if flops <= 0:
        raise ValueError("speed is undefined for zero FLOPS")
    return 2e9 / flops
