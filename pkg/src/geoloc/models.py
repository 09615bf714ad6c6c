"""Model assembly for the two localizer families.

``build_localizer`` wires encoder -> base -> head, the three-block MLP
whose base block is the unit of transfer between environments.
``build_umlp`` wires a shared trunk into a coordinate-regression head and
a one-logit environment-classification head.

Hidden blocks are Dense -> BatchNorm -> ReLU (-> Dropout); final output
layers are plain affine.  Dropout rates attach to the last ``len(rates)``
hidden widths of a block, in the order given.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParseError, ShapeError
from .nn import (
    ActivationLayer,
    BatchNormLayer,
    DenseLayer,
    DropoutLayer,
    Network,
    glorot_uniform,
    he_uniform,
)


def _check_widths(name: str, widths) -> tuple[int, ...]:
    widths = tuple(int(w) for w in widths)
    if not widths or any(w < 1 for w in widths):
        raise ConfigError(f"{name} widths must be positive, got {widths}")
    return widths


def _check_rates(name: str, rates, n_slots: int) -> tuple[float, ...]:
    rates = tuple(float(r) for r in rates)
    if any(not (0.0 <= r < 1.0) for r in rates):
        raise ConfigError(f"{name} dropout rates must lie in [0, 1), got {rates}")
    if len(rates) > n_slots:
        raise ConfigError(
            f"{name} has {len(rates)} dropout rates for {n_slots} hidden widths"
        )
    return rates


@dataclass(frozen=True)
class EncoderSpec:
    """Input-compression block; its output is the latent representation."""

    hidden: tuple[int, ...] = (64, 256, 512)
    dropout: tuple[float, ...] = (0.1, 0.2)
    latent_dim: int = 128

    def __post_init__(self):
        object.__setattr__(self, "hidden", _check_widths("encoder", self.hidden))
        if self.latent_dim < 1:
            raise ConfigError(f"latent_dim must be positive, got {self.latent_dim}")
        widths = self.hidden + (self.latent_dim,)
        object.__setattr__(
            self, "dropout", _check_rates("encoder", self.dropout, len(widths))
        )

    @property
    def widths(self) -> tuple[int, ...]:
        return self.hidden + (self.latent_dim,)


@dataclass(frozen=True)
class BaseSpec:
    """Shared middle block; the part copied by transfer learning."""

    hidden: tuple[int, ...] = (32, 64, 128, 512)
    dropout: tuple[float, ...] = (0.05, 0.1, 0.2)
    out_dim: int = 64

    def __post_init__(self):
        object.__setattr__(self, "hidden", _check_widths("base", self.hidden))
        if self.out_dim < 1:
            raise ConfigError(f"out_dim must be positive, got {self.out_dim}")
        widths = self.hidden + (self.out_dim,)
        object.__setattr__(
            self, "dropout", _check_rates("base", self.dropout, len(widths))
        )

    @property
    def widths(self) -> tuple[int, ...]:
        return self.hidden + (self.out_dim,)


@dataclass(frozen=True)
class HeadSpec:
    """Environment-specific output block ending in a linear coordinate map."""

    hidden: tuple[int, ...] = (512, 256, 128, 32)
    dropout: tuple[float, ...] = (0.015, 0.1)
    penultimate: int = 150
    out_dim: int = 2

    def __post_init__(self):
        object.__setattr__(self, "hidden", _check_widths("head", self.hidden))
        if self.penultimate < 1 or self.out_dim < 1:
            raise ConfigError("head penultimate and out_dim must be positive")
        widths = self.hidden + (self.penultimate,)
        object.__setattr__(
            self, "dropout", _check_rates("head", self.dropout, len(widths))
        )

    @property
    def widths(self) -> tuple[int, ...]:
        return self.hidden + (self.penultimate,)


@dataclass(frozen=True)
class ModelConfig:
    """Full architecture description, serializable to TOML or JSON."""

    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    base: BaseSpec = field(default_factory=BaseSpec)
    head: HeadSpec = field(default_factory=HeadSpec)
    use_batchnorm: bool = True

    def to_dict(self) -> dict:
        return {
            "use_batchnorm": self.use_batchnorm,
            "encoder": {
                "hidden": list(self.encoder.hidden),
                "dropout": list(self.encoder.dropout),
                "latent_dim": self.encoder.latent_dim,
            },
            "base": {
                "hidden": list(self.base.hidden),
                "dropout": list(self.base.dropout),
                "out_dim": self.base.out_dim,
            },
            "head": {
                "hidden": list(self.head.hidden),
                "dropout": list(self.head.dropout),
                "penultimate": self.head.penultimate,
                "out_dim": self.head.out_dim,
            },
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ModelConfig":
        known = {"use_batchnorm", "encoder", "base", "head"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        sections = {}
        for name, spec_cls in (
            ("encoder", EncoderSpec),
            ("base", BaseSpec),
            ("head", HeadSpec),
        ):
            sec = raw.get(name)
            if sec is None:
                sections[name] = spec_cls()
                continue
            allowed = {f.name for f in spec_cls.__dataclass_fields__.values()}
            bad = set(sec) - allowed
            if bad:
                raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
            kwargs = dict(sec)
            for tuple_key in ("hidden", "dropout"):
                if tuple_key in kwargs:
                    kwargs[tuple_key] = tuple(kwargs[tuple_key])
            sections[name] = spec_cls(**kwargs)
        return cls(
            encoder=sections["encoder"],
            base=sections["base"],
            head=sections["head"],
            use_batchnorm=bool(raw.get("use_batchnorm", True)),
        )

    @classmethod
    def from_file(cls, path) -> "ModelConfig":
        path = str(path)
        if path.endswith(".toml"):
            try:
                import tomllib  # py311+
            except ModuleNotFoundError:
                import tomli as tomllib
            with open(path, "rb") as fh:
                try:
                    raw = tomllib.load(fh)
                except tomllib.TOMLDecodeError as exc:
                    raise ParseError(f"{path}: {exc}") from None
        elif path.endswith(".json"):
            with open(path) as fh:
                try:
                    raw = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"{path}: {exc}") from None
        else:
            raise ConfigError(f"config file must end in .toml or .json: {path}")
        return cls.from_dict(raw)


def _stack(
    in_dim: int,
    widths: tuple[int, ...],
    rates: tuple[float, ...],
    use_batchnorm: bool,
    init_rng: np.random.Generator,
    dropout_rng: np.random.Generator,
) -> Network:
    """Hidden-block stack; rates pair with the trailing widths."""
    rate_seq = [0.0] * (len(widths) - len(rates)) + list(rates)
    layers = []
    prev = in_dim
    for width, rate in zip(widths, rate_seq):
        weight = he_uniform(init_rng, width, prev)
        bias = np.zeros(width)
        if use_batchnorm:
            layers.append(DenseLayer(weight, bias, activation="linear"))
            layers.append(BatchNormLayer(width))
            layers.append(ActivationLayer("relu"))
        else:
            layers.append(DenseLayer(weight, bias, activation="relu"))
        if rate > 0.0:
            layers.append(DropoutLayer(rate, rng=dropout_rng))
        prev = width
    return Network(layers)


def _output_layer(in_dim: int, out_dim: int, init_rng: np.random.Generator) -> Network:
    return Network(
        [DenseLayer(glorot_uniform(init_rng, out_dim, in_dim), np.zeros(out_dim))]
    )


def _rngs(seed: int):
    init_ss, drop_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(init_ss), np.random.default_rng(drop_ss)


class _BlockModel:
    """Common plumbing shared by both model families."""

    def __init__(self, blocks: dict, config, input_dim: int, seed: int):
        self.blocks = blocks
        self.config = config
        self.input_dim = input_dim
        self.seed = seed
        self._mode = "train"

    def set_mode(self, mode: str) -> None:
        for net in self.blocks.values():
            net.set_mode(mode)
        self._mode = mode

    @property
    def mode(self) -> str:
        return self._mode

    def parameters(self):
        return [p for net in self.blocks.values() for p in net.parameters()]

    def gradients(self):
        return [g for net in self.blocks.values() for g in net.gradients()]

    def state_arrays(self):
        return [a for net in self.blocks.values() for a in net.state_arrays()]


class LocalizerModel(_BlockModel):
    """Encoder -> base -> head coordinate regressor."""

    def __init__(self, encoder: Network, base: Network, head: Network, config, input_dim, seed):
        super().__init__(
            {"encoder": encoder, "base": base, "head": head}, config, input_dim, seed
        )

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = self.blocks["encoder"].forward(x)
        h = self.blocks["base"].forward(h)
        return self.blocks["head"].forward(h)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        grad = self.blocks["head"].backward(grad_out)
        grad = self.blocks["base"].backward(grad)
        return self.blocks["encoder"].backward(grad)

    def predict(self, x: np.ndarray, batch_size: int = 4096) -> np.ndarray:
        """Inference-mode forward in chunks; restores the previous mode."""
        prev = self.mode
        self.set_mode("infer")
        try:
            x = np.asarray(x, dtype=np.float64)
            parts = [
                self.forward(x[i : i + batch_size])
                for i in range(0, x.shape[0], batch_size)
            ]
        finally:
            self.set_mode(prev)
        return np.vstack(parts) if parts else np.empty((0, self.config.head.out_dim))


class UmlpModel(_BlockModel):
    """Shared trunk with a coordinate head and an environment-logit head."""

    def __init__(self, trunk: Network, reg_head: Network, cls_head: Network, config, input_dim, seed):
        super().__init__(
            {"trunk": trunk, "reg_head": reg_head, "cls_head": cls_head},
            config,
            input_dim,
            seed,
        )

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        h = self.blocks["trunk"].forward(x)
        return self.blocks["reg_head"].forward(h), self.blocks["cls_head"].forward(h)

    def backward(self, grad_coords: np.ndarray, grad_logits: np.ndarray) -> np.ndarray:
        # both heads read the same trunk output, so their gradients add
        g = self.blocks["reg_head"].backward(grad_coords)
        g = g + self.blocks["cls_head"].backward(grad_logits)
        return self.blocks["trunk"].backward(g)

    def predict(self, x: np.ndarray, batch_size: int = 4096) -> tuple[np.ndarray, np.ndarray]:
        prev = self.mode
        self.set_mode("infer")
        try:
            x = np.asarray(x, dtype=np.float64)
            coords, logits = [], []
            for i in range(0, x.shape[0], batch_size):
                c, z = self.forward(x[i : i + batch_size])
                coords.append(c)
                logits.append(z)
        finally:
            self.set_mode(prev)
        if not coords:
            return np.empty((0, self.config.head.out_dim)), np.empty((0, 1))
        return np.vstack(coords), np.vstack(logits)


def build_localizer(input_dim: int, config: ModelConfig | None = None, seed: int = 0) -> LocalizerModel:
    """Construct a freshly initialized encoder/base/head localizer.

    The seed fixes both weight initialization and the dropout stream, so
    two calls with equal arguments produce bit-identical models.
    """
    if input_dim < 1:
        raise ConfigError(f"input_dim must be positive, got {input_dim}")
    cfg = config or ModelConfig()
    init_rng, drop_rng = _rngs(seed)
    enc = _stack(
        input_dim, cfg.encoder.widths, cfg.encoder.dropout, cfg.use_batchnorm, init_rng, drop_rng
    )
    base = _stack(
        cfg.encoder.latent_dim, cfg.base.widths, cfg.base.dropout, cfg.use_batchnorm, init_rng, drop_rng
    )
    head_stack = _stack(
        cfg.base.out_dim, cfg.head.widths, cfg.head.dropout, cfg.use_batchnorm, init_rng, drop_rng
    )
    out = _output_layer(cfg.head.penultimate, cfg.head.out_dim, init_rng)
    head = Network(head_stack.layers + out.layers)
    return LocalizerModel(enc, base, head, cfg, input_dim, seed)


def build_umlp(input_dim: int, config: ModelConfig | None = None, seed: int = 0) -> UmlpModel:
    """Construct the unified two-head model; the trunk follows the base spec."""
    if input_dim < 1:
        raise ConfigError(f"input_dim must be positive, got {input_dim}")
    cfg = config or ModelConfig()
    init_rng, drop_rng = _rngs(seed)
    trunk = _stack(
        input_dim, cfg.base.widths, cfg.base.dropout, cfg.use_batchnorm, init_rng, drop_rng
    )
    reg_head = _output_layer(cfg.base.out_dim, cfg.head.out_dim, init_rng)
    cls_head = _output_layer(cfg.base.out_dim, 1, init_rng)
    return UmlpModel(trunk, reg_head, cls_head, cfg, input_dim, seed)


def swap_base(source: LocalizerModel, target: LocalizerModel) -> None:
    """Copy the source model's base block into the target, by value.

    Copies weights, biases, batch-norm scale/shift, and the running
    statistics.  Architectures must agree on the base block exactly.
    """
    src = source.blocks["base"].state_arrays()
    dst = target.blocks["base"].state_arrays()
    if len(src) != len(dst):
        raise ShapeError(
            f"base blocks differ: {len(src)} vs {len(dst)} state arrays"
        )
    for s, d in zip(src, dst):
        if s.shape != d.shape:
            raise ShapeError(f"base array shape mismatch: {s.shape} vs {d.shape}")
    for s, d in zip(src, dst):
        d[...] = s
