"""Versioned plain-text model checkpoints.

The format is line-oriented: a header with the format name and version,
fixed-order metadata fields, then one decimal parameter per line written
with repr() so the 64-bit value round-trips exactly.  Saving a loaded
checkpoint reproduces the original file byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mmd import KernelBank
from .nn import MlpArchitecture, MlpModel

FORMAT_NAME = "mmdgen-checkpoint"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    """Architecture, flat parameters, and training run metadata."""

    arch: MlpArchitecture
    params: np.ndarray
    bandwidths: tuple[float, ...]
    epoch: int
    stop_reason: str
    seed: int

    @classmethod
    def from_report(cls, report) -> "Checkpoint":
        return cls(
            arch=report.model.arch,
            params=report.model.flat_params(),
            bandwidths=tuple(report.bank.bandwidths),
            epoch=report.epochs,
            stop_reason=report.stop_reason,
            seed=report.config.seed,
        )

    def to_model(self) -> MlpModel:
        weights = [np.zeros((o, i)) for i, o in self.arch.layer_dims]
        biases = [np.zeros(o) for _, o in self.arch.layer_dims]
        model = MlpModel(self.arch, weights, biases)
        model.set_flat_params(self.params)
        return model

    def bank(self) -> KernelBank:
        return KernelBank(self.bandwidths)


def save(ckpt: Checkpoint, path) -> None:
    lines = [
        f"{FORMAT_NAME} {FORMAT_VERSION}",
        f"input_dim {ckpt.arch.input_dim}",
        "hidden_sizes " + ",".join(str(h) for h in ckpt.arch.hidden_sizes),
        f"output_dim {ckpt.arch.output_dim}",
        f"epoch {ckpt.epoch}",
        f"stop_reason {ckpt.stop_reason}",
        f"seed {ckpt.seed}",
        "bandwidths " + ",".join(repr(float(h)) for h in ckpt.bandwidths),
        f"params {ckpt.params.size}",
    ]
    lines.extend(repr(float(x)) for x in ckpt.params)
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def load(path) -> Checkpoint:
    with open(path, newline="\n") as f:
        lines = f.read().splitlines()
    if not lines:
        raise ValueError("empty checkpoint file")
    name, _, version = lines[0].partition(" ")
    if name != FORMAT_NAME or int(version) != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint header {lines[0]!r}")

    fields = {}
    for i, key in enumerate(
        ("input_dim", "hidden_sizes", "output_dim", "epoch", "stop_reason", "seed", "bandwidths", "params"),
        start=1,
    ):
        got, _, value = lines[i].partition(" ")
        if got != key:
            raise ValueError(f"expected field {key!r} on line {i + 1}, found {got!r}")
        fields[key] = value

    arch = MlpArchitecture(
        input_dim=int(fields["input_dim"]),
        hidden_sizes=tuple(int(h) for h in fields["hidden_sizes"].split(",")),
        output_dim=int(fields["output_dim"]),
    )
    n_params = int(fields["params"])
    body = lines[9 : 9 + n_params]
    if len(body) != n_params:
        raise ValueError("checkpoint parameter block truncated")
    params = np.array([float(x) for x in body], dtype=np.float64)
    return Checkpoint(
        arch=arch,
        params=params,
        bandwidths=tuple(float(h) for h in fields["bandwidths"].split(",")),
        epoch=int(fields["epoch"]),
        stop_reason=fields["stop_reason"],
        seed=int(fields["seed"]),
    )
