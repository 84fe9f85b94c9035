"""Synaptic-operation counting and energy estimation.

One SOP is one synaptic accumulation triggered by one input spike reaching
one output; SOPs are priced at 4.6 pJ and neuron updates (membrane update
plus threshold compare, counted whether or not the neuron fires) at 0.9 pJ
(45 nm CMOS metrics). The dense baseline prices every possible
multiply-accumulate of the same layer shapes at the SOP rate.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataIOError, PreconditionError

E_SOP_J = 4.6e-12
E_NEURON_J = 0.9e-12


@dataclass
class LayerEnergy:
    """Per-layer operation counts."""

    layer_name: str
    spike_count: int
    fan_out: int
    actual_sops: int
    neuron_ops: int
    max_sops: int | None = None
    element_count: int | None = None

    def __post_init__(self):
        for name in ("spike_count", "fan_out", "actual_sops", "neuron_ops"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise PreconditionError(
                    f"{self.layer_name}: {name} must be a non-negative "
                    f"integer, got {value}")
            setattr(self, name, int(value))
        if self.max_sops is not None:
            if int(self.max_sops) != self.max_sops or self.max_sops < 0:
                raise PreconditionError(
                    f"{self.layer_name}: max_sops must be a non-negative integer")
            self.max_sops = int(self.max_sops)
            if self.actual_sops > self.max_sops:
                raise PreconditionError(
                    f"{self.layer_name}: actual_sops {self.actual_sops} exceeds "
                    f"max_sops {self.max_sops}")
        if self.element_count is not None:
            self.element_count = int(self.element_count)

    def to_json_dict(self) -> dict:
        out = {"layer_name": self.layer_name, "spike_count": self.spike_count,
               "fan_out": self.fan_out, "actual_sops": self.actual_sops,
               "neuron_ops": self.neuron_ops}
        if self.max_sops is not None:
            out["max_sops"] = self.max_sops
        if self.element_count is not None:
            out["element_count"] = self.element_count
        return out


@dataclass
class EnergyLedger:
    """Ordered collection of per-layer counts for one run.

    Ledgers are per-run values, never global: pass one in explicitly.
    Recording into an existing layer name accumulates counts, so repeated
    time steps fold into one record per layer.
    """

    layers: list[LayerEnergy] = field(default_factory=list)

    def __post_init__(self):
        self._by_name = {rec.layer_name: rec for rec in self.layers}

    def record(self, layer_name: str, spike_count: int, fan_out: int,
               actual_sops: int, neuron_ops: int,
               max_sops: int | None = None,
               element_count: int | None = None) -> None:
        rec = LayerEnergy(layer_name, spike_count, fan_out, actual_sops,
                          neuron_ops, max_sops, element_count)
        self._accumulate(rec)

    def _accumulate(self, rec: LayerEnergy) -> None:
        existing = self._by_name.get(rec.layer_name)
        if existing is None:
            copy = LayerEnergy(**rec.to_json_dict())
            self.layers.append(copy)
            self._by_name[rec.layer_name] = copy
            return
        existing.spike_count += rec.spike_count
        existing.actual_sops += rec.actual_sops
        existing.neuron_ops += rec.neuron_ops
        existing.fan_out = max(existing.fan_out, rec.fan_out)
        if rec.max_sops is not None:
            existing.max_sops = (existing.max_sops or 0) + rec.max_sops
        if rec.element_count is not None:
            existing.element_count = (existing.element_count or 0) + rec.element_count
        if existing.max_sops is not None and existing.actual_sops > existing.max_sops:
            raise PreconditionError(
                f"{rec.layer_name}: accumulated actual_sops exceed max_sops")

    def merge(self, other: "EnergyLedger") -> "EnergyLedger":
        """Associative per-layer sum of two ledgers (same-name layers add)."""
        merged = EnergyLedger()
        for rec in self.layers + other.layers:
            merged._accumulate(rec)
        return merged

    def layer_names(self) -> list[str]:
        return [rec.layer_name for rec in self.layers]

    def to_json_list(self) -> list[dict]:
        return [rec.to_json_dict() for rec in self.layers]

    @classmethod
    def from_json_list(cls, records: list[dict]) -> "EnergyLedger":
        layers = [LayerEnergy(
            layer_name=obj["layer_name"], spike_count=obj["spike_count"],
            fan_out=obj["fan_out"], actual_sops=obj["actual_sops"],
            neuron_ops=obj["neuron_ops"], max_sops=obj.get("max_sops"),
            element_count=obj.get("element_count")) for obj in records]
        return cls(layers=layers)

    def save(self, path) -> None:
        try:
            with open(path, "w", encoding="utf-8") as fh:
                json.dump(self.to_json_list(), fh, indent=2)
                fh.write("\n")
        except OSError as exc:
            raise DataIOError(f"cannot write {path}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "EnergyLedger":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                records = json.load(fh)
        except OSError as exc:
            raise DataIOError(f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DataIOError(f"{path} is not valid JSON: {exc}") from exc
        return cls.from_json_list(records)


# ---------------------------------------------------------------------------
# SOP counting
# ---------------------------------------------------------------------------

def _require_binary(arr: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise PreconditionError(f"{what} must be binary (0/1)")
    return arr


def count_sops(spikes_in: np.ndarray, fan_out_per_spike: int) -> int:
    """SOPs under the uniform-reach rule: spikes times per-spike fan-out."""
    spikes = _require_binary(spikes_in, "spikes_in")
    if fan_out_per_spike < 0:
        raise PreconditionError("fan_out_per_spike must be >= 0")
    return int(spikes.sum()) * int(fan_out_per_spike)


def _reach_counts(n_in: int, kernel: int, stride: int, padding: int) -> np.ndarray:
    """How many conv output positions each input position reaches (1-D)."""
    n_out = (n_in + 2 * padding - kernel) // stride + 1
    pos = np.arange(n_in)
    lo = np.ceil((pos - kernel + 1 + padding) / stride).astype(np.int64)
    hi = np.floor((pos + padding) / stride).astype(np.int64)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, n_out - 1)
    return np.maximum(0, hi - lo + 1)


def count_conv_sops(spikes_in: np.ndarray, out_channels: int,
                    kernel: int = 3, stride: int = 1, padding: int = 1,
                    exact: bool = False) -> int:
    """SOPs of a 2-D convolution driven by a binary [C, H, W] input.

    Interior approximation: every spike reaches kernel^2 * out_channels
    outputs. Exact mode counts the border-clipped reach per position.
    """
    spikes = _require_binary(spikes_in, "spikes_in")
    if spikes.ndim == 2:
        spikes = spikes[None]
    if spikes.ndim != 3:
        raise PreconditionError(
            f"conv spikes must be [c, h, w], got shape {spikes.shape}")
    if not exact:
        return count_sops(spikes, kernel * kernel * out_channels)
    _, h, w = spikes.shape
    reach = np.outer(_reach_counts(h, kernel, stride, padding),
                     _reach_counts(w, kernel, stride, padding))
    per_channel = spikes.astype(np.int64) * reach[None]
    return int(per_channel.sum()) * out_channels


def dense_conv_macs(in_shape: tuple[int, int, int], out_channels: int,
                    kernel: int = 3, stride: int = 1, padding: int = 1) -> int:
    """Multiply-accumulate count of the dense convolution baseline."""
    c_in, h, w = in_shape
    h_out = (h + 2 * padding - kernel) // stride + 1
    w_out = (w + 2 * padding - kernel) // stride + 1
    return h_out * w_out * out_channels * kernel * kernel * c_in


def dense_linear_macs(n_rows: int, in_features: int, out_features: int) -> int:
    return n_rows * in_features * out_features


# ---------------------------------------------------------------------------
# Energy estimates
# ---------------------------------------------------------------------------

def estimate_snn_energy(ledger: EnergyLedger) -> float:
    """Joules of the spiking run: actual SOPs at 4.6 pJ plus neuron
    updates at 0.9 pJ, summed per layer."""
    total = 0.0
    for rec in ledger.layers:
        total += rec.actual_sops * E_SOP_J + rec.neuron_ops * E_NEURON_J
    return total


def estimate_ann_energy(ledger: EnergyLedger) -> float:
    """Joules of the dense baseline: max SOPs at 4.6 pJ (no neuron term)."""
    total = 0.0
    for rec in ledger.layers:
        if rec.max_sops is None:
            raise PreconditionError(
                f"{rec.layer_name}: max_sops missing; populate the dense "
                f"baseline counts first")
        total += rec.max_sops * E_SOP_J
    return total


def energy_report(snn_ledger: EnergyLedger,
                  ann_ledger: EnergyLedger | None = None) -> dict:
    """Summary report: total joules, percentage reduction, per-layer sparsity.

    The dense baseline defaults to the same ledger's max_sops column. Both
    ledgers must cover the same layer set.
    """
    if ann_ledger is None:
        ann_ledger = snn_ledger
    if set(snn_ledger.layer_names()) != set(ann_ledger.layer_names()):
        raise PreconditionError(
            "snn and ann ledgers cover different layer sets: "
            f"{sorted(snn_ledger.layer_names())} vs "
            f"{sorted(ann_ledger.layer_names())}")
    e_snn = estimate_snn_energy(snn_ledger)
    e_ann = estimate_ann_energy(ann_ledger)
    reduction = 100.0 * (1.0 - e_snn / e_ann) if e_ann > 0 else 0.0
    layers = []
    for rec in snn_ledger.layers:
        sparsity = None
        if rec.element_count:
            sparsity = 1.0 - rec.spike_count / rec.element_count
        layers.append({"layer_name": rec.layer_name,
                       "spike_count": rec.spike_count,
                       "actual_sops": rec.actual_sops,
                       "neuron_ops": rec.neuron_ops,
                       "max_sops": rec.max_sops,
                       "sparsity": sparsity})
    return {"e_snn_joules": e_snn, "e_ann_joules": e_ann,
            "reduction_pct": reduction, "layers": layers}


def format_report(report: dict) -> str:
    """Fixed-width text rendering with 3-significant-digit energies."""
    lines = ["model          energy (J)",
             f"{'dense ANN':<14} {report['e_ann_joules']:.3g}",
             f"{'spiking':<14} {report['e_snn_joules']:.3g}",
             f"reduction      {report['reduction_pct']:.1f}%", "",
             f"{'layer':<24} {'spikes':>12} {'sops':>14} {'max sops':>14} {'sparsity':>9}"]
    for layer in report["layers"]:
        sparsity = (f"{layer['sparsity']:.3f}"
                    if layer["sparsity"] is not None else "-")
        max_sops = layer["max_sops"] if layer["max_sops"] is not None else "-"
        lines.append(f"{layer['layer_name']:<24} {layer['spike_count']:>12} "
                     f"{layer['actual_sops']:>14} {max_sops!s:>14} {sparsity:>9}")
    return "\n".join(lines)
