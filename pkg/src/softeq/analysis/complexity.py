"""Hardware-multiplier counts of the equalizers at run time.

VNLE: one multiplier per active kernel, plus the feature-matrix products
(taken as the tap count of the widest nonlinear order, since products of
order k+1 reuse delayed order-k products), plus ``m`` for the max-log
demapper. SDNNE: one multiplier per active weight, plus one per hidden unit
for ReLU / hard tanh, or ``K - 1`` per hidden unit for a ``K``-point
interpolated tanh.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from ..sdnne import HTANH, ITANH, LINEAR, RELU, TANH, MlpDesign, MlpModel
from ..volterra import VolterraDesign, VolterraModel, kernel_count


@dataclass
class ComplexityReport:
    multipliers: int
    breakdown: dict[str, int] = field(default_factory=dict)
    formula: str = ""
    full_multipliers: int = 0

    def __post_init__(self):
        if self.multipliers < 0:
            raise ValueError("negative multiplier count")
        if sum(self.breakdown.values()) != self.multipliers:
            raise ValueError("breakdown does not add up to the total")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ComplexityReport:
        return cls(**data)


def feature_matrix_term(taps: tuple[int, ...]) -> int:
    nonlinear = taps[1:]
    return max(nonlinear) if nonlinear else 0


def vnle_multipliers(arch: VolterraModel | VolterraDesign, with_mla: bool = True,
                     m: int = 3) -> ComplexityReport:
    design = arch.design if isinstance(arch, VolterraModel) else arch
    full_kernels = kernel_count(design)
    full = sum(full_kernels) + feature_matrix_term(design.taps) + (m if with_mla else 0)
    if isinstance(arch, VolterraModel):
        active = arch.active_counts()
    else:
        active = full_kernels
    live_taps = (design.taps[0],) + tuple(t for t, a in zip(design.taps[1:], active[1:]) if a)
    breakdown = {
        "kernels": sum(active),
        "feature_matrix": feature_matrix_term(live_taps),
        "demapper": m if with_mla else 0,
    }
    return ComplexityReport(sum(breakdown.values()), breakdown, "VNLE", full)


def sdnne_multipliers(arch: MlpModel | MlpDesign) -> ComplexityReport:
    design = arch.design if isinstance(arch, MlpModel) else arch
    sizes = design.layer_sizes
    full_weights = sum(a * b for a, b in zip(sizes[:-1], sizes[1:]))
    weights = arch.active_weights if isinstance(arch, MlpModel) else full_weights
    hidden = sum(design.hidden_sizes)
    act = design.activation
    if act in (RELU, HTANH):
        per_unit, tag = 1, "SDNNE-ReLU/H-tanh"
    elif act in (ITANH, TANH):
        # tanh is realized as the interpolated LUT in hardware
        per_unit, tag = design.itanh_points - 1, f"SDNNE-ITANH({design.itanh_points})"
    elif act == LINEAR:
        per_unit, tag = 0, "SDNNE-linear"
    else:
        raise ValueError(f"unknown activation {act!r}")
    breakdown = {"weights": weights, "activations": per_unit * hidden}
    return ComplexityReport(sum(breakdown.values()), breakdown, tag,
                            full_weights + per_unit * hidden)


def multiplier_count(arch, with_mla: bool = True, m: int = 3) -> ComplexityReport:
    if isinstance(arch, (VolterraModel, VolterraDesign)):
        return vnle_multipliers(arch, with_mla, m)
    if isinstance(arch, (MlpModel, MlpDesign)):
        return sdnne_multipliers(arch)
    raise TypeError(f"cannot count multipliers of {type(arch).__name__}")
