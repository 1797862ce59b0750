from .complexity import ComplexityReport, multiplier_count, sdnne_multipliers, vnle_multipliers
from .extraction import (ExtractedKernels, NotDifferentiableError, extract_kernels, kernels_of,
                         write_kernels_csv)
from .oracles import DiscreteOracle, discrete_channel_oracle, exact_llrs_awgn
from .patterns import activation_patterns, realized_patterns
from .rate import RateReport, achievable_rate

__all__ = [
    "ComplexityReport",
    "DiscreteOracle",
    "ExtractedKernels",
    "NotDifferentiableError",
    "RateReport",
    "achievable_rate",
    "activation_patterns",
    "discrete_channel_oracle",
    "exact_llrs_awgn",
    "extract_kernels",
    "kernels_of",
    "multiplier_count",
    "realized_patterns",
    "sdnne_multipliers",
    "vnle_multipliers",
    "write_kernels_csv",
]
