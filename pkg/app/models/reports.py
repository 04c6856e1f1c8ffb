"""
Pydantic models for the JSON reports written by the commands
"""
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field


class ClassMetrics(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    class_: int = Field(alias="class")
    support: int
    f1: float
    auc: Optional[float] = None


class MetricsReport(BaseModel):
    """Label classification on the test split"""
    macro_f1: float = Field(ge=0, le=1)
    macro_auc: float = Field(ge=0, le=1)
    per_class: List[ClassMetrics] = []

    @classmethod
    def from_result(cls, result) -> "MetricsReport":
        return cls.model_validate(result.to_dict())


class Counterexample(BaseModel):
    """A signal whose coarse image has more energy than the original"""
    trial: int
    ratio: float
    signal: Optional[int] = None
    graph: str = "random"


class EnergyReport(BaseModel):
    """Dirichlet energy of fine signals against their coarsened images"""
    trials: int
    ratios: Dict[str, float]
    piecewise_constant_exact: bool
    top_eigvec_contracts: bool
    constant_signal_zero: bool = True
    counterexamples: List[Counterexample] = []


class CheckResult(BaseModel):
    name: str
    passed: bool
    asserted: bool = True
    detail: Dict[str, Any] = {}


class VerifyReport(EnergyReport):
    """Energy summary at the top level, then every check with its detail"""
    seed: int
    passed: bool
    signals: int
    checks: List[CheckResult]


class EdgeFrequency(BaseModel):
    source: int
    target: int
    frequency: str


class SpectralReport(BaseModel):
    signal: str
    n_segments: int
    cut: int
    eigenvalues: List[float]
    coefficients: List[float]
    dirichlet_energy: float
    low_band_fraction: float
    high_edge_share: Optional[float] = None
    central_high_share: Optional[float] = None
    peripheral_high_share: Optional[float] = None
    edges: List[EdgeFrequency] = []

    @classmethod
    def from_profile(cls, signal: str, profile) -> "SpectralReport":
        flags = profile.high_frequency
        return cls(
            signal=signal,
            n_segments=len(profile.eigenvalues),
            cut=profile.cut,
            eigenvalues=profile.eigenvalues.tolist(),
            coefficients=profile.coefficients.tolist(),
            dirichlet_energy=profile.energy,
            low_band_fraction=profile.low_band_fraction,
            high_edge_share=float(flags.mean()) if flags.size else None,
            central_high_share=profile.central_high_share,
            peripheral_high_share=profile.peripheral_high_share,
            edges=[EdgeFrequency(source=i, target=j, frequency="high" if high else "low")
                   for (i, j), high in zip(profile.edges, flags)],
        )


class RunSummary(BaseModel):
    """summary.json of a training run"""
    data: str
    seed: int
    variant: str
    epochs: int
    n_segments: int
    n_parameters: int
    initial_loss: Optional[float] = None
    final_loss: Optional[float] = None
    loss_ratio: Optional[float] = None
