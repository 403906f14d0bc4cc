from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

# Wall-clock fields; everything else in a record is reproducible from (config, seed)
TIMING_FIELDS = {
    "total_measured_cost": True,
    "iterations": {"__all__": {"measured_cost"}},
}


class ParamsSnapshot(BaseModel):
    q1: float
    q2: float
    QW: float
    QW_star: Optional[float] = None
    QS: float
    V: List[float] = Field(default_factory=list)
    rate_fit_converged: bool = True


class IterationTrace(BaseModel):
    index: int
    tol: float
    num_levels: int
    theta: float
    bias_qw: Optional[float] = None
    bias_q1: Optional[float] = None
    samples: List[int]
    params: Optional[ParamsSnapshot] = None
    estimate: float
    bias: Optional[float] = None
    statistical_error: float
    error_estimate: Optional[float] = None
    model_work: float
    measured_cost: float


class RunRecord(BaseModel):
    algorithm: str
    sampler: Dict[str, Any] = Field(default_factory=dict)
    tol: float
    seed: int
    status: str = "success"
    message: Optional[str] = None
    estimate: Optional[float] = None
    error_estimate: Optional[float] = None
    estimator_variance: Optional[float] = None
    bias_estimate: Optional[float] = None
    final_L: Optional[int] = None
    theta_final: Optional[float] = None
    iterations: List[IterationTrace] = Field(default_factory=list)
    total_model_work: float = 0.0
    total_measured_cost: float = 0.0
    samples_final: List[int] = Field(default_factory=list)
    level_stats: List[Dict[str, Any]] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)

    @property
    def succeeded(self) -> bool:
        return self.status == "success"

    def deterministic_payload(self) -> Dict[str, Any]:
        """Record contents without wall-clock timings"""
        return self.model_dump(mode="json", exclude=TIMING_FIELDS)

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")
