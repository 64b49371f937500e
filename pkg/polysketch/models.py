"""
Pydantic models for polysketch
Sketch and kernel descriptions, allocations, command/request schemas and reports
"""
from enum import Enum
from math import comb
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator


class StrictModel(BaseModel):
    """Base model rejecting unknown keys"""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class SketchFamily(str, Enum):
    GAUSSIAN = "gaussian"
    RADEMACHER = "rademacher"
    TENSOR_SRHT = "tensor_srht"


class FieldKind(str, Enum):
    REAL = "real"
    COMPLEX = "complex"


class KernelKind(str, Enum):
    POLYNOMIAL = "polynomial"
    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"


class SketchSpec(StrictModel):
    """Declarative description of a polynomial sketch"""
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)

    family: SketchFamily = SketchFamily.RADEMACHER
    field: FieldKind = FieldKind.REAL
    degree: int = Field(ge=1, alias="p")
    num_features: int = Field(ge=1, alias="D")
    input_dim: int = Field(ge=1, alias="d")
    seed: int = Field(default=0, ge=0)

    @property
    def is_real(self) -> bool:
        return self.field is FieldKind.REAL


class KernelSpec(StrictModel):
    """
    Dot-product kernel k(x, y) = g(x) g(y) sum_n a_n (x^T y)^n

    polynomial:  variance * (gamma * x^T y + nu)^degree
    exponential: variance * exp(x^T y / lengthscale^2)
    gaussian:    variance * exp(-||x - y||^2 / (2 lengthscale^2)), i.e. the
                 exponential kernel weighted by g(x) = exp(-||x||^2 / (2 lengthscale^2))
    """
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)

    kind: KernelKind
    degree: Optional[int] = Field(default=None, ge=1)
    nu: float = Field(default=0.0, ge=0.0)
    gamma: float = Field(default=1.0, gt=0.0)
    lengthscale: Optional[float] = Field(default=None, gt=0.0)
    variance: float = Field(default=1.0, gt=0.0)

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind is KernelKind.POLYNOMIAL and self.degree is None:
            raise ValueError("polynomial kernel requires 'degree'")
        if self.kind is not KernelKind.POLYNOMIAL and self.lengthscale is None:
            raise ValueError(f"{self.kind.value} kernel requires 'lengthscale'")
        return self

    @classmethod
    def polynomial(cls, p: int, nu: float = 0.0, gamma: float = 1.0,
                   variance: float = 1.0) -> "KernelSpec":
        return cls(kind=KernelKind.POLYNOMIAL, degree=p, nu=nu, gamma=gamma, variance=variance)

    @classmethod
    def polynomial_sphere(cls, p: int, a: float, variance: float = 1.0) -> "KernelSpec":
        """variance * ((1 - 2/a^2) + (2/a^2) x^T y)^p, for unit-norm inputs and a >= 2"""
        if a < 2:
            raise ValueError(f"sphere polynomial kernel needs a >= 2, got {a}")
        return cls.polynomial(p, nu=1.0 - 2.0 / a ** 2, gamma=2.0 / a ** 2, variance=variance)

    @classmethod
    def exponential(cls, lengthscale: float, variance: float = 1.0) -> "KernelSpec":
        return cls(kind=KernelKind.EXPONENTIAL, lengthscale=lengthscale, variance=variance)

    @classmethod
    def gaussian(cls, lengthscale: float, variance: float = 1.0) -> "KernelSpec":
        return cls(kind=KernelKind.GAUSSIAN, lengthscale=lengthscale, variance=variance)

    @property
    def has_prefactor(self) -> bool:
        return self.kind is KernelKind.GAUSSIAN

    def polynomial_coefficient(self, n: int) -> float:
        return self.variance * comb(self.degree, n) * self.gamma ** n * self.nu ** (self.degree - n)


class Allocation(StrictModel):
    """Truncation degree p* and per-degree feature counts D_1..D_p*"""
    p_star: int = Field(ge=1)
    counts: List[int]
    objective: float

    @model_validator(mode="after")
    def _check_counts(self):
        if len(self.counts) != self.p_star:
            raise ValueError(f"expected {self.p_star} counts, got {len(self.counts)}")
        if any(c < 0 for c in self.counts):
            raise ValueError(f"counts must be nonnegative: {self.counts}")
        return self

    @property
    def num_features(self) -> int:
        """Features spent on degrees >= 1"""
        return int(sum(self.counts))

    def to_json(self) -> str:
        return self.model_dump_json()

    @classmethod
    def from_json(cls, text: str) -> "Allocation":
        return cls.model_validate_json(text)


class PreprocessFlags(StrictModel):
    zero_center: bool = False
    unit_normalize: bool = False
    pad_pow2: bool = False


class SyntheticData(StrictModel):
    """Random regression data: y = sin(3 x^T w) + noise"""
    n: int = Field(ge=2)
    d: int = Field(ge=1)
    nonnegative: bool = False
    noise: float = Field(default=0.1, ge=0.0)
    classes: Optional[int] = Field(default=None, ge=2)
    seed: int = Field(default=0, ge=0)


class DataConfig(StrictModel):
    """Either a CSV file with a label column or a synthetic generator"""
    path: Optional[str] = None
    label_column: Optional[str] = None
    synthetic: Optional[SyntheticData] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.path is None) == (self.synthetic is None):
            raise ValueError("data needs exactly one of 'path' or 'synthetic'")
        return self


class ExperimentKernel(StrictModel):
    """Kernel with data-driven hyperparameters resolved per seed"""
    kind: KernelKind
    degree: Optional[int] = Field(default=None, ge=1)
    nu: float = Field(default=0.0, ge=0.0)
    gamma: float = Field(default=1.0, gt=0.0)
    a: Optional[float] = Field(default=None, ge=2.0)
    lengthscale: Union[float, Literal["median"], None] = None
    variance: Union[float, Literal["label_variance"]] = 1.0


class MethodKind(str, Enum):
    POLYNOMIAL_SKETCH = "polynomial_sketch"
    RFF = "rff"
    RANDOM_MACLAURIN = "random_maclaurin"
    OPTIMIZED_MACLAURIN = "optimized_maclaurin"


class MethodConfig(StrictModel):
    name: str
    kind: MethodKind
    family: SketchFamily = SketchFamily.RADEMACHER
    field: FieldKind = FieldKind.REAL


TaskKind = Literal["frobenius", "gp_regression", "gp_classification"]


class ExperimentConfig(StrictModel):
    """Schema of the `bench` subcommand config file"""
    data: DataConfig
    test_data: Optional[DataConfig] = None
    kernel: ExperimentKernel
    methods: List[MethodConfig] = Field(min_length=1)
    features: List[int] = Field(min_length=1)
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)
    preprocess: PreprocessFlags = Field(default_factory=PreprocessFlags)
    task: TaskKind = "frobenius"
    m: Optional[int] = Field(default=None, ge=2)
    m_star: Optional[int] = Field(default=None, ge=1)
    noise: float = Field(default=0.01, gt=0.0)
    alpha: Optional[float] = Field(default=None, gt=0.0)
    n_mc: Optional[int] = Field(default=None, ge=1)
    p_min: Optional[int] = Field(default=None, ge=1)
    p_max: Optional[int] = Field(default=None, ge=1)
    test_fraction: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    bias_correction: Optional[bool] = None
    workers: Optional[int] = Field(default=None, ge=1)
    output: Optional[str] = None

    @model_validator(mode="after")
    def _check_names(self):
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ValueError(f"method names must be unique: {names}")
        if any(D < 1 for D in self.features):
            raise ValueError(f"feature counts must be positive: {self.features}")
        return self


class SketchCommand(StrictModel):
    sketch: SketchSpec
    data: DataConfig
    output: Optional[str] = None


class VarianceCommand(StrictModel):
    """Evaluate variance formulas for one input pair"""
    x: List[float] = Field(min_length=1)
    y: List[float] = Field(min_length=1)
    degree: int = Field(ge=1)
    num_features: int = Field(default=1, ge=1)
    epsilon: Optional[float] = Field(default=None, gt=0.0)
    delta: Optional[float] = Field(default=None, gt=0.0, lt=2.0)
    output: Optional[str] = None


class AllocateCommand(StrictModel):
    kernel: KernelSpec
    data: DataConfig
    preprocess: PreprocessFlags = Field(default_factory=PreprocessFlags)
    num_features: int = Field(ge=1)
    family: SketchFamily = SketchFamily.RADEMACHER
    field: FieldKind = FieldKind.REAL
    p_min: Optional[int] = Field(default=None, ge=1)
    p_max: Optional[int] = Field(default=None, ge=1)
    m: Optional[int] = Field(default=None, ge=2)
    seed: int = Field(default=0, ge=0)
    output: Optional[str] = None


class GpCommand(StrictModel):
    train: DataConfig
    test: DataConfig
    kernel: KernelSpec
    method: MethodConfig
    num_features: int = Field(ge=1)
    preprocess: PreprocessFlags = Field(default_factory=PreprocessFlags)
    task: Literal["regression", "classification"] = "regression"
    noise: float = Field(default=0.01, gt=0.0)
    seed: int = Field(default=0, ge=0)
    output: Optional[str] = None


class Fig1Command(StrictModel):
    d: int = Field(default=100, ge=1)
    num_features: int = Field(default=2000, ge=1)
    degrees: List[int] = Field(default_factory=lambda: list(range(1, 11)), min_length=1)
    trials: int = Field(default=100, ge=2)
    seed: int = Field(default=0, ge=0)
    output: Optional[str] = None


class RunRecord(BaseModel):
    """Metrics of one (method, D, seed) run"""
    method: str
    num_features: int
    seed: int
    metrics: Dict[str, float]


class AggregateRecord(BaseModel):
    method: str
    num_features: int
    metric: str
    mean: float
    std: float
    runs: int


class Report(BaseModel):
    """Experiment results; reproducible given the config"""
    task: str
    runs: List[RunRecord]
    aggregates: List[AggregateRecord]
