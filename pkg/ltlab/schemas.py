from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Literal, Optional

from ltlab.band_geometry import BandSet
from ltlab.spectral_constants import ExponentPack


class BandSetModel(BaseModel):
    edges: list[tuple[float, float]] = Field(..., min_length=1)  # [[a_1, b_1], ..., [a_K, b_K]]
    shift: float = 0.0
    discriminant_error: Optional[float] = None  # largest Richardson estimate of Delta at the edges

    model_config = ConfigDict(from_attributes=True)

    @model_validator(mode="after")
    def check_edges(self):
        self.to_band_set()
        return self

    def to_band_set(self) -> BandSet:
        return BandSet.from_pairs(self.edges, shift=self.shift)

    @classmethod
    def from_band_set(cls, bands: BandSet, discriminant_error: Optional[float] = None) -> "BandSetModel":
        return cls(edges=bands.to_pairs(), shift=bands.shift, discriminant_error=discriminant_error)


class PotentialSpec(BaseModel):
    kind: Literal["free", "cosine", "table"] = "cosine"
    amplitude: float = 0.0  # V0(x) = amplitude * cos(2 pi x / period)
    period: float = Field(1.0, gt=0)
    shift: float = 0.0
    table_path: Optional[str] = None

    @model_validator(mode="after")
    def check_table(self):
        if self.kind == "table" and not self.table_path:
            raise ValueError("a table potential needs table_path")
        return self


class PerturbationSpec(BaseModel):
    kind: Literal["zero", "bump", "random", "table"] = "bump"
    amplitude_re: float = 1.0
    amplitude_im: float = 0.0
    center: float = 0.0
    width: float = Field(1.0, gt=0)
    epsilon: float = Field(1.0, gt=0)  # overall scale of V
    seed: int = Field(0, ge=0)
    table_path: Optional[str] = None

    @model_validator(mode="after")
    def check_table(self):
        if self.kind == "table" and not self.table_path:
            raise ValueError("a table perturbation needs table_path")
        return self

    @property
    def amplitude(self) -> complex:
        return complex(self.amplitude_re, self.amplitude_im)


class DiscretizationSpec(BaseModel):
    n: int = Field(256, ge=16)
    length: float = Field(..., gt=0)  # box length, a multiple of the period


class ExponentSpec(BaseModel):
    p: float = Field(2.0, gt=1)
    d: int = Field(1, ge=1, le=1)  # experiments are one-dimensional
    tau: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def check_tau_range(self):
        low, high = ExponentPack.tau_range(self.p, self.d)
        if not low < self.tau < high:
            raise ValueError(f"tau={self.tau} must lie in ({low}, {high}) for p={self.p}, d={self.d}")
        return self

    def to_pack(self) -> ExponentPack:
        return ExponentPack(p=self.p, d=self.d, tau=self.tau)


class BandSearchSpec(BaseModel):
    e_min: float
    e_max: float
    count: int = Field(..., ge=1)  # K, number of retained bands
    grid: int = Field(4001, ge=101)
    steps: int = Field(2048, ge=100)

    @model_validator(mode="after")
    def check_range(self):
        if not self.e_max > self.e_min:
            raise ValueError("e_max must exceed e_min")
        return self


class OutputSpec(BaseModel):
    report_path: Optional[str] = None
    csv_dir: Optional[str] = None


class ExperimentConfig(BaseModel):
    potential: PotentialSpec
    perturbation: PerturbationSpec
    discretization: DiscretizationSpec
    exponents: ExponentSpec = ExponentSpec()
    bands: BandSearchSpec
    filter_factor: float = Field(5.0, gt=0)  # sigma_d tolerance = factor * h^2 * max(1, Re^2 / 12)
    output: OutputSpec = OutputSpec()

    model_config = ConfigDict(extra="forbid")


class ChainEntry(BaseModel):
    z: tuple[float, float]
    lhs: float  # s-integral of the shifted-point weight
    rhs: float  # 3^-p B(alpha+1, d/2+tau) times the main weight
    holds: bool


class ClusterEntry(BaseModel):
    first: int
    second: int
    gap: float


class KatoItem(BaseModel):
    quantity: str
    value: float
    bound: Optional[float] = None
    ratio: Optional[float] = None
    verdict: Literal["within", "exceeds", "empirical-only"]
    empirical: bool = True


class KatoChain(BaseModel):
    omega: float
    omega0: float
    items: list[KatoItem] = []
    asserted_hold: bool


class CorollaryWeights(BaseModel):
    lt_sum: float
    scale_first: float
    scale_second: float
    constant_first: Optional[float] = None
    constant_second: Optional[float] = None


class LtReport(BaseModel):
    bands: BandSetModel
    mesh: float
    omega0: float
    v_norm: float
    v0_sup: float
    eigenvalues: list[tuple[float, float]]
    sigma_d: list[tuple[float, float]]
    beyond_truncation: int
    near_bands: int
    max_distance: float
    lt_sum_thm1: float = Field(..., ge=0)
    lt_sum_prop1: float = Field(..., ge=0)
    rhs_scale_thm1: float
    rhs_scale_prop1: float
    empirical_constant_thm1: Optional[float] = None
    empirical_constant_prop1: Optional[float] = None
    corollary: CorollaryWeights
    chain: list[ChainEntry] = []
    chain_holds: bool
    clusters: list[ClusterEntry] = []
    kato_chain: Optional[KatoChain] = None
    provenance: dict

    @property
    def all_hold(self) -> bool:
        return self.chain_holds and (self.kato_chain is None or self.kato_chain.asserted_hold)


class SweepReport(BaseModel):
    epsilons: list[float]
    reports: list[LtReport]
    slope: Optional[float] = None
    slope_expected_min: float
    slope_meets_expectation: Optional[bool] = None
    monotone: bool
    constant_spread: Optional[float] = None

    @property
    def all_hold(self) -> bool:
        return all(r.all_hold for r in self.reports)
