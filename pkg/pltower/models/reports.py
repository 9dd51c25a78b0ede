from typing import ClassVar, Literal

from pydantic import BaseModel, Field

TowerStatus = Literal["converged", "max_iterations", "knot_budget"]


class TowerRecord(BaseModel):
    CSV_COLUMNS: ClassVar[tuple[str, ...]] = (
        "n",
        "s_n",
        "residual_f",
        "residual_h",
        "residual_H",
        "knots_f",
        "knots_H",
        "residual_g",
        "residual_h_step",
        "knots_h",
    )

    n: int
    s_n: float
    residual_f: float
    residual_h: float
    residual_H: float
    knots_f: int
    knots_H: int
    # undefined on the first step
    residual_g: float | None = None
    residual_h_step: float | None = None
    knots_h: int = 0

    def row(self) -> list:
        data = self.dict()
        return ["" if data[column] is None else data[column] for column in self.CSV_COLUMNS]


class TowerSummary(BaseModel):
    converged: bool
    status: TowerStatus
    iterations: int
    s_final: float
    min_residual: float
    oscillation_period: int | None = None
    H_route_gap: float | None = None
    conjugacy_residual: float | None = None
    commutation_fh: float | None = None
    commutation_gh: float | None = None
    expansion_factor: float | None = None


class LinearizeReport(BaseModel):
    s: float
    turning: list[float]
    g: dict
    h: dict


class EntropyEstimate(BaseModel):
    method: Literal["kneading", "hofbauer", "growth"]
    h: float
    err_bound: float | None = None
    flags: list[str] = []
    details: dict = {}


class EntropyReport(BaseModel):
    estimates: list[EntropyEstimate]
    max_gap: float


class SpectrumReport(BaseModel):
    lambda_: float = Field(alias="lambda")
    markov: bool
    partition_size: int
    gap_ratio: float | None = None
    converged: bool = True
    peripheral: list[float] = []

    class Config:
        allow_population_by_field_name = True


class Deg6Row(BaseModel):
    N: int
    mass: float
    expected: float


class Deg6Report(BaseModel):
    a: float
    rows: list[Deg6Row]
    max_error: float
    oscillation_period: int | None
    passed: bool


class RenormRow(BaseModel):
    k: int
    mass: float
    closed_form: float | None
    a_k: float
    tower_H: float | None = None
    fixed_point: float | None = None


class RenormReport(BaseModel):
    s: float
    alpha: float
    core: tuple[float, float]
    I0: tuple[float, float]
    I1: tuple[float, float]
    rows: list[RenormRow]
    max_closed_form_error: float
    max_fixed_point_error: float
    even_limit: float
    odd_limit: float
    gap: float
    balancing_alpha: float
    passed: bool
