import abc
import json
from typing import Literal

from pydantic import BaseModel, PositiveInt, ValidationError

from pltower.shared import errors, gallery
from pltower.shared.metric_space import PLMetric
from pltower.shared.pl_core import PLMap


class MapSpec(BaseModel, abc.ABC):
    family: str = "undefined"

    @classmethod
    def parse_obj(cls, data: dict):
        if not isinstance(data, dict):
            raise errors.ParseError(message="a map spec must be a JSON object")
        families = {
            "knots": KnotsSpec,
            "tent": TentSpec,
            "asym_tent": AsymTentSpec,
            "deg6": Deg6Spec,
            "identity": IdentitySpec,
            "logistic": LogisticSpec,
            "sampled": SampledSpec,
            "trapped_tent": TrappedTentSpec,
            "perturbed": PerturbedSpec,
        }
        family = data.get("family", "knots" if "knots" in data else None)
        if family not in families:
            raise errors.ParseError(message=f"unknown map family {family!r}")

        return families[family](**data)

    @abc.abstractmethod
    def build(self) -> PLMap:
        pass


class KnotsSpec(MapSpec):
    family = "knots"
    knots: list[tuple[float, float]]

    def build(self) -> PLMap:
        return PLMap.from_knots(self.knots)


class TentSpec(MapSpec):
    family = "tent"
    slope: float

    def build(self) -> PLMap:
        return gallery.make_tent(self.slope)


class AsymTentSpec(MapSpec):
    family = "asym_tent"
    peak: float

    def build(self) -> PLMap:
        return gallery.make_asym_tent(self.peak)


class Deg6Spec(MapSpec):
    family = "deg6"
    a: float

    def build(self) -> PLMap:
        return gallery.make_deg6(self.a)


class IdentitySpec(MapSpec):
    family = "identity"

    def build(self) -> PLMap:
        return gallery.make_identity()


class LogisticSpec(MapSpec):
    family = "logistic"
    samples: int = 64

    def build(self) -> PLMap:
        return gallery.logistic_adapter(self.samples)


class SampledSpec(MapSpec):
    family = "sampled"
    branches: list[str]
    turning: list[float]
    samples: int = 256

    def build(self) -> PLMap:
        return gallery.SampledMapAdapter(turning=self.turning, branches=self.branches, samples=self.samples).to_map()


class TrappedTentSpec(MapSpec):
    family = "trapped_tent"

    def build(self) -> PLMap:
        return gallery.make_trapped_tent()


class PerturbedSpec(MapSpec):
    family = "perturbed"
    base: dict
    knots: list[tuple[float, float]]

    def build(self) -> PLMap:
        return gallery.perturb_map(MapSpec.parse_obj(self.base).build(), PLMap.from_knots(self.knots))


class MetricSpec(BaseModel, abc.ABC):
    family: str = "undefined"

    @classmethod
    def parse_obj(cls, data: dict):
        if not isinstance(data, dict):
            raise errors.ParseError(message="a metric spec must be a JSON object")
        families = {"cmf": CmfSpec, "lebesgue": LebesgueSpec, "block": BlockSpec, "alpha_block": AlphaBlockSpec}
        family = data.get("family", "cmf" if "cmf" in data else None)
        if family not in families:
            raise errors.ParseError(message=f"unknown metric family {family!r}")

        return families[family](**data)

    @abc.abstractmethod
    def build(self) -> PLMetric:
        pass


class CmfSpec(MetricSpec):
    family = "cmf"
    cmf: list[tuple[float, float]]

    def build(self) -> PLMetric:
        return PLMetric.from_cmf(self.cmf)


class LebesgueSpec(MetricSpec):
    family = "lebesgue"

    def build(self) -> PLMetric:
        return PLMetric.lebesgue()


class BlockSpec(MetricSpec):
    family = "block"
    lo: float
    hi: float

    def build(self) -> PLMetric:
        return PLMetric.block(self.lo, self.hi)


class AlphaBlockSpec(MetricSpec):
    family = "alpha_block"
    alpha: float
    I0: tuple[float, float]
    I1: tuple[float, float]

    def build(self) -> PLMetric:
        return PLMetric.alpha_block(self.alpha, self.I0, self.I1)


EntropyMethod = Literal["kneading", "hofbauer", "growth", "all"]


class BatchJob(BaseModel):
    """One entry of a batch file."""

    name: str = "job"
    command: Literal["tower", "entropy"] = "tower"
    map: str | dict
    iters: PositiveInt | None = None
    stop_tol: float | None = None
    knot_budget: PositiveInt | None = None
    cross_check: bool = False
    method: EntropyMethod | list[EntropyMethod] = "all"

    @classmethod
    def parse_obj(cls, data: dict):
        if not isinstance(data, dict):
            raise errors.ParseError(message="a batch job must be a JSON object")
        try:
            return super().parse_obj(data)
        except ValidationError as e:
            raise errors.ParseError(message=f"batch job {data.get('name', 'job')!r}: {e}")

    @property
    def map_spec(self) -> str:
        return self.map if isinstance(self.map, str) else json.dumps(self.map)
