from typing import Literal

from pydantic import BaseModel, validator


class Arc(BaseModel):
    lo: float
    hi: float

    class Config:
        frozen = True

    @validator("hi")
    def ordered(cls, hi, values):
        if "lo" in values and not values["lo"] < hi:
            raise ValueError(f"Arc needs lo < hi, got [{values['lo']}, {hi}]")
        return hi

    @classmethod
    def of(cls, interval: "Arc | tuple[float, float] | list[float]") -> "Arc":
        if isinstance(interval, Arc):
            return interval
        lo, hi = interval
        return cls(lo=lo, hi=hi)


class CriticalValueVector(BaseModel):
    values: tuple[float, ...]
    direction: Literal[1, -1] = 1

    class Config:
        frozen = True

    @validator("values")
    def in_unit_interval(cls, values):
        if len(values) < 2:
            raise ValueError("A critical value vector has at least two entries")
        if any(not -1e-9 <= v <= 1 + 1e-9 for v in values):
            raise ValueError(f"Critical values must lie in [0, 1]: {values}")
        return tuple(float(v) for v in values)

    @property
    def degree(self) -> int:
        return len(self.values) - 1

    @property
    def total_variation(self) -> float:
        return sum(abs(b - a) for a, b in zip(self.values[:-1], self.values[1:]))


class Classification(BaseModel):
    """Fast(k) when f^k(J) and f^(k+1)(J) both contain the turning point; SlowUpTo(k) otherwise."""

    kind: Literal["fast", "slow"]
    k: int

    class Config:
        frozen = True

    @classmethod
    def fast(cls, k: int) -> "Classification":
        return cls(kind="fast", k=k)

    @classmethod
    def slow_up_to(cls, k: int) -> "Classification":
        return cls(kind="slow", k=k)

    @property
    def is_fast(self) -> bool:
        return self.kind == "fast"


class KneadingData(BaseModel):
    eps: tuple[int, ...]
    eta: tuple[int, ...]
    reliable: int

    class Config:
        frozen = True

    @validator("eta")
    def cumulative(cls, eta, values):
        eps = values.get("eps", ())
        if len(eta) != len(eps):
            raise ValueError("eps and eta must have the same length")
        previous = 1
        for e, n in zip(eps, eta):
            if e not in (1, -1) or n != previous * e:
                raise ValueError("eta must be the running product of eps")
            previous = n
        return eta

    @property
    def N(self) -> int:
        return len(self.eps)
