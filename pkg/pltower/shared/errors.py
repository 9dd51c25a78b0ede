from pltower.shared.helpers import get_config

locale = get_config("localization")


class TowerError(ValueError):
    """Base of every error the library raises on purpose. The CLI maps ``exit_code`` to the process status."""

    exit_code = 1
    message_key = ""

    def __init__(self, **params):
        self.params = params
        template = locale["exceptions"].get(self.message_key, "%(message)s")
        try:
            text = template % params
        except (KeyError, TypeError):
            text = f"{type(self).__name__}: {params}"
        super().__init__(text)


class InvalidKnots(TowerError):
    exit_code = 3
    message_key = "invalid_knots"


class ParseError(TowerError):
    exit_code = 3
    message_key = "parse_error"


class ZeroSlopeSegment(TowerError):
    exit_code = 2
    message_key = "zero_slope"


class DegenerateCV(TowerError):
    exit_code = 2
    message_key = "degenerate_cv"


class CVMismatch(TowerError):
    exit_code = 2
    message_key = "cv_mismatch"


class ZeroMass(TowerError):
    exit_code = 2
    message_key = "zero_mass"


class IntervalOfFixedPoints(TowerError):
    exit_code = 2
    message_key = "fixed_interval"


class NotUnimodal(TowerError):
    exit_code = 2
    message_key = "not_unimodal"


class KnotBudgetExceeded(TowerError):
    exit_code = 4
    message_key = "knot_budget"


class LapCountOverflow(TowerError):
    exit_code = 4
    message_key = "lap_overflow"


class NotRenormalizable(TowerError):
    exit_code = 5
    message_key = "not_renormalizable"


class NotMarkov(TowerError):
    exit_code = 5
    message_key = "not_markov"


class NoConvergence(TowerError):
    exit_code = 5
    message_key = "no_convergence"

    @property
    def peripheral(self) -> list[float]:
        return self.params.get("peripheral", [])
