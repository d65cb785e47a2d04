"""The five experiment prompt templates and their deterministic rendering.

Each experiment kind fixes which payload vectors the prompt carries:

    exp1  no payload (the model predicts from its own knowledge)
    exp2  Rainfall        expert-model rainfall forecast
    exp3  Tmin, Tmax      expert-model temperature forecasts
    exp4  Nino3.4, PDO, NAO   teleconnection index values
    exp5  Rainfall, StdDev    expert forecast plus per-step uncertainty

Rendering is pure: the same spec always yields identical bytes. Payload
numbers use at most 4 significant digits in plain positional notation.
"""

from __future__ import annotations

import datetime as dt
from calendar import month_name
from dataclasses import dataclass, field
from decimal import Decimal

from .errors import RaincastError

KINDS = ("exp1", "exp2", "exp3", "exp4", "exp5")

REQUIRED_PAYLOADS = {
    "exp1": (),
    "exp2": ("Rainfall",),
    "exp3": ("Tmin", "Tmax"),
    "exp4": ("Nino3.4", "PDO", "NAO"),
    "exp5": ("Rainfall", "StdDev"),
}


class PromptError(RaincastError):
    pass


class MissingPayload(PromptError):
    def __init__(self, kind: str, name: str):
        super().__init__(f"{kind} prompt requires payload vector {name!r}")


class PayloadLengthMismatch(PromptError):
    def __init__(self, name: str, got: int, expected: int):
        super().__init__(f"payload {name!r} has {got} values, period has {expected} steps")


@dataclass
class PromptSpec:
    """Everything needed to render one experiment prompt for one city."""

    kind: str
    city: str
    period: list[dt.date]  # 15 daily stamps or 12 first-of-month stamps
    granularity: str  # "daily" | "monthly"
    payload: dict[str, list[float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise PromptError(f"unknown experiment kind {self.kind!r}")
        if self.granularity not in ("daily", "monthly"):
            raise PromptError(f"bad granularity {self.granularity!r}")
        if not self.period:
            raise PromptError("empty period")
        for name in REQUIRED_PAYLOADS[self.kind]:
            if name not in self.payload:
                raise MissingPayload(self.kind, name)
            if len(self.payload[name]) != len(self.period):
                raise PayloadLengthMismatch(name, len(self.payload[name]), len(self.period))

    @property
    def horizon(self) -> int:
        return len(self.period)


_PREAMBLE = (
    "You are a climate data prediction system focused primarily on forecasting "
    "rainfall for selected cities. Your timestamp is September 30, 2023, meaning "
    "you only consider information available prior to this date. "
)

_NUMERIC_ONLY = (
    "For the time being, please ignore narrative responses; "
    "I am only interested in numerical results."
)

_CLOSING = "Please use the supplied data to predict the rainfall for the above period."

_TEMPLATES = {
    "exp1": (
        _PREAMBLE
        + "Please make a final forecast based on your knowledge, including historical "
        "trends, regional variations, and potential future scenarios. "
        + _NUMERIC_ONLY
        + " Please predict for {city} during {period}.\n"
        "\n"
        "—\n" + _CLOSING
    ),
    "exp2": (
        _PREAMBLE
        + "I will provide you with a potential {granularity} prediction for the period "
        "{period} based on a deep learning model for the {city}. Please consider the "
        "results of the model and combine them with your knowledge to make a final "
        "forecast. " + _NUMERIC_ONLY + "\n"
        "\n"
        "— potential forecast —\n"
        "\n"
        "Period: {period}\n"
        "\n"
        "Rainfall:\n"
        "{rainfall}\n"
        "\n"
        "—\n" + _CLOSING
    ),
    "exp3": (
        _PREAMBLE
        + "I will provide you with a potential {granularity} prediction for the period "
        "{period} based on a deep learning model for the {city}. These predictions "
        "include {granularity} maximum and minimum temperatures. Please consider the "
        "relationship between these climate data and potential rainfall. Integrate "
        "this information with your knowledge to make a final prediction. "
        + _NUMERIC_ONLY + "\n"
        "\n"
        "— potential forecast —\n"
        "\n"
        "Period: {period}\n"
        "\n"
        "Tmin:\n"
        "{tmin}\n"
        "\n"
        "Tmax:\n"
        "{tmax}\n"
        "\n"
        "—\n" + _CLOSING
    ),
    "exp4": (
        _PREAMBLE
        + "I will provide you with the Nino3.4, Pacific Decadal Oscillation (PDO), and "
        "North Atlantic Oscillation (NAO) indices for the prediction period {period}. "
        "Please integrate this information, consider their climate teleconnection "
        "relationship with potential regional rainfall, and combine it with your own "
        "knowledge to make a final prediction. " + _NUMERIC_ONLY + "\n"
        "\n"
        "— potential forecast —\n"
        "\n"
        "Period: {period}\n"
        "\n"
        "Nino3.4:\n"
        "{nino34}\n"
        "\n"
        "PDO:\n"
        "{pdo}\n"
        "\n"
        "NAO:\n"
        "{nao}\n"
        "\n"
        "—\n" + _CLOSING
    ),
    "exp5": (
        _PREAMBLE
        + "I will provide you with a potential {granularity} prediction for the period "
        "{period} based on a deep learning model for the {city}. The standard "
        "deviation here can be used as a measure of uncertainty. A smaller standard "
        "deviation indicates higher predictability, suggesting that my model’s result "
        "has lower uncertainty. Conversely, a larger standard deviation indicates "
        "greater difficulty in prediction, meaning higher uncertainty in my model’s "
        "results. Please focus on this measure of uncertainty, and combine it with "
        "your knowledge, such as historical trends, to make the final prediction. "
        "Please consider the results of the model and combine them with your "
        "knowledge to make a final forecast. " + _NUMERIC_ONLY + "\n"
        "\n"
        "— potential forecast—\n"
        "\n"
        "Period: {period}\n"
        "\n"
        "Rainfall:\n"
        "{rainfall}\n"
        "\n"
        "Standard Deviation:\n"
        "{std}\n"
        "\n"
        "—\n"
        "\n" + _CLOSING
    ),
}


def format_number(x: float) -> str:
    """At most 4 significant digits, shortest plain decimal form.

    Trailing zeros are dropped and exponent notation is expanded, so
    13.20 -> "13.2", 0.30001 -> "0.3", 1.5e-05 -> "0.000015".
    """
    if x != x:
        raise PromptError("cannot format NaN payload value")
    s = f"{float(x):.4g}"
    if "e" in s or "E" in s:
        s = format(Decimal(s), "f")
    if "." in s:
        s = s.rstrip("0").rstrip(".")
    return s if s not in ("-0", "") else "0"


def format_values(values) -> str:
    return ",".join(format_number(v) for v in values)


def format_period(period: list[dt.date], granularity: str) -> str:
    """Human-readable period span, e.g. "October 1, 2023, to October 15, 2023"
    (daily) or "October 2023 to September 2024" (monthly)."""
    a, b = period[0], period[-1]
    if granularity == "daily":
        return (
            f"{month_name[a.month]} {a.day}, {a.year}, to "
            f"{month_name[b.month]} {b.day}, {b.year}"
        )
    return f"{month_name[a.month]} {a.year} to {month_name[b.month]} {b.year}"


_PAYLOAD_SLOTS = {
    "Rainfall": "rainfall",
    "StdDev": "std",
    "Tmin": "tmin",
    "Tmax": "tmax",
    "Nino3.4": "nino34",
    "PDO": "pdo",
    "NAO": "nao",
}


def render_prompt(spec: PromptSpec) -> str:
    """Instantiate the template for spec.kind. Deterministic byte-for-byte."""
    slots = {
        "city": spec.city,
        "granularity": spec.granularity,
        "period": format_period(spec.period, spec.granularity),
    }
    for name in REQUIRED_PAYLOADS[spec.kind]:
        slots[_PAYLOAD_SLOTS[name]] = format_values(spec.payload[name])
    return _TEMPLATES[spec.kind].format(**slots)
