"""Log-log slope fitting and the scaling-report record shared by experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


class FitError(ValueError):
    """Not enough valid points for a slope fit."""


def fit_loglog_slope(points):
    """Least-squares slope of log y against log x.

    ``points`` is a sequence of (x, y) with x strictly increasing and both
    positive.  Returns (slope, stderr); stderr is the standard error of the
    slope from the fit residuals (0.0 for a two-point... exact fit).
    """
    pts = list(points)
    if len(pts) < 3:
        raise FitError(f"need at least 3 points, got {len(pts)}")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    if any(x <= 0 for x in xs) or any(y <= 0 for y in ys):
        raise FitError("log-log fit needs positive coordinates")
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise FitError("x values must be strictly increasing")
    lx = [math.log(x) for x in xs]
    ly = [math.log(y) for y in ys]
    n = len(lx)
    mx = sum(lx) / n
    my = sum(ly) / n
    sxx = sum((v - mx) ** 2 for v in lx)
    sxy = sum((a - mx) * (b - my) for a, b in zip(lx, ly))
    slope = sxy / sxx
    intercept = my - slope * mx
    ss_res = sum((b - (intercept + slope * a)) ** 2 for a, b in zip(lx, ly))
    stderr = math.sqrt(max(ss_res, 0.0) / (n - 2) / sxx) if n > 2 else 0.0
    return slope, stderr


@dataclass
class ScalingReport:
    """A fitted growth rate with its predicted exponent and verdict.

    verdict: "pass" if |fitted - predicted| <= tolerance (or, for one_sided
    reports, fitted <= predicted + tolerance); "fail" otherwise;
    "inconclusive" when no prediction applies.
    """

    x: list
    y: list
    fitted_slope: float
    stderr: float
    predicted_slope: float = None
    prediction_label: str = ""
    tolerance: float = None
    one_sided: bool = False
    verdict: str = "inconclusive"
    runtime_seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    @staticmethod
    def from_points(
        points,
        predicted_slope=None,
        prediction_label="",
        tolerance=None,
        one_sided=False,
        runtime_seconds=0.0,
        extra=None,
    ) -> "ScalingReport":
        slope, stderr = fit_loglog_slope(points)
        rep = ScalingReport(
            x=[p[0] for p in points],
            y=[p[1] for p in points],
            fitted_slope=slope,
            stderr=stderr,
            predicted_slope=predicted_slope,
            prediction_label=prediction_label,
            tolerance=tolerance,
            one_sided=one_sided,
            runtime_seconds=runtime_seconds,
            extra=dict(extra or {}),
        )
        rep.judge()
        return rep

    def judge(self):
        if self.predicted_slope is None or self.tolerance is None:
            self.verdict = "inconclusive"
        elif self.one_sided:
            self.verdict = (
                "pass" if self.fitted_slope <= self.predicted_slope + self.tolerance else "fail"
            )
        else:
            self.verdict = (
                "pass"
                if abs(self.fitted_slope - self.predicted_slope) <= self.tolerance
                else "fail"
            )
        return self.verdict

    def to_dict(self) -> dict:
        return {
            "x": list(self.x),
            "y": list(self.y),
            "fitted_slope": self.fitted_slope,
            "stderr": self.stderr,
            "predicted_slope": self.predicted_slope,
            "prediction_label": self.prediction_label,
            "tolerance": self.tolerance,
            "one_sided": self.one_sided,
            "verdict": self.verdict,
            "runtime_seconds": self.runtime_seconds,
            "extra": self.extra,
        }
