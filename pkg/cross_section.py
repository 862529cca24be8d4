"""
Beam cross-section profiles.

Values are signed inclusion: positive inside, zero on the profile boundary,
negative outside. Sizes may be numpy arrays so one call can serve points with
different resolved parameters.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np

from errors import ParameterError

Length = Union[float, np.ndarray]

PROFILE_VARIANTS = ("circle", "square", "rounded_square")


@dataclass(frozen=True, eq=False)
class Profile:
    variant: str
    size: Length  # radius for circle, side for the squares
    fillet: Length = 0.0

    def __post_init__(self):
        if self.variant not in PROFILE_VARIANTS:
            raise ParameterError(
                f"unknown profile '{self.variant}'; valid profiles: {', '.join(PROFILE_VARIANTS)}"
            )
        if not np.all(np.asarray(self.size) > 0):
            raise ParameterError(f"profile size must be positive, got {_worst(self.size)}", key="beam_diameter")
        if self.variant == "rounded_square":
            fillet = np.asarray(self.fillet)
            if np.any(fillet < 0) or np.any(fillet > np.asarray(self.size) / 2 + 1e-12):
                raise ParameterError(
                    f"fillet radius must lie in [0, side/2], got {_worst(self.fillet)}", key="fillet_ratio"
                )

    @classmethod
    def circle(cls, radius: Length) -> "Profile":
        return cls("circle", radius)

    @classmethod
    def square(cls, side: Length) -> "Profile":
        return cls("square", side)

    @classmethod
    def rounded_square(cls, side: Length, fillet: Length) -> "Profile":
        return cls("rounded_square", side, fillet)

    @classmethod
    def for_beam(cls, variant: str, diameter: Length, fillet_ratio: Length = 0.0) -> "Profile":
        """Profile of a beam of diameter D: circle R = D/2, square side D, fillet = ratio * D/2"""
        if variant == "circle":
            return cls.circle(np.asarray(diameter) / 2 if np.ndim(diameter) else diameter / 2)
        if variant == "square":
            return cls.square(diameter)
        fillet = np.asarray(fillet_ratio) * np.asarray(diameter) / 2
        return cls.rounded_square(diameter, fillet if fillet.ndim else float(fillet))


def _worst(value: Length) -> float:
    flat = np.atleast_1d(np.asarray(value, dtype=float))
    return float(flat[np.argmin(flat)])


def profile_inside(profile: Profile, xc, yc) -> np.ndarray:
    ax = np.abs(xc)
    ay = np.abs(yc)
    if profile.variant == "circle":
        return profile.size - np.hypot(ax, ay)
    half = np.asarray(profile.size) / 2
    if profile.variant == "square":
        return half - np.maximum(ax, ay)
    rho = np.asarray(profile.fillet)
    qx = ax - half + rho
    qy = ay - half + rho
    outside = np.hypot(np.maximum(qx, 0.0), np.maximum(qy, 0.0))
    inside = np.minimum(np.maximum(qx, qy), 0.0)
    return rho - outside - inside


def profile_bound(profile: Profile) -> Length:
    """Radius of the smallest origin-centred circle containing the profile"""
    if profile.variant == "circle":
        return profile.size
    half = np.asarray(profile.size) / 2
    if profile.variant == "square":
        return half * np.sqrt(2.0) if half.ndim else float(half * np.sqrt(2.0))
    rho = np.asarray(profile.fillet)
    bound = (half - rho) * np.sqrt(2.0) + rho
    return bound if bound.ndim else float(bound)
