"""Bundled germ families used by the implication and theorem checks.

Each entry fixes (f, g, r) and what is expected of it, so a change in the
numerics that flips a verdict shows up as a test failure rather than silently.
"""

from __future__ import annotations

from dataclasses import dataclass

from .poly import MapGerm
from .regularity.family import DeformationFamily


@dataclass(frozen=True)
class ExampleFamily:
    name: str
    nvars: int
    f: tuple[str, ...]
    g: tuple[str, ...]
    r: int
    kuo_expected: str | None = None
    empty_Y: bool = False
    description: str = ""

    def family(self) -> DeformationFamily:
        f = MapGerm.from_texts(self.f, self.nvars)
        g = MapGerm.from_texts(self.g, self.nvars)
        return DeformationFamily(f, g, self.r)

    def to_json(self) -> dict:
        return {"name": self.name, "nvars": self.nvars, "f": list(self.f), "g": list(self.g), "r": self.r}


SUITE: tuple[ExampleFamily, ...] = (
    ExampleFamily("linear", 2, ("x1",), ("x1",), 1, "holds",
                  description="t-independent submersion; everything is flat"),
    ExampleFamily("degenerate", 2, ("x1^2-x2^2",), ("x1^2-x2^2",), 2, "holds",
                  description="g = f, so every t-dependent quantity is constant in t"),
    ExampleFamily("empty_Y", 2, ("x1^2+x2^2",), ("x1^2+x2^2+x1^3",), 2, "holds", empty_Y=True,
                  description="zero set is the t-axis alone; two-stratum case"),
    ExampleFamily("kuo_pass", 2, ("x1^2-x2^2",), ("x1^2-x2^2+x1^3",), 2, "holds",
                  description="Morse saddle perturbed in degree 3"),
    ExampleFamily("kuo_fail", 2, ("x1^2",), ("x1^2+x1^3",), 2, "fails",
                  description="gradient vanishes on the x2-axis inside every horn"),
    ExampleFamily("parabola", 2, ("x1^2-x2",), ("x1^2-x2",), 1, "holds",
                  description="smooth curve through the origin, r = 1"),
    ExampleFamily("complete_intersection", 3, ("x1", "x2^2-x3^2"), ("x1", "x2^2-x3^2+x2^3"), 2, "holds",
                  description="p = 2, a pair of lines in the x1 = 0 plane"),
    ExampleFamily("cusp", 2, ("x1^3-x2^2",), ("x1^3-x2^2+x1^4",), 3, "holds",
                  description="cusp; Kuo holds with exponent 2 on a thin enough horn"),
    ExampleFamily("a_fails", 2, ("x1^3-x2^3",), ("x1^3-x2^3+x1^2",), 1, "fails",
                  description="the t-derivative x1^2 competes with the gradient; (a) fails along some branches"),
    ExampleFamily("regular_without_kuo", 3, ("x1^2-x2^2",), ("x1^2-x2^2+x3^2",), 1, "fails",
                  description="Kuo fails for r = 1 yet the strata are regular: the condition is only sufficient"),
)


def get_example(name: str) -> ExampleFamily:
    for ex in SUITE:
        if ex.name == name:
            return ex
    raise KeyError(f"no bundled example named {name!r}")
