"""Model specifications for i.i.d. degenerate random environments.

A model is the tuple ``(d, E, F, r, q, p)``: each site independently gets one
of the arrow sets ``E_i`` (with total probability ``p``, split by ``r``) or one
of the ``F_j`` (probability ``1 - p``, split by ``q``).  Probabilities are held
as exact fixed-point numerators over ``2**64``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence, Union

ONE = 1 << 64
"""Fixed-point denominator; probability ``1`` is stored as ``ONE``."""

MAX_DIM = 15  # arrow masks are uint32 with one bit reserved

ProbLike = Union[str, int, float, Fraction]

_TOKEN = re.compile(r"^([+-])(\d+)$")


class SpecError(ValueError):
    """Structurally invalid model specification or config."""


class ConditionError(SpecError):
    """An operation was requested on a spec that fails a required condition."""

    def __init__(self, message: str, report: "ConditionReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True, order=True)
class Direction:
    axis: int  # 1-based
    sign: int

    def __post_init__(self):
        if self.axis < 1:
            raise SpecError(f"axis must be >= 1, got {self.axis}")
        if self.sign not in (1, -1):
            raise SpecError(f"sign must be +1 or -1, got {self.sign}")

    @classmethod
    def parse(cls, token: str) -> "Direction":
        m = _TOKEN.match(token.strip())
        if not m:
            raise SpecError(f"bad direction token {token!r} (expected e.g. '+1', '-2')")
        return cls(int(m.group(2)), 1 if m.group(1) == "+" else -1)

    def bit(self, d: int) -> int:
        if self.axis > d:
            raise SpecError(f"axis {self.axis} out of range for d={d}")
        return self.axis - 1 if self.sign > 0 else d + self.axis - 1

    def vector(self, d: int) -> tuple[int, ...]:
        v = [0] * d
        v[self.axis - 1] = self.sign
        return tuple(v)

    def __neg__(self) -> "Direction":
        return Direction(self.axis, -self.sign)

    def __str__(self) -> str:
        return f"{'+' if self.sign > 0 else '-'}{self.axis}"


@dataclass(frozen=True)
class EdgeSet:
    """Subset of the 2d unit directions, as a bit mask.

    Bit order is ``+e_1..+e_d, -e_1..-e_d``.
    """

    d: int
    bits: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise SpecError("dimension must be positive")
        if self.bits < 0 or self.bits >> (2 * self.d):
            raise SpecError(f"bits {self.bits:#x} exceed 2d={2 * self.d} directions")

    @classmethod
    def of(cls, d: int, directions: Iterable[Direction | str]) -> "EdgeSet":
        bits = 0
        for e in directions:
            if isinstance(e, str):
                e = Direction.parse(e)
            bits |= 1 << e.bit(d)
        return cls(d, bits)

    @classmethod
    def plus(cls, d: int) -> "EdgeSet":
        return cls(d, (1 << d) - 1)

    @classmethod
    def minus(cls, d: int) -> "EdgeSet":
        return cls(d, ((1 << d) - 1) << d)

    @classmethod
    def full(cls, d: int) -> "EdgeSet":
        return cls(d, (1 << (2 * d)) - 1)

    @classmethod
    def empty(cls, d: int) -> "EdgeSet":
        return cls(d, 0)

    def _same(self, other: "EdgeSet") -> None:
        if not isinstance(other, EdgeSet):
            raise TypeError(f"expected EdgeSet, got {type(other).__name__}")
        if other.d != self.d:
            raise SpecError(f"dimension mismatch: {self.d} vs {other.d}")

    def __or__(self, other: "EdgeSet") -> "EdgeSet":
        self._same(other)
        return EdgeSet(self.d, self.bits | other.bits)

    def __and__(self, other: "EdgeSet") -> "EdgeSet":
        self._same(other)
        return EdgeSet(self.d, self.bits & other.bits)

    def __sub__(self, other: "EdgeSet") -> "EdgeSet":
        self._same(other)
        return EdgeSet(self.d, self.bits & ~other.bits)

    def __le__(self, other: "EdgeSet") -> bool:
        self._same(other)
        return self.bits & ~other.bits == 0

    def __ge__(self, other: "EdgeSet") -> bool:
        return other <= self

    def __contains__(self, e: Direction | str) -> bool:
        if isinstance(e, str):
            e = Direction.parse(e)
        if e.axis > self.d:
            return False
        return bool(self.bits >> e.bit(self.d) & 1)

    def __iter__(self) -> Iterator[Direction]:
        for b in range(2 * self.d):
            if self.bits >> b & 1:
                yield direction_of_bit(self.d, b)

    def __len__(self) -> int:
        return bin(self.bits).count("1")

    def tokens(self) -> list[str]:
        return [str(e) for e in self]

    def __repr__(self) -> str:
        return "{" + ",".join(self.tokens()) + "}"


def direction_of_bit(d: int, b: int) -> Direction:
    return Direction(b % d + 1, 1 if b < d else -1)


def to_fixed(value: ProbLike) -> int:
    """Convert a probability to a fixed-point numerator over ``ONE``.

    Strings are parsed exactly (``"0.7"``, ``"1/3"``); floats go through their
    shortest decimal repr so ``0.7`` and ``"0.7"`` agree.
    """
    frac = _fraction(value)
    if not 0 <= frac <= 1:
        raise SpecError(f"probability {value!r} outside [0, 1]")
    return round(frac * ONE)


def _fraction(value: ProbLike) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, int):
        return Fraction(value)
    try:
        return Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise SpecError(f"cannot parse probability {value!r}") from exc


def simplex_to_fixed(weights: Sequence[ProbLike]) -> tuple[int, ...]:
    """Fixed-point weights whose sum is exactly ``ONE``.

    Cumulative sums are rounded, not the individual weights, so rounding
    never breaks the simplex constraint.
    """
    if not weights:
        raise SpecError("weight list must be non-empty")
    fracs = [_fraction(w) for w in weights]
    if any(f < 0 for f in fracs):
        raise SpecError(f"negative weight in {list(weights)!r}")
    if sum(fracs) != 1:
        raise SpecError(f"weights {list(weights)!r} do not sum to 1 (sum={sum(fracs)})")
    out, prev, cum = [], 0, Fraction(0)
    for f in fracs:
        cum += f
        c = round(cum * ONE)
        out.append(c - prev)
        prev = c
    return tuple(out)


@dataclass(frozen=True)
class ModelSpec:
    d: int
    E: tuple[EdgeSet, ...]
    F: tuple[EdgeSet, ...]
    r: tuple[int, ...]
    q: tuple[int, ...]
    p: int
    _derived: tuple[EdgeSet, EdgeSet, EdgeSet, EdgeSet] = field(
        init=False, repr=False, compare=False, hash=False
    )

    def __post_init__(self):
        if not 2 <= self.d <= MAX_DIM:
            raise SpecError(f"dimension must be in [2, {MAX_DIM}], got {self.d}")
        if not self.E or not self.F:
            raise SpecError("E and F must be non-empty lists")
        for s in self.E + self.F:
            if s.d != self.d:
                raise SpecError(f"edge set {s!r} has dimension {s.d}, expected {self.d}")
        if len(self.r) != len(self.E) or len(self.q) != len(self.F):
            raise SpecError("weight list lengths must match E and F")
        for w in (self.r, self.q):
            if any(x < 0 for x in w) or sum(w) != ONE:
                raise SpecError(f"fixed-point weights {w} do not sum to 2**64")
        if not 0 <= self.p <= ONE:
            raise SpecError("p outside [0, 1]")
        object.__setattr__(self, "_derived", _derive(self.d, self.E, self.F))

    @classmethod
    def create(
        cls,
        d: int,
        E: Sequence[EdgeSet | Iterable[str]],
        F: Sequence[EdgeSet | Iterable[str]],
        p: ProbLike,
        r: Sequence[ProbLike] | None = None,
        q: Sequence[ProbLike] | None = None,
    ) -> "ModelSpec":
        """Build a spec from edge sets (or token lists) and plain probabilities.

        ``r``/``q`` default to uniform weights.
        """
        Es = tuple(s if isinstance(s, EdgeSet) else EdgeSet.of(d, s) for s in E)
        Fs = tuple(s if isinstance(s, EdgeSet) else EdgeSet.of(d, s) for s in F)
        if r is None:
            r = [Fraction(1, len(Es))] * len(Es)
        if q is None:
            q = [Fraction(1, len(Fs))] * len(Fs)
        return cls(d, Es, Fs, simplex_to_fixed(r), simplex_to_fixed(q), to_fixed(p))

    @property
    def k(self) -> int:
        return len(self.E)

    @property
    def ell(self) -> int:
        return len(self.F)

    @property
    def p_float(self) -> float:
        return self.p / ONE

    @property
    def two_valued(self) -> bool:
        return self.k == 1 and self.ell == 1

    def with_p(self, p: ProbLike) -> "ModelSpec":
        return ModelSpec(self.d, self.E, self.F, self.r, self.q, to_fixed(p))

    def to_dict(self) -> dict:
        return {
            "dimension": self.d,
            "E": [s.tokens() for s in self.E],
            "F": [s.tokens() for s in self.F],
            "r": [str(x) for x in self.r],
            "q": [str(x) for x in self.q],
            "p": str(self.p),
            "fixed_point": "numerators over 2**64",
        }

    def canonical(self) -> str:
        """Byte-stable serialization (fixed-point numerators, canonical bit order)."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _derive(d, E, F):
    lo_E, hi_E = EdgeSet.full(d), EdgeSet.empty(d)
    for s in E:
        lo_E, hi_E = lo_E & s, hi_E | s
    lo_F, hi_F = EdgeSet.full(d), EdgeSet.empty(d)
    for s in F:
        lo_F, hi_F = lo_F & s, hi_F | s
    return lo_E, hi_E, lo_F, hi_F


def derived_sets(spec: ModelSpec) -> tuple[EdgeSet, EdgeSet, EdgeSet, EdgeSet]:
    """Return ``(E_lower, E_upper, F_lower, F_upper)``: intersections and unions."""
    return spec._derived


@dataclass(frozen=True)
class ConditionReport:
    name: str
    clauses: dict[str, bool]

    @property
    def passed(self) -> bool:
        return all(self.clauses.values())

    @property
    def failures(self) -> list[str]:
        return [c for c, ok in self.clauses.items() if not ok]

    def __str__(self) -> str:
        lines = [f"{self.name}: {'PASS' if self.passed else 'FAIL'}"]
        lines += [f"  [{'ok' if ok else 'FAIL'}] {c}" for c, ok in self.clauses.items()]
        return "\n".join(lines)


def _condition1_clauses(spec: ModelSpec) -> dict[str, bool]:
    d = spec.d
    lo_E, hi_E, lo_F, _ = derived_sets(spec)
    full = EdgeSet.full(d)
    return {
        "d >= 2": d >= 2,
        "e1 in E_lower": "+1" in lo_E,
        "E_upper subset of E_plus": hi_E <= EdgeSet.plus(d),
        "F_lower contains E minus E_lower": (full - lo_E) <= lo_F,
    }


def check_condition1(spec: ModelSpec) -> ConditionReport:
    return ConditionReport("condition 1", _condition1_clauses(spec))


def check_condition2(spec: ModelSpec) -> ConditionReport:
    clauses = _condition1_clauses(spec)
    del clauses["F_lower contains E minus E_lower"]
    clauses["ell == 1"] = spec.ell == 1
    clauses["F_1 == E"] = spec.F[0] == EdgeSet.full(spec.d)
    return ConditionReport("condition 2", clauses)


def require(report: ConditionReport) -> None:
    if not report.passed:
        raise ConditionError(
            f"{report.name} fails: {', '.join(report.failures)}", report
        )


def starred(spec: ModelSpec) -> ModelSpec:
    """Replace every F set by the full direction set (l = 1, F = [E])."""
    return ModelSpec(spec.d, spec.E, (EdgeSet.full(spec.d),), spec.r, (ONE,), spec.p)


def minimal_two_valued(spec: ModelSpec) -> ModelSpec:
    """Smallest 2-valued model below ``spec``: E = [E_lower], F = [E \\ E_lower]."""
    require(check_condition1(spec))
    lo_E = derived_sets(spec)[0]
    return ModelSpec(spec.d, (lo_E,), (EdgeSet.full(spec.d) - lo_E,), (ONE,), (ONE,), spec.p)


def maximal_two_valued(spec: ModelSpec) -> ModelSpec:
    """Half-orthant model with the same ``d`` and ``p``: the upper end of the sandwich."""
    require(check_condition1(spec))
    return half_orthant_model(spec.d, Fraction(spec.p, ONE))


def two_valued(d: int, E1: EdgeSet | Iterable[str], F1: EdgeSet | Iterable[str], p: ProbLike) -> ModelSpec:
    return ModelSpec.create(d, [E1], [F1], p)


def orthant_model(d: int, p: ProbLike) -> ModelSpec:
    return two_valued(d, EdgeSet.plus(d), EdgeSet.minus(d), p)


def half_orthant_model(d: int, p: ProbLike) -> ModelSpec:
    return two_valued(d, EdgeSet.plus(d), EdgeSet.full(d), p)


def e1_model(d: int, p: ProbLike) -> ModelSpec:
    """E_1 = {e_1}, F_1 = E minus {e_1} (non-monotone in p)."""
    e1 = EdgeSet.of(d, ["+1"])
    return two_valued(d, e1, EdgeSet.full(d) - e1, p)


def e1_full_model(d: int, p: ProbLike) -> ModelSpec:
    """E_1 = {e_1}, F_1 = E (monotone in p; used for the 3-D cluster figure)."""
    return two_valued(d, EdgeSet.of(d, ["+1"]), EdgeSet.full(d), p)


def spec_from_dict(data: dict) -> ModelSpec:
    """Parse the config mapping (``dimension``, ``E``, ``F``, ``r``, ``q``, ``p``).

    Weights given as decimal strings are converted to fixed point; a
    ``"fixed_point"`` key means the values are already numerators.
    """
    try:
        d = int(data["dimension"])
        E = [EdgeSet.of(d, toks) for toks in data["E"]]
        F = [EdgeSet.of(d, toks) for toks in data["F"]]
    except KeyError as exc:
        raise SpecError(f"missing config field {exc.args[0]!r}") from None
    if "fixed_point" in data:
        return ModelSpec(
            d, tuple(E), tuple(F),
            tuple(int(x) for x in data["r"]),
            tuple(int(x) for x in data["q"]),
            int(data["p"]),
        )
    return ModelSpec.create(d, E, F, data["p"], data.get("r"), data.get("q"))


def load_spec(path) -> ModelSpec:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: {exc}") from None
    return spec_from_dict(data)
