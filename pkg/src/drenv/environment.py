"""Seeded, stateless realization of the coupled environment.

Every site ``x`` carries two uniforms ``U_x, U'_x`` in ``(0, 1]``.  ``U_x < p``
puts ``x`` in Omega+ (it gets an E set); ``U'_x`` then picks which ``E_i``
(or ``F_j``) via the cumulative weights.  Two fields built from the same seed
see the same uniforms regardless of their specs, which is the coupling used to
compare models sample by sample.

Mixing function
---------------
``mix64`` is the splitmix64 finalizer.  For seed ``s``, site ``x`` and salt
``t``::

    h = mix64(s ^ t)
    for c in x:  h = mix64(h ^ (zigzag(c) + GOLDEN))      (mod 2**64)
    U = (h + 1) / 2**64

with ``zigzag(c) = 2c`` for ``c >= 0`` and ``-2c - 1`` otherwise.  ``U`` uses
``SALT_U`` and ``U'`` uses ``SALT_UPRIME``.  These constants are frozen;
changing any of them changes every environment.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from . import _kernels
from .lattice import BoxError, LatticeBox, Site
from .model import ONE, EdgeSet, ModelSpec, SpecError

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
SALT_U = 0xA0761D6478BD642F
SALT_UPRIME = 0xE7037ED1A0B428DB
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


class ClassificationError(ValueError):
    """An override site cannot be assigned to Omega+ or Omega-."""


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def zigzag(c: int) -> int:
    return (2 * c) & MASK64 if c >= 0 else (-2 * c - 1) & MASK64


def site_hash(seed: int, x: Sequence[int], salt: int) -> int:
    h = mix64(seed ^ salt)
    for c in x:
        h = mix64(h ^ ((zigzag(int(c)) + GOLDEN) & MASK64))
    return h


def _mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def hash_box(seed: int, box: LatticeBox, salt: int) -> np.ndarray:
    """``site_hash`` for every site of ``box``, as a uint64 array of ``box.shape``."""
    h = np.array(mix64(seed ^ salt), dtype=np.uint64)
    for axis in range(box.d):
        c = box.coords(axis)
        h = _mix64_array(h[..., None] ^ _axis_keys(c))
    return h


def sample_seed(base_seed: int, index: int) -> int:
    """Seed of sample ``index`` under ``base_seed``: ``mix64(base + (index+1)*GOLDEN)``."""
    return mix64((base_seed + (index + 1) * GOLDEN) & MASK64)


@dataclass(frozen=True)
class _Selector:
    """Precomputed thresholds turning hashes into arrow masks."""

    plus_all: bool
    plus_below: int  # Omega+ iff h < plus_below (h + 1 < P)
    e_cuts: tuple[int, ...]
    f_cuts: tuple[int, ...]
    e_masks: tuple[int, ...]
    f_masks: tuple[int, ...]

    @classmethod
    def of(cls, spec: ModelSpec) -> "_Selector":
        return cls(
            plus_all=spec.p == ONE,
            plus_below=max(spec.p - 1, 0),
            e_cuts=_cuts(spec.r),
            f_cuts=_cuts(spec.q),
            e_masks=tuple(s.bits for s in spec.E),
            f_masks=tuple(s.bits for s in spec.F),
        )

    def plus(self, hu: int) -> bool:
        return self.plus_all or hu < self.plus_below

    def choice(self, hu2: int, cuts: tuple[int, ...]) -> int:
        # U' in [C_{i-1}, C_i)  <=>  index = #{j : C_j <= U'}; U' = 1 goes to the last set
        u = hu2 + 1
        return sum(1 for c in cuts if c <= u)

    def mask(self, hu: int, hu2: int) -> tuple[int, bool]:
        if self.plus(hu):
            return self.e_masks[self.choice(hu2, self.e_cuts)], True
        return self.f_masks[self.choice(hu2, self.f_cuts)], False


def _cuts(weights: tuple[int, ...]) -> tuple[int, ...]:
    # interior cumulative sums C_1..C_{n-1}; the final C_n = ONE is implicit
    out, c = [], 0
    for w in weights[:-1]:
        c += w
        out.append(c)
    return tuple(out)


@dataclass(frozen=True)
class EnvBlock:
    """Environment materialized on a box: arrow masks and Omega+ labels."""

    spec: ModelSpec
    box: LatticeBox
    arrows: np.ndarray
    plus: np.ndarray
    field: "EnvironmentField"

    def block(self, box: LatticeBox) -> "EnvBlock":
        if box == self.box:
            return self
        if not self.box.contains_box(box):
            return self.field.block(box)
        sl = box.slices_in(self.box)
        return EnvBlock(self.spec, box, self.arrows[sl], self.plus[sl], self.field)

    def env_at(self, x: Sequence[int]) -> EdgeSet:
        if x in self.box:
            return EdgeSet(self.spec.d, int(self.arrows[self.box.index(x)]))
        return self.field.env_at(x)

    def is_omega_plus(self, x: Sequence[int]) -> bool:
        if x in self.box:
            return bool(self.plus[self.box.index(x)])
        return self.field.is_omega_plus(x)


@dataclass(frozen=True)
class EnvironmentField:
    """Deterministic map ``site -> EdgeSet`` for a spec and a 64-bit seed.

    ``overrides`` pins arrow sets at chosen sites; ``labels`` records their
    Omega+ (True) / Omega- (False) classification.
    """

    spec: ModelSpec
    seed: int
    overrides: Mapping[Site, EdgeSet] = field(default_factory=dict)
    labels: Mapping[Site, bool] = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.seed <= MASK64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        d = self.spec.d
        for x, s in self.overrides.items():
            if len(x) != d or s.d != d:
                raise SpecError(f"override at {x} has wrong dimension")
        object.__setattr__(self, "_sel", _Selector.of(self.spec))

    def with_spec(self, spec: ModelSpec) -> "EnvironmentField":
        """Same uniforms (and overrides), different model."""
        return EnvironmentField(spec, self.seed, self.overrides, self.labels)

    def _hashes(self, x: Sequence[int]) -> tuple[int, int]:
        return site_hash(self.seed, x, SALT_U), site_hash(self.seed, x, SALT_UPRIME)

    def uniforms_at(self, x: Sequence[int]) -> tuple[Fraction, Fraction]:
        hu, hu2 = self._hashes(x)
        return Fraction(hu + 1, ONE), Fraction(hu2 + 1, ONE)

    def env_at(self, x: Sequence[int]) -> EdgeSet:
        x = tuple(x)
        if x in self.overrides:
            return self.overrides[x]
        return EdgeSet(self.spec.d, self._sel.mask(*self._hashes(x))[0])

    def is_omega_plus(self, x: Sequence[int]) -> bool:
        x = tuple(x)
        if x in self.overrides:
            return self._override_label(x)
        return self._sel.plus(site_hash(self.seed, x, SALT_U))

    def _override_label(self, x: Site) -> bool:
        if x in self.labels:
            return self.labels[x]
        spec = self.spec
        if not spec.two_valued:
            raise ClassificationError(f"override at {x}: cannot classify for a non-2-valued spec")
        s = self.overrides[x]
        if spec.E[0] == spec.F[0] or s not in (spec.E[0], spec.F[0]):
            raise ClassificationError(f"override {s!r} at {x} is neither E_1 nor F_1 unambiguously")
        return s == spec.E[0]

    def block(self, box: LatticeBox) -> EnvBlock:
        """Materialize arrow masks and Omega+ labels on ``box``."""
        if box.d != self.spec.d:
            raise BoxError(f"box dimension {box.d} != spec dimension {self.spec.d}")
        box.check_budget()
        sel = self._sel
        if box.d > 1:
            head = LatticeBox(box.lo[:-1], box.hi[:-1])
            pu = hash_box(self.seed, head, SALT_U).ravel()
            pu2 = hash_box(self.seed, head, SALT_UPRIME).ravel()
        else:
            pu = np.array([mix64(self.seed ^ SALT_U)], dtype=np.uint64)
            pu2 = np.array([mix64(self.seed ^ SALT_UPRIME)], dtype=np.uint64)
        arrows, plus = _kernels.select_arrows(
            pu, pu2, _axis_keys(box.coords(box.d - 1)),
            sel.plus_all, np.uint64(sel.plus_below),
            _thresholds(sel.e_cuts), np.array(sel.e_masks, dtype=np.uint32),
            _thresholds(sel.f_cuts), np.array(sel.f_masks, dtype=np.uint32),
        )
        arrows = arrows.reshape(box.shape)
        plus = plus.reshape(box.shape)
        for x, s in self.overrides.items():
            if x in box:
                i = box.index(x)
                arrows[i] = s.bits
                try:
                    plus[i] = self._override_label(x)
                except ClassificationError:
                    plus[i] = False
        return EnvBlock(self.spec, box, arrows, plus, self)


def _axis_keys(c: np.ndarray) -> np.ndarray:
    return np.where(c >= 0, 2 * c, -2 * c - 1).astype(np.uint64) + np.uint64(GOLDEN)


def _thresholds(cuts) -> np.ndarray:
    # C_j <= h + 1  <=>  h >= C_j - 1 (and always true for C_j = 0)
    return np.array([max(c - 1, 0) for c in cuts], dtype=np.uint64)


@dataclass(frozen=True)
class ExplicitEnvironment:
    """Sites pinned to Omega+ / Omega- for a 2-valued spec.

    ``starred`` lists sites annotated as members of the expected backward
    cluster (kept for assertions; it does not affect the environment).
    """

    spec: ModelSpec
    omega_plus_sites: tuple[Site, ...]
    omega_minus_sites: tuple[Site, ...]
    starred: tuple[Site, ...] = ()
    loop: tuple[Site, ...] = ()

    def __post_init__(self):
        if not self.spec.two_valued:
            raise SpecError("explicit environments need a 2-valued spec")
        both = set(self.omega_plus_sites) & set(self.omega_minus_sites)
        if both:
            raise SpecError(f"sites listed as both Omega+ and Omega-: {sorted(both)}")
        if len(set(self.omega_plus_sites)) != len(self.omega_plus_sites) or len(
            set(self.omega_minus_sites)
        ) != len(self.omega_minus_sites):
            raise SpecError("duplicate site in an explicit site list")


def from_explicit(explicit: ExplicitEnvironment, completion_seed: int) -> EnvironmentField:
    spec = explicit.spec
    overrides: dict[Site, EdgeSet] = {}
    labels: dict[Site, bool] = {}
    for x in explicit.omega_plus_sites:
        overrides[x], labels[x] = spec.E[0], True
    for x in explicit.omega_minus_sites:
        overrides[x], labels[x] = spec.F[0], False
    return EnvironmentField(spec, completion_seed, overrides, labels)


_SITE = re.compile(r"\(?\s*(-?\d+(?:\s*,\s*-?\d+)*)\s*\)(\*?)")


def parse_explicit(text: str, spec: ModelSpec) -> ExplicitEnvironment:
    """Parse the fixture format.

    Sections ``[omega_plus]``, ``[omega_minus]`` and ``[loop]`` hold site
    tuples like ``(0,-3,1)``; a trailing ``*`` marks expected cluster
    membership.  ``#`` starts a comment.
    """
    sections: dict[str, list[tuple[Site, bool]]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, [])
            continue
        if current is None:
            raise SpecError(f"site list outside a section: {raw!r}")
        for m in _SITE.finditer(line):
            site = tuple(int(v) for v in m.group(1).split(","))
            if len(site) != spec.d:
                raise SpecError(f"site {site} has wrong dimension")
            sections[current].append((site, bool(m.group(2))))
    unknown = set(sections) - {"omega_plus", "omega_minus", "loop"}
    if unknown:
        raise SpecError(f"unknown fixture sections: {sorted(unknown)}")
    plus = sections.get("omega_plus", [])
    minus = sections.get("omega_minus", [])
    return ExplicitEnvironment(
        spec,
        tuple(s for s, _ in plus),
        tuple(s for s, _ in minus),
        tuple(s for s, star in plus + minus if star),
        tuple(s for s, _ in sections.get("loop", [])),
    )


def funny_backward_fixture() -> ExplicitEnvironment:
    """Shipped 3-D orthant fixture whose backward cluster is a 22-site loop."""
    from .model import orthant_model

    text = resources.files("drenv.fixtures").joinpath("funny_backward.txt").read_text("utf-8")
    return parse_explicit(text, orthant_model(3, "1/2"))
