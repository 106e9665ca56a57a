"""Finite-activity singular controls ``(n, nu)``.

A :class:`ControlPath` consists of jump atoms (time, unit direction, size)
and piecewise-constant rate segments (start, end, unit direction, rate).  The
induced ``nu`` is nondecreasing and right-continuous with ``nu_{0-} = 0``; an
atom at time 0 acts on the initial state ``X_{0-} = x``.

A path *claims* membership of the constrained class when ``d0`` is set; all
its directions then have exactly zero entries beyond coordinate ``d0``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

__all__ = [
    "Segment",
    "Atom",
    "ControlPath",
    "nu_total",
    "project_control",
    "gamma_weight",
    "check_opt_class",
    "random_battery",
    "null_control",
    "battery_to_json",
    "battery_from_json",
]

_UNIT_TOL = 1e-12


def _unit(direction, d: int | None = None) -> tuple[float, ...]:
    v = tuple(float(a) for a in direction)
    if d is not None and len(v) != d:
        raise ValueError(f"direction must have {d} entries, got {len(v)}")
    if abs(np.sqrt(sum(a * a for a in v)) - 1.0) > _UNIT_TOL:
        raise ValueError(f"direction {v} is not a unit vector")
    return v


@dataclass(frozen=True)
class Segment:
    """Absolutely continuous piece: ``dnu = rate dt`` on ``[start, end)`` along ``direction``."""

    start: float
    end: float
    direction: tuple[float, ...]
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "direction", _unit(self.direction))
        if not self.end > self.start:
            raise ValueError("segment end must exceed its start")
        if self.rate < 0:
            raise ValueError("segment rate must be nonnegative")

    def mass(self, a: float, b: float) -> float:
        """Control mass the segment puts on ``[a, b]``."""
        return self.rate * max(0.0, min(b, self.end) - max(a, self.start))


@dataclass(frozen=True)
class Atom:
    """Jump of the control: ``Delta nu = size`` at ``time`` along ``direction``."""

    time: float
    direction: tuple[float, ...]
    size: float

    def __post_init__(self):
        object.__setattr__(self, "direction", _unit(self.direction))
        if self.size < 0:
            raise ValueError("atom size must be nonnegative")


@dataclass(frozen=True)
class ControlPath:
    """Finite-activity control on ``[0, horizon]``.

    Parameters
    ----------
    horizon : float
        Length of the control window (``T - t``).
    d : int
        Dimension of the directions.
    segments, atoms : sequences
        Ordered, with disjoint increasing segments and nondecreasing atom times.
    d0 : int, optional
        When given, the path claims to lie in the constrained class: every
        direction must vanish exactly beyond coordinate ``d0``.
    """

    horizon: float
    d: int
    segments: tuple[Segment, ...] = field(default_factory=tuple)
    atoms: tuple[Atom, ...] = field(default_factory=tuple)
    d0: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "atoms", tuple(self.atoms))
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        last_end = 0.0
        for s in self.segments:
            if len(s.direction) != self.d:
                raise ValueError("segment direction has wrong dimension")
            if s.start < last_end - 1e-15 or s.end > self.horizon * (1 + 1e-12):
                raise ValueError("segments must be disjoint, increasing and inside [0, horizon]")
            last_end = s.end
        last_t = 0.0
        for a in self.atoms:
            if len(a.direction) != self.d:
                raise ValueError("atom direction has wrong dimension")
            if a.time < last_t or a.time > self.horizon * (1 + 1e-12):
                raise ValueError("atom times must be nondecreasing and inside [0, horizon]")
            last_t = a.time
        if self.d0 is not None:
            if not 1 <= self.d0 <= self.d:
                raise ValueError("d0 out of range")
            for piece in self.segments + self.atoms:
                if any(v != 0.0 for v in piece.direction[self.d0:]):
                    raise ValueError("constrained path has a direction with nonzero uncontrolled entries")

    @property
    def is_null(self) -> bool:
        return all(a.size == 0 for a in self.atoms) and all(s.rate == 0 for s in self.segments)

    def in_constrained_class(self, d0: int) -> bool:
        """True if every direction vanishes beyond coordinate ``d0``."""
        return all(all(v == 0.0 for v in p.direction[d0:]) for p in self.segments + self.atoms)

    def accumulated(self, t: float) -> np.ndarray:
        """Vector ``int_{[0, t]} n dnu``."""
        out = np.zeros(self.d)
        for s in self.segments:
            out += np.asarray(s.direction) * s.mass(0.0, t)
        for a in self.atoms:
            if a.time <= t:
                out += np.asarray(a.direction) * a.size
        return out

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "d": self.d,
            "d0": self.d0,
            "segments": [dict(start=s.start, end=s.end, direction=list(s.direction), rate=s.rate)
                         for s in self.segments],
            "atoms": [dict(time=a.time, direction=list(a.direction), size=a.size) for a in self.atoms],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ControlPath":
        return cls(
            horizon=float(data["horizon"]),
            d=int(data["d"]),
            d0=data.get("d0"),
            segments=tuple(Segment(float(s["start"]), float(s["end"]), tuple(s["direction"]),
                                   float(s["rate"])) for s in data.get("segments", [])),
            atoms=tuple(Atom(float(a["time"]), tuple(a["direction"]), float(a["size"]))
                        for a in data.get("atoms", [])),
        )


def null_control(horizon: float, d: int, d0: int | None = None) -> ControlPath:
    """The control ``nu = 0`` (direction irrelevant)."""
    return ControlPath(horizon=horizon, d=d, d0=d0 if d0 is not None else d)


def nu_total(path: ControlPath, t: float) -> float:
    """Total control ``nu_t`` (right-continuous, atoms at ``t`` included).

    Examples
    --------
    >>> p = ControlPath(1.0, 1, segments=[Segment(0, 1, (1,), 2.0)], atoms=[Atom(0.5, (1,), 0.5)])
    >>> nu_total(p, 0.75)
    2.0
    """
    if t < 0 or t > path.horizon * (1 + 1e-12):
        raise ValueError("t outside [0, horizon]")
    return float(sum(s.mass(0.0, t) for s in path.segments) + sum(a.size for a in path.atoms if a.time <= t))


def _project_dir(direction: tuple[float, ...], d0: int) -> tuple[tuple[float, ...], float]:
    head = np.asarray(direction[:d0])
    norm = float(np.sqrt(np.sum(head * head)))
    tail = direction[d0:]
    if all(v == 0.0 for v in tail):
        return tuple(direction), 1.0
    if norm == 0.0:
        return (1.0,) + (0.0,) * (len(direction) - 1), 0.0
    return tuple(float(v) for v in head / norm) + (0.0,) * len(tail), norm


def project_control(path: ControlPath, d0: int) -> ControlPath:
    """Project a control onto the constrained class.

    Each direction ``n`` becomes ``(n_[d0] / |n_[d0]|, 0, ..., 0)`` and its mass
    is scaled by ``|n_[d0]|``; when ``n_[d0] = 0`` the direction is ``e_1`` and
    the mass 0.  Pieces that already lie in the constrained class are kept
    bit-for-bit, so the map is idempotent.
    """
    if not 1 <= d0 <= path.d:
        raise ValueError("d0 out of range")
    segs, atoms = [], []
    for s in path.segments:
        n, w = _project_dir(s.direction, d0)
        segs.append(Segment(s.start, s.end, n, s.rate if w == 1.0 else s.rate * w))
    for a in path.atoms:
        n, w = _project_dir(a.direction, d0)
        atoms.append(Atom(a.time, n, a.size if w == 1.0 else a.size * w))
    return ControlPath(path.horizon, path.d, tuple(segs), tuple(atoms), d0=d0)


def gamma_weight(direction, gamma: float, d0: int) -> np.ndarray:
    """Weighted direction ``(n_1, .., n_d0, gamma n_{d0+1}, .., gamma n_d)``.

    Examples
    --------
    >>> gamma_weight((0.0, 1.0), 0.5, 1)
    array([0. , 0.5])
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    n = np.array(direction, dtype=float)
    n[d0:] = n[d0:] * gamma
    return n


def check_opt_class(path: ControlPath, x, K2: float) -> bool:
    """Pathwise surrogate of the bounded-expectation class: ``nu_T <= K2 (1 + |x|)``."""
    if not K2 > 0:
        raise ValueError("K2 must be positive")
    return nu_total(path, path.horizon) <= K2 * (1.0 + float(np.linalg.norm(np.asarray(x, dtype=float))))


def _random_direction(rng: np.random.Generator, d: int, d0: int | None) -> tuple[float, ...]:
    k = d if d0 is None else d0
    v = rng.standard_normal(k)
    while np.linalg.norm(v) < 1e-8:
        v = rng.standard_normal(k)
    v = v / np.linalg.norm(v)
    return tuple(float(a) for a in v) + (0.0,) * (d - k)


def random_battery(n: int, d: int, horizon: float, seed: int, d0: int | None = None,
                   max_atoms: int = 3, max_segments: int = 2, mean_size: float = 0.3,
                   mean_rate: float = 0.5, total_cap: float | None = None) -> list[ControlPath]:
    """Randomised test controls.

    Atom counts are uniform on ``0 .. max_atoms``, atom times uniform on the
    horizon (one in four placed at time 0), sizes exponential with mean
    ``mean_size``; segment counts uniform on ``0 .. max_segments`` over random
    sub-intervals with exponential rates.  With ``d0`` set, directions are
    drawn in the first ``d0`` coordinates only and the paths claim the
    constrained class.  ``total_cap`` rescales any path whose ``nu_T`` exceeds it.
    """
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        n_atoms = int(rng.integers(0, max_atoms + 1))
        times = np.sort(np.where(rng.random(n_atoms) < 0.25, 0.0, rng.random(n_atoms) * horizon))
        atoms = [Atom(float(tm), _random_direction(rng, d, d0), float(rng.exponential(mean_size)))
                 for tm in times]
        n_seg = int(rng.integers(0, max_segments + 1))
        cuts = np.sort(rng.random(2 * n_seg)) * horizon
        segs = [Segment(float(cuts[2 * i]), float(cuts[2 * i + 1]), _random_direction(rng, d, d0),
                        float(rng.exponential(mean_rate)))
                for i in range(n_seg) if cuts[2 * i + 1] > cuts[2 * i]]
        path = ControlPath(horizon, d, tuple(segs), tuple(atoms), d0=d0)
        if total_cap is not None:
            tot = nu_total(path, horizon)
            if tot > total_cap:
                c = total_cap / tot
                path = ControlPath(horizon, d,
                                   tuple(Segment(s.start, s.end, s.direction, s.rate * c) for s in segs),
                                   tuple(Atom(a.time, a.direction, a.size * c) for a in atoms), d0=d0)
        out.append(path)
    return out


def battery_to_json(battery: Iterable[ControlPath]) -> str:
    """Serialise a list of controls to JSON text."""
    return json.dumps([p.to_dict() for p in battery], indent=1)


def battery_from_json(text: str) -> list[ControlPath]:
    """Inverse of :func:`battery_to_json`; also accepts a single path object."""
    data = json.loads(text)
    if isinstance(data, dict):
        data = [data]
    return [ControlPath.from_dict(item) for item in data]
