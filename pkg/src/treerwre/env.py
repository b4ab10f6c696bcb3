"""Environment laws, transition weights and annealed regime analytics.

An :class:`EnvSpec` stores the joint law of the sibling vector
``(A(x_1), ..., A(x_b))`` as a finite list of atoms.  Everything else in the
package (potentials, recursions, walks) is derived from it.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import yaml
from scipy import optimize
from scipy.special import logsumexp

from . import _hash
from .errors import InvalidSpec

PROB_TOL = 1e-12
REGIME_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class EnvSpec:
    """Finite-support law of the sibling vector on a regular ``b``-ary tree.

    ``values[k]`` is the k-th atom (a ``b``-vector of positive reals) and
    ``probs[k]`` its probability.  Coordinates must share one marginal law.
    """

    b: int
    values: tuple
    probs: tuple
    family: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        if int(self.b) != self.b or self.b < 2:
            raise InvalidSpec(f"branching factor must be an integer >= 2, got {self.b}")
        vals = np.asarray(self.values, dtype=np.float64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[1] != self.b or vals.shape[0] != probs.shape[0]:
            raise InvalidSpec("atoms must be b-vectors, one probability per atom")
        if vals.shape[0] == 0:
            raise InvalidSpec("empty sibling law")
        if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
            raise InvalidSpec("atom coordinates must be finite and positive")
        if np.any(probs <= 0) or abs(probs.sum() - 1.0) > PROB_TOL:
            raise InvalidSpec(f"probabilities must be positive and sum to 1 (sum={probs.sum()!r})")
        # identically distributed coordinates
        ref = _marginal(vals[:, 0], probs)
        for i in range(1, self.b):
            other = _marginal(vals[:, i], probs)
            if len(other[0]) != len(ref[0]) or not (
                np.allclose(other[0], ref[0], rtol=0, atol=1e-12)
                and np.allclose(other[1], ref[1], rtol=0, atol=PROB_TOL)
            ):
                raise InvalidSpec(f"coordinate {i} is not distributed like coordinate 0")
        object.__setattr__(self, "b", int(self.b))
        object.__setattr__(self, "values", tuple(tuple(float(v) for v in row) for row in vals))
        object.__setattr__(self, "probs", tuple(float(p) for p in probs))
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        vals.setflags(write=False)
        cum.setflags(write=False)
        logs = np.log(vals)
        logs.setflags(write=False)
        object.__setattr__(self, "_vals", vals)
        object.__setattr__(self, "_logs", logs)
        object.__setattr__(self, "_cum", cum)
        object.__setattr__(self, "_marg", ref)

    # -- derived views -----------------------------------------------------
    @property
    def atom_values(self) -> np.ndarray:
        return self._vals

    @property
    def atom_logs(self) -> np.ndarray:
        return self._logs

    @property
    def cum_probs(self) -> np.ndarray:
        return self._cum

    @property
    def marginal(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct coordinate values and their probabilities."""
        return self._marg

    @property
    def a_min(self) -> float:
        return float(self._vals.min())

    @property
    def a_max(self) -> float:
        return float(self._vals.max())

    @property
    def eps0(self) -> float:
        """Ellipticity constant implied by the support bounds."""
        return min(1.0, self.a_min) / (1.0 + self.b * self.a_max)

    @property
    def degenerate(self) -> bool:
        """True for a single-atom law (accepted for closed-form fixtures)."""
        return len(self.probs) == 1

    def mean_A(self) -> float:
        v, p = self._marg
        return float(np.dot(p, v))

    # -- serialization -----------------------------------------------------
    def to_dict(self) -> dict:
        d = {"b": self.b, "atoms": [{"values": list(v), "prob": p} for v, p in zip(self.values, self.probs)]}
        if self.family is not None:
            d["family"] = dict(self.family)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnvSpec":
        fam = d.get("family")
        if isinstance(fam, str):
            fam = {"name": fam, **{k: v for k, v in d.items() if k not in ("family", "atoms")}}
        if fam is not None and "atoms" not in d:
            return _from_family(fam, d.get("b"))
        if "atoms" not in d:
            raise InvalidSpec("config needs `atoms` or a `family` shorthand")
        atoms = d["atoms"]
        return cls(
            b=d["b"],
            values=tuple(tuple(a["values"]) for a in atoms),
            probs=tuple(a["prob"] for a in atoms),
            family=fam,
        )

    def to_text(self) -> str:
        return yaml.dump(self.to_dict(), Dumper=_Dumper, sort_keys=False, default_flow_style=None)

    @classmethod
    def from_text(cls, text: str) -> "EnvSpec":
        return cls.from_dict(yaml.safe_load(text))

    @property
    def spec_hash(self) -> str:
        payload = json.dumps(
            {"b": self.b, "values": [[repr(v) for v in row] for row in self.values],
             "probs": [repr(p) for p in self.probs]},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def __eq__(self, other):
        if not isinstance(other, EnvSpec):
            return NotImplemented
        return self.b == other.b and self.values == other.values and self.probs == other.probs

    def __hash__(self):
        return hash((self.b, self.values, self.probs))

    def __repr__(self):
        fam = f", family={self.family}" if self.family else ""
        return f"EnvSpec(b={self.b}, atoms={len(self.probs)}{fam})"


def _marginal(col, probs):
    order = np.argsort(col, kind="stable")
    vals, ps = [], []
    for v, p in zip(col[order], probs[order]):
        if vals and abs(v - vals[-1]) <= 1e-12 * max(1.0, abs(v)):
            ps[-1] += p
        else:
            vals.append(float(v))
            ps.append(float(p))
    return np.array(vals), np.array(ps)


class _Dumper(yaml.SafeDumper):
    pass


def _float_repr(dumper, value):
    s = format(value, ".17g")
    if not any(c in s for c in ".eEn"):
        s += ".0"
    return dumper.represent_scalar("tag:yaml.org,2002:float", s)


_Dumper.add_representer(float, _float_repr)


def _from_family(fam: dict, b=None) -> EnvSpec:
    name = fam.get("name", fam.get("family"))
    b = int(fam.get("b", b))
    if name == "two_point":
        return make_two_point_env(b, fam["a_hi"], fam["a_lo"], fam["q"])
    if name == "critical_two_point":
        return make_critical_two_point(b)
    if name == "constant":
        return make_constant_env(b, fam["a"])
    raise InvalidSpec(f"unknown family {name!r}")


# ---------------------------------------------------------------- factories

def make_two_point_env(b: int, a_hi: float, a_lo: float, q: float) -> EnvSpec:
    """Product law: each sibling coordinate is ``a_hi`` w.p. ``q``, else ``a_lo``."""
    if int(b) != b or b < 2:
        raise InvalidSpec(f"b must be >= 2, got {b}")
    if not (0.0 < q < 1.0):
        raise InvalidSpec(f"q must lie in (0, 1), got {q}")
    if not (0.0 < a_lo <= a_hi) or not math.isfinite(a_hi):
        raise InvalidSpec(f"need 0 < a_lo <= a_hi, got a_lo={a_lo}, a_hi={a_hi}")
    b = int(b)
    values, probs = [], []
    for combo in itertools.product((0, 1), repeat=b):
        values.append(tuple(a_hi if c else a_lo for c in combo))
        k = sum(combo)
        probs.append(q**k * (1.0 - q) ** (b - k))
    probs = np.array(probs)
    probs /= probs.sum()
    fam = {"name": "two_point", "b": b, "a_hi": float(a_hi), "a_lo": float(a_lo), "q": float(q)}
    return EnvSpec(b, tuple(values), tuple(probs), family=fam)


def critical_parameters(b: int) -> tuple[float, float, float]:
    """``(a_hi, a_lo, q)`` of the two-point law with E(A) = 1/b and E(A log A) = 0."""
    s = b + math.sqrt(b * b - 1.0)
    return s, 1.0 / s, 1.0 / (s * s + 1.0)


def make_critical_two_point(b: int) -> EnvSpec:
    if int(b) != b or b < 2:
        raise InvalidSpec(f"b must be >= 2, got {b}")
    a_hi, a_lo, q = critical_parameters(int(b))
    spec = make_two_point_env(int(b), a_hi, a_lo, q)
    object.__setattr__(spec, "family", {"name": "critical_two_point", "b": int(b)})
    return spec


def make_constant_env(b: int, a: float) -> EnvSpec:
    """Degenerate law ``A == a``; excluded by the model but handy for closed forms."""
    if a <= 0:
        raise InvalidSpec("a must be positive")
    return EnvSpec(int(b), ((float(a),) * int(b),), (1.0,), family={"name": "constant", "b": int(b), "a": float(a)})


# ---------------------------------------------------------------- analytics

def psi(spec: EnvSpec, t: float) -> float:
    """Log-moment ``log E(A^t)`` of the marginal law."""
    if t < 0:
        raise ValueError("t must be non-negative")
    v, p = spec.marginal
    return float(logsumexp(t * np.log(v), b=p))


def psi_prime(spec: EnvSpec, t: float) -> float:
    v, p = spec.marginal
    w = p * np.exp(t * np.log(v) - np.max(t * np.log(v)))
    return float(np.dot(w, np.log(v)) / w.sum())


def mean_A_log_A(spec: EnvSpec) -> float:
    v, p = spec.marginal
    return float(np.dot(p, v * np.log(v)))


def compute_p(spec: EnvSpec) -> float:
    """``inf_{t in [0,1]} E(A^t)``; psi is convex so a bounded scalar search suffices."""
    res = optimize.minimize_scalar(lambda t: psi(spec, t), bounds=(0.0, 1.0), method="bounded",
                                   options={"xatol": 1e-10})
    best = min(float(res.fun), psi(spec, 0.0), psi(spec, 1.0))
    return math.exp(best)


def theta(spec: EnvSpec) -> float | None:
    """Root of psi' in (0, 1] for critical specs with psi'(1) >= 0, else None."""
    if abs(compute_p(spec) - 1.0 / spec.b) > REGIME_TOL:
        return None
    d1 = psi_prime(spec, 1.0)
    if abs(d1) <= REGIME_TOL:
        return 1.0
    if d1 < 0:
        return None
    d0 = psi_prime(spec, 0.0)
    if d0 >= 0:
        return None
    th = optimize.brentq(lambda t: psi_prime(spec, t), 0.0, 1.0, xtol=1e-12, rtol=4 * np.finfo(float).eps)
    if abs(math.exp(psi(spec, th)) - 1.0 / spec.b) >= 1e-9:
        raise InvalidSpec(f"E(A^theta) = {math.exp(psi(spec, th))!r} != 1/b: spec is not critical")
    return float(th)


def kappa(spec: EnvSpec) -> float | None:
    """``inf{t > 1: E(A^t) = 1/b}`` in the sub-diffusive regime; ``inf`` if none."""
    target = -math.log(spec.b)
    if abs(psi(spec, 1.0) - target) > REGIME_TOL or psi_prime(spec, 1.0) >= -REGIME_TOL:
        return None
    if spec.a_max <= 1.0:
        return math.inf
    f = lambda t: psi(spec, t) - target
    lo, hi = 1.0, 2.0
    while f(hi) < 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e6:
            return math.inf
    # f < 0 just right of 1 since psi'(1) < 0
    return float(optimize.brentq(f, lo if lo > 1.0 else 1.0 + 1e-12, hi, xtol=1e-12))


class RegimeTag(str, enum.Enum):
    POSITIVE_RECURRENT = "PositiveRecurrent"
    NULL_RECURRENT_SUBDIFFUSIVE = "NullRecurrentSubdiffusive"
    NULL_RECURRENT_SLOW = "NullRecurrentSlow"
    TRANSIENT = "Transient"


@dataclass(frozen=True)
class Regime:
    tag: RegimeTag
    p: float
    psi_prime_1: float
    theta: float | None = None
    kappa: float | None = None

    def to_dict(self):
        return {"tag": self.tag.value, "p": self.p, "psi_prime_1": self.psi_prime_1,
                "theta": self.theta, "kappa": self.kappa}


def classify_regime(spec: EnvSpec) -> Regime:
    p = compute_p(spec)
    d1 = psi_prime(spec, 1.0)
    inv_b = 1.0 / spec.b
    if p > inv_b + REGIME_TOL:
        return Regime(RegimeTag.TRANSIENT, p, d1)
    if p < inv_b - REGIME_TOL:
        return Regime(RegimeTag.POSITIVE_RECURRENT, p, d1)
    if d1 < -REGIME_TOL:
        return Regime(RegimeTag.NULL_RECURRENT_SUBDIFFUSIVE, p, d1, kappa=kappa(spec))
    return Regime(RegimeTag.NULL_RECURRENT_SLOW, p, d1, theta=theta(spec))


# ---------------------------------------------------------------- weights

class Weights(NamedTuple):
    parent: float | None
    children: np.ndarray


def omega_from_A(a_values: Sequence[float], is_root: bool = False, spec: EnvSpec | None = None) -> Weights:
    """Transition weights at a vertex whose children carry ``a_values``.

    Non-root: ``omega(x, parent) = 1 / (1 + sum A)``, ``omega(x, x_i) = A_i / (1 + sum A)``.
    Root: ``omega(e, e_i) = A_i / sum A``.
    """
    a = np.asarray(a_values, dtype=np.float64)
    if spec is not None:
        lo, hi = spec.a_min, spec.a_max
        if np.any(a < lo * (1 - 1e-12)) or np.any(a > hi * (1 + 1e-12)):
            raise InvalidSpec(f"A-values {a} outside support [{lo}, {hi}]")
    if np.any(a <= 0):
        raise InvalidSpec("A-values must be positive")
    if is_root:
        return Weights(None, a / a.sum())
    z = 1.0 + a.sum()
    return Weights(1.0 / z, a / z)


# ---------------------------------------------------------------- lazy realization

@dataclass(frozen=True)
class VertexAddress:
    """Root-to-vertex child digits; the empty address is the root."""

    digits: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "digits", tuple(int(d) for d in self.digits))

    @property
    def depth(self) -> int:
        return len(self.digits)

    def parent(self) -> "VertexAddress":
        if not self.digits:
            raise ValueError("the root has no parent")
        return VertexAddress(self.digits[:-1])

    def child(self, i: int) -> "VertexAddress":
        return VertexAddress(self.digits + (int(i),))

    def prefixes(self):
        """Addresses on ]]e, x]] in root-to-leaf order."""
        return [VertexAddress(self.digits[:k]) for k in range(1, len(self.digits) + 1)]

    def index(self, b: int) -> int:
        """Lexicographic index within its generation."""
        idx = 0
        for d in self.digits:
            idx = idx * b + d
        return idx

    @classmethod
    def from_index(cls, index: int, depth: int, b: int) -> "VertexAddress":
        digits = []
        for _ in range(depth):
            index, d = divmod(index, b)
            digits.append(d)
        return cls(tuple(reversed(digits)))

    def to_string(self) -> str:
        return "".join(str(d) if d < 10 else f"[{d}]" for d in self.digits)

    def validate(self, b: int):
        if any(d < 0 or d >= b for d in self.digits):
            raise ValueError(f"address {self.digits} has digits outside [0, {b})")


def _as_address(addr) -> VertexAddress:
    return addr if isinstance(addr, VertexAddress) else VertexAddress(tuple(addr))


def realize_A(spec: EnvSpec, seed: int, addr) -> np.ndarray:
    """Sibling vector ``(A(x_1), ..., A(x_b))`` carried by the children of ``addr``.

    A pure function of ``(seed, addr)``: the address key is hashed, mapped to
    a uniform and used to pick an atom of the sibling law.
    """
    addr = _as_address(addr)
    addr.validate(spec.b)
    key = _hash.address_key(seed, addr.digits)
    u = _hash.draw_unit_array(np.array([key], dtype=np.uint64))
    idx = int(np.searchsorted(spec.cum_probs, u[0], side="right"))
    return spec.atom_values[idx].copy()


def realize_levels(spec: EnvSpec, seed: int, n: int):
    """Realize every A-value down to depth ``n``, level by level.

    Returns a list of ``n`` arrays; entry ``k`` holds the ``b**(k+1)`` values
    at depth ``k + 1`` in lexicographic order.
    """
    b = spec.b
    keys = _hash.root_key_array(seed)
    levels = []
    for _ in range(n):
        u = _hash.draw_unit_array(keys)
        idx = np.searchsorted(spec.cum_probs, u, side="right")
        levels.append(spec.atom_values[idx].reshape(-1))
        if len(levels) < n:
            keys = _hash.child_keys_array(keys, b)
    return levels
