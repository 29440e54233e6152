"""Finite-alphabet probability primitives.

Distributions are probability vectors over symbol indices ``0..n-1``;
joints are ``|Y| x |X|`` tables with cached marginals.  Values are
validated at construction and immutable afterwards — a vector that does
not sum to one within ``NORM_TOL`` raises instead of being renormalized.

The local-geometry helpers treat a strictly positive reference
distribution as an origin: a nearby distribution ``P`` maps to the
information vector ``phi(x) = (P(x) - ref(x)) / sqrt(ref(x))``, whose
squared norm is the chi-square divergence of ``P`` from the reference,
and half the squared distance between two such vectors approximates
their KL divergence.  All divergences are in nats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (InvalidDistributionError, InvalidInfoVectorError,
                     InvalidInputError, SingularReferenceError)

# Normalization slack accepted at construction; never used to repair input.
NORM_TOL = 1e-12
# Orthogonality slack for information vectors against sqrt(ref).
ORTHO_TOL = 1e-8


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FiniteDist:
    """Probability vector over a finite alphabet."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise InvalidDistributionError("probs must be a non-empty 1-d array")
        if not np.all(np.isfinite(p)):
            raise InvalidDistributionError("probs must be finite")
        if np.any(p < 0.0):
            raise InvalidDistributionError("probs must be non-negative")
        if abs(float(p.sum()) - 1.0) > NORM_TOL:
            raise InvalidDistributionError(
                f"probs sum to {p.sum()!r}, more than {NORM_TOL} away from 1")
        object.__setattr__(self, "probs", _readonly(p))

    def __len__(self) -> int:
        return self.probs.size

    @property
    def n(self) -> int:
        return self.probs.size

    @property
    def strictly_positive(self) -> bool:
        return bool(self.probs.min() > 0.0)

    @property
    def sqrt(self) -> np.ndarray:
        return np.sqrt(self.probs)

    @classmethod
    def uniform(cls, n: int) -> "FiniteDist":
        return cls(np.full(n, 1.0 / n))

    @classmethod
    def from_weights(cls, weights) -> "FiniteDist":
        w = np.asarray(weights, dtype=float)
        tot = w.sum()
        if tot <= 0:
            raise InvalidDistributionError("weights must have positive sum")
        return cls(w / tot)

    def smoothed(self, delta: float) -> "FiniteDist":
        """Add ``delta`` to every entry and renormalize.

        Explicit escape hatch for zero entries; ``delta`` is the caller's
        documented choice, nothing is smoothed implicitly.
        """
        if delta <= 0:
            raise InvalidInputError("delta must be positive")
        return FiniteDist((self.probs + delta) / (1.0 + delta * self.n))

    def to_json(self) -> str:
        return json.dumps({"probs": self.probs.tolist()})

    @classmethod
    def from_json(cls, s: str) -> "FiniteDist":
        return cls(np.asarray(json.loads(s)["probs"], dtype=float))


@dataclass(frozen=True)
class JointDist:
    """``|Y| x |X|`` joint table with cached marginals.

    ``table[y, x]`` is the probability of the pair ``(x, y)``.  Marginals
    are accepted from trusted constructors (to keep empirical counts
    exact) but always re-checked against the row/column sums.
    """

    table: np.ndarray
    marginal_x: FiniteDist = field(default=None)  # type: ignore[assignment]
    marginal_y: FiniteDist = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != 2 or t.size == 0:
            raise InvalidDistributionError("table must be a non-empty 2-d array")
        if not np.all(np.isfinite(t)):
            raise InvalidDistributionError("table must be finite")
        if np.any(t < 0.0):
            raise InvalidDistributionError("table must be non-negative")
        if abs(float(t.sum()) - 1.0) > NORM_TOL:
            raise InvalidDistributionError(
                f"table sums to {t.sum()!r}, more than {NORM_TOL} away from 1")
        object.__setattr__(self, "table", _readonly(t))
        mx = self.marginal_x or FiniteDist(t.sum(axis=0))
        my = self.marginal_y or FiniteDist(t.sum(axis=1))
        if (np.max(np.abs(mx.probs - t.sum(axis=0))) > NORM_TOL
                or np.max(np.abs(my.probs - t.sum(axis=1))) > NORM_TOL):
            raise InvalidDistributionError("cached marginals disagree with table")
        object.__setattr__(self, "marginal_x", mx)
        object.__setattr__(self, "marginal_y", my)

    @property
    def nx(self) -> int:
        return self.table.shape[1]

    @property
    def ny(self) -> int:
        return self.table.shape[0]

    def product_of_marginals(self) -> "JointDist":
        return JointDist(np.outer(self.marginal_y.probs, self.marginal_x.probs))

    def conditional_y_given_x(self) -> np.ndarray:
        """``P(y|x)`` as a ``|Y| x |X|`` array; requires positive P_X."""
        px = self.marginal_x.probs
        if np.any(px <= 0.0):
            raise SingularReferenceError("marginal over x has a zero entry")
        return self.table / px[None, :]

    def to_json(self) -> str:
        return json.dumps({
            "ny": self.ny, "nx": self.nx,
            "table": self.table.reshape(-1).tolist(),  # row-major
        })

    @classmethod
    def from_json(cls, s: str) -> "JointDist":
        d = json.loads(s)
        t = np.asarray(d["table"], dtype=float).reshape(d["ny"], d["nx"])
        return cls(t)


@dataclass(frozen=True)
class InfoVector:
    """Local coordinates of a distribution near a strictly positive reference.

    Entries are ``(P - ref) / sqrt(ref)``; every valid information vector is
    orthogonal to ``sqrt(ref)``, which is enforced here within ``ORTHO_TOL``.
    """

    ref: FiniteDist
    phi: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.shape != (self.ref.n,):
            raise InvalidInfoVectorError("phi and ref dimensions disagree")
        if not np.all(np.isfinite(phi)):
            raise InvalidInfoVectorError("phi must be finite")
        dot = float(self.ref.sqrt @ phi)
        if abs(dot) > ORTHO_TOL:
            raise InvalidInfoVectorError(
                f"<sqrt(ref), phi> = {dot:.3e} exceeds {ORTHO_TOL}")
        object.__setattr__(self, "phi", _readonly(phi))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.phi))

    @property
    def feature_function(self) -> np.ndarray:
        """The zero-mean function ``phi / sqrt(ref)`` on the alphabet."""
        return self.phi / self.ref.sqrt

    def to_distribution(self) -> FiniteDist:
        """Invert the correspondence; valid only if the result is a
        distribution (raises otherwise)."""
        return FiniteDist(self.ref.probs + self.ref.sqrt * self.phi)


@dataclass(frozen=True)
class FeatureFn:
    """A real-valued function on the alphabet, paired with a reference."""

    values: np.ndarray
    ref: FiniteDist

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.ref.n,):
            raise InvalidInputError("values and ref dimensions disagree")
        object.__setattr__(self, "values", _readonly(v))

    @property
    def mean(self) -> float:
        return float(self.ref.probs @ self.values)

    def centered(self) -> "FeatureFn":
        return FeatureFn(self.values - self.mean, self.ref)

    def info_vector(self) -> InfoVector:
        """Information vector of the centered function,
        ``xi = sqrt(ref) * (f - E[f])``."""
        return InfoVector(self.ref, self.ref.sqrt * (self.values - self.mean))


def empirical_joint(samples, nx: int, ny: int) -> JointDist:
    """Empirical ``|Y| x |X|`` joint of (x, y) symbol pairs.

    Marginals are built from the integer counts so they match the
    empirical symbol frequencies exactly.
    """
    pairs = np.asarray(samples, dtype=np.int64)
    if pairs.size == 0:
        raise InvalidInputError("at least one sample is required")
    if pairs.ndim != 2 or pairs.shape[1] != 2:
        raise InvalidInputError("samples must be an iterable of (x, y) pairs")
    xs, ys = pairs[:, 0], pairs[:, 1]
    if xs.min() < 0 or xs.max() >= nx or ys.min() < 0 or ys.max() >= ny:
        raise IndexError("sample symbol out of range")
    counts = np.zeros((ny, nx), dtype=np.int64)
    np.add.at(counts, (ys, xs), 1)
    n = pairs.shape[0]
    return JointDist(counts / n,
                     marginal_x=FiniteDist(counts.sum(axis=0) / n),
                     marginal_y=FiniteDist(counts.sum(axis=1) / n))


def _require_positive_ref(ref: FiniteDist) -> None:
    if not ref.strictly_positive:
        raise SingularReferenceError(
            "reference distribution has a zero entry; smooth explicitly first")


def info_vector(p: FiniteDist, ref: FiniteDist) -> InfoVector:
    """Information vector of ``p`` relative to a strictly positive ``ref``."""
    _require_positive_ref(ref)
    if p.n != ref.n:
        raise InvalidInputError("p and ref dimensions disagree")
    return InfoVector(ref, (p.probs - ref.probs) / ref.sqrt)


def chi_sq(p: FiniteDist, ref: FiniteDist) -> float:
    """Chi-square divergence ``sum (p - ref)^2 / ref``."""
    _require_positive_ref(ref)
    if p.n != ref.n:
        raise InvalidInputError("p and ref dimensions disagree")
    d = p.probs - ref.probs
    return float(np.sum(d * d / ref.probs))


def is_in_eps_neighborhood(p: FiniteDist, ref: FiniteDist, eps: float) -> bool:
    """Whether ``p`` lies in the chi-square ball of radius ``eps^2``."""
    return chi_sq(p, ref) <= eps * eps


def is_eps_dependent(joint: JointDist, eps: float) -> bool:
    """Whether the joint sits within ``eps^2`` (chi-square) of the product
    of its own marginals."""
    if not (joint.marginal_x.strictly_positive
            and joint.marginal_y.strictly_positive):
        raise SingularReferenceError("joint has a singular marginal")
    prod = np.outer(joint.marginal_y.probs, joint.marginal_x.probs)
    d = joint.table - prod
    return float(np.sum(d * d / prod)) <= eps * eps


def kl(p: FiniteDist, q: FiniteDist) -> float:
    """Exact KL divergence ``D(p || q)`` in nats.

    Returns ``inf`` when ``p`` puts mass where ``q`` does not.
    """
    if p.n != q.n:
        raise InvalidInputError("p and q dimensions disagree")
    pp, qq = p.probs, q.probs
    support = pp > 0.0
    if np.any(qq[support] <= 0.0):
        return float("inf")
    return float(np.sum(pp[support] * np.log(pp[support] / qq[support])))


def local_kl_approx(phi1: InfoVector, phi2: InfoVector) -> float:
    """Quadratic approximation ``0.5 * ||phi1 - phi2||^2`` of the KL
    divergence between the two underlying distributions."""
    if phi1.ref.n != phi2.ref.n:
        raise InvalidInputError("information vectors live on different alphabets")
    d = phi1.phi - phi2.phi
    return 0.5 * float(d @ d)
