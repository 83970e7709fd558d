"""Parallel-link network with polynomial latency functions.

A network is R parallel links between one origin-destination pair. Each link
carries a latency function ell_i, restricted here to polynomials with
nonnegative coefficients and at least one strictly positive term of degree
one or higher, which makes every ell_i strictly increasing and convex on
[0, inf). The traversal cost of a link is latency plus the posted toll,
c_i(x, p) = ell_i(x) + p, and the marginal-cost toll is x * ell_i'(x).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_link_index


def _check_load(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError(f"load must be finite and nonnegative, got {x!r}")
    return x


@dataclass(frozen=True)
class LatencySpec:
    """Polynomial latency ell(x) = sum_k coef_k * x**power_k.

    terms: tuple of (power, coefficient) pairs, powers nonnegative integers,
    coefficients nonnegative, and at least one term with power >= 1 and
    coefficient > 0 (strict increase). Zero-coefficient terms are dropped.
    """

    terms: tuple[tuple[int, float], ...]

    def __post_init__(self):
        cleaned: dict[int, float] = {}
        for power, coef in self.terms:
            if int(power) != power or power < 0:
                raise ValueError(f"latency powers must be nonnegative integers, got {power}")
            coef = float(coef)
            if not np.isfinite(coef) or coef < 0:
                raise ValueError(f"latency coefficients must be finite and >= 0, got {coef}")
            if coef > 0:
                cleaned[int(power)] = cleaned.get(int(power), 0.0) + coef
        if not any(power >= 1 for power in cleaned):
            raise ValueError(
                "latency must contain a term with power >= 1 and coefficient > 0 "
                "(strictly increasing requirement)"
            )
        object.__setattr__(self, "terms", tuple(sorted(cleaned.items())))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for power, coef in self.terms:
            out = out + coef * x**power
        return out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for power, coef in self.terms:
            if power >= 1:
                out = out + coef * power * x ** (power - 1)
        return out

    def second_derivative(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for power, coef in self.terms:
            if power >= 2:
                out = out + coef * power * (power - 1) * x ** (power - 2)
        return out

    @property
    def constant(self) -> float:
        """Value at zero load."""
        for power, coef in self.terms:
            if power == 0:
                return coef
        return 0.0


@dataclass(frozen=True)
class ParallelNetwork:
    """Ordered collection of links; the shared static problem instance."""

    links: tuple[LatencySpec, ...]

    def __post_init__(self):
        links = tuple(self.links)
        if len(links) < 2:
            raise ValueError(f"a parallel network needs at least 2 links, got {len(links)}")
        if not all(isinstance(s, LatencySpec) for s in links):
            raise TypeError("links must be LatencySpec instances")
        object.__setattr__(self, "links", links)
        # dense (R, K) coefficient matrix over the union of powers, for fast
        # whole-network evaluation on the simulation hot path
        powers = sorted({power for spec in links for power, _ in spec.terms})
        coef = np.zeros((len(links), len(powers)))
        for i, spec in enumerate(links):
            for power, c in spec.terms:
                coef[i, powers.index(power)] = c
        pw = np.array(powers, dtype=float)
        object.__setattr__(self, "_powers", pw)
        object.__setattr__(self, "_coef", coef)
        object.__setattr__(self, "_dcoef", coef * pw[None, :])
        object.__setattr__(self, "_dpowers", np.maximum(pw - 1.0, 0.0))

    @property
    def n_links(self) -> int:
        return len(self.links)

    # ---- scalar, per-link API ----

    def latency(self, i: int, x: float) -> float:
        """ell_i(x); raises IndexError for a bad link, ValueError for x < 0."""
        i = check_link_index(i, self.n_links)
        return float(self.links[i].value(_check_load(x)))

    def latency_derivative(self, i: int, x: float) -> float:
        i = check_link_index(i, self.n_links)
        return float(self.links[i].derivative(_check_load(x)))

    def cost(self, i: int, x: float, p: float) -> float:
        """Traversal cost ell_i(x) + p."""
        return self.latency(i, x) + float(p)

    def marginal_cost(self, i: int, x: float) -> float:
        """Externality toll x * ell_i'(x)."""
        x = float(_check_load(x))
        return x * self.latency_derivative(i, x)

    # ---- vectorized API over all links ----

    def latencies(self, x) -> np.ndarray:
        x = self._per_link(x)
        return (self._coef * x[:, None] ** self._powers[None, :]).sum(axis=1)

    def derivatives(self, x) -> np.ndarray:
        x = self._per_link(x)
        return (self._dcoef * x[:, None] ** self._dpowers[None, :]).sum(axis=1)

    def second_derivatives(self, x) -> np.ndarray:
        x = self._per_link(x)
        return np.array([spec.second_derivative(x[i]) for i, spec in enumerate(self.links)])

    def costs(self, x, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.n_links,):
            raise ValueError(f"toll vector must have shape ({self.n_links},), got {p.shape}")
        return self.latencies(x) + p

    def marginal_costs(self, x) -> np.ndarray:
        x = self._per_link(x)
        return x * self.derivatives(x)

    def _per_link(self, x) -> np.ndarray:
        x = _check_load(x)
        if x.shape != (self.n_links,):
            raise ValueError(f"load vector must have shape ({self.n_links},), got {x.shape}")
        return x


def paper_network(n_links: int = 6) -> ParallelNetwork:
    """The benchmark family ell_i(x) = i*x^2 + i for links i = 1..R."""
    if n_links < 2:
        raise ValueError("need at least 2 links")
    return ParallelNetwork(
        tuple(LatencySpec(((0, float(i)), (2, float(i)))) for i in range(1, n_links + 1))
    )


def symmetric_network(n_links: int, terms: tuple[tuple[int, float], ...]) -> ParallelNetwork:
    """n identical links sharing one latency polynomial."""
    spec = LatencySpec(terms)
    return ParallelNetwork(tuple(spec for _ in range(n_links)))
