"""Which families nest which, and the null distribution of the deviance.

A direct edge records the restrictions that turn the larger family into the
smaller one and a map embedding the smaller family's parameters into the
larger one. Composite edges follow from chaining direct edges. Restrictions
on the boundary of the parameter space contribute chi-bar-square weights:
``q`` boundary and ``r`` interior restrictions give the mixture
``sum_k binom(q, k) 2^-q chi2(r + k)``.
"""

from collections import deque
from dataclasses import (
    dataclass,
    field,
)
from math import comb
from typing import (
    Callable,
    Tuple,
)

from .errors import (
    ForbiddenComparisonError,
    NotNestedError,
)
from .families import get_family

FORBIDDEN = {
    ("exp", "gompmake"): "the Makeham rate and the Gompertz terms are not "
                         "identifiable under the exponential null",
    ("exp", "perksmake"): "the Makeham rate and the Perks terms are not "
                          "identifiable under the exponential null",
    ("exp", "beardmake"): "the Makeham rate and the Beard terms are not "
                          "identifiable under the exponential null",
}


@dataclass(frozen=True)
class Restriction:
    family: str
    parameter: str
    value: float
    boundary: bool

    def __str__(self):
        return "{}={:g} ({}{})".format(
            self.parameter, self.value, self.family,
            ", boundary" if self.boundary else "")


def chi_bar_weights(n_boundary, n_interior=0):
    """Mixture ``((weight, df), ...)`` for the given restriction counts."""
    q = n_boundary
    return tuple((comb(q, k) / 2 ** q, n_interior + k) for k in range(q + 1))


@dataclass(frozen=True)
class NestingEdge:
    sub: str
    sup: str
    constraints: Tuple[Restriction, ...]
    embed: Callable = field(compare=False, repr=False)
    allowed: bool = True
    reason: str = ""

    @property
    def n_boundary(self):
        return sum(c.boundary for c in self.constraints)

    @property
    def n_interior(self):
        return len(self.constraints) - self.n_boundary

    @property
    def mixture(self):
        return chi_bar_weights(self.n_boundary, self.n_interior)

    @property
    def regular(self):
        return self.n_boundary == 0

    def embed_values(self, values):
        return tuple(float(v) for v in self.embed(tuple(values)))


def _edge(sub, sup, restrictions, embed):
    return NestingEdge(
        sub, sup,
        tuple(Restriction(sup, p, v, b) for p, v, b in restrictions),
        embed,
    )


DIRECT_EDGES = (
    _edge("exp", "gomp", [("beta", 0, True)], lambda t: (t[0], 0.0)),
    _edge("exp", "gp", [("shape", 0, False)], lambda t: (t[0], 0.0)),
    _edge("exp", "weibull", [("alpha", 1, False)], lambda t: (t[0], 1.0)),
    _edge("gomp", "extgp", [("shape", 0, False)],
          lambda t: (t[0], t[1], 0.0)),
    _edge("gp", "extgp", [("beta", 0, True)], lambda t: (t[0], 0.0, t[1])),
    _edge("weibull", "extweibull", [("shape", 0, False)],
          lambda t: (t[0], t[1], 0.0)),
    _edge("gp", "extweibull", [("alpha", 1, False)],
          lambda t: (t[0], 1.0, t[1])),
    _edge("gomp", "gompmake", [("lambda", 0, True)],
          lambda t: (0.0,) + t),
    _edge("perks", "perksmake", [("lambda", 0, True)],
          lambda t: (0.0,) + t),
    _edge("beard", "beardmake", [("lambda", 0, True)],
          lambda t: (0.0,) + t),
    _edge("perks", "beard", [("beta", 1, False)], lambda t: t + (1.0,)),
    _edge("perksmake", "beardmake", [("beta", 1, False)],
          lambda t: t + (1.0,)),
    # a Gompertz hazard exp(bt/s)/s is the Beard hazard with beta = 0
    _edge("gomp", "beard", [("beta", 0, True)],
          lambda t: (1.0 / t[0], t[1] / t[0], 0.0)),
    _edge("gompmake", "beardmake", [("beta", 0, True)],
          lambda t: (t[0], 1.0 / t[1], t[2] / t[1], 0.0)),
)


def direct_submodels(family):
    """Direct edges whose larger family is ``family``."""
    name = get_family(family).name
    return tuple(e for e in DIRECT_EDGES if e.sup == name)


def _compose(first, second):
    return lambda t: second.embed(first.embed(t))


def _path(sub, sup):
    queue = deque([(sub, ())])
    seen = {sub}
    while queue:
        node, path = queue.popleft()
        if node == sup:
            return path
        for e in DIRECT_EDGES:
            if e.sub == node and e.sup not in seen:
                seen.add(e.sup)
                queue.append((e.sup, path + (e,)))
    return None


def find_edge(sub, sup) -> NestingEdge:
    """Registry lookup; raises NotNestedError when ``sub`` is not nested
    in ``sup``. Forbidden pairs come back with ``allowed=False``."""
    sub, sup = get_family(sub).name, get_family(sup).name
    if sub == sup:
        raise NotNestedError("{} is not a proper submodel of itself"
                             .format(sub))
    path = _path(sub, sup)
    if (sub, sup) in FORBIDDEN:
        return NestingEdge(
            sub, sup, () if path is None else sum(
                (e.constraints for e in path), ()),
            lambda t: t, allowed=False, reason=FORBIDDEN[(sub, sup)],
        )
    if path is None:
        raise NotNestedError("{} is not nested in {}".format(sub, sup))
    if len(path) == 1:
        return path[0]
    embed = path[0].embed
    for e in path[1:]:
        embed = _compose(NestingEdge(sub, e.sub, (), embed), e)
    return NestingEdge(sub, sup, sum((e.constraints for e in path), ()),
                       embed)


def is_nested(sub, sup):
    try:
        find_edge(sub, sup)
    except NotNestedError:
        return False
    return True


def comparison_edge(a, b):
    """The nesting edge between two families given in either order.

    Raises ForbiddenComparisonError when the pair is nested but cannot be
    tested.
    """
    try:
        edge = find_edge(a, b)
    except NotNestedError:
        if a == b:
            raise
        try:
            edge = find_edge(b, a)
        except NotNestedError:
            raise NotNestedError(
                "{} and {} are not nested".format(a, b)) from None
    if not edge.allowed:
        raise ForbiddenComparisonError(
            "{} cannot be compared with {}: {}; the information matrix is "
            "singular under the null".format(edge.sub, edge.sup, edge.reason)
        )
    return edge
