"""Control problem definitions and Hamiltonian evaluation.

A problem bundles the drift b, diffusion sigma and running cost l of a
1-D controlled diffusion

    dy = b(y, u) dt + sigma(y, u) dW,

together with the discount rate rho and the admissible control set U.  Each
coefficient map is additively separable, ``f(x, u) = f_state(x) + f_ctrl(u)``,
with both parts serializable :class:`~hjblab.coeffs.CoefficientExpr` objects;
this covers the built-in models (including the goodwill/advertising instance
where b = a(x) + c u, sigma = nu(x) + gamma u, l = h(u) - g(x)) while keeping
problems round-trippable through JSON.

The current value Hamiltonian and its minimum over a finite control grid are
evaluated here; the solver and verifier build on these.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .coeffs import CoefficientExpr, constant, piecewise, poly
from .errors import (
    EllipticityError,
    GrowthBoundError,
    InvalidControlError,
    ModelConstructionError,
)

__all__ = [
    "ControlSet",
    "ControlGrid",
    "CoefficientPair",
    "ProblemMetadata",
    "ControlProblem",
    "AdvertisingParams",
    "make_advertising_problem",
    "load_problem",
    "builtin_problem",
    "BUILTIN_NAMES",
]

_INF = float("inf")


@dataclass(frozen=True)
class ControlSet:
    """Admissible control values: a closed interval or a finite list."""

    kind: str
    lo: float = 0.0
    hi: float = 0.0
    values: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind == "interval":
            if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
                raise ModelConstructionError("control_set", "interval must be finite")
            if self.lo > self.hi:
                raise ModelConstructionError("control_set", "need lo <= hi")
        elif self.kind == "finite":
            if len(self.values) == 0:
                raise ModelConstructionError("control_set", "finite set is empty")
            if list(self.values) != sorted(set(self.values)):
                raise ModelConstructionError(
                    "control_set", "finite values must strictly increase"
                )
        else:
            raise ModelConstructionError("control_set", f"unknown kind {self.kind!r}")

    @staticmethod
    def interval(lo: float, hi: float) -> "ControlSet":
        return ControlSet("interval", lo=float(lo), hi=float(hi))

    @staticmethod
    def finite(values: Sequence[float]) -> "ControlSet":
        return ControlSet("finite", values=tuple(float(v) for v in values))

    def contains(self, u) -> bool:
        if self.kind == "interval":
            return bool(np.all((np.asarray(u) >= self.lo) & (np.asarray(u) <= self.hi)))
        return bool(np.all(np.isin(np.asarray(u), self.values)))

    def bounds(self) -> Tuple[float, float]:
        if self.kind == "interval":
            return self.lo, self.hi
        return self.values[0], self.values[-1]

    def grid(self, k: int) -> "ControlGrid":
        """A canonical K-point grid inside the set.

        Interval sets discretize uniformly (endpoints included); finite sets
        return their own values and ignore ``k``.
        """
        if self.kind == "finite":
            return ControlGrid(self.values)
        if k < 1:
            raise ModelConstructionError("control_grid", "need K >= 1")
        if k == 1:
            return ControlGrid((self.lo,))
        return ControlGrid(tuple(np.linspace(self.lo, self.hi, k)))

    def to_dict(self) -> dict:
        if self.kind == "interval":
            return {"kind": "interval", "lo": self.lo, "hi": self.hi}
        return {"kind": "finite", "values": list(self.values)}

    @staticmethod
    def from_dict(d: dict) -> "ControlSet":
        if not isinstance(d, dict) or "kind" not in d:
            raise ModelConstructionError("control_set", "expected object with 'kind'")
        if d["kind"] == "interval":
            extra = set(d) - {"kind", "lo", "hi"}
            if extra:
                raise ModelConstructionError("control_set", f"unknown fields {sorted(extra)!r}")
            return ControlSet.interval(d.get("lo", 0.0), d.get("hi", 0.0))
        if d["kind"] == "finite":
            extra = set(d) - {"kind", "values"}
            if extra:
                raise ModelConstructionError("control_set", f"unknown fields {sorted(extra)!r}")
            return ControlSet.finite(d.get("values", ()))
        raise ModelConstructionError("control_set", f"unknown kind {d['kind']!r}")


@dataclass(frozen=True)
class ControlGrid:
    """Finite ordered subset of the control set used to realize the infimum."""

    points: Tuple[float, ...]

    def __post_init__(self):
        if len(self.points) < 1:
            raise ModelConstructionError("control_grid", "need at least one point")
        if list(self.points) != sorted(set(self.points)):
            raise ModelConstructionError("control_grid", "points must strictly increase")

    def __len__(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float)

    def refine(self) -> "ControlGrid":
        """Nested refinement with 2K-1 points (midpoints inserted)."""
        pts = self.as_array()
        if len(pts) == 1:
            return self
        mids = 0.5 * (pts[:-1] + pts[1:])
        return ControlGrid(tuple(np.sort(np.concatenate([pts, mids]))))


@dataclass(frozen=True)
class CoefficientPair:
    """Additively separable coefficient map f(x, u) = state(x) + control(u)."""

    state: CoefficientExpr
    control: CoefficientExpr

    def __call__(self, x, u):
        return self.state(x) + self.control(u)

    def range_on(self, x_window, u_window) -> Tuple[float, float]:
        slo, shi = self.state.range_on(*x_window)
        clo, chi = self.control.range_on(*u_window)
        return slo + clo, shi + chi

    def to_dict(self) -> dict:
        return {"state": self.state.to_dict(), "control": self.control.to_dict()}

    @staticmethod
    def from_dict(d: dict, name: str) -> "CoefficientPair":
        if not isinstance(d, dict):
            raise ModelConstructionError(name, "expected an object")
        extra = set(d) - {"state", "control"}
        if extra:
            raise ModelConstructionError(name, f"unknown fields {sorted(extra)!r}")
        state = CoefficientExpr.from_dict(d["state"]) if "state" in d else constant(0.0)
        ctrl = CoefficientExpr.from_dict(d["control"]) if "control" in d else constant(0.0)
        return CoefficientPair(state, ctrl)


@dataclass(frozen=True)
class ProblemMetadata:
    """Declared bounds backing the model hypotheses.

    ``ellipticity`` is the floor for sigma (0 disables the check; only
    degenerate test fixtures should do that).  ``cost_bound`` is sup|l| or
    +inf for unbounded costs, in which case the growth pair (C, m) with
    |l(x,u)| <= C (1 + |x|^m) applies.
    """

    ellipticity: float
    drift_bound: float
    diffusion_bound: float
    cost_bound: float
    growth_const: float
    growth_power: float

    def __post_init__(self):
        if self.ellipticity < 0:
            raise ModelConstructionError("ellipticity", "floor must be >= 0")
        if self.growth_power < 0:
            raise ModelConstructionError("growth_power", "need m >= 0")
        if self.growth_const <= 0:
            raise ModelConstructionError("growth_const", "need C > 0")

    @property
    def cost_is_bounded(self) -> bool:
        return math.isfinite(self.cost_bound)


class ControlProblem:
    """Discounted stochastic control problem on the real line (n = 1)."""

    def __init__(
        self,
        drift: CoefficientPair,
        diffusion: CoefficientPair,
        cost: CoefficientPair,
        rho: float,
        control_set: ControlSet,
        metadata: Optional[ProblemMetadata] = None,
        state_dim: int = 1,
    ):
        if state_dim != 1:
            raise ModelConstructionError("state_dim", "only n = 1 is supported")
        if not (rho > 0):
            raise ModelConstructionError("rho", "discount rate must be positive")
        self.drift = drift
        self.diffusion = diffusion
        self.cost = cost
        self.rho = float(rho)
        self.control_set = control_set
        self.state_dim = state_dim
        self.metadata = metadata if metadata is not None else self._derive_metadata()

    def _derive_metadata(self) -> ProblemMetadata:
        uw = self.control_set.bounds()
        xw = (-_INF, _INF)
        blo, bhi = self.drift.range_on(xw, uw)
        slo, shi = self.diffusion.range_on(xw, uw)
        llo, lhi = self.cost.range_on(xw, uw)
        cost_bound = max(abs(llo), abs(lhi))
        if math.isfinite(cost_bound):
            growth_const, growth_power = max(cost_bound, 1e-300), 0.0
        else:
            growth_const, growth_power = 1.0, 2.0
        return ProblemMetadata(
            ellipticity=max(slo, 0.0),
            drift_bound=max(abs(blo), abs(bhi)),
            diffusion_bound=max(abs(slo), abs(shi)),
            cost_bound=cost_bound,
            growth_const=growth_const,
            growth_power=growth_power,
        )

    # ------------------------------------------------------------------
    # coefficient evaluation (checked)
    # ------------------------------------------------------------------
    def _require_control(self, u: float):
        if not self.control_set.contains(u):
            raise InvalidControlError(f"control {u!r} outside {self.control_set}")

    def eval_drift(self, x, u: float):
        self._require_control(u)
        return self.drift(x, u)

    def eval_diffusion(self, x, u: float):
        self._require_control(u)
        val = self.diffusion(x, u)
        lam = self.metadata.ellipticity
        if lam > 0.0:
            bad = np.asarray(val) < lam
            if np.any(bad):
                xb = np.asarray(x)[bad] if np.ndim(x) else x
                vb = np.asarray(val)[bad] if np.ndim(val) else val
                x0 = float(np.ravel(xb)[0]) if np.ndim(xb) else float(xb)
                v0 = float(np.ravel(vb)[0]) if np.ndim(vb) else float(vb)
                raise EllipticityError(x0, u, v0, lam)
        return val

    def eval_cost(self, x, u: float):
        self._require_control(u)
        val = self.cost(x, u)
        c, m = self.metadata.growth_const, self.metadata.growth_power
        bound = c * (1.0 + np.abs(np.asarray(x, dtype=float)) ** m)
        if np.any(np.abs(val) > bound * (1.0 + 1e-12)):
            raise GrowthBoundError(
                f"|l| exceeded declared growth C(1+|x|^m) with C={c}, m={m}"
            )
        return val

    # ------------------------------------------------------------------
    # Hamiltonians
    # ------------------------------------------------------------------
    def hamiltonian_cv(self, x, p, z, u: float):
        """Per-control integrand b p + (1/2) sigma^2 z + l."""
        b = self.eval_drift(x, u)
        s = self.eval_diffusion(x, u)
        l = self.eval_cost(x, u)
        return b * p + 0.5 * s * s * z + l

    def hamiltonian_min(self, x, p, z, grid: ControlGrid) -> Tuple[float, int]:
        """Minimum of the per-control integrand over ``grid``.

        Ties break to the smallest grid index, fixing one measurable
        selection among the minimizers.
        """
        best_v = _INF
        best_i = 0
        for i, u in enumerate(grid.points):
            v = self.hamiltonian_cv(x, p, z, u)
            if v < best_v:
                best_v = v
                best_i = i
        return best_v, best_i

    def hamiltonian_min_many(
        self, x: np.ndarray, p: np.ndarray, z: np.ndarray, grid: ControlGrid
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Vectorized ``hamiltonian_min`` over aligned arrays."""
        x = np.asarray(x, dtype=float)
        best_v = np.full(x.shape, _INF)
        best_i = np.zeros(x.shape, dtype=np.int64)
        for i, u in enumerate(grid.points):
            v = self.hamiltonian_cv(x, p, z, u)
            better = v < best_v
            best_v = np.where(better, v, best_v)
            best_i = np.where(better, i, best_i)
        return best_v, best_i

    # ------------------------------------------------------------------
    # introspection
    # ------------------------------------------------------------------
    def breakpoints(self) -> Tuple[float, ...]:
        """Sorted union of the state-coefficient breakpoints."""
        pts = set()
        for pair in (self.drift, self.diffusion, self.cost):
            pts.update(pair.state.breakpoints())
        return tuple(sorted(pts))

    @property
    def cost_scale(self) -> float:
        """Natural value-function scale sup|l| / rho (inf when l unbounded)."""
        return self.metadata.cost_bound / self.rho

    def tail_bound(self, horizon: float) -> float:
        """Deterministic bound on the discarded tail of the cost integral."""
        if not self.metadata.cost_is_bounded:
            return _INF
        return math.exp(-self.rho * horizon) * self.cost_scale

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "control_set": self.control_set.to_dict(),
            "drift": self.drift.to_dict(),
            "diffusion": self.diffusion.to_dict(),
            "cost": self.cost.to_dict(),
            "metadata": {
                "ellipticity": self.metadata.ellipticity,
                "drift_bound": self.metadata.drift_bound,
                "diffusion_bound": self.metadata.diffusion_bound,
                "cost_bound": None
                if not self.metadata.cost_is_bounded
                else self.metadata.cost_bound,
                "growth_const": self.metadata.growth_const,
                "growth_power": self.metadata.growth_power,
            },
        }

    @staticmethod
    def from_dict(d: dict) -> "ControlProblem":
        if not isinstance(d, dict):
            raise ModelConstructionError("problem", "expected a JSON object")
        allowed = {"rho", "control_set", "drift", "diffusion", "cost", "metadata"}
        extra = set(d) - allowed
        if extra:
            raise ModelConstructionError("problem", f"unknown fields {sorted(extra)!r}")
        for key in ("rho", "control_set", "drift", "diffusion", "cost"):
            if key not in d:
                raise ModelConstructionError(key, "missing required field")
        metadata = None
        if "metadata" in d and d["metadata"] is not None:
            md = d["metadata"]
            allowed_md = {
                "ellipticity",
                "drift_bound",
                "diffusion_bound",
                "cost_bound",
                "growth_const",
                "growth_power",
            }
            extra = set(md) - allowed_md
            if extra:
                raise ModelConstructionError("metadata", f"unknown fields {sorted(extra)!r}")
            cost_bound = md.get("cost_bound", None)
            metadata = ProblemMetadata(
                ellipticity=float(md.get("ellipticity", 0.0)),
                drift_bound=float(md.get("drift_bound", _INF)),
                diffusion_bound=float(md.get("diffusion_bound", _INF)),
                cost_bound=_INF if cost_bound is None else float(cost_bound),
                growth_const=float(md.get("growth_const", 1.0)),
                growth_power=float(md.get("growth_power", 0.0)),
            )
        return ControlProblem(
            drift=CoefficientPair.from_dict(d["drift"], "drift"),
            diffusion=CoefficientPair.from_dict(d["diffusion"], "diffusion"),
            cost=CoefficientPair.from_dict(d["cost"], "cost"),
            rho=float(d["rho"]),
            control_set=ControlSet.from_dict(d["control_set"]),
            metadata=metadata,
        )


# ----------------------------------------------------------------------
# the advertising/goodwill instance
# ----------------------------------------------------------------------
@dataclass(frozen=True)
class AdvertisingParams:
    """Parameters of the goodwill model.

    Dynamics dy = [a(y) + c u] dt + [nu(y) + gamma u] dW with investment rate
    u in [0, u_max]; running cost h(u) - g(y); a <= 0 bounded (possibly
    discontinuous), nu >= delta > 0, g bounded (possibly discontinuous).
    """

    deterioration: CoefficientExpr
    effectiveness: float
    noise_base: CoefficientExpr
    noise_gain: float
    u_max: float
    spend_cost: CoefficientExpr
    utility: CoefficientExpr
    rho: float
    floor: float

    def validate(self):
        if self.effectiveness <= 0:
            raise ModelConstructionError("effectiveness", "need c > 0")
        if self.noise_gain < 0:
            raise ModelConstructionError("noise_gain", "need gamma >= 0")
        if self.u_max <= 0:
            raise ModelConstructionError("u_max", "need u_max > 0")
        if self.rho <= 0:
            raise ModelConstructionError("rho", "need rho > 0")
        if self.floor <= 0:
            raise ModelConstructionError("floor", "need delta > 0")
        a_lo, a_hi = self.deterioration.range_on()
        if a_hi > 0:
            raise ModelConstructionError("deterioration", "a(x) must be <= 0")
        if not math.isfinite(a_lo):
            raise ModelConstructionError("deterioration", "a(x) must be bounded")
        n_lo, n_hi = self.noise_base.range_on()
        if n_lo < self.floor:
            raise ModelConstructionError("noise_base", f"nu(x) must be >= {self.floor}")
        if not math.isfinite(n_hi):
            raise ModelConstructionError("noise_base", "nu(x) must be bounded")
        g_lo, g_hi = self.utility.range_on()
        if not (math.isfinite(g_lo) and math.isfinite(g_hi)):
            raise ModelConstructionError("utility", "g(x) must be bounded")


def make_advertising_problem(params: AdvertisingParams) -> ControlProblem:
    """Assemble the goodwill model as a generic control problem."""
    params.validate()
    c = float(params.effectiveness)
    gamma = float(params.noise_gain)
    u_set = ControlSet.interval(0.0, params.u_max)
    drift = CoefficientPair(params.deterioration, poly([0.0, c]))
    diffusion = CoefficientPair(params.noise_base, poly([0.0, gamma]))
    # l(x, u) = h(u) - g(x): negate the utility into the state part.
    g = params.utility
    neg_g = CoefficientExpr(
        g.breaks,
        tuple(tuple(-ci for ci in cs) for cs in g.piece_coeffs),
        tuple(-h for h in g.piece_hi),
        tuple(-lo for lo in g.piece_lo),
        kind=g.kind,
    )
    cost = CoefficientPair(neg_g, params.spend_cost)

    uw = (0.0, params.u_max)
    a_lo, a_hi = params.deterioration.range_on()
    n_lo, n_hi = params.noise_base.range_on()
    l_lo, l_hi = cost.range_on((-_INF, _INF), uw)
    metadata = ProblemMetadata(
        ellipticity=params.floor,
        drift_bound=max(abs(a_lo), abs(a_hi + c * params.u_max)),
        diffusion_bound=n_hi + gamma * params.u_max,
        cost_bound=max(abs(l_lo), abs(l_hi)),
        growth_const=max(max(abs(l_lo), abs(l_hi)), 1e-300),
        growth_power=0.0,
    )
    return ControlProblem(drift, diffusion, cost, params.rho, u_set, metadata)


# ----------------------------------------------------------------------
# built-in problems
# ----------------------------------------------------------------------
def _constant_unit_cost() -> ControlProblem:
    return ControlProblem(
        drift=CoefficientPair(constant(0.0), constant(0.0)),
        diffusion=CoefficientPair(constant(1.0), constant(0.0)),
        cost=CoefficientPair(constant(1.0), constant(0.0)),
        rho=0.5,
        control_set=ControlSet.interval(0.0, 1.0),
        metadata=ProblemMetadata(1.0, 0.0, 1.0, 1.0, 1.0, 0.0),
    )


def _ou_quadratic() -> ControlProblem:
    # dy = -0.5 y dt + dW (drift clipped far outside the working box),
    # l = y^2, rho = 1; closed form v(x) = x^2/2 + 1/2.
    return ControlProblem(
        drift=CoefficientPair(poly([0.0, -0.5], -10.0, 10.0), constant(0.0)),
        diffusion=CoefficientPair(constant(1.0), constant(0.0)),
        cost=CoefficientPair(poly([0.0, 0.0, 1.0]), constant(0.0)),
        rho=1.0,
        control_set=ControlSet.finite([0.0]),
        metadata=ProblemMetadata(1.0, 10.0, 1.0, _INF, 1.0, 2.0),
    )


def default_advertising_params() -> AdvertisingParams:
    """Defaults for the demo goodwill model (all artifact choices)."""
    return AdvertisingParams(
        deterioration=piecewise([1.0], [constant(-0.3), constant(-0.6)]),
        effectiveness=1.0,
        noise_base=constant(0.4),
        noise_gain=0.1,
        u_max=1.0,
        spend_cost=poly([0.0, 0.0, 1.0]),
        utility=piecewise([0.5], [constant(0.0), constant(1.0)]),
        rho=0.5,
        floor=0.4,
    )


def _advertising_default() -> ControlProblem:
    return make_advertising_problem(default_advertising_params())


_BUILTINS = {
    "constant-unit-cost": _constant_unit_cost,
    "ou-quadratic": _ou_quadratic,
    "advertising-default": _advertising_default,
}

BUILTIN_NAMES = tuple(sorted(_BUILTINS))


def builtin_problem(name: str) -> ControlProblem:
    if name not in _BUILTINS:
        raise ModelConstructionError(
            "problem", f"unknown builtin {name!r}; choices: {', '.join(BUILTIN_NAMES)}"
        )
    return _BUILTINS[name]()


def load_problem(source: Union[str, dict]) -> ControlProblem:
    """Load a problem from a builtin name, a JSON file path, or a dict."""
    if isinstance(source, dict):
        return ControlProblem.from_dict(source)
    if source in _BUILTINS:
        return _BUILTINS[source]()
    try:
        with open(source, "r") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ModelConstructionError("problem", f"cannot read {source!r}: {exc}")
    except json.JSONDecodeError as exc:
        raise ModelConstructionError("problem", f"malformed JSON in {source!r}: {exc}")
    return ControlProblem.from_dict(data)
