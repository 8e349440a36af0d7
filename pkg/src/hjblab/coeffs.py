"""Serializable scalar coefficient expressions.

A coefficient is a Borel-measurable map of one real variable built from three
kinds: a constant, a clipped polynomial, or a piecewise combination of the
first two over a partition of the real line.  Piecewise pieces follow the
left-closed/right-open convention at breakpoints, i.e. the piece starting at a
breakpoint owns it.  Evaluation is deliberately simple (piece scan, Horner,
clip) so the compiled simulation kernel and the pure-Python fallback can
reproduce it operation for operation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence, Tuple

import numpy as np

from .errors import ModelConstructionError

__all__ = ["CoefficientExpr", "constant", "poly", "piecewise"]

_INF = float("inf")


@dataclass(frozen=True)
class CoefficientExpr:
    """One scalar coefficient map.

    Stored in flattened piecewise form: ``breaks`` are the interior
    breakpoints (possibly empty) and piece ``j`` applies on
    ``[breaks[j-1], breaks[j])`` (extending to -inf on the left and +inf on
    the right).  Each piece is a polynomial in the power basis with a clip
    range ``[lo, hi]`` applied to the evaluated value.
    """

    breaks: Tuple[float, ...]
    piece_coeffs: Tuple[Tuple[float, ...], ...]
    piece_lo: Tuple[float, ...]
    piece_hi: Tuple[float, ...]
    kind: str = field(default="constant")

    def __post_init__(self):
        if len(self.piece_coeffs) != len(self.breaks) + 1:
            raise ModelConstructionError(
                "pieces", "need exactly one more piece than breakpoints"
            )
        if len(self.piece_lo) != len(self.piece_coeffs) or len(self.piece_hi) != len(
            self.piece_coeffs
        ):
            raise ModelConstructionError("clip", "clip bounds must match piece count")
        if any(not math.isfinite(b) for b in self.breaks):
            raise ModelConstructionError("breaks", "breakpoints must be finite")
        if list(self.breaks) != sorted(set(self.breaks)):
            raise ModelConstructionError("breaks", "breakpoints must strictly increase")
        for cs in self.piece_coeffs:
            if len(cs) == 0:
                raise ModelConstructionError("coeffs", "empty coefficient list")
            if any(not math.isfinite(c) for c in cs):
                raise ModelConstructionError("coeffs", "coefficients must be finite")
        for lo, hi in zip(self.piece_lo, self.piece_hi):
            if math.isnan(lo) or math.isnan(hi) or lo > hi:
                raise ModelConstructionError("clip", f"invalid clip range [{lo}, {hi}]")

    # ------------------------------------------------------------------
    # evaluation
    # ------------------------------------------------------------------
    @property
    def n_pieces(self) -> int:
        return len(self.piece_coeffs)

    @property
    def degree(self) -> int:
        return max(len(cs) for cs in self.piece_coeffs) - 1

    def piece_index(self, x: float) -> int:
        """Index of the piece owning ``x`` (left-closed/right-open)."""
        j = 0
        while j < len(self.breaks) and x >= self.breaks[j]:
            j += 1
        return j

    def __call__(self, x):
        if np.ndim(x) == 0:
            return self._eval_scalar(float(x))
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(np.asarray(self.breaks), x, side="right")
        coeffs = self.coeff_matrix()
        acc = coeffs[idx, coeffs.shape[1] - 1].copy()
        for d in range(coeffs.shape[1] - 2, -1, -1):
            acc = acc * x + coeffs[idx, d]
        lo = np.asarray(self.piece_lo)[idx]
        hi = np.asarray(self.piece_hi)[idx]
        return np.minimum(np.maximum(acc, lo), hi)

    def _eval_scalar(self, x: float) -> float:
        j = self.piece_index(x)
        cs = self.piece_coeffs[j]
        deg = self.degree
        # Horner over the padded degree so scalar, vector and kernel paths
        # round identically.
        acc = cs[deg] if deg < len(cs) else 0.0
        for d in range(deg - 1, -1, -1):
            c = cs[d] if d < len(cs) else 0.0
            acc = acc * x + c
        if acc < self.piece_lo[j]:
            acc = self.piece_lo[j]
        if acc > self.piece_hi[j]:
            acc = self.piece_hi[j]
        return acc

    def coeff_matrix(self) -> np.ndarray:
        """Piece coefficients padded to a rectangular (pieces, degree+1) array."""
        deg = self.degree
        mat = np.zeros((self.n_pieces, deg + 1))
        for j, cs in enumerate(self.piece_coeffs):
            mat[j, : len(cs)] = cs
        return mat

    # ------------------------------------------------------------------
    # analysis helpers
    # ------------------------------------------------------------------
    def breakpoints(self) -> Tuple[float, ...]:
        return self.breaks

    def range_on(self, lo: float = -_INF, hi: float = _INF) -> Tuple[float, float]:
        """Sound enclosure of the image of ``[lo, hi]``.

        Exact for constants and for polynomials on finite windows (critical
        points plus endpoints); falls back to the clip range when a
        polynomial piece is evaluated over an unbounded window.
        """
        vmin, vmax = _INF, -_INF
        for j, (a, b) in enumerate(self._piece_windows()):
            a, b = max(a, lo), min(b, hi)
            if a > b:
                continue
            pmin, pmax = _poly_range(self.piece_coeffs[j], a, b)
            pmin = min(max(pmin, self.piece_lo[j]), self.piece_hi[j])
            pmax = min(max(pmax, self.piece_lo[j]), self.piece_hi[j])
            vmin = min(vmin, pmin)
            vmax = max(vmax, pmax)
        if vmin > vmax:
            raise ModelConstructionError("range", "empty evaluation window")
        return vmin, vmax

    def sup_abs(self) -> float:
        lo, hi = self.range_on()
        return max(abs(lo), abs(hi))

    def _piece_windows(self) -> Iterator[Tuple[float, float]]:
        edges = (-_INF,) + self.breaks + (_INF,)
        for j in range(self.n_pieces):
            yield edges[j], edges[j + 1]

    # ------------------------------------------------------------------
    # serialization
    # ------------------------------------------------------------------
    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": self.piece_coeffs[0][0]}
        if self.kind == "poly":
            return {
                "kind": "poly",
                "coeffs": list(self.piece_coeffs[0]),
                "clip": [self.piece_lo[0], self.piece_hi[0]],
            }
        pieces = []
        for j in range(self.n_pieces):
            if len(self.piece_coeffs[j]) == 1 and self.piece_lo[j] == -_INF:
                pieces.append({"kind": "constant", "value": self.piece_coeffs[j][0]})
            else:
                pieces.append(
                    {
                        "kind": "poly",
                        "coeffs": list(self.piece_coeffs[j]),
                        "clip": [self.piece_lo[j], self.piece_hi[j]],
                    }
                )
        return {"kind": "piecewise", "breaks": list(self.breaks), "pieces": pieces}

    @staticmethod
    def from_dict(d: dict) -> "CoefficientExpr":
        if not isinstance(d, dict) or "kind" not in d:
            raise ModelConstructionError("coefficient", "expected an object with 'kind'")
        kind = d["kind"]
        if kind == "constant":
            _reject_unknown(d, {"kind", "value"})
            return constant(_num(d, "value"))
        if kind == "poly":
            _reject_unknown(d, {"kind", "coeffs", "clip"})
            clip = d.get("clip", [-_INF, _INF])
            if not isinstance(clip, (list, tuple)) or len(clip) != 2:
                raise ModelConstructionError("clip", "expected [lo, hi]")
            coeffs = d.get("coeffs")
            if not isinstance(coeffs, (list, tuple)) or not coeffs:
                raise ModelConstructionError("coeffs", "expected a non-empty list")
            return poly([float(c) for c in coeffs], float(clip[0]), float(clip[1]))
        if kind == "piecewise":
            _reject_unknown(d, {"kind", "breaks", "pieces"})
            breaks = d.get("breaks")
            pieces = d.get("pieces")
            if not isinstance(breaks, (list, tuple)) or not isinstance(
                pieces, (list, tuple)
            ):
                raise ModelConstructionError("piecewise", "expected breaks and pieces")
            return piecewise(
                [float(b) for b in breaks],
                [CoefficientExpr.from_dict(p) for p in pieces],
            )
        raise ModelConstructionError("kind", f"unknown coefficient kind {kind!r}")


def _num(d: dict, key: str) -> float:
    if key not in d or not isinstance(d[key], (int, float)) or isinstance(d[key], bool):
        raise ModelConstructionError(key, "expected a number")
    return float(d[key])


def _reject_unknown(d: dict, allowed: set):
    extra = set(d) - allowed
    if extra:
        raise ModelConstructionError(
            "coefficient", f"unknown fields {sorted(extra)!r}"
        )


def _poly_range(cs: Sequence[float], a: float, b: float) -> Tuple[float, float]:
    if len(cs) == 1:
        return cs[0], cs[0]
    if not (math.isfinite(a) and math.isfinite(b)):
        # Unbounded window: a non-constant polynomial is unbounded, defer to
        # the clip range (applied by the caller).
        return -_INF, _INF
    xs = [a, b]
    deriv = [c * k for k, c in enumerate(cs)][1:]
    if len(deriv) > 1:
        roots = np.roots(deriv[::-1])
        xs.extend(r.real for r in roots if abs(r.imag) < 1e-12 and a < r.real < b)
    vals = [_horner(cs, x) for x in xs]
    return min(vals), max(vals)


def _horner(cs: Sequence[float], x: float) -> float:
    acc = 0.0
    for c in reversed(cs):
        acc = acc * x + c
    return acc


# ----------------------------------------------------------------------
# constructors
# ----------------------------------------------------------------------
def constant(value: float) -> CoefficientExpr:
    value = float(value)
    if not math.isfinite(value):
        raise ModelConstructionError("value", "constant must be finite")
    return CoefficientExpr((), ((value,),), (-_INF,), (_INF,), kind="constant")


def poly(coeffs: Sequence[float], lo: float = -_INF, hi: float = _INF) -> CoefficientExpr:
    return CoefficientExpr(
        (), (tuple(float(c) for c in coeffs),), (float(lo),), (float(hi),), kind="poly"
    )


def piecewise(breaks: Sequence[float], pieces: Sequence[CoefficientExpr]) -> CoefficientExpr:
    """Combine sub-expressions over a partition given by ``breaks``.

    Nested piecewise pieces are flattened so the stored form is always a flat
    partition of the line.
    """
    breaks = [float(b) for b in breaks]
    if len(pieces) != len(breaks) + 1:
        raise ModelConstructionError("pieces", "need len(breaks) + 1 pieces")
    out_breaks: list = []
    out_coeffs: list = []
    out_lo: list = []
    out_hi: list = []
    edges = [-_INF] + breaks + [_INF]
    for j, piece in enumerate(pieces):
        if not isinstance(piece, CoefficientExpr):
            raise ModelConstructionError("pieces", "pieces must be CoefficientExpr")
        a, b = edges[j], edges[j + 1]
        sub_edges = [a] + [x for x in piece.breaks if a < x < b]
        for left in sub_edges:
            # A sub-window starting at -inf is owned by the inner piece 0.
            k = piece.piece_index(left) if math.isfinite(left) else 0
            if out_coeffs:
                out_breaks.append(left)
            out_coeffs.append(piece.piece_coeffs[k])
            out_lo.append(piece.piece_lo[k])
            out_hi.append(piece.piece_hi[k])
    return CoefficientExpr(
        tuple(out_breaks), tuple(out_coeffs), tuple(out_lo), tuple(out_hi),
        kind="piecewise",
    )
