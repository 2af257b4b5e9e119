"""Finite-size scaling collapse: rescaled data families, collapse measures,
exponent optimization, and the collapse quality factor.

A family A(h, L) obeying A = h^a f(h/L^b) collapses onto the master curve f
when y = A·h^(−a) is plotted against x = h·L^(−b).  The measures quantify
the residual spread: M_kn against a known f, M against per-set interpolants
over pairwise overlapping x-ranges.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize


class NoOverlapError(ValueError):
    """No pair of rescaled sets shares any x-range."""


@dataclass(frozen=True)
class CollapseSet:
    L: float
    h: np.ndarray
    A: np.ndarray
    sigma: np.ndarray | None = None

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        A = np.asarray(self.A, dtype=float)
        if h.ndim != 1 or h.shape != A.shape:
            raise ValueError("h and A must be matching 1-d arrays")
        if h.size < 2 or np.any(np.diff(h) <= 0):
            raise ValueError("h must be strictly increasing with at least 2 points")
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "A", A)
        if self.sigma is not None:
            sig = np.asarray(self.sigma, dtype=float)
            if sig.shape != h.shape:
                raise ValueError("sigma must match h")
            object.__setattr__(self, "sigma", sig)


@dataclass(frozen=True)
class CollapseDataset:
    sets: tuple[CollapseSet, ...]

    def __post_init__(self):
        if len(self.sets) < 2:
            raise ValueError("need at least two sets for a collapse")
        Ls = [s.L for s in self.sets]
        if len(set(Ls)) != len(Ls):
            raise ValueError("set sizes L must be distinct")

    @classmethod
    def from_points(cls, triples) -> "CollapseDataset":
        """Build from (L, h, A[, sigma]) rows."""
        rows = sorted(triples, key=lambda r: (r[0], r[1]))
        sets = []
        current = None
        for row in rows:
            if current is None or row[0] != current[0]:
                current = (row[0], [], [], [])
                sets.append(current)
            current[1].append(row[1])
            current[2].append(row[2])
            current[3].append(row[3] if len(row) > 3 else np.nan)
        out = []
        for L, h, A, sig in sets:
            sig_arr = np.array(sig)
            out.append(CollapseSet(
                L=L, h=np.array(h), A=np.array(A),
                sigma=None if np.all(np.isnan(sig_arr)) else sig_arr))
        return cls(tuple(out))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        has_sigma = any(s.sigma is not None for s in self.sets)
        writer.writerow(["L", "h", "A"] + (["sigma"] if has_sigma else []))
        for s in self.sets:
            for i in range(s.h.size):
                row = [f"{s.L:.17g}", f"{s.h[i]:.17g}", f"{s.A[i]:.17g}"]
                if has_sigma:
                    sig = s.sigma[i] if s.sigma is not None else float("nan")
                    row.append(f"{sig:.17g}")
                writer.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CollapseDataset":
        reader = csv.reader(io.StringIO(text))
        header = None
        triples = []
        for row in reader:
            if not row or row[0].startswith("#"):
                continue
            if header is None:
                header = row
                continue
            vals = [float(v) for v in row]
            triples.append(vals)
        return cls.from_points(triples)


@dataclass
class CollapseResult:
    a: float
    b: float
    measure: float
    contributions: np.ndarray = field(repr=False)  # (n_sets, n_sets) per-pair sums
    n_overlap: int = 0
    boundary_warning: bool = False

    @property
    def valid(self) -> bool:
        return self.n_overlap > 0


def _rescale(dataset: CollapseDataset, a: float, b: float):
    return [(s.h * s.L ** (-b), s.A * s.h ** (-a)) for s in dataset.sets]


def collapse_measure_known(dataset: CollapseDataset, a: float, b: float,
                           f) -> float:
    """Collapse residual against a known master curve f.

    M_kn = sqrt( (1/N) Σ_ij ((A(L_i,h_j)·h_j^(−a) − f(h_j·L_i^(−b))) / f)² )
    over all N points; division by f is essential, so f must be nonzero on
    every evaluated abscissa.
    """
    total = 0.0
    n = 0
    for s in dataset.sets:
        x = s.h * s.L ** (-b)
        y = s.A * s.h ** (-a)
        fx = np.asarray(f(x), dtype=float)
        if np.any(fx == 0.0) or not np.all(np.isfinite(fx)):
            raise ZeroDivisionError("master curve vanishes on an evaluated abscissa")
        total += float((((y - fx) / fx) ** 2).sum())
        n += x.size
    return float(np.sqrt(total / n))


def _interpolant(x: np.ndarray, y: np.ndarray):
    """Monotone-safe piecewise cubic; linear fallback below 4 points."""
    if x.size >= 4:
        return PchipInterpolator(x, y, extrapolate=False)
    return lambda q, x=x, y=y: np.interp(q, x, y)


def collapse_measure(dataset: CollapseDataset, a: float, b: float) -> CollapseResult:
    """Interpolation-based collapse residual over pairwise overlap regions.

    For each basis set p, every point of every other set i whose rescaled
    abscissa lies inside the closed intersection of the two x-ranges
    contributes ((y − E_p(x))/E_p(x))²; M is the root mean square over all
    contributing points.
    """
    scaled = _rescale(dataset, a, b)
    n_sets = len(scaled)
    contributions = np.zeros((n_sets, n_sets))
    total = 0.0
    count = 0
    for p, (xp, yp) in enumerate(scaled):
        order = np.argsort(xp)
        interp = _interpolant(xp[order], yp[order])
        lo, hi = xp.min(), xp.max()
        for i, (xi, yi) in enumerate(scaled):
            if i == p:
                continue
            mask = (xi >= max(lo, xi.min())) & (xi <= min(hi, xi.max()))
            if not np.any(mask):
                continue
            ep = np.asarray(interp(xi[mask]), dtype=float)
            good = np.isfinite(ep) & (ep != 0.0)
            if not np.any(good):
                continue
            resid = (yi[mask][good] - ep[good]) / ep[good]
            contributions[p, i] = float((resid ** 2).sum())
            total += contributions[p, i]
            count += int(good.sum())
    if count == 0:
        raise NoOverlapError(
            "no rescaled x-overlap between any pair of sets at "
            f"(a={a:.3g}, b={b:.3g})")
    return CollapseResult(a=a, b=b, measure=float(np.sqrt(total / count)),
                          contributions=contributions, n_overlap=count)


def optimize_collapse(dataset: CollapseDataset, a_range=(1.4, 2.6),
                      b_range=(0.5, 1.5), grid: int = 41,
                      refine_tol: float = 1e-4) -> CollapseResult:
    """Exponents minimizing the interpolation-based measure.

    Coarse grid scan over the given ranges, then Nelder-Mead refinement from
    the best cell.  The scanned landscape is attached for inspection; an
    optimum at the range boundary sets boundary_warning.
    """
    a_grid = np.linspace(a_range[0], a_range[1], grid)
    b_grid = np.linspace(b_range[0], b_range[1], grid)
    landscape = np.full((grid, grid), np.inf)
    for i, a in enumerate(a_grid):
        for j, b in enumerate(b_grid):
            try:
                landscape[i, j] = collapse_measure(dataset, a, b).measure
            except NoOverlapError:
                continue
    if not np.any(np.isfinite(landscape)):
        raise NoOverlapError("no exponent pair in the ranges produces any overlap")
    i0, j0 = np.unravel_index(np.argmin(landscape), landscape.shape)

    def objective(ab):
        try:
            return collapse_measure(dataset, ab[0], ab[1]).measure
        except NoOverlapError:
            return np.inf

    opt = minimize(objective, x0=[a_grid[i0], b_grid[j0]], method="Nelder-Mead",
                   options={"xatol": refine_tol, "fatol": refine_tol ** 2,
                            "maxiter": 400})
    a_best, b_best = float(opt.x[0]), float(opt.x[1])
    result = collapse_measure(dataset, a_best, b_best)
    result.landscape = landscape  # for inspection
    result.a_grid = a_grid
    result.b_grid = b_grid
    da = a_grid[1] - a_grid[0]
    db = b_grid[1] - b_grid[0]
    result.boundary_warning = bool(
        a_best <= a_range[0] + da or a_best >= a_range[1] - da
        or b_best <= b_range[0] + db or b_best >= b_range[1] - db)
    return result


def quality_factor(noisy: CollapseDataset, ideal: CollapseDataset,
                   a: float = 2.0, b: float = 1.0) -> float:
    """Collapse quality Q = M_ideal(a,b) / M_noisy(a,b) at fixed exponents.

    Q = 1 for the self-ratio; degraded collapse gives Q < 1.  A perfectly
    collapsing noisy family (M = 0) returns +inf.
    """
    m_id = collapse_measure(ideal, a, b).measure
    m_noisy = collapse_measure(noisy, a, b).measure
    if m_noisy == 0.0:
        return float("inf")
    return m_id / m_noisy


def weighted_collapse_measure(dataset: CollapseDataset, a: float, b: float) -> CollapseResult:
    """Extension beyond the plain measure: residuals in units of the supplied
    standard errors (σ·h^(−a)) instead of the interpolant value.  Not used by
    the quality factor; provided for error-bar-aware exploration only.
    """
    scaled = _rescale(dataset, a, b)
    sigmas = [None if s.sigma is None else s.sigma * s.h ** (-a) for s in dataset.sets]
    if any(sig is None for sig in sigmas):
        raise ValueError("weighted measure needs sigma on every set")
    n_sets = len(scaled)
    contributions = np.zeros((n_sets, n_sets))
    total = 0.0
    count = 0
    for p, (xp, yp) in enumerate(scaled):
        order = np.argsort(xp)
        interp = _interpolant(xp[order], yp[order])
        lo, hi = xp.min(), xp.max()
        for i, (xi, yi) in enumerate(scaled):
            if i == p:
                continue
            mask = (xi >= lo) & (xi <= hi)
            if not np.any(mask):
                continue
            ep = np.asarray(interp(xi[mask]), dtype=float)
            sig = sigmas[i][mask]
            good = np.isfinite(ep) & (sig > 0)
            if not np.any(good):
                continue
            resid = (yi[mask][good] - ep[good]) / sig[good]
            contributions[p, i] = float((resid ** 2).sum())
            total += contributions[p, i]
            count += int(good.sum())
    if count == 0:
        raise NoOverlapError("no rescaled x-overlap between any pair of sets")
    return CollapseResult(a=a, b=b, measure=float(np.sqrt(total / count)),
                          contributions=contributions, n_overlap=count)
