"""Numerical trajectories of ``x^(p+1) y' = A(x, y)`` towards ``x = 0``.

Integration runs from ``x_start`` down to ``x_end`` with an embedded
Dormand-Prince 5(4) pair.  Near the singular point the linearised field
has rate ``~|A_0| / x^(p+1)``, so the step is clamped to
``0.5 x^(p+1) / |A_0|``; the asymptotic branch is attracting in the
backward direction, which keeps an explicit scheme stable there.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from math import comb
from typing import Callable, Sequence

import numpy as np

from .odesys import OdeSystem, linear_part
from .series import SeriesVec, jet

# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])

BOX = 10.0
POINTS_PER_DECADE = 64


class DynamicsError(RuntimeError):
    pass


class BlowUp(DynamicsError):
    pass


class StepUnderflow(DynamicsError):
    pass


class ZeroSample(ValueError):
    pass


class UndersampledArc(ValueError):
    pass


class FitDiverged(ValueError):
    pass


@dataclass
class StepStats:
    steps: int = 0
    rejected: int = 0
    evaluations: int = 0


def dopri5(f: Callable, t0: float, y0, t1: float, rtol: float, atol=1e-14,
           t_eval: Sequence[float] | None = None, max_step: Callable | None = None,
           box: float | None = None, h0: float | None = None):
    """Adaptive integration of ``y' = f(t, y)`` from ``t0`` to ``t1``.

    Steps land exactly on every ``t_eval`` point.  Returns ``(ts, ys, stats)``
    with ``ts`` ordered in the direction of integration.
    """
    y = np.array(y0, dtype=complex if np.iscomplexobj(y0) else float)
    atol = np.broadcast_to(np.asarray(atol, dtype=float), y.shape)
    direction = 1.0 if t1 > t0 else -1.0
    if t_eval is None:
        targets = [t1]
    else:
        targets = sorted({float(t) for t in t_eval if direction * (t - t0) >= 0 and direction * (t1 - t) >= 0},
                         key=lambda t: direction * t)
        if not targets or targets[-1] != t1:
            targets.append(t1)
    out_t, out_y = [], []
    if t_eval is not None and any(abs(t - t0) <= 1e-15 * max(1.0, abs(t0)) for t in t_eval):
        out_t.append(t0)
        out_y.append(y.copy())
        targets = [t for t in targets if abs(t - t0) > 1e-15 * max(1.0, abs(t0))]
    stats = StepStats()
    t = t0
    span = abs(t1 - t0)
    h = h0 if h0 is not None else span * 1e-3
    k1 = f(t, y)
    stats.evaluations += 1
    for target in targets:
        while direction * (target - t) > 0:
            hmax = max_step(t) if max_step is not None else span
            h = min(abs(h), hmax, abs(target - t))
            if h < 1e-15 * max(abs(t), 1e-300):
                raise StepUnderflow(f"step size underflow at t={t:.6g}")
            hs = direction * h
            ks = [k1]
            for i in range(1, 7):
                yi = y + hs * sum(a * k for a, k in zip(_A[i], ks))
                ks.append(f(t + _C[i] * hs, yi))
            stats.evaluations += 6
            y5 = y + hs * sum(b * k for b, k in zip(_B5, ks) if b)
            y4 = y + hs * sum(b * k for b, k in zip(_B4, ks) if b)
            scale = atol + rtol * np.maximum(np.abs(y), np.abs(y5))
            err = float(np.sqrt(np.mean((np.abs(y5 - y4) / scale) ** 2)))
            if err <= 1.0 and np.all(np.isfinite(y5)):
                t = target if abs(target - (t + hs)) <= 1e-15 * max(abs(t), 1.0) else t + hs
                y = y5
                k1 = ks[6]
                stats.steps += 1
                if box is not None and float(np.max(np.abs(y))) > box:
                    raise BlowUp(f"|y| = {np.max(np.abs(y)):.3g} left the box {box} at x={t:.6g}")
                fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            else:
                stats.rejected += 1
                fac = 0.2 if not np.isfinite(err) else max(0.2, 0.9 * err ** -0.2)
            h = h * fac
        out_t.append(t)
        out_y.append(y.copy())
    return np.array(out_t), np.array(out_y), stats


@dataclass
class Trajectory:
    """Solution samples on a strictly decreasing grid in ``(0, eps]``."""

    grid: np.ndarray
    values: np.ndarray
    stats: StepStats
    tol: float
    system: OdeSystem | None = None
    steps_taken: np.ndarray | None = None

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if np.any(g <= 0) or np.any(np.diff(g) >= 0):
            raise ValueError("trajectory grid must be positive and strictly decreasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("trajectory values must be finite")
        self.grid = g
        self.values = np.asarray(self.values)

    @property
    def r(self) -> int:
        return self.values.shape[1]

    def at(self, x: float) -> np.ndarray:
        """Value at a grid point (relative match 1e-12), else cubic Hermite."""
        g = self.grid
        i = int(np.argmin(np.abs(g - x)))
        if abs(g[i] - x) <= 1e-12 * x:
            return self.values[i]
        if self.system is None or not (g[-1] <= x <= g[0]):
            raise ValueError(f"x={x} outside the trajectory range or no system to interpolate")
        j = int(np.searchsorted(-g, -x))
        x0, x1 = g[j - 1], g[j]
        y0, y1 = self.values[j - 1], self.values[j]
        fld = self.system.field()
        d0, d1 = fld(x0, y0), fld(x1, y1)
        h = x1 - x0
        s = (x - x0) / h
        h00 = 2 * s ** 3 - 3 * s ** 2 + 1
        h10 = s ** 3 - 2 * s ** 2 + s
        h01 = -2 * s ** 3 + 3 * s ** 2
        h11 = s ** 3 - s ** 2
        return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1

    def component(self, j: int) -> np.ndarray:
        return self.values[:, j]

    def window(self, x_min: float, x_max: float) -> "Trajectory":
        keep = (self.grid >= x_min) & (self.grid <= x_max)
        return Trajectory(self.grid[keep], self.values[keep], self.stats, self.tol, self.system)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            head = ["x"]
            cplx = np.iscomplexobj(self.values)
            for j in range(self.r):
                head += [f"y{j + 1}_re", f"y{j + 1}_im"] if cplx else [f"y{j + 1}"]
            head.append("step")
            w.writerow(head)
            steps = np.abs(np.diff(self.grid, prepend=self.grid[0]))
            for x, v, h in zip(self.grid, self.values, steps):
                row = [format(x, ".17g")]
                for c in v:
                    row += [format(c.real, ".17g"), format(c.imag, ".17g")] if cplx else [format(c, ".17g")]
                row.append(format(h, ".17g"))
                w.writerow(row)


def geometric_grid(x_start: float, x_end: float, per_decade: int = POINTS_PER_DECADE) -> np.ndarray:
    n = max(2, int(math.ceil(per_decade * math.log10(x_start / x_end))) + 1)
    return np.geomspace(x_start, x_end, n)


def _matrix_norm(m) -> float:
    a = np.array([[complex(v) for v in row] for row in m])
    return float(np.linalg.norm(a, 2)) or 1.0


def _clamp(sys: OdeSystem):
    norm = _matrix_norm(linear_part(sys))
    p1 = sys.p + 1
    return lambda x: 0.5 * abs(x) ** p1 / norm


def integrate(sys: OdeSystem, x_start: float, y_start, x_end: float, tol: float = 1e-10,
              grid: Sequence[float] | None = None, box: float = BOX, atol: float | None = None) -> Trajectory:
    """Integrate from ``x_start`` down to ``x_end``; output on ``grid``."""
    if not 0 < x_end < x_start:
        raise ValueError("need 0 < x_end < x_start")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if grid is None:
        grid = geometric_grid(x_start, x_end)
    grid = sorted({float(g) for g in grid if x_end <= g <= x_start} | {x_start, x_end}, reverse=True)
    fld = sys.field()
    y0 = np.asarray(y_start)
    if not np.iscomplexobj(y0) or np.all(np.imag(y0) == 0):
        y0 = np.real(y0).astype(float) if sys.is_real() else y0.astype(complex)
    ts, ys, stats = dopri5(lambda t, y: fld(t, y), x_start, y0, x_end, tol,
                           atol=tol * 1e-3 if atol is None else atol, t_eval=grid,
                           max_step=_clamp(sys), box=box)
    return Trajectory(ts, ys, stats, tol, sys)


def seed(sys: OdeSystem, hv: SeriesVec, x_start: float, terms: int | None = None,
         offset: Sequence[float] | None = None) -> np.ndarray:
    """Partial sum ``J_N H(x_start)`` (least-term truncation) plus ``offset``."""
    if terms is None:
        mags = [max(abs(complex(c[n])) * x_start ** n for c in hv) for n in range(1, hv.order + 1)]
        terms = 1 + int(np.argmin(mags))
    v = np.array([complex(c(x_start, terms)) for c in hv])
    if sys.is_real():
        v = v.real
    if offset is not None:
        v = v + np.asarray(offset)
    return v


# ------------------------------------------------------------------ pairs


def _difference_rhs(sys: OdeSystem):
    """``(x, h, d) -> A(x, h + d) - A(x, h)`` without cancellation in ``d``."""
    terms = [[(e[0], e[1:], complex(c)) for e, c in a.terms.items()] for a in sys.rhs]

    def powdiff(h, d, n):
        # (h + d)^n - h^n, every term carries a factor d
        return sum(comb(n, k) * h ** (n - k) * d ** k for k in range(1, n + 1))

    def g(x, h, d):
        out = []
        for comp in terms:
            s = 0j
            for xe, b, c in comp:
                if not any(b):
                    continue
                acc = 0j
                for i, bi in enumerate(b):
                    if not bi:
                        continue
                    left = 1.0
                    for i2 in range(i):
                        left *= (h[i2] + d[i2]) ** b[i2]
                    right = 1.0
                    for i2 in range(i + 1, len(b)):
                        right *= h[i2] ** b[i2]
                    acc += left * powdiff(h[i], d[i], bi) * right
                s += c * x ** xe * acc
            out.append(s)
        return np.array(out)

    return g


@dataclass
class TrajectoryPair:
    first: Trajectory
    second: Trajectory
    difference: Trajectory   # second - first, integrated on its own scale


def integrate_pair(sys: OdeSystem, x_start: float, y_first, y_second, x_end: float,
                   tol: float = 1e-10, grid: Sequence[float] | None = None,
                   box: float = BOX) -> TrajectoryPair:
    """Two solutions integrated jointly as ``(H, D = G - H)``.

    The difference is error-controlled relative to its own size, so it stays
    accurate long after it drops below the rounding level of ``H``.
    """
    r = sys.r
    if grid is None:
        grid = geometric_grid(x_start, x_end)
    grid = sorted({float(g) for g in grid if x_end <= g <= x_start} | {x_start, x_end}, reverse=True)
    fld = sys.field()
    dif = _difference_rhs(sys)
    p1 = sys.p + 1
    real = sys.is_real()
    h0 = np.asarray(y_first)
    d0 = np.asarray(y_second) - h0
    y0 = np.concatenate([h0, d0]).astype(float if real else complex)

    def f(x, y):
        h, d = y[:r], y[r:]
        dd = dif(x, h, d) / x ** p1
        return np.concatenate([fld(x, h), dd.real if real else dd])

    atol = np.concatenate([np.full(r, tol * 1e-3), np.full(r, 1e-300)])
    ts, ys, stats = dopri5(f, x_start, y0, x_end, tol, atol=atol, t_eval=grid,
                           max_step=_clamp(sys), box=box)
    h = ys[:, :r]
    d = ys[:, r:]
    return TrajectoryPair(Trajectory(ts, h, stats, tol, sys), Trajectory(ts, h + d, stats, tol, sys),
                          Trajectory(ts, d, stats, tol, None))


# ------------------------------------------------------------ diagnostics


def remainder_check(traj: Trajectory, hv: SeriesVec, n_max: int, x_max: float = 0.1) -> list:
    """``C_N = max_x |H(x) - J_N H(x)| / x^(N+1)`` for ``N = 0..n_max``."""
    keep = traj.grid <= x_max
    xs, vals = traj.grid[keep], traj.values[keep]
    out = []
    for n in range(n_max + 1):
        best = 0.0
        for x, v in zip(xs, vals):
            approx = np.array([complex(jet(c, min(n, c.order))(x)) for c in hv])
            best = max(best, float(np.linalg.norm(v - approx)) / x ** (n + 1))
        out.append(best)
    return out


def flow_points(x_points: Sequence[float], z_grid: Sequence[float], p: int) -> list:
    """All abscissae ``x + x^(p+1) z`` needed by :func:`flow_identity_check`."""
    return sorted({float(x + x ** (p + 1) * z) for x in x_points for z in z_grid} | set(map(float, x_points)))


def flow_identity_check(sys: OdeSystem, traj: Trajectory, x_points: Sequence[float],
                        z_grid: Sequence[float], tol: float = 1e-10) -> float:
    """``max |H(x + x^(p+1) z) - Phi_z(x, H(x))|`` with ``Phi`` from the rescaled equation."""
    p = sys.p
    fld = sys.field()
    worst = 0.0
    for x in x_points:
        h = traj.at(x)
        xp = x ** p
        xp1 = x ** (p + 1)

        def g(z, w):
            big = x + xp1 * z
            # dw/dz = (1 + x^p z)^(-p-1) A(X, w) = x^(p+1) A(X, w) / X^(p+1)
            return xp1 * fld(big, w)

        for sign in (1.0, -1.0):
            zs = sorted({float(z) for z in z_grid if sign * z > 0}, key=lambda v: sign * v)
            if not zs:
                continue
            _, ws, _ = dopri5(g, 0.0, h, zs[-1], tol, atol=tol * 1e-3, t_eval=zs)
            for z, w in zip(zs, ws):
                ref = traj.at(x + xp1 * z)
                worst = max(worst, float(np.max(np.abs(ref - w))))
    return worst


def winding(samples: Sequence[complex]) -> float:
    """Total continuous change of argument divided by ``2 pi``."""
    v = np.asarray(samples, dtype=complex)
    if np.any(v == 0):
        raise ZeroSample("winding is undefined through a zero sample")
    steps = np.angle(v[1:] / v[:-1])
    if np.any(np.abs(steps) > 0.9 * math.pi):
        raise UndersampledArc("consecutive samples differ by nearly pi in argument")
    return float(np.sum(steps) / (2 * math.pi))


def winding_grid(x_min: float, x_max: float, rate: float = 1.0, p: int = 1,
                 per_turn: int = 16) -> np.ndarray:
    """Grid uniform in ``rate / (p x^p)``, at least ``per_turn`` samples a turn."""
    s_lo, s_hi = rate / (p * x_max ** p), rate / (p * x_min ** p)
    n = max(8, int(math.ceil(per_turn * (s_hi - s_lo) / (2 * math.pi))) + 1)
    s = np.linspace(s_lo, s_hi, n)
    return (rate / (p * s)) ** (1.0 / p)


def zero_count(samples: Sequence[float]) -> int:
    """Number of strict sign changes (exact zeros are skipped)."""
    s = np.sign(np.real(np.asarray(samples)))
    s = s[s != 0]
    return int(np.sum(s[1:] != s[:-1]))


def exp_order_fit(xs: Sequence[float], fs: Sequence[float],
                  candidates: Sequence[float] = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0)) -> tuple:
    """Fit ``log|f| = c - a x^-k``; returns ``(a, k)``."""
    xs = np.asarray(xs, dtype=float)
    fs = np.abs(np.asarray(fs))
    keep = fs > 0
    xs, fs = xs[keep], fs[keep]
    if len(xs) < 8:
        raise FitDiverged("need at least 8 nonzero samples")
    if xs.max() / xs.min() < 4.0 - 1e-9:
        raise FitDiverged("samples must span a factor of at least 4 in x")
    y = np.log(fs)
    best = None
    for k in candidates:
        design = np.column_stack([np.ones_like(xs), -xs ** (-k)])
        sol, *_ = np.linalg.lstsq(design, y, rcond=None)
        res = float(np.sqrt(np.mean((design @ sol - y) ** 2)))
        if sol[1] > 0 and (best is None or res < best[0]):
            best = (res, k, sol)
    if best is None:
        raise FitDiverged("no decaying exponential fits the samples")
    return float(best[2][1]), float(best[1])


def diagnostics_json(**items) -> str:
    def clean(v):
        if isinstance(v, (np.floating, float)):
            return float(v)
        if isinstance(v, (np.integer,)):
            return int(v)
        if isinstance(v, dict):
            return {k: clean(u) for k, u in v.items()}
        if isinstance(v, (list, tuple, np.ndarray)):
            return [clean(u) for u in v]
        return v
    return json.dumps(clean(items), indent=2)
