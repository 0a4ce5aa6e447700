"""Poisson maximum-likelihood fits of decay models to time traces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import optimize

from . import constants
from .dynamics.analytic import two_j1_over_x
from .observables import FWHM_TO_SIGMA, TimeTrace

MODEL_FLOOR = 1e-12
DEFAULT_WINDOW = (13.0, 30.0)
DEFAULT_BUDGET = 10_000
DEFAULT_RESTARTS = 3


def poisson_nll(model, counts, floor: float = 0.0) -> float:
    """sum(m - k ln m) with constants dropped.

    Raises ValueError if any model value is <= 0 or below ``floor``.
    """
    m = np.asarray(model, dtype=float)
    k = np.asarray(counts, dtype=float)
    if np.any(m <= 0) or np.any(m < floor):
        raise ValueError("model values must be positive and above the floor")
    if np.any(k < 0):
        raise ValueError("counts must be >= 0")
    return float(np.sum(m) - np.sum(k * np.log(m)))


def _hyperfine_envelope(t, gamma, broadening, splitting):
    sig = broadening * FWHM_TO_SIGMA * gamma
    return np.cos(0.5 * splitting * gamma * t) * np.exp(-0.5 * (sig * t) ** 2)


def _exp_shape(t, p, gamma):
    (rate,) = p
    return np.exp(-rate * gamma * t)


def _gi_shape(t, p, gamma):
    rate, broadening, splitting = p
    return np.exp(-rate * gamma * t) * _hyperfine_envelope(t, gamma, broadening, splitting) ** 2


def _fc_shape(t, p, gamma):
    thickness, broadening, splitting = p
    u = np.sqrt(gamma * np.clip(t, 0, None) * thickness + 0j)
    beat = np.abs(two_j1_over_x(u)) ** 2
    return np.exp(-gamma * t) * beat * _hyperfine_envelope(t, gamma, broadening, splitting) ** 2


@dataclass(frozen=True)
class ForwardModel:
    """Intensity a * shape(t, p) (+ optional constant background)."""

    name: str
    shape_names: tuple
    shape: Callable

    @property
    def param_names(self) -> tuple:
        return ("amplitude",) + self.shape_names


MODELS = {
    "exp_decay": ForwardModel("exp_decay", ("rate",), _exp_shape),
    "gi_decay": ForwardModel("gi_decay", ("rate", "broadening", "splitting"), _gi_shape),
    "fc_foil": ForwardModel("fc_foil", ("thickness", "broadening", "splitting"), _fc_shape),
}


def evaluate_model(name: str, t, params, gamma: float = constants.FE57_GAMMA, background=None):
    model = MODELS[name]
    t = np.asarray(t, dtype=float)
    out = params[0] * model.shape(t, params[1:], gamma)
    return out if background is None else out + background


@dataclass
class FitProblem:
    model: str
    data: TimeTrace
    bounds: Sequence[tuple]
    init: Sequence[float]
    background: bool = False  # appends a "background" parameter
    gamma: float = constants.FE57_GAMMA
    seed: int = 0
    restarts: int = DEFAULT_RESTARTS
    budget: int = DEFAULT_BUDGET
    # optional pre-scan: {param name: candidate values}; the cartesian grid
    # (other parameters at init) is evaluated and the best points seed the simplex
    grid: Optional[dict] = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {sorted(MODELS)}")
        names = self.param_names
        self.bounds = [tuple(map(float, b)) for b in self.bounds]
        self.init = np.asarray(self.init, dtype=float)
        if len(self.bounds) != len(names) or self.init.size != len(names):
            raise ValueError(f"{self.model} needs {len(names)} parameters {names}")
        for name, (lo, hi), p0 in zip(names, self.bounds, self.init):
            if lo > hi:
                raise ValueError(f"bounds for {name} are reversed")
            if not lo <= p0 <= hi:
                raise ValueError(f"init {name} = {p0} outside bounds [{lo}, {hi}]")
        if self.data.t_grid.size == 0:
            raise ValueError("no data")
        if self.grid:
            for key in self.grid:
                if key not in names:
                    raise ValueError(f"grid parameter {key!r} not in {names}")

    @property
    def param_names(self) -> tuple:
        names = MODELS[self.model].param_names
        return names + ("background",) if self.background else names


@dataclass
class FitResult:
    p_hat: np.ndarray
    nll: float
    converged: bool
    n_eval: int
    param_names: tuple
    covariance: Optional[np.ndarray] = None
    init_nll: float = math.nan
    message: str = ""

    def as_dict(self) -> dict:
        return dict(zip(self.param_names, map(float, self.p_hat)))

    @property
    def stderr(self) -> Optional[np.ndarray]:
        if self.covariance is None:
            return None
        return np.sqrt(np.clip(np.diag(self.covariance), 0, None))


class _Objective:
    """NLL over the free parameters, with the amplitude profiled when possible."""

    def __init__(self, problem: FitProblem):
        self.p = problem
        self.model = MODELS[problem.model]
        self.t = problem.data.t_grid
        self.k = problem.data.values
        self.lo = np.array([b[0] for b in problem.bounds])
        self.hi = np.array([b[1] for b in problem.bounds])
        # amplitude profiling is exact only for m = a f(t)
        self.profile = not problem.background and self.lo[0] < self.hi[0]
        fixed = self.lo == self.hi
        self.free = np.flatnonzero(~fixed)
        if self.profile:
            self.free = self.free[self.free != 0]
        self.n_eval = 0
        self.scale = np.where(self.hi > self.lo, self.hi - self.lo, 1.0)
        self.scale = np.where(np.isfinite(self.scale), self.scale, np.maximum(np.abs(problem.init), 1.0))

    def full(self, y, template):
        p = template.copy()
        p[self.free] = y * self.scale[self.free]
        if self.profile:
            p[0] = self._amplitude(p)
        return p

    def _shape(self, p):
        return self.model.shape(self.t, p[1 : 1 + len(self.model.shape_names)], self.p.gamma)

    def _amplitude(self, p):
        f = self._shape(p)
        f = np.maximum(f, MODEL_FLOOR * max(np.max(f), 0.0))
        sf = np.sum(f)
        a = np.sum(self.k) / sf if sf > 0 else self.lo[0]
        return float(np.clip(a, self.lo[0], self.hi[0]))

    def nll(self, p):
        self.n_eval += 1
        if np.any(p < self.lo) or np.any(p > self.hi):
            return math.inf
        m = p[0] * self._shape(p)
        if self.p.background:
            m = m + p[-1]
        top = np.max(m)
        if not np.isfinite(top) or top <= 0:
            return math.inf
        m = np.maximum(m, MODEL_FLOOR * top)
        return poisson_nll(m, self.k)


def fit_mle(problem: FitProblem) -> FitResult:
    """Bounded Nelder-Mead MLE with seeded jittered restarts.

    Deterministic for a given problem (including ``seed``).  On budget
    exhaustion the best point found is returned with ``converged = False``.
    """
    obj = _Objective(problem)
    template = problem.init.copy()
    if obj.profile:
        template[0] = obj._amplitude(template)
    init_nll = obj.nll(template)
    rng = np.random.default_rng(problem.seed)
    names = problem.param_names

    if obj.free.size == 0:
        return FitResult(template, init_nll, True, obj.n_eval, names, None, init_nll, "no free parameters")

    lo_y = obj.lo[obj.free] / obj.scale[obj.free]
    hi_y = obj.hi[obj.free] / obj.scale[obj.free]
    y_bounds = list(zip(lo_y, hi_y))

    def f(y):
        return obj.nll(obj.full(y, template))

    seeds = [template[obj.free] / obj.scale[obj.free]]
    if problem.grid:
        seeds = _grid_seeds(obj, problem, template, problem.restarts + 1) + seeds
    fatol = 1e-11 * max(1.0, abs(init_nll)) if np.isfinite(init_nll) else 1e-9
    options = {"xatol": 1e-9, "fatol": fatol, "adaptive": True}

    best_y, best_f = seeds[-1], f(seeds[-1])
    converged = False
    message = ""
    starts = list(seeds)
    for attempt in range(problem.restarts):
        starts.append(None)  # jittered restart around the incumbent
    for start in starts:
        if start is None:
            width = np.where(np.isfinite(hi_y - lo_y), hi_y - lo_y, 1.0)
            start = np.clip(best_y + 0.05 * width * rng.standard_normal(best_y.size), lo_y, hi_y)
        remaining = problem.budget - obj.n_eval
        if remaining <= 0:
            message = "evaluation budget exhausted"
            converged = False
            break
        res = optimize.minimize(
            f, start, method="Nelder-Mead", bounds=y_bounds, options=dict(options, maxfev=remaining)
        )
        if res.fun <= best_f:
            best_y, best_f = res.x, res.fun
            converged = bool(res.success)
            message = res.message
    p_hat = obj.full(best_y, template)
    nll = obj.nll(p_hat)
    cov = _covariance(obj, p_hat)
    return FitResult(p_hat, nll, converged, obj.n_eval, names, cov, init_nll, str(message))


def _grid_seeds(obj: _Objective, problem: FitProblem, template, n_best: int) -> list:
    names = problem.param_names
    keys = [k for k in problem.grid if names.index(k) in obj.free]
    if not keys:
        return []
    axes = [np.asarray(problem.grid[k], dtype=float) for k in keys]
    cols = [names.index(k) for k in keys]
    scored = []
    for combo in np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(keys), -1).T:
        p = template.copy()
        p[cols] = combo
        p = np.clip(p, obj.lo, obj.hi)
        if obj.profile:
            p[0] = obj._amplitude(p)
        scored.append((obj.nll(p), tuple(p[obj.free])))
    scored.sort(key=lambda item: item[0])
    picked = []
    for _, free_vals in scored[: max(n_best, 1)]:
        picked.append(np.array(free_vals) / obj.scale[obj.free])
    return picked


def _covariance(obj: _Objective, p_hat) -> Optional[np.ndarray]:
    """Inverse finite-difference Hessian of the NLL over all free parameters."""
    idx = np.flatnonzero(obj.lo < obj.hi)
    if idx.size == 0:
        return None
    saved = obj.profile
    obj.profile = False
    try:
        h = 1e-4 * np.maximum(np.abs(p_hat[idx]), 1e-8)
        n = idx.size
        hess = np.empty((n, n))

        def g(delta):
            p = p_hat.copy()
            p[idx] += delta
            p = np.clip(p, obj.lo, obj.hi)
            return obj.nll(p)

        f0 = g(np.zeros(n))
        for i in range(n):
            for j in range(i, n):
                ei = np.zeros(n)
                ej = np.zeros(n)
                ei[i] = h[i]
                ej[j] = h[j]
                val = (g(ei + ej) - g(ei - ej) - g(-ei + ej) + g(-ei - ej)) / (4 * h[i] * h[j])
                if i == j:
                    val = (g(ei) - 2 * f0 + g(-ei)) / h[i] ** 2
                hess[i, j] = hess[j, i] = val
        if not np.all(np.isfinite(hess)):
            return None
        try:
            inv = np.linalg.inv(hess)
        except np.linalg.LinAlgError:
            return None
        if np.any(np.diag(inv) < 0):
            return None
        cov = np.zeros((p_hat.size, p_hat.size))
        cov[np.ix_(idx, idx)] = inv
        return cov
    finally:
        obj.profile = saved


def extract_speedup(
    trace: TimeTrace,
    window: tuple = DEFAULT_WINDOW,
    gamma: float = constants.FE57_GAMMA,
    rate_bounds: tuple = (0.0, 1000.0),
) -> float:
    """Initial decay rate (units of gamma) from an exponential MLE over ``window``.

    Counts are used when present; a noiseless intensity trace is fitted as if
    it were expected counts.
    """
    t_min, t_max = window
    if not t_min < t_max:
        raise ValueError("window must have t_min < t_max")
    if t_min < trace.t_grid.min() - 1e-9 or t_max > trace.t_grid.max() + 1e-9:
        raise ValueError(f"window {window} lies outside the trace")
    sel = (trace.t_grid >= t_min) & (trace.t_grid <= t_max)
    if not sel.any():
        raise ValueError("empty window")
    if sel.sum() < 5:
        raise ValueError(f"window holds {sel.sum()} bins; need at least 5")
    values = trace.values[sel]
    if not np.any(values > 0):
        raise ValueError("all-zero data in window")
    t = trace.t_grid[sel]
    # log-linear estimate as the starting point
    pos = values > 0
    slope = np.polyfit(t[pos], np.log(values[pos]), 1)[0] if pos.sum() >= 2 else -gamma
    rate0 = float(np.clip(-slope / gamma, rate_bounds[0], rate_bounds[1]))
    windowed = TimeTrace(t, values, None, gate=(max(t_min, 0.0), min(t_max, constants.REPETITION_PERIOD_NS)))
    problem = FitProblem(
        "exp_decay",
        windowed,
        bounds=[(0.0, math.inf), rate_bounds],
        init=[1.0, rate0],
        gamma=gamma,
    )
    return float(fit_mle(problem).p_hat[1])


def fit_foil_scan(traces: Sequence[TimeTrace], init, bounds, **kw) -> list:
    """fc_foil fits for a sequence of traces sharing bounds and init."""
    return [fit_mle(FitProblem("fc_foil", tr, bounds, init, **kw)) for tr in traces]


def proportionality_fit(lengths, thickness, sigma=None):
    """Weighted linear regression thickness = slope * L + intercept.

    Returns (slope, intercept, slope_err, intercept_err).
    """
    x = np.asarray(lengths, dtype=float)
    y = np.asarray(thickness, dtype=float)
    w = None if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
    coef, cov = np.polyfit(x, y, 1, w=w, cov="unscaled" if w is not None else True)
    return float(coef[0]), float(coef[1]), float(math.sqrt(cov[0, 0])), float(math.sqrt(cov[1, 1]))
