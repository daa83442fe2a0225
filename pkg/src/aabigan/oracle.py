"""Closed-form checks of the least-squares objectives on finite (x, z) grids.

Everything here works on explicit probability tables, so the optimal
discriminator, the generator/encoder objective and the Pearson chi-square
relations can be evaluated exactly and compared against brute force.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import torch

from .errors import InvalidInputError, ResourceLimitError
from .objectives import TargetScheme

MASS_TOL = 1e-12
MAX_BRUTE_FORCE_CELLS = 5
MAX_LATTICE_POINTS = 5_000_000


@dataclass(frozen=True)
class DiscreteJoint:
    """Probability table over a finite grid of (x, z) cells.

    ``mass`` may have any shape (e.g. ``(n_x, n_z)``); ``grid`` optionally
    labels the cells in flattened order.
    """

    mass: np.ndarray
    grid: tuple | None = None

    def __post_init__(self):
        m = np.array(self.mass, dtype=np.float64)
        if m.size == 0:
            raise InvalidInputError("empty grid")
        if not np.isfinite(m).all() or (m < 0).any():
            raise InvalidInputError("mass must be finite and non-negative")
        if abs(m.sum() - 1.0) > MASS_TOL:
            raise InvalidInputError(f"mass sums to {m.sum()!r}, not 1")
        if self.grid is not None:
            grid = tuple(self.grid)
            if len(grid) != m.size:
                raise InvalidInputError("one grid label per cell required")
            object.__setattr__(self, "grid", grid)
        m.setflags(write=False)
        object.__setattr__(self, "mass", m)

    @property
    def n_cells(self) -> int:
        return self.mass.size

    @classmethod
    def normalized(cls, weights, grid=None) -> "DiscreteJoint":
        w = np.asarray(weights, dtype=np.float64)
        return cls(w / w.sum(), grid)

    @classmethod
    def random(cls, n_cells: int, rng: np.random.Generator, sparsity: float = 0.0) -> "DiscreteJoint":
        """Dirichlet(1) table; each cell is zeroed with probability ``sparsity`` (at least one stays)."""
        w = rng.dirichlet(np.ones(n_cells))
        if sparsity > 0:
            keep = rng.random(n_cells) >= sparsity
            keep[rng.integers(n_cells)] = True
            w = np.where(keep, w, 0.0)
        return cls.normalized(w)


def _table(p, name: str = "table") -> np.ndarray:
    """Flattened float64 mass of a DiscreteJoint or a plain non-negative array."""
    if isinstance(p, DiscreteJoint):
        return p.mass.reshape(-1)
    arr = np.asarray(p, dtype=np.float64).reshape(-1)
    if not np.isfinite(arr).all() or (arr < 0).any():
        raise InvalidInputError(f"{name} must be finite and non-negative")
    return arr


def _shared(*tables):
    grids = [t.grid for t in tables if isinstance(t, DiscreteJoint) and t.grid is not None]
    if any(g != grids[0] for g in grids[1:]):
        raise InvalidInputError("distributions live on different grids")
    arrays = [_table(t) for t in tables]
    if len({a.size for a in arrays}) != 1:
        raise InvalidInputError("distributions have different cell counts")
    shapes = {t.mass.shape for t in tables if isinstance(t, DiscreteJoint)}
    if len(shapes) > 1:
        raise InvalidInputError("distributions have different grid shapes")
    return arrays


# -- optimal discriminators --------------------------------------------------

def optimal_discriminator(p_plus, p_minus, p_g, scheme: TargetScheme = TargetScheme()) -> np.ndarray:
    """Pointwise minimizer of the three-population least-squares discriminator objective.

    Cells with zero total mass are NaN (undefined).
    """
    pp, pm, pg = _shared(p_plus, p_minus, p_g)
    total = pp + pm + pg
    num = scheme.a * pp + scheme.anomaly_target * pm + scheme.b * pg
    out = np.full_like(total, np.nan)
    np.divide(num, total, out=out, where=total > 0)
    return out


def disjoint_optimal_discriminator(p_plus, p_minus, p_g) -> np.ndarray:
    """Optimal discriminator when anomalies are regressed to the generated target 0.

    Equals the general form for targets (1, 0) with the anomaly target moved to 0;
    it gives ``p+ / (p+ + p- + p_G)``.
    """
    pp, pm, pg = _shared(p_plus, p_minus, p_g)
    total = pp + pm + pg
    out = np.full_like(total, np.nan)
    np.divide(pp, total, out=out, where=total > 0)
    return out


def naive_optimal_discriminator(p_plus, p_g) -> np.ndarray:
    """Two-population optimum ``p+ / (p+ + p_G)`` that ignores anomalies."""
    pp, pg = _shared(p_plus, p_g)
    total = pp + pg
    out = np.full_like(total, np.nan)
    np.divide(pp, total, out=out, where=total > 0)
    return out


def quadratic_vertex_discriminator(p_plus, p_minus, p_g, scheme: TargetScheme = TargetScheme()) -> np.ndarray:
    """Independent route to the optimum: fit each cell's quadratic from three evaluations.

    f(d) = p+(d-a)^2 + p-(d-m)^2 + p_G(d-b)^2 is sampled at m - h, m, m + h
    with h = |a - b| and its vertex is read off the interpolating parabola.
    """
    pp, pm, pg = _shared(p_plus, p_minus, p_g)
    a, b, m = scheme.a, scheme.b, scheme.anomaly_target

    def f(d):
        return pp * (d - a) ** 2 + pm * (d - m) ** 2 + pg * (d - b) ** 2

    h = abs(a - b)
    x0, x1, x2 = m - h, m, m + h
    f0, f1, f2 = f(x0), f(x1), f(x2)
    curv = (f0 - 2.0 * f1 + f2) / (2.0 * h * h)
    slope = (f2 - f0) / (2.0 * h)
    out = np.full_like(pp, np.nan)
    pos = curv > 0
    out[pos] = x1 - slope[pos] / (2.0 * curv[pos])
    return out


def train_table_discriminator(p_plus, p_minus, p_g, scheme: TargetScheme = TargetScheme(),
                              steps: int = 3000, lr: float = 0.05, seed: int = 0) -> np.ndarray:
    """Fit one free discriminator value per cell by Adam on the expected objective.

    The learning rate decays geometrically to ``lr * 1e-3`` so the final
    iterate settles instead of oscillating at the step size. Zero-mass cells
    get NaN.
    """
    pp, pm, pg = (torch.from_numpy(t.copy()) for t in _shared(p_plus, p_minus, p_g))
    gen = torch.Generator().manual_seed(seed)
    d = torch.rand(pp.shape, generator=gen, dtype=torch.float64).requires_grad_(True)
    opt = torch.optim.Adam([d], lr=lr, eps=1e-15)
    sched = torch.optim.lr_scheduler.ExponentialLR(opt, gamma=(1e-3) ** (1.0 / steps))
    for _ in range(steps):
        opt.zero_grad()
        loss = (pp * (d - scheme.a) ** 2 + pm * (d - scheme.anomaly_target) ** 2 + pg * (d - scheme.b) ** 2).sum()
        loss.backward()
        opt.step()
        sched.step()
    out = d.detach().numpy().copy()
    out[(pp + pm + pg).numpy() == 0] = np.nan
    return out


# -- objective values ----------------------------------------------------------

def ge_objective_value(p_plus, p_minus, p_g, d_table, scheme: TargetScheme = TargetScheme()) -> float:
    """Sum over cells of (d - c)^2 (p+ + p- + p_G); zero-mass cells are skipped."""
    pp, pm, pg = _shared(p_plus, p_minus, p_g)
    d = np.asarray(d_table, dtype=np.float64).reshape(-1)
    if d.size != pp.size:
        raise InvalidInputError("discriminator table does not match the grid")
    total = pp + pm + pg
    live = total > 0
    if np.isnan(d[live]).any() or not np.isfinite(d[live]).all():
        raise InvalidInputError("discriminator undefined on a positive-mass cell")
    return float(np.sum((d[live] - scheme.c) ** 2 * total[live]))


def ge_objective_at_optimum(p_plus, p_minus, p_g, scheme: TargetScheme = TargetScheme()) -> float:
    return ge_objective_value(p_plus, p_minus, p_g, optimal_discriminator(p_plus, p_minus, p_g, scheme), scheme)


def ge_minimum_value(scheme: TargetScheme = TargetScheme()) -> float:
    """Lower bound 3((a+b)/2 - c)^2 of the generator/encoder objective."""
    return 3.0 * (scheme.anomaly_target - scheme.c) ** 2


def pearson_chi2(p, q) -> float:
    """Sum of (p - q)^2 / q. Accepts tables or plain non-negative arrays (unnormalized measures)."""
    pa, qa = _shared(p, q)
    if ((pa > 0) & (qa <= 0)).any():
        raise InvalidInputError("q must be positive wherever p is")
    live = qa > 0
    return float(np.sum((pa[live] - qa[live]) ** 2 / qa[live]))


def verify_chi2_identity(p_e, p_g) -> tuple[float, float]:
    """Two-population objective at its optimal discriminator versus a chi-square form.

    With targets 1/0 for the discriminator and 1/2 for the generator/encoder,
    ``lhs`` evaluates the objective cell by cell at ``D* = p_E / (p_E + p_G)``.
    ``rhs`` is a quarter of the chi-square between ``2 p_G`` and ``p_E + p_G``,
    with ``p_E + p_G`` in the denominator.
    """
    pe, pg = _shared(p_e, p_g)
    total = pe + pg
    live = total > 0
    d = pe[live] / total[live]
    lhs = float(np.sum((d - 0.5) ** 2 * total[live]))
    rhs = 0.25 * pearson_chi2(2.0 * pg, total)
    return lhs, rhs


verify_lemma1_identity = verify_chi2_identity


def anomaly_aware_decomposition(p_plus, p_minus, p_g) -> tuple[float, float]:
    """Objective at the anomaly-to-zero optimum versus its chi-square decomposition.

    Requires disjoint supports for ``p+`` and ``p-``. Returns ``(lhs, rhs)`` where
    ``lhs`` is the generator/encoder objective with c = 1/2 at
    ``D = p+ / (p+ + p- + p_G)`` and ``rhs`` is a quarter of the chi-square between
    ``2 p_G`` and ``p+ + p_G`` off the anomaly support, plus a quarter of the
    generated mass on the anomaly support, plus 1/4.
    """
    pp, pm, pg = _shared(p_plus, p_minus, p_g)
    if ((pp > 0) & (pm > 0)).any():
        raise InvalidInputError("p+ and p- supports overlap")
    scheme = TargetScheme(1.0, 0.0, 0.5)
    lhs = ge_objective_value(pp, pm, pg, disjoint_optimal_discriminator(pp, pm, pg), scheme)
    off = pm == 0
    rhs = 0.25 * pearson_chi2(2.0 * pg[off], pp[off] + pg[off]) + 0.25 * pg[~off].sum() + 0.25
    return lhs, float(rhs)


# -- brute force over the simplex ------------------------------------------------

def simplex_lattice(n_cells: int, grid_step: float) -> np.ndarray:
    """All probability vectors with coordinates in multiples of ``grid_step``.

    Built from integer compositions of N = 1/grid_step, so lattice points are exact.
    """
    n = round(1.0 / grid_step)
    if n < 1 or abs(n * grid_step - 1.0) > 1e-9:
        raise InvalidInputError("grid_step must divide 1")
    if n_cells > MAX_BRUTE_FORCE_CELLS:
        raise ResourceLimitError(f"{n_cells} cells exceeds the brute-force limit of {MAX_BRUTE_FORCE_CELLS}")
    count = math.comb(n + n_cells - 1, n_cells - 1)
    if count > MAX_LATTICE_POINTS:
        raise ResourceLimitError(f"{count} lattice points exceeds {MAX_LATTICE_POINTS}")
    # stars and bars: choose the n_cells - 1 bar positions among n + n_cells - 1 slots
    rows = []
    for bars in itertools.combinations(range(n + n_cells - 1), n_cells - 1):
        edges = (-1,) + bars + (n + n_cells - 1,)
        rows.append([edges[i + 1] - edges[i] - 1 for i in range(n_cells)])
    return np.asarray(rows, dtype=np.int64)


@dataclass
class BruteForceResult:
    argmin: DiscreteJoint
    value: float
    ties: list[np.ndarray] = field(default_factory=list)  # other lattice points within 1e-12
    n_evaluated: int = 0


def _objective_many(pp, pm, pg_rows, scheme: TargetScheme) -> np.ndarray:
    total = pp + pm + pg_rows
    num = scheme.a * pp + scheme.anomaly_target * pm + scheme.b * pg_rows
    d = np.divide(num, total, out=np.zeros_like(total), where=total > 0)
    return np.sum((d - scheme.c) ** 2 * total, axis=1)


def brute_force_ge_minimizer_full(p_plus, p_minus, scheme: TargetScheme = TargetScheme(),
                                  grid_step: float = 0.05) -> BruteForceResult:
    pp, pm = _shared(p_plus, p_minus)
    counts = simplex_lattice(pp.size, grid_step)
    n = counts.sum(axis=1)[0]
    candidates = counts / n
    values = _objective_many(pp, pm, candidates, scheme)
    best = int(np.argmin(values))
    ties = [candidates[i] for i in np.flatnonzero(values <= values[best] + 1e-12) if i != best]
    return BruteForceResult(DiscreteJoint(candidates[best]), float(values[best]), ties, len(candidates))


def brute_force_ge_minimizer(p_plus, p_minus, scheme: TargetScheme = TargetScheme(),
                             grid_step: float = 0.05) -> DiscreteJoint:
    """Lattice point p_G minimizing the generator/encoder objective at its own optimal discriminator."""
    return brute_force_ge_minimizer_full(p_plus, p_minus, scheme, grid_step).argmin


def total_variation(p, q) -> float:
    pa, qa = _shared(p, q)
    return 0.5 * float(np.abs(pa - qa).sum())


# -- verification suite ------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float
    n_instances: int
    detail: str = ""
    instance: dict | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class VerificationReport:
    checks: list[CheckResult]
    runtime_seconds: float
    seed: int

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "runtime_seconds": self.runtime_seconds,
            "seed": self.seed,
            "checks": [c.to_dict() for c in self.checks],
        }

    def summary_lines(self) -> list[str]:
        lines = []
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"{status}  {c.name:<48} max_err={c.max_error:.3e} tol={c.tolerance:.0e} n={c.n_instances}"
                         + (f"  {c.detail}" if c.detail else ""))
        lines.append(f"{'ALL PASS' if self.passed else 'FAILED'} ({len(self.failures())} failing, "
                     f"{self.runtime_seconds:.1f}s)")
        return lines


def _run(name: str, tol: float, fn: Callable[[], tuple[float, int, str, dict | None]]) -> CheckResult:
    """Evaluate one check; ``fn`` returns (max_error, n_instances, detail, worst_instance)."""
    try:
        err, n, detail, inst = fn()
    except Exception as exc:  # a crashing check is a failing check
        return CheckResult(name, False, math.inf, tol, 0, f"raised {type(exc).__name__}: {exc}")
    passed = bool(np.isfinite(err) and err <= tol)
    return CheckResult(name, passed, float(err), tol, n, detail, None if passed else inst)


def _random_scheme(rng: np.random.Generator) -> TargetScheme:
    a = rng.uniform(0.5, 1.5)
    b = rng.uniform(-0.5, 0.4)
    return TargetScheme(a, b, rng.uniform(b, a))


def _inst(**arrays) -> dict:
    return {k: (np.asarray(v).tolist() if not isinstance(v, TargetScheme) else v.as_dict()) for k, v in arrays.items()}


def _worst(errors: list[tuple[float, dict]]) -> tuple[float, dict | None]:
    if not errors:
        return 0.0, None
    err, inst = max(errors, key=lambda t: t[0] if np.isfinite(t[0]) else math.inf)
    if any(not np.isfinite(e) for e, _ in errors):
        err = math.inf
    return err, inst


def run_verification_suite(seed: int = 0, n_instances: int = 100, n_trained: int = 5,
                           grid_step: float = 0.05) -> VerificationReport:
    """Run every oracle property and return a named pass/fail report."""
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    checks = []
    scheme0 = TargetScheme(1.0, 0.0, 0.75)

    def chi2_examples():
        errs = [
            (abs(pearson_chi2([0.2, 0.3, 0.5], [0.2, 0.3, 0.5]) - 0.0), _inst(p=[0.2, 0.3, 0.5])),
            (abs(pearson_chi2([1.0, 0.0], [0.5, 0.5]) - 1.0), _inst(p=[1.0, 0.0], q=[0.5, 0.5])),
        ]
        err, inst = _worst(errs)
        return err, len(errs), "", inst

    checks.append(_run("pearson_chi2.examples", 1e-12, chi2_examples))

    def chi2_nonneg():
        errs = []
        for _ in range(n_instances):
            k = int(rng.integers(2, 9))
            p, q = DiscreteJoint.random(k, rng, 0.3), DiscreteJoint.random(k, rng)
            v = pearson_chi2(p, q)
            errs.append((max(0.0, -v), _inst(p=p.mass, q=q.mass)))
            errs.append((abs(pearson_chi2(q, q)), _inst(q=q.mass)))
        err, inst = _worst(errs)
        return err, n_instances, "", inst

    checks.append(_run("pearson_chi2.nonnegative_zero_iff_equal", 1e-12, chi2_nonneg))

    def chi2_asymmetry():
        for i in range(1, 1001):
            p, q = DiscreteJoint.random(3, rng), DiscreteJoint.random(3, rng)
            gap = abs(pearson_chi2(p, q) - pearson_chi2(q, p))
            if gap > 1e-6:
                return 0.0, i, f"asymmetric pair found (gap {gap:.3g})", None
        return math.inf, 1000, "no asymmetric pair found", None

    checks.append(_run("pearson_chi2.asymmetric", 0.0, chi2_asymmetry))

    def identity_random():
        errs = []
        for _ in range(n_instances):
            k = int(rng.integers(2, 9))
            pe, pg = DiscreteJoint.random(k, rng, 0.2), DiscreteJoint.random(k, rng, 0.2)
            lhs, rhs = verify_chi2_identity(pe, pg)
            errs.append((abs(lhs - rhs), _inst(p_e=pe.mass, p_g=pg.mass)))
        err, inst = _worst(errs)
        return err, n_instances, "", inst

    checks.append(_run("chi2_identity", 1e-12, identity_random))

    def identity_special():
        p = DiscreteJoint([0.1, 0.2, 0.3, 0.4])
        eq = max(abs(v) for v in verify_chi2_identity(p, p))
        pe, pg = DiscreteJoint([0.5, 0.5, 0.0, 0.0]), DiscreteJoint([0.0, 0.0, 0.3, 0.7])
        lhs, rhs = verify_chi2_identity(pe, pg)
        expected = 0.25 * pe.mass.sum() + 0.25 * pg.mass.sum()
        return max(eq, abs(lhs - expected), abs(rhs - expected)), 2, "", None

    checks.append(_run("chi2_identity.equal_and_disjoint", 1e-12, identity_special))

    def dstar_examples():
        cell = optimal_discriminator([0.6], [0.3], [0.1], scheme0)[0]
        disjoint = disjoint_optimal_discriminator([0.6], [0.3], [0.1])[0]
        p = DiscreteJoint([0.25, 0.25, 0.5, 0.0])
        equal = optimal_discriminator(p, np.zeros(4), p, TargetScheme(1.0, 0.0, 0.75))
        naive = naive_optimal_discriminator([0.8], [0.2])[0]
        naive_eq = naive_optimal_discriminator(p, p)
        errs = [abs(cell - 0.75), abs(disjoint - 0.6), np.max(np.abs(equal[:3] - 0.5)),
                abs(naive - 0.8), np.max(np.abs(naive_eq[:3] - 0.5)),
                0.0 if np.isnan(equal[3]) and np.isnan(naive_eq[3]) else math.inf]
        return max(errs), len(errs), "", None

    checks.append(_run("optimal_discriminator.examples", 1e-12, dstar_examples))

    def dstar_quadratic():
        errs = []
        for _ in range(n_instances):
            k = int(rng.integers(2, 17))
            pp, pm, pg = (DiscreteJoint.random(k, rng, 0.3) for _ in range(3))
            sch = _random_scheme(rng)
            closed = optimal_discriminator(pp, pm, pg, sch)
            vertex = quadratic_vertex_discriminator(pp, pm, pg, sch)
            same_nan = np.array_equal(np.isnan(closed), np.isnan(vertex))
            live = ~np.isnan(closed)
            e = float(np.max(np.abs(closed[live] - vertex[live]))) if same_nan else math.inf
            errs.append((e, _inst(p_plus=pp.mass, p_minus=pm.mass, p_g=pg.mass, scheme=sch)))
        err, inst = _worst(errs)
        return err, n_instances, "", inst

    checks.append(_run("optimal_discriminator.quadratic_minimization", 1e-12, dstar_quadratic))

    def dstar_trained():
        errs = []
        for i in range(n_trained):
            k = int(rng.integers(4, 65))
            pp, pm, pg = (DiscreteJoint.random(k, rng, 0.2) for _ in range(3))
            sch = _random_scheme(rng)
            closed = optimal_discriminator(pp, pm, pg, sch)
            trained = train_table_discriminator(pp, pm, pg, sch, seed=seed + i)
            live = ~np.isnan(closed)
            errs.append((float(np.max(np.abs(closed[live] - trained[live]))),
                         _inst(p_plus=pp.mass, p_minus=pm.mass, p_g=pg.mass, scheme=sch)))
        err, inst = _worst(errs)
        return err, n_trained, "", inst

    checks.append(_run("optimal_discriminator.gradient_trained", 1e-2, dstar_trained))

    def minimum_two_cell():
        pp, pm = DiscreteJoint([1.0, 0.0]), DiscreteJoint([0.0, 1.0])
        v = ge_objective_at_optimum(pp, pm, pp, scheme0)
        return abs(v - 0.1875), 1, f"value={v!r}", None

    checks.append(_run("ge_objective.two_cell_minimum", 1e-12, minimum_two_cell))

    def d_equals_c():
        pp, pm, pg = (DiscreteJoint.random(5, rng) for _ in range(3))
        return abs(ge_objective_value(pp, pm, pg, np.full(5, scheme0.c), scheme0)), 1, "", None

    checks.append(_run("ge_objective.d_equals_c", 1e-15, d_equals_c))

    def minimum_exact_point():
        errs = []
        for _ in range(n_instances):
            k = int(rng.integers(2, 9))
            pp, pm = DiscreteJoint.random(k, rng, 0.3), DiscreteJoint.random(k, rng, 0.3)
            sch = _random_scheme(rng)
            v = ge_objective_at_optimum(pp, pm, pp, sch)
            errs.append((abs(v - ge_minimum_value(sch)), _inst(p_plus=pp.mass, p_minus=pm.mass, scheme=sch)))
        err, inst = _worst(errs)
        return err, n_instances, "", inst

    checks.append(_run("ge_objective.minimum_at_p_plus", 1e-12, minimum_exact_point))

    def decomposition():
        errs = []
        for _ in range(n_instances):
            k = int(rng.integers(3, 10))
            split = int(rng.integers(1, k))
            cells = rng.permutation(k)
            wp, wm = np.zeros(k), np.zeros(k)
            wp[cells[:split]] = rng.dirichlet(np.ones(split))
            wm[cells[split:]] = rng.dirichlet(np.ones(k - split))
            pp, pm = DiscreteJoint.normalized(wp), DiscreteJoint.normalized(wm)
            pg = DiscreteJoint.random(k, rng, 0.2)
            lhs, rhs = anomaly_aware_decomposition(pp, pm, pg)
            errs.append((abs(lhs - rhs), _inst(p_plus=pp.mass, p_minus=pm.mass, p_g=pg.mass)))
        err, inst = _worst(errs)
        return err, n_instances, "", inst

    checks.append(_run("anomaly_aware_decomposition.disjoint_supports", 1e-12, decomposition))

    brute_instances = []
    for _ in range(10):
        pp = DiscreteJoint.random(3, rng)
        pm = DiscreteJoint.random(3, rng, 0.3)
        brute_instances.append((pp, pm, _random_scheme(rng) if brute_instances else scheme0))
    brute_results = [brute_force_ge_minimizer_full(pp, pm, sch, grid_step) for pp, pm, sch in brute_instances]

    def brute_argmin():
        errs = []
        for (pp, pm, sch), res in zip(brute_instances, brute_results):
            tv = total_variation(res.argmin, pp)
            errs.append((max(0.0, tv - grid_step), _inst(p_plus=pp.mass, p_minus=pm.mass, scheme=sch,
                                                         argmin=res.argmin.mass)))
        n_ties = sum(len(r.ties) for r in brute_results)
        err, inst = _worst(errs)
        detail = f"{n_ties} lattice ties within 1e-12 (reported, not failed)" if n_ties else ""
        return err, len(errs), detail, inst

    checks.append(_run("ge_minimizer.brute_force_argmin", 1e-12, brute_argmin))

    def brute_bound():
        errs = []
        for (pp, pm, sch), res in zip(brute_instances, brute_results):
            errs.append((max(0.0, ge_minimum_value(sch) - res.value - 1e-12),
                         _inst(p_plus=pp.mass, p_minus=pm.mass, scheme=sch)))
            exact = ge_objective_at_optimum(pp, pm, pp, sch)
            errs.append((abs(exact - ge_minimum_value(sch)), _inst(p_plus=pp.mass, p_minus=pm.mass, scheme=sch)))
        err, inst = _worst(errs)
        return err, len(brute_instances), "", inst

    checks.append(_run("ge_minimizer.jensen_bound", 1e-12, brute_bound))

    def brute_unsupervised():
        errs = []
        for pp, _, _ in brute_instances[:3]:
            res = brute_force_ge_minimizer_full(pp, np.zeros(pp.n_cells), TargetScheme(1.0, 0.0, 0.5), grid_step)
            errs.append((max(0.0, total_variation(res.argmin, pp) - grid_step), _inst(p_e=pp.mass)))
        err, inst = _worst(errs)
        return err, len(errs), "", inst

    checks.append(_run("ge_minimizer.unsupervised_reduction", 1e-12, brute_unsupervised))

    return VerificationReport(checks, time.perf_counter() - start, seed)
