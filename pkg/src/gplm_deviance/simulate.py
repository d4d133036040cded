"""
Seeded data generators for the logistic and Poisson examples and a
replication engine that turns them into rejection-rate tables.

Each replicate draws from its own counter-based stream (Philox keyed by the
base seed and the replicate index), so a cell gives the same report whatever
the order or the number of worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtr
from scipy.stats import chi2

from .bandwidth import evaluate_candidates, select_aicc, select_hs
from .errors import ContractError, GplmError
from .family import Family, bernoulli, poisson
from .inference import chisq_cdf, test_at
from .kernel_grid import SmoothConfig
from .local_fit import Dataset

__all__ = [
    "EXAMPLES",
    "Dgp",
    "Cell",
    "CellResult",
    "RunReport",
    "QQDump",
    "replicate_rng",
    "generate",
    "run_replicate",
    "run_cells",
    "qq_dump",
    "ks_distance",
    "default_config",
    "DEFAULT_CANDIDATES",
]

EXAMPLES = ("ex1", "ex2_f0", "ex2_f1", "ex2_f2", "ex3", "ex4", "ex5_bump", "ex5_cos")

DEFAULT_CANDIDATES = {
    "unit": (0.1, 0.12, 0.15, 0.17, 0.2, 0.25, 0.3),
    "wide": (0.15, 0.2, 0.25, 0.3, 0.4),
}

SELECTORS = ("aicc", "hs", "hs-std")

B1, B2 = 0.1, -0.1
RHO = 0.3
VAR_Z2 = 0.5


def f0(x):
    return 8.0 * x * (1.0 - x)


def f1(x):
    return np.exp(2.0 * x)


def f2(x):
    return 2e5 * x**11 * (1.0 - x) ** 6 + 1e4 * x**3 * (1.0 - x) ** 10


def bump(x):
    return np.exp(-16.0 * x * x)


def wave(x):
    return np.cos(2.0 * np.pi * x)


@dataclass(frozen=True)
class Dgp:
    """One data-generating process.

    ``design`` applies to ``ex1`` (``"fixed"``: equally spaced on [0, 1]);
    the other examples always draw ``x`` at random.
    """

    example: str
    a: float = 0.0
    n: int = 100
    design: str = "random"
    orthogonalize_z: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.example not in EXAMPLES:
            raise ContractError(f"unknown example {self.example!r}")
        if self.design not in ("fixed", "random"):
            raise ContractError("design must be 'fixed' or 'random'")
        if self.design == "fixed" and self.example != "ex1":
            raise ContractError("only ex1 has a fixed design")
        if self.n < 2:
            raise ContractError("n must be at least 2")

    @property
    def family(self) -> Family:
        return poisson if self.example.startswith("ex5") else bernoulli

    @property
    def has_z(self) -> bool:
        return self.example in ("ex3", "ex4", "ex5_bump", "ex5_cos")

    @property
    def support(self) -> tuple[float, float]:
        return (-0.5, 1.0) if self.has_z else (0.0, 1.0)

    @property
    def n_grid(self) -> int:
        return 301 if self.has_z else 201

    def label(self) -> str:
        parts = [self.example, f"a={self.a:g}", f"n={self.n}"]
        if self.example == "ex1":
            parts.append(self.design)
        if self.has_z and not self.orthogonalize_z:
            parts.append("raw-z")
        return " ".join(parts)


def default_config(dgp: Dgp, h: float = 0.2, degree: int = 1) -> SmoothConfig:
    return SmoothConfig(h=h, degree=degree, support=dgp.support, n_grid=dgp.n_grid)


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    """Independent Philox stream for replicate ``replicate`` under ``seed``."""
    if seed < 0 or replicate < 0:
        raise ContractError("seed and replicate index must be nonnegative")
    key = (int(replicate) << 64) | (int(seed) & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.Philox(key=key))


def orthogonalize(z, x):
    """Remove the projection of each column of ``z`` on ``span{1, x}`` (Gram-Schmidt)."""
    n = len(x)
    q1 = np.full(n, 1.0 / math.sqrt(n))
    xc = x - x.mean()
    q2 = xc / np.linalg.norm(xc)
    z = np.array(z, dtype=float)
    for k in range(z.shape[1]):
        col = z[:, k]
        col = col - (q1 @ col) * q1
        col = col - (q2 @ col) * q2
        z[:, k] = col
    return z


def generate(dgp: Dgp, rng: np.random.Generator | None = None) -> Dataset:
    """Draw one dataset; with no ``rng`` the stream for replicate 0 of ``dgp.seed`` is used."""
    if rng is None:
        rng = replicate_rng(dgp.seed, 0)
    n, a = dgp.n, dgp.a
    ex = dgp.example
    z = None
    if ex == "ex1":
        x = np.linspace(0.0, 1.0, n) if dgp.design == "fixed" else rng.uniform(0.0, 1.0, n)
        theta = -1.0 + a * wave(x)
    elif ex.startswith("ex2"):
        x = np.linspace(0.0, 1.0, n) if dgp.design == "fixed" else rng.uniform(0.0, 1.0, n)
        f = {"ex2_f0": f0, "ex2_f1": f1, "ex2_f2": f2}[ex]
        theta = -2.0 + f(x)
    else:
        z1 = 2.0 * rng.integers(0, 2, n) - 1.0
        cov = np.array([[VAR_Z2, RHO * math.sqrt(VAR_Z2)], [RHO * math.sqrt(VAR_Z2), 1.0]])
        z2, xn = rng.multivariate_normal(np.zeros(2), cov, size=n, method="cholesky").T
        x = -0.5 + 1.5 * ndtr(xn)
        z = np.column_stack([z1, z2])
        if dgp.orthogonalize_z:
            z = orthogonalize(z, x)
        g = bump if ex in ("ex3", "ex5_bump") else wave
        theta = B1 * z[:, 0] + B2 * z[:, 1] + a * g(x)
    if dgp.family is bernoulli:
        y = rng.binomial(1, 1.0 / (1.0 + np.exp(-theta))).astype(float)
    else:
        y = rng.poisson(np.exp(theta)).astype(float)
    return Dataset(x=x, y=y, z=z)


@dataclass(frozen=True)
class Cell:
    """A DGP, a bandwidth rule and a replicate count.

    ``bandwidth`` is a number, ``"aicc"``, ``"hs"`` or ``"hs-std"`` (the
    standardized maximum-statistic rule); selectors search
    ``candidates`` (defaults depend on the covariate range).
    """

    dgp: Dgp
    bandwidth: float | str
    replicates: int = 1000
    candidates: tuple | None = None
    degree: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise ContractError("replicates must be positive")
        if isinstance(self.bandwidth, str) and self.bandwidth not in SELECTORS:
            raise ContractError("bandwidth must be a number, 'aicc', 'hs' or 'hs-std'")

    @property
    def candidate_list(self) -> tuple:
        if self.candidates is not None:
            return tuple(self.candidates)
        return DEFAULT_CANDIDATES["wide" if self.dgp.has_z else "unit"]

    def label(self) -> str:
        bw = self.bandwidth if isinstance(self.bandwidth, str) else f"h={self.bandwidth:g}"
        return f"{self.dgp.label()} {bw}"


@dataclass(frozen=True)
class ReplicateOutcome:
    index: int
    statistic: float
    df: float
    p_value: float
    h: float
    error: str = ""


def run_replicate(cell: Cell, index: int) -> ReplicateOutcome:
    """Generate, fit and test replicate ``index`` of ``cell``."""
    dgp = cell.dgp
    try:
        data = generate(dgp, replicate_rng(dgp.seed, index))
        if isinstance(cell.bandwidth, str):
            cfg = default_config(dgp, cell.candidate_list[0], cell.degree)
            cands = evaluate_candidates(data, dgp.family, cfg, cell.candidate_list)
            if cell.bandwidth == "aicc":
                choice = select_aicc(data, dgp.family, cfg, cands)
            else:
                choice = select_hs(data, dgp.family, cfg, cands, standardize=cell.bandwidth == "hs-std")
            chosen = choice.selected
            if chosen.test is None:
                raise GplmError(chosen.error)
            res = chosen.test
        else:
            res = test_at(data, dgp.family, default_config(dgp, float(cell.bandwidth), cell.degree))
        return ReplicateOutcome(index, res.statistic, res.df, res.p_value, res.h)
    except (GplmError, ValueError, np.linalg.LinAlgError) as exc:
        return ReplicateOutcome(index, math.nan, math.nan, math.nan, math.nan, f"{type(exc).__name__}: {exc}")


def _run_chunk(args):
    cell, indices = args
    return [run_replicate(cell, i) for i in indices]


@dataclass(frozen=True)
class CellResult:
    label: str
    example: str
    a: float
    n: int
    design: str
    orthogonalize_z: bool
    bandwidth: str
    replicates: int
    rejections: int
    failures: int
    denominator: int
    rate: float
    mean_df: float
    flagged: bool
    selected_h: dict = field(default_factory=dict)
    statistics: np.ndarray | None = field(default=None, repr=False)
    dfs: np.ndarray | None = field(default=None, repr=False)

    def row(self) -> dict:
        out = asdict(self)
        out.pop("statistics")
        out.pop("dfs")
        out["selected_h"] = {f"{k:g}": v for k, v in self.selected_h.items()}
        return out


@dataclass(frozen=True)
class RunReport:
    cells: list
    level: float
    seed_note: str = "per-replicate Philox streams keyed by (seed, replicate)"

    def rows(self) -> list[dict]:
        return [c.row() for c in self.cells]


def _summarise(cell: Cell, outcomes, level: float, keep: bool) -> CellResult:
    outcomes = sorted(outcomes, key=lambda o: o.index)
    ok = [o for o in outcomes if not o.error]
    failures = len(outcomes) - len(ok)
    rejections = sum(1 for o in ok if o.p_value < level)
    flagged = failures > 0.01 * len(outcomes)
    denominator = len(ok) if flagged else len(outcomes)
    rate = rejections / denominator if denominator else math.nan
    dfs = np.array([o.df for o in ok])
    selected = {}
    if isinstance(cell.bandwidth, str):
        for o in ok:
            selected[o.h] = selected.get(o.h, 0) + 1
        selected = dict(sorted(selected.items()))
    bw = cell.bandwidth if isinstance(cell.bandwidth, str) else f"{float(cell.bandwidth):g}"
    return CellResult(
        label=cell.label(),
        example=cell.dgp.example,
        a=cell.dgp.a,
        n=cell.dgp.n,
        design=cell.dgp.design,
        orthogonalize_z=cell.dgp.orthogonalize_z,
        bandwidth=bw,
        replicates=len(outcomes),
        rejections=rejections,
        failures=failures,
        denominator=denominator,
        rate=rate,
        mean_df=float(dfs.mean()) if dfs.size else math.nan,
        flagged=flagged,
        selected_h=selected,
        statistics=np.array([o.statistic for o in ok]) if keep else None,
        dfs=dfs if keep else None,
    )


def run_outcomes(cell: Cell, workers: int = 1) -> list[ReplicateOutcome]:
    indices = list(range(cell.replicates))
    if workers <= 1:
        return [run_replicate(cell, i) for i in indices]
    chunks = [(cell, indices[i::workers]) for i in range(workers)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_run_chunk, chunks))
    return sorted((o for part in parts for o in part), key=lambda o: o.index)


def run_cells(cells, level: float = 0.05, workers: int = 1, keep_statistics: bool = False) -> RunReport:
    """Run every cell and tabulate rejection rates at ``level``.

    Failed replicates are counted separately. They stay in the denominator
    unless more than 1% of a cell's replicates fail; then the cell is flagged
    and the rate uses the successful replicates only.
    """
    results = []
    for cell in cells:
        if cell.replicates < 100:
            raise ContractError("a simulation cell needs at least 100 replicates")
        results.append(_summarise(cell, run_outcomes(cell, workers), level, keep_statistics))
    return RunReport(cells=results, level=level)


def ks_distance(sample, df: float) -> float:
    """Kolmogorov-Smirnov distance between ``sample`` and chi-square(``df``)."""
    s = np.sort(np.asarray(sample, dtype=float))
    m = s.size
    cdf = chisq_cdf(s, df)
    upper = np.arange(1, m + 1) / m - cdf
    lower = cdf - np.arange(m) / m
    return float(max(upper.max(), lower.max()))


@dataclass(frozen=True)
class QQDump:
    statistic: np.ndarray
    reference: np.ndarray
    df: float
    ks: float

    def rows(self):
        return list(zip(self.statistic.tolist(), self.reference.tolist()))


def qq_dump(cell: Cell, replicates: int | None = None, workers: int = 1, outcomes=None) -> QQDump:
    """Sorted statistics against chi-square quantiles at the mean df."""
    if outcomes is None:
        if replicates is not None:
            cell = Cell(cell.dgp, cell.bandwidth, replicates, cell.candidates, cell.degree)
        outcomes = run_outcomes(cell, workers)
    ok = [o for o in outcomes if not o.error]
    stats = np.sort(np.array([o.statistic for o in ok]))
    df = float(np.mean([o.df for o in ok]))
    m = stats.size
    probs = (np.arange(1, m + 1) - 0.5) / m
    return QQDump(statistic=stats, reference=chi2.ppf(probs, df), df=df, ks=ks_distance(stats, df))
