"""Experiment harness: presets, configs, seeded trial fan-out and the studies.

Every study here is a pure function of its arguments and seed, so the CLI
can archive a config and reproduce its CSV/JSON output exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .explore import CERTIFIED, POLICIES, ProbingPolicy, cec_stopping_run, run_exploration
from .lqr import SdpFailure, controller_cost, solve_dare
from .sim import CostModel, LinearSystem, NoiseModel, step
from .synthesis import (
    lqr_lmi,
    lqr_to_sls_solution,
    relaxed_sls,
    robust_lqr,
    robust_sls,
    sls_lmi,
    sls_to_lqr_solution,
    sls_variables_from_lqr,
)
from .sysid import (
    EllipsoidRegion,
    GramianAccumulator,
    boundary_deltas,
    chi2_quantile,
    interior_deltas,
    lambda_heuristic,
    rls_estimate,
)

__all__ = [
    "PRESETS",
    "ConfigError",
    "ExperimentConfig",
    "BenchmarkSummary",
    "preset_system",
    "run_trials",
    "summarize",
    "write_summary_csv",
    "table1",
    "format_table1",
    "coverage_study",
    "radius_compare",
    "random_region",
    "equivalence_study",
]

PRESETS = {
    "dean": (
        [[1.01, 0.01, 0.0], [0.01, 1.01, 0.01], [0.0, 0.01, 1.01]],
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    ),
    "explosive4x4": (
        [[1.5, 1.0, 0.4, 2.3], [0.0, 1.3, 1.3, 1.1], [0.0, 0.0, 1.0, 0.7], [0.0, 0.0, 0.0, 0.8]],
        [[0.6, 0.7, 0.3], [0.8, 1.1, 1.1], [1.2, 0.2, 2.3], [2.1, 0.4, 0.4]],
    ),
}

STOPPING = ("robust", "cec")
REGIONS = ("ellipsoid", "ball")
SYNTHESES = ("robust_lqr", "robust_sls")
SUMMARY_COLUMNS = ["config_hash", "policy", "region", "median_steps", "std_steps",
                   "median_logcost", "std_logcost", "failures"]


class ConfigError(ValueError):
    """Invalid experiment configuration (reported as a usage error)."""


def preset_system(name: str) -> LinearSystem:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; known: {sorted(PRESETS)}")
    A, B = PRESETS[name]
    return LinearSystem(np.array(A), np.array(B))


def sample_sphere_system(C: float, dx: int, du: int, rng) -> LinearSystem:
    """``(A B)`` uniform on the Frobenius sphere of radius ``C``."""
    AB = rng.standard_normal((dx, dx + du))
    return LinearSystem.from_AB(C * AB / np.linalg.norm(AB), dx)


@dataclass
class ExperimentConfig:
    """One experiment cell.

    Exactly one of ``preset``, ``A``/``B`` or ``random_C`` selects the system.
    ``lam`` may be a number or ``"heuristic"`` (needs ``C`` or ``random_C``).
    """

    preset: str | None = None
    A: list | None = None
    B: list | None = None
    random_C: float | None = None
    random_dims: tuple = (1, 1)
    Q: list | None = None
    R: list | None = None
    sigma_w_sq: float = 1.0
    sigma_u_sq: float = 1.0
    lam: float | str = 1.0
    C: float | None = None
    delta: float = 0.1
    policy: str = "vanilla"
    synthesis: str = "robust_lqr"
    stopping: str = "robust"
    region: str = "ellipsoid"
    trials: int = 50
    seed_base: int = 0
    max_horizon: int = 2000
    output_dir: str | None = None

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        cfg = cls(**obj)
        cfg.validate()
        return cfg

    def replace(self, **overrides) -> "ExperimentConfig":
        data = asdict(self)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return ExperimentConfig.from_dict(data)

    def validate(self) -> None:
        modes = [self.preset is not None, self.A is not None or self.B is not None,
                 self.random_C is not None]
        if sum(modes) != 1:
            raise ConfigError("set exactly one of preset, A/B, random_C")
        if modes[1] and (self.A is None or self.B is None):
            raise ConfigError("explicit systems need both A and B")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}")
        if self.synthesis not in SYNTHESES:
            raise ConfigError(f"unknown synthesis {self.synthesis!r}")
        if self.stopping not in STOPPING:
            raise ConfigError(f"unknown stopping rule {self.stopping!r}")
        if self.region not in REGIONS:
            raise ConfigError(f"unknown region kind {self.region!r}")
        if self.stopping == "cec" and self.region != "ellipsoid":
            raise ConfigError("CEC stopping is defined on the ellipsoid only")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError("trials must be a positive integer")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if self.max_horizon < 1:
            raise ConfigError("max_horizon must be positive")
        if isinstance(self.lam, str):
            if self.lam != "heuristic":
                raise ConfigError("lam must be a number or 'heuristic'")
            if self.C is None and self.random_C is None:
                raise ConfigError("heuristic lambda needs C")
        elif not self.lam > 0:
            raise ConfigError("lam must be positive")

    def system(self) -> LinearSystem:
        if self.preset is not None:
            return preset_system(self.preset)
        if self.random_C is not None:
            dx, du = self.random_dims
            return sample_sphere_system(self.random_C, int(dx), int(du),
                                        np.random.default_rng(self.seed_base))
        return LinearSystem(np.array(self.A, dtype=float), np.array(self.B, dtype=float))

    def cost(self, sys: LinearSystem) -> CostModel:
        Q = np.eye(sys.dx) if self.Q is None else np.array(self.Q, dtype=float)
        R = np.eye(sys.du) if self.R is None else np.array(self.R, dtype=float)
        return CostModel(Q, R)

    def resolved_lambda(self, sys: LinearSystem) -> float:
        if self.lam == "heuristic":
            C = self.C if self.C is not None else self.random_C
            return lambda_heuristic(C, sys.dx, sys.du, self.sigma_w_sq)
        return float(self.lam)

    @property
    def region_label(self) -> str:
        return "cec-stop" if self.stopping == "cec" else self.region

    def to_json(self) -> dict:
        d = asdict(self)
        d["random_dims"] = list(d["random_dims"])
        return d

    def config_hash(self) -> str:
        d = self.to_json()
        d.pop("output_dir", None)
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def _run_one(args):
    cfg, seed = args
    sys = cfg.system()
    cost = cfg.cost(sys)
    noise = NoiseModel(cfg.sigma_w_sq, cfg.sigma_u_sq, seed)
    policy = ProbingPolicy(cfg.policy, cfg.sigma_u_sq)
    lam = cfg.resolved_lambda(sys)
    if cfg.stopping == "cec":
        return cec_stopping_run(sys, cost, noise, policy, cfg.delta, lam,
                                max_horizon=cfg.max_horizon)
    return run_exploration(sys, cost, noise, policy, cfg.delta, lam, synthesis=cfg.synthesis,
                           region_kind=cfg.region, max_horizon=cfg.max_horizon)


def run_trials(cfg: ExperimentConfig, workers: int = 1) -> list:
    """Run ``cfg.trials`` seeded explorations, seeds ``seed_base + k``."""
    jobs = [(cfg, cfg.seed_base + k) for k in range(cfg.trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


@dataclass
class BenchmarkSummary:
    config_hash: str
    policy: str
    region: str
    median_steps: float
    std_steps: float
    median_logcost: float
    std_logcost: float
    failures: int
    trials: int
    stabilized_fraction: float = float("nan")
    extra: dict = field(default_factory=dict)

    def row(self) -> list:
        return [self.config_hash, self.policy, self.region, _fmt(self.median_steps),
                _fmt(self.std_steps), _fmt(self.median_logcost), _fmt(self.std_logcost),
                self.failures]


def _fmt(v: float) -> str:
    return "nan" if v is None or not math.isfinite(v) else f"{v:.6g}"


def summarize(cfg: ExperimentConfig, logs) -> BenchmarkSummary:
    """Medians and standard deviations over certified runs only."""
    done = [lg for lg in logs if lg.outcome == CERTIFIED]
    steps = np.array([lg.steps for lg in done], dtype=float)
    costs = np.array([lg.log_cost for lg in done], dtype=float)

    def stat(f, a):
        return float(f(a)) if a.size else float("nan")

    stab = [bool(lg.stabilizes_true_system) for lg in done]
    return BenchmarkSummary(
        cfg.config_hash(), cfg.policy, cfg.region_label,
        stat(np.median, steps), stat(np.std, steps),
        stat(np.median, costs), stat(np.std, costs),
        len(logs) - len(done), len(logs),
        float(np.mean(stab)) if stab else float("nan"),
    )


def write_summary_csv(path, summaries) -> None:
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for s in summaries:
            writer.writerow(s.row())


# -- Table 1 -------------------------------------------------------------------

TABLE1_VARIANTS = (
    {"region": "ellipsoid", "stopping": "robust"},
    {"region": "ball", "stopping": "robust"},
    {"region": "ellipsoid", "stopping": "cec"},
)


def table1_configs(base: ExperimentConfig) -> list[ExperimentConfig]:
    return [base.replace(policy=p, **variant) for p in POLICIES for variant in TABLE1_VARIANTS]


def table1(base: ExperimentConfig | None = None, workers: int = 1, on_cell=None):
    """Run the policy x stopping grid; returns ``[(config, summary, logs)]``."""
    base = base or ExperimentConfig(preset="dean", lam=1.0)
    out = []
    for cfg in table1_configs(base):
        logs = run_trials(cfg, workers)
        summ = summarize(cfg, logs)
        out.append((cfg, summ, logs))
        if on_cell is not None:
            on_cell(cfg, summ)
    return out


def format_table1(summaries) -> str:
    """Plain-text table: one row per policy, ``steps (log-cost)`` per column."""
    cols = ("ellipsoid", "ball", "cec-stop")
    cell = {(s.policy, s.region): s for s in summaries}
    lines = [f"{'policy':<12}" + "".join(f"{c:>30}" for c in cols)]
    for p in POLICIES:
        parts = []
        for c in cols:
            s = cell.get((p, c))
            if s is None:
                parts.append(f"{'-':>30}")
                continue
            txt = (f"{s.median_steps:.0f}+-{s.std_steps:.1f} "
                   f"({s.median_logcost:.2f}+-{s.std_logcost:.2f})")
            if s.failures:
                txt += f" f={s.failures}"
            parts.append(f"{txt:>30}")
        lines.append(f"{p:<12}" + "".join(parts))
    return "\n".join(lines)


# -- coverage ------------------------------------------------------------------

def _gramian_contains(acc, sys, sigma_w_sq, c_delta) -> bool:
    # Same test as region_contains, but without building an EllipsoidRegion:
    # explosive systems make V + lam I too ill-conditioned for its PD check.
    A_hat, B_hat = rls_estimate(acc)
    Delta = (sys.AB - np.hstack([A_hat, B_hat])).T
    G = Delta.T @ acc.regularized @ Delta / (c_delta * sigma_w_sq)
    return float(np.linalg.eigvalsh(0.5 * (G + G.T))[-1]) <= 1.0 + 1e-9


def coverage_run(sys: LinearSystem, noise: NoiseModel, lam: float, delta: float,
                 n_steps: int, rng) -> int:
    """Number of the ``n_steps`` vanilla-probing steps whose region contains ``sys``."""
    acc = GramianAccumulator.empty(sys.dx, sys.du, lam)
    c_delta = chi2_quantile(sys.dx * (sys.dx + sys.du), delta)
    x = np.zeros(sys.dx)
    hits = 0
    sigma_u = math.sqrt(noise.sigma_u_sq)
    for _ in range(n_steps):
        u = sigma_u * rng.standard_normal(sys.du)
        x_next = step(sys, x, u, noise, rng)
        acc.absorb(x, u, x_next)
        hits += _gramian_contains(acc, sys, noise.sigma_w_sq, c_delta)
        x = x_next
    return hits


def coverage_study(dx: int, du: int, C_values, lam_scale: float = 1.0, delta: float = 0.1,
                   n_systems: int = 200, n_steps: int = 10, seed: int = 0,
                   sigma_w_sq: float = 1.0, sigma_u_sq: float = 1.0) -> list[dict]:
    """Share of steps at which the credibility region contains the truth.

    For each ``C`` the systems are drawn uniformly on ``||(A B)||_F = C`` and
    ``lambda = lam_scale * lambda_heuristic(C)``.
    """
    rows = []
    for C in C_values:
        lam = lam_scale * lambda_heuristic(C, dx, du, sigma_w_sq)
        rng = np.random.default_rng([seed, int(round(1e6 * C))])
        hits = 0
        for k in range(n_systems):
            sys = sample_sphere_system(C, dx, du, rng)
            hits += coverage_run(sys, NoiseModel(sigma_w_sq, sigma_u_sq, k), lam, delta,
                                 n_steps, rng)
        rows.append({"dx": dx, "du": du, "C": float(C), "lam_scale": float(lam_scale),
                     "lam": lam, "delta": delta, "systems": n_systems, "steps": n_steps,
                     "coverage": hits / (n_systems * n_steps)})
    return rows


# -- radius comparison -----------------------------------------------------------

def worst_case_cost(center: LinearSystem, cost: CostModel, K, deltas, sigma_w_sq: float) -> float:
    """Largest closed-loop cost over ``center + Delta'``; ``inf`` if any loop is unstable."""
    worst = 0.0
    AB = center.AB
    for d in deltas:
        res = controller_cost(LinearSystem.from_AB(AB + d.T, center.dx), cost, K, sigma_w_sq)
        if not res.stable:
            return math.inf
        worst = max(worst, res.value)
    return worst


def radius_compare(n_systems: int = 5, radii=None, n_perturb: int = 200, seed: int = 0,
                   sigma_w_sq: float = 1.0, box: float = 3.0) -> list[dict]:
    """Worst-case cost of the CEC and robust LQR controllers on balls of growing radius.

    Scalar systems ``(a, b)`` are drawn from ``[-box, box]^2``.  For radius
    ``r`` the ball is ``||(A B) - (a b)||_2 <= r``; the robust controller is
    re-synthesized for each ``r`` and its cost is ``inf`` when the synthesis
    is infeasible.
    """
    radii = np.linspace(0.0, 1.5, 16) if radii is None else np.asarray(radii, dtype=float)
    rng = np.random.default_rng(seed)
    cost = CostModel.identity(1, 1)
    rows = []
    for k in range(n_systems):
        while True:
            a, b = rng.uniform(-box, box, size=2)
            if abs(b) > 1e-3:
                break
        sys = LinearSystem(np.array([[a]]), np.array([[b]]))
        K_cec = solve_dare(sys, cost).K_star
        for r in radii:
            if r <= 0.0:
                nominal = controller_cost(sys, cost, K_cec, sigma_w_sq).value
                rows.append({"system": k, "a": a, "b": b, "radius": 0.0,
                             "cec_cost": nominal, "robust_cost": nominal})
                continue
            region = EllipsoidRegion(sys.A, sys.B, np.eye(2) / r ** 2)
            prng = np.random.default_rng([seed, k, int(round(1e6 * r))])
            deltas = np.concatenate([boundary_deltas(region, n_perturb, prng),
                                     interior_deltas(region, n_perturb, prng)])
            cec = worst_case_cost(sys, cost, K_cec, deltas, sigma_w_sq)
            out = robust_lqr(region, cost, sigma_w_sq, verify_samples=n_perturb)
            rob = (worst_case_cost(sys, cost, out.certificate.K, deltas, sigma_w_sq)
                   if out.feasible else math.inf)
            rows.append({"system": k, "a": a, "b": b, "radius": float(r),
                         "cec_cost": cec, "robust_cost": rob})
    return rows


def stabilized_radius(rows, system: int, key: str) -> float:
    """Largest radius on the grid up to which ``key`` stays finite."""
    best = 0.0
    for row in sorted((r for r in rows if r["system"] == system), key=lambda r: r["radius"]):
        if not math.isfinite(row[key]):
            break
        best = row["radius"]
    return best


# -- equivalence of the two syntheses ------------------------------------------------

MARGINAL_BAND = 1e-3


def random_region(rng, dx: int, du: int, log10_scale: float) -> EllipsoidRegion:
    """Random center and shape ``D = 10^s W`` with ``W`` a well-conditioned SPD matrix."""
    A = rng.normal(scale=0.8, size=(dx, dx))
    B = rng.normal(size=(dx, du))
    n = dx + du
    G = rng.standard_normal((n, n))
    W = G @ G.T / n + np.eye(n)
    return EllipsoidRegion(A, B, 10.0 ** log10_scale * W)


def _lmi_min_eig(M: np.ndarray) -> float:
    M = 0.5 * (M + M.T)
    return float(np.linalg.eigvalsh(M)[0] / (1.0 + np.abs(M).max()))


def equivalence_instance(region: EllipsoidRegion, cost: CostModel, sigma_w_sq: float = 1.0,
                         verify_samples: int = 200) -> dict:
    """Solve both syntheses on one region and cross-check the certificates."""
    sls = robust_sls(region, verify_samples=verify_samples)
    lqr = robust_lqr(region, cost, sigma_w_sq, verify_samples=verify_samples)
    try:
        _, t_relaxed = relaxed_sls(region, verify_samples=verify_samples)
    except SdpFailure:
        t_relaxed = float("nan")
    # Marginal means "close to the feasibility boundary", measured by the
    # optimal relaxed multiplier; the solver's reduced-accuracy flags are kept
    # in the row but do not decide marginality on their own.  A numerical
    # failure yields no verdict and is excluded the same way.
    marginal = (not math.isfinite(t_relaxed) or abs(t_relaxed - 1.0) < MARGINAL_BAND
                or "numerical-failure" in (sls.status, lqr.status))
    row = {"dx": region.dx, "du": region.du, "min_eig_D": region.min_eig(),
           "sls": sls.status, "lqr": lqr.status, "relaxed_t": t_relaxed,
           "marginal": bool(marginal),
           "solver_marginal": bool(sls.marginal or lqr.marginal), "agree": sls.feasible == lqr.feasible}

    if sls.feasible:
        cert = sls.certificate
        Sigma, t = sls_to_lqr_solution(cert, sigma_w_sq)
        row["sls_to_lqr_min_eig"] = _lmi_min_eig(lqr_lmi(region, Sigma, t, sigma_w_sq))
        dx = region.dx
        U, s = lqr_to_sls_solution(Sigma, t, sigma_w_sq)
        X = cert.variables["X"]
        S = cert.variables["S"]
        row["sls_roundtrip_residual"] = float(max(
            np.abs(U[:dx, :dx] - X).max() / (1 + np.abs(X).max()),
            np.abs(U[dx:, :dx] - S).max() / (1 + np.abs(X).max()),
            abs(s - cert.t)))
    if lqr.feasible:
        cert = lqr.certificate
        X, S, s = sls_variables_from_lqr(cert.variables["Sigma"], cert.t, sigma_w_sq, region.dx)
        row["lqr_to_sls_min_eig"] = _lmi_min_eig(sls_lmi(region, X, S, s))
    return row


def equivalence_study(trials: int = 200, seed: int = 0, dims=(1, 2, 3),
                      log10_range=(-1.0, 4.0), sigma_w_sq: float = 1.0) -> dict:
    """Random instances across feasibility scales; agreement over non-marginal ones."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(trials):
        dx, du = (int(v) for v in rng.choice(dims, size=2))
        region = random_region(rng, dx, du, rng.uniform(*log10_range))
        rows.append(equivalence_instance(region, CostModel.identity(dx, du), sigma_w_sq))
    clean = [r for r in rows if not r["marginal"]]

    def worst(key, f):
        vals = [r[key] for r in rows if key in r]
        return float(f(vals)) if vals else float("nan")

    return {
        "trials": trials,
        "marginal": len(rows) - len(clean),
        "marginal_fraction": (len(rows) - len(clean)) / len(rows),
        "feasible": sum(r["sls"] == "feasible" for r in clean),
        "infeasible": sum(r["sls"] == "infeasible" for r in clean),
        "agreement": (sum(r["agree"] for r in clean) / len(clean)) if clean else float("nan"),
        "worst_sls_to_lqr_min_eig": worst("sls_to_lqr_min_eig", min),
        "worst_lqr_to_sls_min_eig": worst("lqr_to_sls_min_eig", min),
        "worst_roundtrip_residual": worst("sls_roundtrip_residual", max),
        "instances": rows,
    }

