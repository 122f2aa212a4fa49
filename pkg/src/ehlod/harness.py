"""Experiment orchestration: configs, reference solves, error tables and sweeps."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .assembly import CoefficientField, assemble_load, element_energies, sample_coefficient
from .enrichment import build_enriched_space, q_expansion_initial, resolve_j
from .mesh import CartesianMesh, MeshError, patch
from .multiscale import (
    LODProblem,
    STRATEGIES,
    _is_inf,
    build_space,
    cached_path,
    galerkin_reduce,
    load_basis,
    orthonormal_basis,
    save_basis,
)
from .timeint import LinearSystemODE, default_tableau, load_tableau, rkn4_integrate, row_integrate, sin7, sin7_dot

CSV_COLUMNS = ["dim", "H", "h", "eps", "p", "j", "strategy", "ell", "tau", "error_energy", "eoc", "flags"]

# relative energy error below which a row is considered to sit at roundoff level
MACHINE_PRECISION_REL = 1e-11
# a temporal row is flagged once the spatial error accounts for half of it
SPATIAL_FLOOR_FACTOR = 2.0
PLATEAU_FACTOR = 1.5


def _g_example1(x, y):
    return np.sin(np.pi * x) * np.sin(np.pi * y)


def _g_example2(x):
    return x + np.sin(np.pi * x)


FORCINGS = {
    "example1": (2, _g_example1, sin7, sin7_dot),
    "example2": (1, _g_example2, sin7, sin7_dot),
}


def _parse_ell(v):
    if isinstance(v, str) and v.strip().lower() in ("inf", "infinity", "oo"):
        return math.inf
    if isinstance(v, float) and math.isinf(v):
        return math.inf
    return int(v)


@dataclass
class ExperimentConfig:
    dim: int = 1
    eps_n: int = 64
    fine_n: int = 1024
    coarse_n: list = field(default_factory=lambda: [4, 8, 16, 32])
    p: int = 1
    j: object = "auto"
    strategy: str = "generalized"
    strategies: list = field(default_factory=lambda: ["naive", "bubble", "generalized"])
    ell: list = field(default_factory=lambda: [math.inf])
    forcing: str = "example2"
    T: float = 1.0
    tau_coarse: float = 2.0**-9
    tau_list: list = field(default_factory=lambda: [2.0**-k for k in range(1, 7)])
    tau_ref: float = 2.0**-12
    seed: int = 0
    coef_lo: float = 0.1
    coef_hi: float = 1.0
    coefficient_file: str | None = None
    quad_pts: int | None = None
    tableau: str = "rodas5p"
    ell_max: int = 6
    decay_element: int | None = None
    cache_dir: str | None = None
    out: str | None = None
    workers: int = 1
    g: Callable | None = None
    theta: Callable | None = None
    theta_dot: Callable | None = None

    @property
    def j_value(self) -> int:
        return resolve_j(self.j, self.p)

    def validate(self) -> "ExperimentConfig":
        if self.dim not in (1, 2):
            raise MeshError(f"unsupported dimension {self.dim}")
        if self.fine_n % self.eps_n:
            raise MeshError(f"coefficient grid n={self.eps_n} does not divide fine n={self.fine_n}")
        for n in self.coarse_n:
            if self.fine_n % n:
                raise MeshError(f"coarse n={n} does not divide fine n={self.fine_n}")
            if self.fine_n // n < self.p + 1:
                raise MeshError(f"coarse n={n}: fine resolution {self.fine_n // n} per element is below p+1={self.p + 1}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        for s in self.strategies:
            if s not in STRATEGIES:
                raise ValueError(f"unknown strategy {s!r}")
        if self.g is None:
            if self.forcing not in FORCINGS:
                raise ValueError(f"unknown forcing {self.forcing!r}; choose from {sorted(FORCINGS)} or supply g")
            if FORCINGS[self.forcing][0] != self.dim:
                raise ValueError(f"forcing {self.forcing} is defined for dim={FORCINGS[self.forcing][0]}")
        if self.T <= 0:
            raise ValueError("final time must be positive")
        self.ell = [_parse_ell(e) for e in self.ell]
        resolve_j(self.j, self.p)
        return self

    def forcing_parts(self):
        if self.g is not None:
            return self.g, self.theta or sin7, self.theta_dot or sin7_dot
        _, g, th, thd = FORCINGS[self.forcing]
        return g, (self.theta or th), (self.theta_dot or thd)

    def coefficient(self) -> CoefficientField:
        if self.coefficient_file:
            A = CoefficientField.load(self.coefficient_file)
            if A.eps_mesh.dim != self.dim:
                raise MeshError("coefficient file dimension does not match the config")
            return A
        return sample_coefficient("random_uniform", self.dim, self.eps_n, self.coef_lo, self.coef_hi, self.seed)


_LIST_KEYS = {"coarse_n": int, "ell": _parse_ell, "strategies": str, "tau_list": float}
_SCALAR_KEYS = {
    "dim": int, "eps_n": int, "fine_n": int, "p": int, "strategy": str, "forcing": str, "T": float,
    "tau_coarse": float, "tau_ref": float, "seed": int, "coef_lo": float, "coef_hi": float,
    "coefficient_file": str, "quad_pts": int, "tableau": str, "ell_max": int, "decay_element": int,
    "cache_dir": str, "out": str, "workers": int,
}


def _parse_number(text: str, kind):
    text = text.strip()
    if kind is float and text.startswith("2^"):
        return 2.0 ** float(text[2:])
    return kind(text)


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` comments; lists comma-separated; ``2^-9`` style powers allowed."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key == "j":
            out[key] = val if val == "auto" else int(val)
        elif key in _LIST_KEYS:
            kind = _LIST_KEYS[key]
            out[key] = [_parse_number(v, kind) if kind in (int, float) else kind(v.strip()) for v in val.split(",") if v.strip()]
        elif key in _SCALAR_KEYS:
            out[key] = _parse_number(val, _SCALAR_KEYS[key]) if _SCALAR_KEYS[key] in (int, float) else val
        else:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
    return out


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    vals = parse_config_text(Path(path).read_text())
    return replace(base or ExperimentConfig(), **vals)


def format_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if f.name in ("g", "theta", "theta_dot") or v is None:
            continue
        if isinstance(v, (list, tuple)):
            v = ",".join("inf" if isinstance(x, float) and math.isinf(x) else repr(x) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def profile_config(command: str, profile: str = "desk", dim: int = 1) -> ExperimentConfig:
    """Default configuration per subcommand; ``paper`` uses the full-scale resolutions."""
    if profile not in ("desk", "paper"):
        raise ValueError("profile must be 'desk' or 'paper'")
    desk = profile == "desk"
    if dim == 1:
        base = ExperimentConfig(
            dim=1, eps_n=64 if desk else 256, fine_n=1024 if desk else 8192,
            coarse_n=[4, 8, 16, 32] if desk else [8, 16, 32, 64], forcing="example2",
            # explicit stability for P1 needs tau * sqrt(12 beta) / h < 2.59
            tau_ref=2.0**-12 if desk else 2.0**-14,
        )
    else:
        base = ExperimentConfig(
            dim=2, eps_n=32 if desk else 64, fine_n=64 if desk else 128,
            coarse_n=[2, 4, 8] if desk else [2, 4, 8, 16], forcing="example1",
            tau_ref=2.0**-8 if desk else 2.0**-9, strategy="generalized",
        )
    if command == "temporal":
        base = replace(base, coarse_n=[8] if (desk and dim == 1) else [16] if dim == 1 else [8],
                       p=3 if dim == 1 else 4, j=2, ell=[math.inf],
                       tau_list=[2.0**-k for k in range(1, 7)])
    elif command == "decay":
        base = replace(base, coarse_n=[32] if dim == 1 else [8], p=1, ell_max=6)
    elif command == "localization":
        base = replace(base, coarse_n=[16], p=1, j=1, ell=list(range(1, 7)))
    return base


# ---- records and CSV ----------------------------------------------------------


@dataclass
class ErrorRecord:
    dim: int
    H: float
    h: float
    eps: float
    p: int
    j: int
    strategy: str
    ell: object
    tau: float
    error_energy: float
    eoc: float | None = None
    flags: list = field(default_factory=list)

    def row(self) -> list:
        def num(x):
            return format(float(x), ".17g")

        return [
            str(self.dim), num(self.H), num(self.h), num(self.eps), str(self.p), str(self.j), self.strategy,
            "inf" if _is_inf(self.ell) else str(int(self.ell)), num(self.tau), num(self.error_energy),
            "" if self.eoc is None else num(self.eoc), ";".join(self.flags),
        ]


def write_csv(records, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        w.writerow(r.row())
    text = buf.getvalue()
    if path:
        Path(path).write_text(text)
    return text


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def assign_eoc(records, key: str = "H") -> None:
    """EOC between consecutive records of a sweep in ``key`` (log ratio of errors over log ratio of sizes)."""
    for prev, cur in zip(records, records[1:]):
        x0, x1 = getattr(prev, key), getattr(cur, key)
        if prev.error_energy > 0 and cur.error_energy > 0 and x0 != x1:
            cur.eoc = math.log(prev.error_energy / cur.error_energy) / math.log(x0 / x1)
    if records:
        records[0].eoc = None


def least_squares_eoc(records, key: str = "H", exclude_flagged: bool = True, pairs: int | None = 3) -> float:
    """Slope of log(error) against log(key) over the finest ``pairs`` consecutive pairs.

    Flagged rows inside that window are dropped; ``pairs=None`` uses every row.
    """
    rows = list(records) if pairs is None else list(records)[-(pairs + 1):]
    rows = [r for r in rows if not (exclude_flagged and r.flags) and r.error_energy > 0]
    if len(rows) < 2:
        return float("nan")
    x = np.log([getattr(r, key) for r in rows])
    y = np.log([r.error_energy for r in rows])
    return float(np.polyfit(x, y, 1)[0])


def temporal_eoc(records, tau_max: float = 0.25) -> float:
    """Least-squares temporal EOC over unflagged rows with tau <= tau_max (the coarsest step is a stability smoke test)."""
    return least_squares_eoc([r for r in records if r.tau <= tau_max], "tau", pairs=None)


# ---- pipeline --------------------------------------------------------------------


def energy_error(coeffs, B, u_ref, K_fine) -> float:
    """sqrt(e^T K e) with e = B coeffs - u_ref."""
    u_ref = np.asarray(u_ref, dtype=float)
    if B.shape[0] != u_ref.shape[0] or K_fine.shape[0] != u_ref.shape[0]:
        raise MeshError("multiscale and reference solutions live on different fine meshes")
    e = B @ np.asarray(coeffs, dtype=float) - u_ref
    return float(math.sqrt(max(float(e @ (K_fine @ e)), 0.0)))


_REF_CACHE: dict = {}
_A_CACHE: dict = {}


def _coefficient(cfg: ExperimentConfig) -> CoefficientField:
    key = (cfg.coefficient_file, cfg.dim, cfg.eps_n, cfg.coef_lo, cfg.coef_hi, cfg.seed)
    if key not in _A_CACHE:
        _A_CACHE[key] = cfg.coefficient()
    return _A_CACHE[key]


@dataclass
class FineReference:
    problem: LODProblem
    load: np.ndarray
    u: np.ndarray
    norm: float


def reference_solution(cfg: ExperimentConfig) -> FineReference:
    """Fine-scale solution at T by the explicit RKN4 scheme (cached per configuration)."""
    custom = cfg.g is not None or cfg.theta is not None
    key = None if custom else (
        cfg.coefficient_file, cfg.dim, cfg.fine_n, cfg.eps_n, cfg.seed, cfg.coef_lo, cfg.coef_hi,
        cfg.forcing, cfg.tau_ref, cfg.T, cfg.quad_pts,
    )
    if key is not None and key in _REF_CACHE:
        return _REF_CACHE[key]
    A = _coefficient(cfg)
    pr = LODProblem(CartesianMesh(cfg.dim, cfg.fine_n), CartesianMesh(cfg.dim, 1), 0, A)
    g, theta, _ = cfg.forcing_parts()
    q = cfg.quad_pts or cfg.p + 3
    load = assemble_load(pr.fine, g, q)
    z = np.zeros(pr.fine.n_dofs)
    u, _ = rkn4_integrate(pr.M, pr.K, lambda t: load * theta(t), z, z, cfg.T, cfg.tau_ref)
    ref = FineReference(pr, load, u, float(math.sqrt(u @ (pr.K @ u))))
    if key is not None:
        _REF_CACHE[key] = ref
    return ref


@dataclass
class ReducedModel:
    problem: LODProblem
    B: np.ndarray  # M-orthonormal basis, fine dofs x n
    K_red: np.ndarray
    M_red: np.ndarray
    n_ms: int


def _basis_meta(cfg, coarse_n, strategy, ell, j):
    return {
        "dim": cfg.dim, "H": 1.0 / coarse_n, "h": 1.0 / cfg.fine_n, "eps": 1.0 / cfg.eps_n, "p": cfg.p,
        "j": j, "strategy": strategy, "ell": "inf" if _is_inf(ell) else int(ell), "seed": cfg.seed,
        "quad_pts": cfg.quad_pts,
    }


def build_enriched_basis(cfg: ExperimentConfig, coarse_n: int, strategy: str, ell, j: int | None = None):
    """Raw enriched basis (sparse) for one configuration, optionally through the disk cache."""
    j = cfg.j_value if j is None else j
    A = _coefficient(cfg)
    pr = LODProblem(CartesianMesh(cfg.dim, cfg.fine_n), CartesianMesh(cfg.dim, coarse_n), cfg.p, A, cfg.quad_pts)
    meta = _basis_meta(cfg, coarse_n, strategy, ell, j)
    path = cached_path(cfg.cache_dir, meta, A) if cfg.cache_dir else None
    if path is not None and path.is_file():
        B, _ = load_basis(path)
        return pr, B
    ms = build_space(pr, strategy, ell)
    B = build_enriched_space(ms, j).basis
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        save_basis(path, B, meta)
    return pr, B


def reduce_model(pr: LODProblem, B) -> ReducedModel:
    X = orthonormal_basis(B, pr.M)
    K_red, M_red = galerkin_reduce(X, pr.K, pr.M, rank_tol=0.0)
    return ReducedModel(pr, X, K_red, M_red, X.shape[1])


def solve_reduced(model: ReducedModel, load, theta, theta_dot, T: float, tau: float, tableau=None):
    tab = tableau or default_tableau()
    sys = LinearSystemODE.from_second_order(model.M_red, model.K_red, model.B.T @ load, theta, theta_dot)
    u0, v0 = np.zeros(model.n_ms), np.zeros(model.n_ms)
    w = row_integrate(tab, sys, np.concatenate([v0, u0]), T, tau)
    return sys.split(w)[1]


def _record(cfg, coarse_n, j, strategy, ell, tau, err, ref_norm) -> ErrorRecord:
    flags = []
    if not np.isfinite(err):
        flags.append("nonfinite")
    elif err < MACHINE_PRECISION_REL * ref_norm:
        flags.append("machine_precision")
    return ErrorRecord(cfg.dim, 1.0 / coarse_n, 1.0 / cfg.fine_n, 1.0 / cfg.eps_n, cfg.p, j, strategy, ell, tau,
                       err, None, flags)


def run_single(cfg: ExperimentConfig, coarse_n: int, strategy: str, ell, tau: float, j: int | None = None,
               ref: FineReference | None = None) -> ErrorRecord:
    j = cfg.j_value if j is None else j
    ref = ref or reference_solution(cfg)
    try:
        pr, B = build_enriched_basis(cfg, coarse_n, strategy, ell, j)
        model = reduce_model(pr, B)
        _, theta, theta_dot = cfg.forcing_parts()
        tab = load_tableau(cfg.tableau)
        u = solve_reduced(model, ref.load, theta, theta_dot, cfg.T, tau, tab)
    except Exception as exc:
        raise RuntimeError(
            f"pipeline failed for dim={cfg.dim} H=1/{coarse_n} p={cfg.p} j={j} strategy={strategy} "
            f"ell={ell} tau={tau}: {exc}"
        ) from exc
    err = energy_error(u, model.B, ref.u, ref.problem.K)
    return _record(cfg, coarse_n, j, strategy, ell, tau, err, ref.norm)


def _map(cfg: ExperimentConfig, fn, items) -> list:
    """Order-preserving map over sweep points; a thread pool when ``cfg.workers > 1``."""
    items = list(items)
    if cfg.workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        return list(pool.map(fn, items))


def run_spatial_convergence(cfg: ExperimentConfig) -> list[ErrorRecord]:
    """Energy errors at T over the coarse mesh list for every ell; EOC per ell series."""
    cfg.validate()
    ref = reference_solution(cfg)
    out = []
    for ell in cfg.ell:
        strategy = "ideal" if _is_inf(ell) else cfg.strategy
        series = _map(cfg, lambda n: run_single(cfg, n, strategy, ell, cfg.tau_coarse, ref=ref), cfg.coarse_n)
        assign_eoc(series, "H")
        out += series
    return out


def run_temporal_convergence(cfg: ExperimentConfig) -> tuple[list[ErrorRecord], float]:
    """Errors over tau halvings for one fixed space, plus the spatial error floor.

    The floor is the error of the same space integrated with a step 16 times
    smaller than the smallest tau; rows where the floor accounts for at least
    half the error carry the ``spatial_floor`` flag.
    """
    cfg.validate()
    for tau in cfg.tau_list:
        if tau > cfg.T:
            raise ValueError(f"step size {tau} exceeds the final time {cfg.T}")
    ref = reference_solution(cfg)
    n = cfg.coarse_n[0]
    ell = cfg.ell[0]
    j = cfg.j_value
    pr, B = build_enriched_basis(cfg, n, cfg.strategy if not _is_inf(ell) else "ideal", ell, j)
    model = reduce_model(pr, B)
    _, theta, theta_dot = cfg.forcing_parts()
    tab = load_tableau(cfg.tableau)
    strategy = cfg.strategy if not _is_inf(ell) else "ideal"

    def err_at(tau):
        u = solve_reduced(model, ref.load, theta, theta_dot, cfg.T, tau, tab)
        return energy_error(u, model.B, ref.u, ref.problem.K)

    floor = err_at(min(cfg.tau_list) / 16.0)
    recs = []
    for tau in sorted(cfg.tau_list, reverse=True):
        e = err_at(tau)
        r = _record(cfg, n, j, strategy, ell, tau, e, ref.norm)
        if np.isfinite(e) and e <= SPATIAL_FLOOR_FACTOR * floor:
            r.flags.append("spatial_floor")
        if np.isfinite(e) and e > ref.norm:
            r.flags.append("unbounded")
        recs.append(r)
    assign_eoc(recs, "tau")
    return recs, floor


def decay_element(cfg: ExperimentConfig, coarse: CartesianMesh) -> int:
    if cfg.decay_element is not None:
        K = int(cfg.decay_element)
    else:
        mid = coarse.n // 2
        K = int(coarse.element_index(*([mid] * coarse.dim)))
    idx = [int(i) for i in coarse.element_multi_index(K)]
    if any(i == 0 or i == coarse.n - 1 for i in idx):
        raise MeshError(f"decay element {K} touches the boundary; choose an interior element")
    return K


def run_decay(cfg: ExperimentConfig, i: int = 0) -> list[tuple[int, float]]:
    """Relative exterior energy of the ideal basis function R Lambda_{K,i} outside N^ell(K)."""
    cfg.validate()
    A = _coefficient(cfg)
    coarse = CartesianMesh(cfg.dim, cfg.coarse_n[0])
    K = decay_element(cfg, coarse)
    pr = LODProblem(CartesianMesh(cfg.dim, cfg.fine_n), coarse, cfg.p, A, cfg.quad_pts)
    ms = build_space(pr, "ideal", math.inf)
    v = ms.column(K, i)
    en = element_energies(pr.fine, A, v)
    total = en.sum()
    out = []
    for ell in range(1, cfg.ell_max + 1):
        inside = np.zeros(coarse.num_elements, dtype=bool)
        inside[list(patch(coarse, [K], ell).elements)] = True
        ext = en[~inside[pr.owner]].sum()
        out.append((ell, float(math.sqrt(max(ext, 0.0) / total))))
    return out


def decay_slope(table) -> float:
    """Slope of ln(ratio) against ell over the strictly positive entries."""
    pts = [(l, r) for l, r in table if r > 0]
    if len(pts) < 2:
        return float("-inf")
    x, y = zip(*pts)
    return float(np.polyfit(x, np.log(y), 1)[0])


def run_localization_sweep(cfg: ExperimentConfig) -> tuple[list[ErrorRecord], dict]:
    """Error against ell for each strategy plus the ell=inf ideal line.

    Returns the records and a summary mapping strategy -> smallest ell whose
    error is within ``PLATEAU_FACTOR`` of the ideal error (None if never).
    """
    cfg.validate()
    ref = reference_solution(cfg)
    n = cfg.coarse_n[0]
    ideal = run_single(cfg, n, "ideal", math.inf, cfg.tau_coarse, ref=ref)
    recs = [ideal]
    summary = {"ideal_error": ideal.error_energy}
    for s in cfg.strategies:
        ells = [ell for ell in cfg.ell if not _is_inf(ell)]
        series = _map(cfg, lambda ell: run_single(cfg, n, s, ell, cfg.tau_coarse, ref=ref), ells)
        summary[s] = plateau_ell(series, ideal.error_energy)
        recs += series
    return recs, summary


def plateau_ell(series, ideal_error: float, factor: float = PLATEAU_FACTOR):
    for r in series:
        if r.error_energy <= factor * ideal_error:
            return int(r.ell)
    return None


def is_nonincreasing(values, factor: float = 1.05) -> bool:
    return all(b <= factor * a for a, b in zip(values, values[1:]))


def initial_coefficients(es):
    return q_expansion_initial(0.0, 0.0, es)
