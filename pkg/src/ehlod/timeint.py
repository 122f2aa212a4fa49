"""Fixed-step time integrators.

* Rosenbrock-Wanner (ROW) steps for the linear first-order system
  Mt w' = Kt w + g theta(t), with one factorization of (Mt - tau*gamma*Kt).
* The classical 3-stage explicit Runge-Kutta-Nystrom method of order 4
  for M u'' = -K u + load(t), used for fine reference solutions.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .linalg import Factorization


@dataclass(frozen=True, eq=False)
class ROWTableau:
    name: str
    s: int
    order: int
    gamma: float
    alpha: np.ndarray  # (s, s) strictly lower triangular
    gammas: np.ndarray  # (s, s) strictly lower triangular
    b: np.ndarray

    def __post_init__(self):
        for nm in ("alpha", "gammas"):
            a = np.asarray(getattr(self, nm), dtype=float)
            if a.shape != (self.s, self.s):
                raise ValueError(f"{nm} must be {self.s}x{self.s}")
            if np.any(np.triu(a) != 0):
                raise ValueError(f"{nm} must be strictly lower triangular")
            object.__setattr__(self, nm, a)
        b = np.asarray(self.b, dtype=float)
        if b.shape != (self.s,):
            raise ValueError(f"b must have {self.s} entries")
        object.__setattr__(self, "b", b)

    @property
    def alpha_i(self) -> np.ndarray:
        return self.alpha.sum(axis=1)

    @property
    def gamma_i(self) -> np.ndarray:
        return self.gamma + self.gammas.sum(axis=1)


def parse_tableau(text: str) -> ROWTableau:
    """Parse the plain-text tableau format.

    Header ``name s order gamma``, then one row per stage:
    ``alpha_i1 .. alpha_i,i-1 | gamma_i1 .. gamma_i,i-1 | b_i``.
    With the header ``name s order gamma transformed`` the rows hold the
    transformed coefficients ``a_ij | C_ij | m_i`` instead.
    Lines starting with ``#`` are comments.
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty tableau file")
    head = lines[0].split()
    transformed = len(head) == 5 and head[4] == "transformed"
    if len(head) != 4 and not transformed:
        raise ValueError("tableau header must read 'name s order gamma [transformed]'")
    name, s, order, gamma = head[0], int(head[1]), int(head[2]), float(head[3])
    rows = lines[1:]
    if len(rows) != s:
        raise ValueError(f"expected {s} stage rows, found {len(rows)}")
    alpha = np.zeros((s, s))
    gammas = np.zeros((s, s))
    b = np.zeros(s)
    for i, row in enumerate(rows):
        parts = row.split("|")
        if len(parts) != 3:
            raise ValueError(f"stage row {i + 1} must have three '|'-separated fields")
        a = [float(x) for x in parts[0].split()]
        g = [float(x) for x in parts[1].split()]
        bb = parts[2].split()
        if len(a) != i or len(g) != i or len(bb) != 1:
            raise ValueError(f"stage row {i + 1} must hold {i} alpha, {i} gamma and one weight")
        alpha[i, :i] = a
        gammas[i, :i] = g
        b[i] = float(bb[0])
    if transformed:
        return from_transformed(name, order, gamma, alpha, gammas, b)
    return ROWTableau(name, s, order, gamma, alpha, gammas, b)


def from_transformed(name: str, order: int, gamma: float, a, C, m) -> ROWTableau:
    """Tableau from the transformed coefficients (a, C, m) used in implementations.

    With Gamma the lower triangular matrix of gamma_ij (diagonal gamma),
    a = alpha Gamma^-1, C = I/gamma - Gamma^-1 and m = b Gamma^-1.
    """
    a, C, m = np.asarray(a, dtype=float), np.asarray(C, dtype=float), np.asarray(m, dtype=float)
    s = m.size
    G = np.linalg.inv(np.eye(s) / gamma - np.tril(C, -1))
    G = np.tril(G)
    alpha = np.tril(np.tril(a, -1) @ G, -1)
    gammas = np.tril(G, -1)
    return ROWTableau(name, s, order, gamma, alpha, gammas, m @ G)


def format_tableau(tab: ROWTableau) -> str:
    out = [f"{tab.name} {tab.s} {tab.order} {tab.gamma!r}"]
    for i in range(tab.s):
        a = " ".join(repr(float(x)) for x in tab.alpha[i, :i])
        g = " ".join(repr(float(x)) for x in tab.gammas[i, :i])
        out.append(f"{a} | {g} | {float(tab.b[i])!r}")
    return "\n".join(out) + "\n"


def load_tableau(path_or_name="rodas5p") -> ROWTableau:
    """Load a tableau file, or a shipped tableau by name."""
    p = Path(str(path_or_name))
    if p.is_file():
        return parse_tableau(p.read_text())
    ref = resources.files("ehlod") / "data" / f"{path_or_name}.txt"
    if not ref.is_file():
        raise FileNotFoundError(f"no tableau file or shipped tableau named {path_or_name!r}")
    return parse_tableau(ref.read_text())


def default_tableau() -> ROWTableau:
    return load_tableau("rodas5p")


def linear_implicit_euler() -> ROWTableau:
    return ROWTableau("LinImplEuler", 1, 1, 1.0, np.zeros((1, 1)), np.zeros((1, 1)), np.ones(1))


@dataclass(eq=False)
class LinearSystemODE:
    """Mt w' = Kt w + g * theta(t)."""

    Mt: object
    Kt: object
    g: np.ndarray
    theta: Callable[[float], float]
    theta_dot: Callable[[float], float] | None

    @classmethod
    def from_second_order(cls, M, K, g, theta, theta_dot) -> "LinearSystemODE":
        """First-order form of M u'' + K u = g theta(t) with state w = (u', u).

        The forcing enters the velocity block: Mt = diag(M, I), Kt = [[0, -K], [I, 0]].
        """
        n = M.shape[0]
        g = np.asarray(g, dtype=float)
        if sp.issparse(M) or sp.issparse(K):
            I = sp.identity(n, format="csr")
            Mt = sp.bmat([[M, None], [None, I]], format="csc")
            Kt = sp.bmat([[None, -K], [I, None]], format="csc")
        else:
            M, K = np.asarray(M, dtype=float), np.asarray(K, dtype=float)
            Z = np.zeros((n, n))
            Mt = np.block([[M, Z], [Z, np.eye(n)]])
            Kt = np.block([[Z, -K], [np.eye(n), Z]])
        return cls(Mt, Kt, np.concatenate([g, np.zeros(n)]), theta, theta_dot)

    @property
    def size(self) -> int:
        return self.Mt.shape[0]

    def split(self, w):
        """(velocity, displacement) blocks of a state."""
        n = self.size // 2
        return w[:n], w[n:]


def row_step(tab: ROWTableau, sys: LinearSystemODE, t: float, w, tau: float, F: Factorization) -> np.ndarray:
    """One step of the linearly implicit ROW scheme for the linear system."""
    if sys.theta_dot is None:
        raise ValueError("theta_dot is required for the ROW forcing derivative term")
    if tau <= 0:
        raise ValueError("step size must be positive")
    w = np.asarray(w, dtype=float)
    ai, gi = tab.alpha_i, tab.gamma_i
    dth = sys.theta_dot(t)
    k = np.zeros((tab.s,) + w.shape)
    for i in range(tab.s):
        comb = w + np.tensordot(tab.alpha[i, :i] + tab.gammas[i, :i], k[:i], axes=1)
        rhs = tau * (sys.Kt @ comb) + (tau * sys.theta(t + ai[i] * tau) + tau * tau * gi[i] * dth) * sys.g
        k[i] = F.solve(rhs)
    return w + np.tensordot(tab.b, k, axes=1)


def step_count(T: float, tau: float) -> int:
    if tau <= 0:
        raise ValueError("step size must be positive")
    if tau > T:
        raise ValueError(f"step size {tau} exceeds the final time {T}")
    n = T / tau
    N = int(round(n))
    if abs(n - N) > 1e-9 * max(n, 1.0):
        raise ValueError(f"T/tau = {n} is not an integer")
    return N


def row_integrate(tab: ROWTableau, sys: LinearSystemODE, w0, T: float, tau: float) -> np.ndarray:
    """Integrate from 0 to T with fixed steps; (Mt - tau*gamma*Kt) is factored once."""
    N = step_count(T, tau)
    F = Factorization(sys.Mt - tau * tab.gamma * sys.Kt)
    w = np.array(w0, dtype=float)
    for n in range(N):
        w = row_step(tab, sys, n * tau, w, tau, F)
    return w


class InstabilityError(RuntimeError):
    pass


def rkn4_integrate(M, K, load: Callable[[float], np.ndarray], u0, v0, T: float, tau: float,
                   blowup: float = 1e8):
    """Classical 3-stage order-4 Nystrom method for M u'' = -K u + load(t).

    ``M`` may be a matrix or an existing Factorization.
    """
    N = step_count(T, tau)
    F = M if isinstance(M, Factorization) else Factorization(sp.csc_matrix(M) if sp.issparse(M) else M)
    u = np.array(u0, dtype=float)
    v = np.array(v0, dtype=float)
    scale = max(np.linalg.norm(u), np.linalg.norm(v), 1.0)

    def acc(t, x):
        return F.solve(load(t) - K @ x, refine=False)

    h = tau
    for n in range(N):
        t = n * h
        k1 = acc(t, u)
        k2 = acc(t + 0.5 * h, u + 0.5 * h * v + h * h / 8.0 * k1)
        k3 = acc(t + h, u + h * v + 0.5 * h * h * k2)
        u = u + h * v + h * h * (k1 / 6.0 + k2 / 3.0)
        v = v + h * (k1 + 4.0 * k2 + k3) / 6.0
        if not np.isfinite(u).all() or np.linalg.norm(u) > blowup * scale:
            raise InstabilityError(f"explicit reference integration unstable at step {n + 1} (t={t + h:.4g}); reduce tau")
    return u, v


def sin7(t: float) -> float:
    return np.sin(t) ** 7


def sin7_dot(t: float) -> float:
    return 7.0 * np.sin(t) ** 6 * np.cos(t)
