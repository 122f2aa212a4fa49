"""
Time integration: ROW and the explicit Nystrom reference
========================================================

Reduced wave systems are integrated in first-order form with a linearly
implicit Rosenbrock-Wanner (ROW) scheme.  Fine reference solutions use the
explicit order-4 Runge-Kutta-Nystrom method, which is cheap per step but
needs tau below a CFL bound.
"""
import numpy as np

from ehlod import LinearSystemODE, load_tableau, rkn4_integrate, row_integrate

tab = load_tableau("rodas5p")
print(tab.name, "stages", tab.s, "order", tab.order, "gamma", tab.gamma)

# %%
# Forced oscillator u'' + u = exp(t) from rest: u = (exp(t) - cos t - sin t) / 2.
# Halving tau divides the error by about 2**5.
M, K = np.eye(1), np.eye(1)
sys = LinearSystemODE.from_second_order(M, K, np.ones(1), np.exp, np.exp)
exact = (np.exp(1.0) - np.cos(1.0) - np.sin(1.0)) / 2
prev = None
for k in range(1, 6):
    tau = 2.0**-k
    w = row_integrate(tab, sys, np.zeros(2), 1.0, tau)
    err = abs(sys.split(w)[1][0] - exact)
    rate = "" if prev is None else f"  rate {np.log2(prev / err):.2f}"
    print(f"ROW tau=2^-{k}: error {err:.3e}{rate}")
    prev = err

# %%
# Without forcing only the stability function matters, and for this tableau
# it matches exp(z) to one order more: the observed rate is close to 6.
free = LinearSystemODE.from_second_order(M, K, np.zeros(1), lambda t: 0.0, lambda t: 0.0)
e = [abs(free.split(row_integrate(tab, free, np.array([0.0, 1.0]), 1.0, 2.0**-k))[1][0] - np.cos(1.0))
     for k in (2, 3)]
print(f"free oscillator rate {np.log2(e[0] / e[1]):.2f}")

# %%
# L-stability: a very stiff decaying mode is damped even with one big step.
stiff = LinearSystemODE(np.eye(1), -1e8 * np.eye(1), np.zeros(1), lambda t: 0.0, lambda t: 0.0)
print("one step of tau=1 on y' = -1e8 y:", row_integrate(tab, stiff, np.ones(1), 1.0, 1.0)[0])

# %%
# RKN4 on u'' = -16 u, exact solution cos(4t).
prev = None
for k in range(3, 8):
    tau = 2.0**-k
    u, _ = rkn4_integrate(M, 16 * K, lambda t: np.zeros(1), np.ones(1), np.zeros(1), 1.0, tau)
    err = abs(u[0] - np.cos(4.0))
    rate = "" if prev is None else f"  rate {np.log2(prev / err):.2f}"
    print(f"RKN4 tau=2^-{k}: error {err:.3e}{rate}")
    prev = err
