from dataclasses import dataclass


@dataclass(frozen=True)
class SolverSettings:
    # constrained-gradient stop: ||grad|| <= tol_grad (1 + |J|)
    tol_grad: float = 1e-6
    # |dJ along the dilation| <= tol_pohozaev (a|grad u|^2 + b|grad u|^(2 theta))
    tol_pohozaev: float = 1e-6
    # EL residual <= tol_el (1 + ||u||_H1)
    tol_el: float = 1e-4
    max_iter: int = 50_000
    armijo: float = 1e-4
    # guard band below t0, as a fraction of t0
    k_margin: float = 0.05
    # fiber pulls by dilation only while |s_max| exceeds this
    pull_threshold: float = 1e-2
    mass_tol: float = 1e-8
