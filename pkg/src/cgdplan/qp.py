"""Minimum-deviation projection onto ``{q : A q <= b, E q = f}``.

Solves ``min 1/2 ||q - q_nn||_Q^2`` with the Goldfarb-Idnani dual
active-set method. The iteration starts at the unconstrained minimizer
``q_nn`` and adds one violated constraint at a time, dropping active
constraints whose multipliers would turn negative. Every iterate is dual
feasible, so the first primal-feasible point is optimal, and an empty
polytope is detected exactly.

Ties (most-violated row, ratio test) go to the lowest row index.
"""
from dataclasses import dataclass, field

import numpy as np

FEAS_TOL = 1e-9
KKT_TOL = 1e-8
_DEP_TOL = 1e-10  # relative norm below which a new normal counts as dependent

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration_limit"


@dataclass(frozen=True)
class QpProblem:
    q_nn: np.ndarray
    a_matrix: np.ndarray
    b_vector: np.ndarray
    weight: np.ndarray = None
    eq_matrix: np.ndarray = None
    eq_vector: np.ndarray = None

    def __post_init__(self):
        q = np.asarray(self.q_nn, dtype=np.float64).reshape(-1)
        a = np.asarray(self.a_matrix, dtype=np.float64).reshape(-1, q.shape[0])
        b = np.asarray(self.b_vector, dtype=np.float64).reshape(-1)
        if a.shape[0] != b.shape[0]:
            raise ValueError(f"A has {a.shape[0]} rows but b has {b.shape[0]} entries")
        w = np.eye(q.shape[0]) if self.weight is None else np.asarray(self.weight, dtype=np.float64)
        if w.shape != (q.shape[0], q.shape[0]):
            raise ValueError(f"weight must be {q.shape[0]}x{q.shape[0]}, got {w.shape}")
        if not np.allclose(w, w.T, rtol=0, atol=1e-12 * max(1.0, np.abs(w).max())):
            raise ValueError("weight matrix must be symmetric")
        if self.eq_matrix is None:
            e = np.zeros((0, q.shape[0]))
            f = np.zeros(0)
        else:
            e = np.asarray(self.eq_matrix, dtype=np.float64).reshape(-1, q.shape[0])
            f = np.asarray(self.eq_vector, dtype=np.float64).reshape(-1)
            if e.shape[0] != f.shape[0]:
                raise ValueError("equality matrix and vector sizes differ")
        for name, val in (("q_nn", q), ("a_matrix", a), ("b_vector", b),
                          ("weight", w), ("eq_matrix", e), ("eq_vector", f)):
            object.__setattr__(self, name, val)

    @classmethod
    def from_constraints(cls, q_nn, cset, weight=None, eq_matrix=None, eq_vector=None):
        return cls(q_nn, cset.a_matrix, cset.b_vector, weight, eq_matrix, eq_vector)

    @property
    def dim(self):
        return self.q_nn.shape[0]


@dataclass
class QpSolution:
    q_opt: np.ndarray
    active_rows: tuple
    iterations: int
    status: str
    multipliers: np.ndarray = field(repr=False, default=None)
    eq_multipliers: np.ndarray = field(repr=False, default=None)
    kkt: dict = field(default_factory=dict)

    @property
    def optimal(self):
        return self.status == OPTIMAL


def kkt_residuals(problem, q, lam, mu):
    """Stationarity, primal/dual feasibility and complementarity residuals (inf-norms)."""
    s = problem.b_vector - problem.a_matrix @ q
    grad = problem.weight @ (q - problem.q_nn) + problem.a_matrix.T @ lam + problem.eq_matrix.T @ mu
    return {
        "stationarity": float(np.abs(grad).max(initial=0.0)),
        "primal": float(max(0.0, -s.min(initial=np.inf))),
        "equality": float(np.abs(problem.eq_matrix @ q - problem.eq_vector).max(initial=0.0)),
        "dual": float(max(0.0, -lam.min(initial=np.inf))),
        "complementarity": float(np.abs(lam * s).max(initial=0.0)),
    }


class _DualActiveSet:
    """Working state of one solve; single use."""

    def __init__(self, problem):
        self.p = problem
        chol = np.linalg.cholesky(problem.weight)
        self.J = np.linalg.inv(chol).T          # G^{-1} = J J^T
        self.x = problem.q_nn.copy()
        self.active = []                        # ("e", j) or ("i", row)
        self.u = []                             # multipliers, GI convention
        self.cols = []                          # J^T n for each active normal
        self.sign = {}                          # orientation chosen for equalities
        self.iterations = 0

    def normal(self, c):
        kind, idx = c
        if kind == "i":
            return -self.p.a_matrix[idx]
        return self.sign[idx] * self.p.eq_matrix[idx]

    def slack(self, c):
        kind, idx = c
        if kind == "i":
            return self.p.b_vector[idx] - self.p.a_matrix[idx] @ self.x
        return self.sign[idx] * (self.p.eq_matrix[idx] @ self.x - self.p.eq_vector[idx])

    def _directions(self, d):
        if not self.cols:
            return np.zeros(0), d
        B = np.column_stack(self.cols)
        Q1, R = np.linalg.qr(B)
        proj = Q1.T @ d
        r = np.linalg.solve(R, proj)
        return r, d - Q1 @ proj

    def add(self, c, max_iter):
        """Bring constraint ``c`` into the active set. Returns a status string or None."""
        u_new = 0.0
        while True:
            if self.iterations >= max_iter:
                return ITERATION_LIMIT
            self.iterations += 1
            s = self.slack(c)
            d = self.J.T @ self.normal(c)
            r, d_perp = self._directions(d)
            dd = float(d_perp @ d_perp)
            dependent = dd <= (_DEP_TOL * np.linalg.norm(d)) ** 2

            t1, drop = np.inf, None
            for pos, (con, ri) in enumerate(zip(self.active, r)):
                if con[0] != "i" or ri <= 0:
                    continue
                ratio = self.u[pos] / ri
                if ratio < t1 or (ratio == t1 and con[1] < self.active[drop][1]):
                    t1, drop = ratio, pos
            t2 = np.inf if dependent else -s / dd

            if t1 == np.inf and t2 == np.inf:
                return INFEASIBLE
            t = min(t1, t2)
            if t2 < np.inf:
                self.x = self.x + t * (self.J @ d_perp)
            self.u = [ui - t * ri for ui, ri in zip(self.u, r)]
            u_new += t
            if t2 <= t1:
                self.active.append(c)
                self.u.append(u_new)
                self.cols.append(d)
                return None
            del self.active[drop], self.u[drop], self.cols[drop]


def solve(problem, tol=FEAS_TOL, max_iter=None, warm_start=None):
    """Project ``problem.q_nn`` onto the constraint polytope.

    ``warm_start`` is an optional collection of inequality rows (for
    instance the active set of a previous, similar solve); violated hinted
    rows are brought in before any others.
    """
    A, b = problem.a_matrix, problem.b_vector
    n_rows = A.shape[0]
    if max_iter is None:
        max_iter = 10 * max(n_rows + problem.eq_matrix.shape[0], 1)
    hint = np.zeros(n_rows, dtype=bool)
    if warm_start is not None:
        hint[np.asarray(list(warm_start), dtype=np.int64)] = True

    ws = _DualActiveSet(problem)
    status = None
    for j in range(problem.eq_matrix.shape[0]):
        resid = problem.eq_matrix[j] @ ws.x - problem.eq_vector[j]
        ws.sign[j] = -1.0 if resid > 0 else 1.0
        d = ws.J.T @ problem.eq_matrix[j]
        _, d_perp = ws._directions(d)
        if float(d_perp @ d_perp) <= (_DEP_TOL * np.linalg.norm(d)) ** 2:
            if abs(resid) > tol:
                status = INFEASIBLE
                break
            continue  # redundant equality
        status = ws.add(("e", j), max_iter)
        if status is not None:
            break

    while status is None:
        s = b - A @ ws.x
        s[[c[1] for c in ws.active if c[0] == "i"]] = np.inf
        violated = s < -tol
        if not violated.any():
            status = OPTIMAL
            break
        pool = violated & hint
        if pool.any():
            row = int(np.flatnonzero(pool)[np.argmin(s[pool])])
        else:
            row = int(np.argmin(s))
        status = ws.add(("i", row), max_iter)

    q, lam, mu = ws.x, np.zeros(n_rows), np.zeros(problem.eq_matrix.shape[0])
    active_rows = tuple(sorted(c[1] for c in ws.active if c[0] == "i"))
    if status == OPTIMAL:
        q, lam, mu = _polish(problem, ws)
    return QpSolution(q, active_rows, ws.iterations, status, lam, mu,
                      kkt_residuals(problem, q, lam, mu))


def _polish(problem, ws):
    """Re-solve the KKT system on the final active set to clean up rounding."""
    n = problem.dim
    eq_rows = [c[1] for c in ws.active if c[0] == "e"]
    in_rows = [c[1] for c in ws.active if c[0] == "i"]
    C = np.vstack([problem.eq_matrix[eq_rows], problem.a_matrix[in_rows]])
    d = np.concatenate([problem.eq_vector[eq_rows], problem.b_vector[in_rows]])
    m = C.shape[0]
    lam = np.zeros(problem.a_matrix.shape[0])
    mu = np.zeros(problem.eq_matrix.shape[0])
    kkt = np.block([[problem.weight, C.T], [C, np.zeros((m, m))]])
    rhs = np.concatenate([problem.weight @ problem.q_nn, d])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = None
    if sol is not None:
        q, nu = sol[:n], sol[n:]
        lam_p = lam.copy()
        lam_p[in_rows] = nu[len(eq_rows):]
        mu_p = mu.copy()
        mu_p[eq_rows] = nu[:len(eq_rows)]
        res = kkt_residuals(problem, q, lam_p, mu_p)
        if res["primal"] <= FEAS_TOL and res["dual"] <= KKT_TOL:
            return q, lam_p, mu_p
    # fall back to the iterate with multipliers from the GI bookkeeping
    for c, u in zip(ws.active, ws.u):
        if c[0] == "i":
            lam[c[1]] = u
        else:
            mu[c[1]] = -ws.sign[c[1]] * u
    return ws.x.copy(), lam, mu
