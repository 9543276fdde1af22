import numpy as np
from dataclasses import dataclass, field

from util.exceptions import DomainError, NonConvergence

RICCATI_TOL = 1e-9
RICCATI_MAX_ITERS = 10000
DEFAULT_TAU_CAP = 100


def symmetrize(X):
    return 0.5 * (X + X.T)


def riccati_map(X, A, C, W, V):
    '''
    One step of the filtered Riccati recursion.
        Sigma = A X A^T + W
        X+    = Sigma - Sigma C^T (C Sigma C^T + V)^{-1} C Sigma
    '''
    sigma = A @ X @ A.T + W
    S = C @ sigma @ C.T + V
    gain = np.linalg.solve(S, C @ sigma).T
    return symmetrize(sigma - gain @ C @ sigma)


def solve_steady_state_covariance(A, C, W, V, tol=RICCATI_TOL, max_iters=RICCATI_MAX_ITERS):
    '''
    Steady-state local error covariance P_bar by plain fixed-point iteration
    of the filtered Riccati map starting from X0 = W.

    (A, C) observable and (A, sqrt(W)) controllable are the caller's job; only
    numeric convergence is checked here.

    :raises NonConvergence: after max_iters iterations or on non-finite entries
    '''
    A, C, W, V = (np.atleast_2d(np.asarray(m, dtype=np.float64)) for m in (A, C, W, V))
    X = symmetrize(W)
    for _ in range(max_iters):
        X_next = riccati_map(X, A, C, W, V)
        if not np.all(np.isfinite(X_next)):
            raise NonConvergence('Riccati iteration produced non-finite entries')
        if np.linalg.norm(X_next - X, 'fro') <= tol:
            return X_next
        X = X_next
    raise NonConvergence(f'Riccati iteration did not converge in {max_iters} iterations')


def lyapunov_map(X, A, W):
    '''f(X) = A X A^T + W, the open-loop covariance propagation.'''
    return symmetrize(A @ X @ A.T + W)


@dataclass(frozen=True, eq=False)
class ProcessModel:
    '''
    One sensor's LTI process x+ = A x + w, y = C x + v, with w ~ N(0, W), v ~ N(0, V).
    P_bar is the steady-state local Kalman error covariance; it is solved on
    construction unless supplied.
    '''
    A: np.ndarray
    C: np.ndarray
    W: np.ndarray
    V: np.ndarray
    P_bar: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ('A', 'C', 'W', 'V'):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=np.float64)))
        if self.P_bar is None:
            P_bar = solve_steady_state_covariance(self.A, self.C, self.W, self.V)
        else:
            P_bar = symmetrize(np.atleast_2d(np.asarray(self.P_bar, dtype=np.float64)))
        object.__setattr__(self, 'P_bar', P_bar)
        for arr in (self.A, self.C, self.W, self.V, self.P_bar):
            arr.setflags(write=False)

    @property
    def state_dim(self):
        return self.A.shape[0]

    @property
    def spectral_radius(self):
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def riccati_residual(self):
        return float(np.linalg.norm(self.P_bar - riccati_map(self.P_bar, self.A, self.C, self.W, self.V), 'fro'))

    def to_dict(self):
        return {'A': self.A.tolist(), 'C': self.C.tolist(), 'W': self.W.tolist(),
                'V': self.V.tolist(), 'P_bar': self.P_bar.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(A=d['A'], C=d['C'], W=d['W'], V=d['V'], P_bar=d.get('P_bar'))


def error_covariance_at_aoi(model, tau):
    '''Remote error covariance f^tau(P_bar) for AoI tau >= 1.'''
    if tau < 1:
        raise DomainError(f'AoI must be >= 1, got {tau}')
    X = model.P_bar
    for _ in range(int(tau)):
        X = lyapunov_map(X, model.A, model.W)
    return X


def mse_at_aoi(model, tau, tau_cap=DEFAULT_TAU_CAP):
    '''Tr(f^min(tau, tau_cap)(P_bar)).'''
    if tau < 1 or tau_cap < 1:
        raise DomainError(f'AoI and cap must be >= 1, got tau={tau}, tau_cap={tau_cap}')
    return float(np.trace(error_covariance_at_aoi(model, min(tau, tau_cap))))


def mse_table(model, tau_cap=DEFAULT_TAU_CAP):
    '''
    Tr(f^tau(P_bar)) for tau = 1..tau_cap, as an array indexed by tau - 1.
    Reward lookups in the environment and value iteration go through this table.
    '''
    if tau_cap < 1:
        raise DomainError(f'tau_cap must be >= 1, got {tau_cap}')
    table = np.empty(tau_cap)
    X = model.P_bar
    for i in range(tau_cap):
        X = lyapunov_map(X, model.A, model.W)
        table[i] = np.trace(X)
    return table
