"""One-dimensional elliptic problem with a random coefficient and a random forcing.

Solves -(a(x) u'(x))' = f(x) on (0, 1) with u(0) = u(1) = 0 by second-order
central differences on n_l = 1/h_l uniform cells. The coefficient is

    a(x) = a0 + scale * exp(sigma * (Y1 phi1(x) + Y2 phi2(x)))

with Y Gaussian (``lognormal`` family) or uniform on [-1, 1] (``uniform``
family), and the forcing is f0 plus a cosine series with K Gaussian coefficients.
The quantity of interest is a Gaussian-weighted average of u around x0, or the
plain integral of u, taken exactly over the piecewise-linear interpolant of the
nodal solution. Its error is then the O(h**2) interpolation error with a fixed
sign, whatever the width of the kernel relative to the mesh.
"""
import math
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.legendre import leggauss
from scipy.linalg import solve_banded
from scipy.special import ndtr

from shared.models import MeshHierarchy

from .base import CoupledSampler

COEFFICIENT_FAMILIES = ("lognormal", "uniform")
FUNCTIONALS = ("gaussian", "mean")
# grid values per banded solve
MAX_GRID_VALUES = 1 << 20


def solve_tridiagonal(lower: np.ndarray, diag: np.ndarray, upper: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a batch of tridiagonal systems as one block-diagonal banded system.

    All arguments have shape (rows, m); lower[:, 0] and upper[:, -1] are ignored.
    """
    rows, m = diag.shape
    sub = lower.copy()
    sub[:, 0] = 0.0
    sup = upper.copy()
    sup[:, -1] = 0.0

    ab = np.zeros((3, rows * m))
    ab[0, 1:] = sup.ravel()[:-1]
    ab[1] = diag.ravel()
    ab[2, :-1] = sub.ravel()[1:]
    return solve_banded((1, 1), ab, rhs.ravel(), check_finite=False).reshape(rows, m)


class EllipticSampler(CoupledSampler):
    name = "elliptic"

    def __init__(self, num_modes: int = 2, family: str = "lognormal", a0: float = 0.5,
                 coefficient_scale: float = 1.0, coefficient_sigma: float = 1.0,
                 f0: float = 1.0, f_hat: float = 0.5, functional: str = "gaussian",
                 x0: float = 0.5, sigma2: float = 0.01,
                 h0: float = 0.25, beta: int = 2, gamma: float = 1.0, max_level: Optional[int] = 12):
        if family not in COEFFICIENT_FAMILIES:
            raise ValueError(f"unknown coefficient family {family!r}")
        if functional not in FUNCTIONALS:
            raise ValueError(f"unknown functional {functional!r}")
        if a0 <= 0 or coefficient_scale < 0:
            raise ValueError("need a0 > 0 and a nonnegative coefficient scale")
        if num_modes < 0:
            raise ValueError("num_modes must be nonnegative")
        n0 = int(round(1.0 / h0))
        if n0 < 2 or abs(n0 * h0 - 1.0) > 1e-12:
            raise ValueError(f"1/h0 must be an integer of at least 2, got h0={h0}")
        super().__init__(MeshHierarchy(h0=h0, beta=beta, gamma=gamma), nominal_q1=2.0, nominal_q2=4.0,
                         max_level=max_level)
        self.num_modes = num_modes
        self.family = family
        self.a0 = a0
        self.coefficient_scale = coefficient_scale
        self.coefficient_sigma = coefficient_sigma
        self.f0 = f0
        self.f_hat = f_hat
        self.functional = functional
        self.x0 = x0
        self.sigma2 = sigma2
        self.n0 = n0

    def cells(self, level: int) -> int:
        self.check_level(level)
        return self.n0 * self.hierarchy.beta ** level

    def outcome_width(self, level: int) -> int:
        return 2 + self.num_modes

    def split_outcome(self, omega: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Map a row of normals to the coefficient parameters Y and forcing coefficients Z"""
        y = omega[:, :2]
        if self.family == "uniform":
            y = 2.0 * ndtr(y) - 1.0
        return y, omega[:, 2:2 + self.num_modes]

    def coefficient(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        field = y[:, :1] * np.sin(np.pi * x) + y[:, 1:2] * np.cos(np.pi * x)
        return self.a0 + self.coefficient_scale * np.exp(self.coefficient_sigma * field)

    def forcing(self, x: np.ndarray, z: np.ndarray) -> np.ndarray:
        f = np.full((z.shape[0], x.size), self.f0)
        for k in range(1, self.num_modes + 1):
            f = f + self.f_hat * z[:, k - 1:k] * np.cos(k * np.pi * x) / k ** 2
        return f

    def operator(self, n: int, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Tridiagonal finite-difference operator on the n-1 interior nodes"""
        h = 1.0 / n
        midpoints = (np.arange(n) + 0.5) * h
        a_mid = self.coefficient(midpoints, y)
        if np.any(a_mid <= 0):
            raise ValueError("diffusion coefficient must stay positive")
        left, right = a_mid[:, :-1], a_mid[:, 1:]
        return -left / h ** 2, (left + right) / h ** 2, -right / h ** 2

    def solve(self, n: int, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Nodal solution including the two boundary zeros, shape (rows, n + 1)"""
        interior = np.arange(1, n) / n
        lower, diag, upper = self.operator(n, y)
        u_inner = solve_tridiagonal(lower, diag, upper, self.forcing(interior, z))
        rows = y.shape[0]
        return np.hstack([np.zeros((rows, 1)), u_inner, np.zeros((rows, 1))])

    def node_weights(self, n: int) -> np.ndarray:
        """Integrals of the kernel against the n + 1 hat functions of the uniform grid"""
        h = 1.0 / n
        if self.functional == "mean":
            weights = np.full(n + 1, h)
            weights[[0, -1]] = 0.5 * h
            return weights

        x = np.linspace(0.0, 1.0, n + 1)
        density = np.exp(-(x - self.x0) ** 2 / (2 * self.sigma2)) / math.sqrt(2 * np.pi * self.sigma2)
        cdf = ndtr((x - self.x0) / math.sqrt(self.sigma2))
        # zeroth and first moments of the kernel over each cell
        mass = np.diff(cdf)
        first = self.x0 * mass + self.sigma2 * (density[:-1] - density[1:])
        left, right = x[:-1], x[1:]

        weights = np.zeros(n + 1)
        weights[:-1] += (right * mass - first) / h
        weights[1:] += (first - left * mass) / h
        return weights

    def quantity(self, n: int, u: np.ndarray) -> np.ndarray:
        return u @ self.node_weights(n)

    def evaluate(self, level: int, omega: np.ndarray) -> np.ndarray:
        omega = np.atleast_2d(omega)
        n = self.cells(level)
        step = max(1, MAX_GRID_VALUES // (n + 1))
        values = np.empty(omega.shape[0])
        for start in range(0, omega.shape[0], step):
            y, z = self.split_outcome(omega[start:start + step])
            values[start:start + step] = self.quantity(n, self.solve(n, y, z))
        return values

    def describe(self) -> dict:
        info = super().describe()
        info.update(num_modes=self.num_modes, family=self.family, a0=self.a0,
                    coefficient_scale=self.coefficient_scale, coefficient_sigma=self.coefficient_sigma,
                    f0=self.f0, f_hat=self.f_hat, functional=self.functional, x0=self.x0, sigma2=self.sigma2)
        return info


def elliptic_reference_value(sampler: EllipticSampler, n_cells: int = 2 ** 10, nodes: int = 24) -> float:
    """Tensor Gauss quadrature over (Y1, Y2) on a fine grid.

    The solution is linear in the forcing and the forcing coefficients have mean
    zero, so the forcing is replaced by its mean f0.
    """
    if sampler.family == "lognormal":
        points, weights = hermegauss(nodes)
        weights = weights / math.sqrt(2 * np.pi)
    else:
        points, weights = leggauss(nodes)
        weights = weights / 2.0

    y1, y2 = np.meshgrid(points, points, indexing="ij")
    w = np.outer(weights, weights).ravel()
    y = np.column_stack([y1.ravel(), y2.ravel()])
    z = np.zeros((y.shape[0], sampler.num_modes))
    values = sampler.quantity(n_cells, sampler.solve(n_cells, y, z))
    return float(np.dot(w, values))
