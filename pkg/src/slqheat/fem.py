"""P1 finite elements on a uniform 1D mesh with homogeneous Dirichlet conditions.

Everything downstream works in *spectral* coordinates: the coefficients of a
finite-element function in the M-orthonormal eigenbasis of the discrete
Laplacian. In that basis the L2 inner product is the Euclidean one and the
discrete Laplacian acts as ``-diag(eigenvalues)``. Nodal values are kept for
input/output only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import linalg

# Gauss-Legendre rule on [-1, 1] used for load vectors (exact up to degree 5).
_GAUSS_POINTS = 3


@dataclass(frozen=True)
class Mesh1D:
    a: float
    b: float
    n_elements: int

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"need a < b, got a={self.a}, b={self.b}")
        if self.n_elements < 2:
            raise ValueError(f"need n_elements >= 2, got {self.n_elements}")

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n_elements

    @property
    def dim(self) -> int:
        return self.n_elements - 1

    @property
    def nodes(self) -> np.ndarray:
        """All mesh nodes including the two boundary nodes."""
        return self.a + self.h * np.arange(self.n_elements + 1)

    @property
    def interior_nodes(self) -> np.ndarray:
        return self.nodes[1:-1]


@dataclass(frozen=True, eq=False)
class FemSpace:
    """Assembled P1 space together with its generalized eigen-decomposition.

    ``eigenvectors`` holds the M-orthonormal solutions of ``K phi = lam M phi``
    as columns, ordered by ascending eigenvalue, each with a positive value at
    the first interior node.
    """

    mesh: Mesh1D
    mass: np.ndarray
    stiffness: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def dim(self) -> int:
        return self.mesh.dim

    def to_spectral(self, nodal: np.ndarray) -> np.ndarray:
        """Nodal values (last axis) to spectral coefficients: Phi^T M c."""
        return np.asarray(nodal) @ (self.mass @ self.eigenvectors)

    def to_nodal(self, coeffs: np.ndarray) -> np.ndarray:
        """Spectral coefficients (last axis) to interior nodal values: Phi c."""
        return np.asarray(coeffs) @ self.eigenvectors.T

    def quadrature(self, n_points: int = _GAUSS_POINTS) -> tuple[np.ndarray, np.ndarray]:
        """Composite Gauss rule: points of shape (n_elements, q) and weights (q,)."""
        xi, w = np.polynomial.legendre.leggauss(n_points)
        h = self.mesh.h
        left = self.mesh.nodes[:-1]
        pts = left[:, None] + 0.5 * h * (xi[None, :] + 1.0)
        return pts, 0.5 * h * w

    def evaluate(self, v: "FemFunction | np.ndarray", x: np.ndarray) -> np.ndarray:
        """Evaluate a P1 function (given by spectral coefficients) at points x."""
        coeffs = v.coeffs if isinstance(v, FemFunction) else np.asarray(v)
        nodal = np.concatenate([[0.0], self.to_nodal(coeffs), [0.0]])
        return np.interp(x, self.mesh.nodes, nodal)


@dataclass(frozen=True, eq=False)
class FemFunction:
    space: FemSpace
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.shape != (self.space.dim,):
            raise ValueError(f"expected {self.space.dim} coefficients, got shape {coeffs.shape}")
        object.__setattr__(self, "coeffs", coeffs)

    def __add__(self, other: FemFunction) -> FemFunction:
        return FemFunction(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other: FemFunction) -> FemFunction:
        return FemFunction(self.space, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> FemFunction:
        return FemFunction(self.space, scalar * self.coeffs)

    __rmul__ = __mul__


def assemble_space(a: float, b: float, n_elements: int) -> FemSpace:
    mesh = Mesh1D(float(a), float(b), int(n_elements))
    h, d = mesh.h, mesh.dim
    stiffness = (np.diag(np.full(d, 2.0)) - np.diag(np.ones(d - 1), 1) - np.diag(np.ones(d - 1), -1)) / h
    mass = (np.diag(np.full(d, 4.0)) + np.diag(np.ones(d - 1), 1) + np.diag(np.ones(d - 1), -1)) * h / 6.0
    try:
        lam, phi = linalg.eigh(stiffness, mass)
    except linalg.LinAlgError as exc:
        raise RuntimeError(f"generalized eigensolve failed for n_elements={n_elements}: {exc}") from exc
    phi = phi * np.where(phi[0] < 0, -1.0, 1.0)
    for arr in (mass, stiffness, lam, phi):
        arr.setflags(write=False)
    return FemSpace(mesh, mass, stiffness, lam, phi)


def load_vector(f: Callable[[np.ndarray], np.ndarray], space: FemSpace) -> np.ndarray:
    """b_i = integral of f * phi_i over the domain, by composite Gauss quadrature."""
    pts, w = space.quadrature()
    vals = np.asarray(f(pts), dtype=float) * np.ones_like(pts)
    if not np.all(np.isfinite(vals)):
        raise ValueError("function returned non-finite values at quadrature points")
    h = space.mesh.h
    local = (pts - space.mesh.nodes[:-1, None]) / h
    # On element e the hat of node e falls as 1 - local, the hat of node e+1 rises as local.
    falling = (vals * (1.0 - local)) @ w
    rising = (vals * local) @ w
    return rising[:-1] + falling[1:]


def project_l2(f: Callable[[np.ndarray], np.ndarray], space: FemSpace) -> FemFunction:
    """L2 projection onto the P1 space, returned in spectral coordinates."""
    rhs = load_vector(f, space)
    nodal = linalg.solve(space.mass, rhs, assume_a="pos")
    return FemFunction(space, space.to_spectral(nodal))


def norm_gamma(v: FemFunction, gamma: float) -> float:
    """Discrete fractional norm ||(-Delta_h)^{gamma/2} v||."""
    weights = v.space.eigenvalues ** gamma
    return float(np.sqrt(np.sum(weights * v.coeffs**2)))


def nodal_values(v: FemFunction) -> np.ndarray:
    return v.space.to_nodal(v.coeffs)


def from_nodal(space: FemSpace, nodal: np.ndarray) -> FemFunction:
    return FemFunction(space, space.to_spectral(nodal))


def l2_error(f: Callable[[np.ndarray], np.ndarray], v: FemFunction, n_points: int = 5) -> float:
    """||f - v||_{L2} with a composite Gauss rule of ``n_points`` per element."""
    pts, w = v.space.quadrature(n_points)
    diff = np.asarray(f(pts), dtype=float) - v.space.evaluate(v, pts)
    return float(np.sqrt(np.sum((diff**2) @ w)))


def l2_norm(f: Callable[[np.ndarray], np.ndarray], space: FemSpace, n_points: int = 5) -> float:
    pts, w = space.quadrature(n_points)
    vals = np.asarray(f(pts), dtype=float) * np.ones_like(pts)
    return float(np.sqrt(np.sum((vals**2) @ w)))


def prolong(coarse: FemSpace, fine: FemSpace, nodal: np.ndarray) -> np.ndarray:
    """Interpolate interior nodal values (last axis) onto a nested finer mesh.

    Exact for P1 functions because every coarse element is a union of fine ones.
    """
    cm, fm = coarse.mesh, fine.mesh
    if (cm.a, cm.b) != (fm.a, fm.b) or fm.n_elements % cm.n_elements:
        raise ValueError(
            f"meshes not nested: {cm.n_elements} elements does not divide {fm.n_elements}"
        )
    nodal = np.asarray(nodal)
    pad = np.zeros(nodal.shape[:-1] + (cm.n_elements + 1,))
    pad[..., 1:-1] = nodal
    ratio = fm.n_elements // cm.n_elements
    s = np.arange(1, fm.n_elements) / ratio
    left = np.floor(s).astype(int)
    frac = s - left
    right = np.minimum(left + 1, cm.n_elements)
    return pad[..., left] * (1.0 - frac) + pad[..., right] * frac
