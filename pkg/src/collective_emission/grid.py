"""Quadrature over the unit sphere."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument


def orthonormal_frame(axis):
    """Two unit vectors completing ``axis`` to a right-handed frame."""
    w = np.asarray(axis, float)
    w = w / np.linalg.norm(w)
    ref = np.array([0.0, 0.0, 1.0]) if abs(w[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(ref, w)
    u /= np.linalg.norm(u)
    v = np.cross(w, u)
    return u, v


@dataclass(frozen=True)
class AngularGrid:
    """Directions ``nodes`` (M, 3) with quadrature ``weights`` summing to 4 pi.

    ``theta`` and ``phi`` are measured from ``axis`` in the frame returned by
    :func:`orthonormal_frame`; for the default z axis that frame is (x, y, z).
    """

    nodes: np.ndarray
    weights: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    axis: tuple = (0.0, 0.0, 1.0)

    @classmethod
    def gauss_legendre(cls, n_theta: int = 200, n_phi: int = 200, axis=(0.0, 0.0, 1.0)):
        """Gauss-Legendre nodes in cos(theta) times a uniform phi rule."""
        if n_theta < 1 or n_phi < 1:
            raise InvalidArgument("grid resolution must be >= 1")
        mu, w_mu = np.polynomial.legendre.leggauss(n_theta)
        phi = (np.arange(n_phi) + 0.5) * (2 * np.pi / n_phi)
        mu_g, phi_g = np.meshgrid(mu, phi, indexing="ij")
        weights = np.outer(w_mu, np.full(n_phi, 2 * np.pi / n_phi)).ravel()
        sin_t = np.sqrt(1.0 - mu_g**2)
        if tuple(axis) == (0.0, 0.0, 1.0):
            e1, e2, e3 = np.eye(3)
        else:
            e1, e2 = orthonormal_frame(axis)
            e3 = np.asarray(axis, float) / np.linalg.norm(axis)
        nodes = (sin_t * np.cos(phi_g)).ravel()[:, None] * e1 \
            + (sin_t * np.sin(phi_g)).ravel()[:, None] * e2 \
            + mu_g.ravel()[:, None] * e3
        return cls(nodes, weights, np.arccos(mu_g).ravel(), phi_g.ravel(),
                   tuple(float(a) for a in axis))

    @classmethod
    def from_directions(cls, directions):
        """Ad hoc node set (e.g. random test directions). Weights are equal."""
        nodes = np.asarray(directions, float).reshape(-1, 3)
        nodes = nodes / np.linalg.norm(nodes, axis=1, keepdims=True)
        weights = np.full(len(nodes), 4 * np.pi / len(nodes))
        theta = np.arccos(np.clip(nodes[:, 2], -1, 1))
        phi = np.mod(np.arctan2(nodes[:, 1], nodes[:, 0]), 2 * np.pi)
        return cls(nodes, weights, theta, phi)

    def __len__(self):
        return len(self.weights)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))
