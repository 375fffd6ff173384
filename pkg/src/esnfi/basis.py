"""Principal-component basis reduction of spatio-temporal fields.

Each field ``Z`` (``N x T``) is approximated as ``Phi @ coefficients + mean``
where ``Phi`` holds the leading left singular vectors of the time-centered
data matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from esnfi.fields import SpatioTemporalField

# Above this size the SVD goes through the smaller Gram matrix.
_DIRECT_SVD_LIMIT = 2000


class BasisError(ValueError):
    pass


@dataclass(frozen=True)
class BasisDecomposition:
    """Fitted PCA basis.

    Attributes:
        basis: ``(N, P)`` matrix with orthonormal columns.
        coefficients: ``(P, T)`` scores of the training field.
        singular_values: all singular values of the centered data, descending.
        column_mean: length-``N`` per-location mean removed before the SVD.
    """

    basis: np.ndarray
    coefficients: np.ndarray
    singular_values: np.ndarray
    column_mean: np.ndarray

    @property
    def retained(self) -> int:
        return self.basis.shape[1]

    @property
    def n_locations(self) -> int:
        return self.basis.shape[0]


def _svd(centered: np.ndarray):
    n, t = centered.shape
    if min(n, t) <= _DIRECT_SVD_LIMIT:
        u, s, _ = np.linalg.svd(centered, full_matrices=False)
        return u, s
    # Gram route: eigenvectors of the small side, mapped back.
    if n <= t:
        evals, evecs = np.linalg.eigh(centered @ centered.T)
        order = np.argsort(evals)[::-1]
        s = np.sqrt(np.clip(evals[order], 0.0, None))
        return evecs[:, order], s
    evals, evecs = np.linalg.eigh(centered.T @ centered)
    order = np.argsort(evals)[::-1]
    s = np.sqrt(np.clip(evals[order], 0.0, None))
    v = evecs[:, order]
    nz = s > s[0] * 1e-12 if s[0] > 0 else np.zeros_like(s, dtype=bool)
    u = np.zeros((n, len(s)))
    u[:, nz] = (centered @ v[:, nz]) / s[nz]
    return u, s


def fit_pca(field: SpatioTemporalField, retained: int) -> BasisDecomposition:
    """Fit a ``retained``-component PCA basis to ``field``.

    Basis columns are sign-normalized so that each column's largest-magnitude
    entry is positive.
    """
    n, t = field.values.shape
    if not 1 <= retained <= min(n, t):
        raise BasisError(f"retained must be in [1, {min(n, t)}], got {retained}")
    mean = field.values.mean(axis=1)
    centered = field.values - mean[:, None]
    u, s = _svd(centered)
    phi = np.array(u[:, :retained])
    pivot = np.argmax(np.abs(phi), axis=0)
    signs = np.sign(phi[pivot, np.arange(retained)])
    signs[signs == 0] = 1.0
    phi *= signs
    coefs = phi.T @ centered
    return BasisDecomposition(phi, coefs, s[: min(n, t)], mean)


def project(decomp: BasisDecomposition, field: SpatioTemporalField) -> np.ndarray:
    """Scores ``Phi^T (Z - mean)`` of a field on the fitted basis."""
    values = field.values if isinstance(field, SpatioTemporalField) else np.asarray(field)
    if values.shape[0] != decomp.n_locations:
        raise BasisError(
            f"field has {values.shape[0]} locations, basis has {decomp.n_locations}"
        )
    return decomp.basis.T @ (values - decomp.column_mean[:, None])


def reconstruct_values(decomp: BasisDecomposition, coefficients) -> np.ndarray:
    """``Phi @ coefficients + mean`` as a bare array (vector or matrix)."""
    c = np.asarray(coefficients, dtype=np.float64)
    if c.shape[0] != decomp.retained:
        raise BasisError(f"expected {decomp.retained} coefficient rows, got {c.shape[0]}")
    if c.ndim == 1:
        return decomp.basis @ c + decomp.column_mean
    return decomp.basis @ c + decomp.column_mean[:, None]


def reconstruct(decomp: BasisDecomposition, coefficients, like: SpatioTemporalField | None = None,
                times=None, locations=None, variable_name: str = "Z") -> SpatioTemporalField:
    """Map coefficients back to the spatial scale.

    Grid metadata comes from ``like`` when given; otherwise integer times
    ``1..T`` and placeholder locations are used.
    """
    c = np.asarray(coefficients, dtype=np.float64)
    if c.ndim == 1:
        c = c[:, None]
    values = reconstruct_values(decomp, c)
    if like is not None:
        locations = like.locations if locations is None else locations
        times = like.times if times is None else times
        variable_name = like.variable_name
    if times is None:
        times = tuple(range(1, values.shape[1] + 1))
    if locations is None:
        locations = np.column_stack([np.arange(decomp.n_locations), np.zeros(decomp.n_locations)])
    return SpatioTemporalField(locations, tuple(times), values, variable_name)
