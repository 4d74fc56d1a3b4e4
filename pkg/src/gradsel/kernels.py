"""Sample geometry: Gaussian RKHS kernel, smoothing weights and bandwidths.

Everything the solver needs about the sample is precomputed once into an
immutable :class:`KernelContext`, which can be shared read-only between
threads fitting different penalty levels or folds.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from ._validation import (
    DegenerateSampleError,
    GradselError,
    InsufficientDataError,
    check_labels,
    check_positive,
    check_X,
)


@dataclass(frozen=True)
class Dataset:
    """Sample matrix ``X`` (n x p) with labels ``y`` in {-1, +1}."""

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple = None

    def __post_init__(self):
        X = check_X(self.X)
        y = check_labels(self.y)
        if y.shape[0] != X.shape[0]:
            raise GradselError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} labels"
            )
        names = self.feature_names
        if names is None:
            names = tuple(f"x{j + 1}" for j in range(X.shape[1]))
        elif len(names) != X.shape[1]:
            raise GradselError(
                f"{len(names)} feature names given for {X.shape[1]} columns"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(names))

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def subset(self, rows=None, columns=None):
        X, names = self.X, self.feature_names
        y = self.y
        if rows is not None:
            X, y = X[rows], y[rows]
        if columns is not None:
            columns = list(columns)
            X = X[:, columns]
            names = tuple(names[c] for c in columns)
        return Dataset(X, y, names)


@dataclass(frozen=True, eq=False)
class KernelContext:
    """Precomputed kernel geometry for one sample.

    Attributes
    ----------
    X : ndarray of shape (n, p)
        The sample the context was built from.
    K : ndarray of shape (n, n)
        Gaussian kernel ``exp(-|x_i - x_j|^2 / (2 sigma2))``.
    sigma2 : float
        RKHS kernel bandwidth, in squared distance units.
    s : float
        Smoothing bandwidth, in distance units.
    W : ndarray of shape (n, n)
        Smoothing weights ``s^-(p+2) exp(-|x_i - x_j|^2 / (2 s^2))`` with
        entries outside ``neighbor_mask`` set to exactly zero.
    neighbor_mask : ndarray of bool or None
        Symmetric k-nearest-neighbour mask, or None for the full sample.
    """

    X: np.ndarray
    K: np.ndarray
    sigma2: float
    s: float
    W: np.ndarray
    neighbor_mask: np.ndarray = None
    sq_dists: np.ndarray = field(default=None, repr=False)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def delta(self, ell):
        """Coordinate differences ``x_{i,ell} - x_{j,ell}`` as an n x n matrix.

        Block 0 is the intercept block and uses the constant 1.
        """
        if ell == 0:
            return np.ones((self.n, self.n))
        x = self.X[:, ell - 1]
        return x[:, None] - x[None, :]


def squared_distances(X):
    """Symmetric matrix of pairwise squared Euclidean distances.

    Only one triangle is computed, so the result is exactly symmetric.
    """
    return squareform(pdist(X, metric="sqeuclidean"))


BANDWIDTH_CONVENTIONS = ("distance", "squared")


def median_bandwidth(X, squared=True):
    """Median of the pairwise squared Euclidean distances of the rows of X.

    With ``squared=False`` the median of the plain distances is returned.
    """
    X = check_X(X, min_samples=1)
    if X.shape[0] < 2:
        raise InsufficientDataError(
            "median bandwidth needs at least 2 samples", module="kernel_engine"
        )
    d2 = pdist(X, metric="sqeuclidean")
    if not np.any(d2 > 0):
        raise DegenerateSampleError(
            "all pairwise distances are zero", module="kernel_engine"
        )
    return float(np.median(d2 if squared else np.sqrt(d2)))


def heuristic_bandwidth(X, convention="distance"):
    """Value assigned to both ``sigma2`` and ``s^2`` by the median heuristic.

    ``"distance"`` uses the median pairwise distance, ``"squared"`` the
    median pairwise squared distance.
    """
    if convention not in BANDWIDTH_CONVENTIONS:
        raise GradselError(
            f"bandwidth convention must be one of {BANDWIDTH_CONVENTIONS}, "
            f"got {convention!r}", module="kernel_engine")
    return median_bandwidth(X, squared=convention == "squared")


def gaussian_kernel(A, B, sigma2):
    """Cross kernel matrix ``K(a_i, b_j)`` between the rows of A and B."""
    return np.exp(-cdist(A, B, metric="sqeuclidean") / (2.0 * sigma2))


def knn_mask(sq_dists, knn):
    """Each row's ``knn`` nearest neighbours plus itself, symmetrized by union."""
    n = sq_dists.shape[0]
    d = sq_dists.copy()
    np.fill_diagonal(d, -np.inf)
    order = np.argsort(d, axis=1, kind="stable")[:, : knn + 1]
    mask = np.zeros((n, n), dtype=bool)
    mask[np.arange(n)[:, None], order] = True
    return mask | mask.T


def build_context(data, sigma2=None, s=None, knn=None, convention="distance"):
    """Build the kernel geometry for ``data``.

    Parameters
    ----------
    data : Dataset or ndarray of shape (n, p)
    sigma2 : float, optional
        RKHS bandwidth. Defaults to the median heuristic.
    s : float, optional
        Smoothing bandwidth (not squared). Defaults to the square root of
        the median heuristic.
    knn : int, optional
        Restrict smoothing weights to each sample's ``knn`` nearest
        neighbours; must lie in ``[1, n - 1]``.
    convention : {"distance", "squared"}
        Median heuristic convention, see :func:`heuristic_bandwidth`.
    """
    X = data.X if isinstance(data, Dataset) else check_X(data)
    n, p = X.shape
    if sigma2 is None or s is None:
        med = heuristic_bandwidth(X, convention)
        sigma2 = med if sigma2 is None else sigma2
        s = np.sqrt(med) if s is None else s
    sigma2 = check_positive(sigma2, "sigma2")
    s = check_positive(s, "s")

    d2 = squared_distances(X)
    K = np.exp(-d2 / (2.0 * sigma2))
    W = s ** (-(p + 2)) * np.exp(-d2 / (2.0 * s * s))
    mask = None
    if knn is not None:
        if int(knn) != knn or not 1 <= knn <= n - 1:
            raise GradselError(
                f"knn must be an integer in [1, {n - 1}], got {knn!r}",
                module="kernel_engine",
            )
        mask = knn_mask(d2, int(knn))
        W = np.where(mask, W, 0.0)

    for arr in (K, W):
        arr.setflags(write=False)
    return KernelContext(X=X, K=K, sigma2=float(sigma2), s=float(s), W=W,
                         neighbor_mask=mask, sq_dists=d2)


def cross_derivative_norm(context, a, ell):
    """RKHS norm of the partial derivative along ``ell`` of ``sum_i a_i K(., x_i)``.

    ``ell`` is 1-based. Uses the Gaussian cross derivative
    ``K(u, v) (1/sigma2 - (u_ell - v_ell)^2 / sigma2^2)``.
    """
    a = np.asarray(a, dtype=float)
    if not 1 <= ell <= context.p:
        raise GradselError(f"ell must lie in [1, {context.p}], got {ell}")
    sigma2 = context.sigma2
    d = context.delta(ell)
    G = context.K * (1.0 / sigma2 - d * d / sigma2**2)
    return float(np.sqrt(max(a @ G @ a, 0.0)))
