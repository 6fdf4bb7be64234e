"""Input checks shared by the estimators."""

import numbers

import numpy as np
from scipy import sparse
from sklearn.exceptions import NotFittedError

from .exceptions import DomainError
from .model import ModelParams, PlantedGraph


def check_graph(X) -> PlantedGraph:
    """Coerce ``X`` to a :class:`PlantedGraph`.

    Accepts a ``PlantedGraph``, a ``(graph, labels)`` pair as returned by
    :func:`~hidden_community.model.generate`, or a square symmetric 0/1
    adjacency matrix (dense or scipy sparse) with an empty diagonal.
    """
    if isinstance(X, PlantedGraph):
        return X
    if isinstance(X, tuple) and len(X) == 2 and isinstance(X[0], PlantedGraph):
        return X[0]
    if sparse.issparse(X):
        A = sparse.csr_matrix(X)
    else:
        arr = np.asarray(X)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-d adjacency matrix, got shape {arr.shape}")
        A = sparse.csr_matrix(arr)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"adjacency matrix must be square, got {A.shape}")
    A.eliminate_zeros()
    if A.nnz and not np.all(A.data == 1):
        raise ValueError("adjacency matrix must be 0/1")
    if A.diagonal().any():
        raise ValueError("adjacency matrix must have an empty diagonal")
    if (A != A.T).nnz:
        raise ValueError("adjacency matrix must be symmetric")
    return PlantedGraph.from_adjacency(A)


def check_params(n, community_size, p, q, *, require_q_positive=True) -> ModelParams:
    if not isinstance(community_size, numbers.Real):
        raise TypeError("community_size must be a real number")
    params = ModelParams(n=n, K=float(community_size), p=float(p), q=float(q))
    if require_q_positive and params.q <= 0:
        raise DomainError("q must be positive")
    return params


def check_is_fitted(estimator, attribute):
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"This {type(estimator).__name__} instance is not fitted yet; call 'fit' first."
        )
