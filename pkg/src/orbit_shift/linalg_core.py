"""Dense linear algebra behind the shift Jacobian.

Matrices are plain float ``numpy`` arrays. Polynomials are coefficient
arrays ``c[0..n]`` for ``sum(c[k] * lam**k)``; characteristic polynomials
follow the ``|M - lam*E|`` convention, so the leading coefficient is
``(-1)**n``.
"""

from typing import NamedTuple, Sequence

import numpy as np

from .errors import DimensionError, DomainError

CHAR_POLY_MAX_DIM = 64
MATRIX_EXP_MAX_DIM = 16


def as_matrix(M, name="matrix"):
    """Validate ``M`` as a finite 2-D float array and return it."""
    arr = np.array(M, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


def _as_square(M, name="matrix"):
    arr = as_matrix(M, name)
    if arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    return arr


def det(M) -> float:
    """Determinant via LU factorization with partial pivoting.

    Triangular inputs short-circuit to the product of the diagonal, so
    they are exact up to the rounding of that product.
    """
    M = _as_square(M)
    if np.array_equal(M, np.triu(M)) or np.array_equal(M, np.tril(M)):
        return float(np.prod(np.diag(M)))
    return float(np.linalg.det(M))


def char_poly(M) -> np.ndarray:
    """Coefficients of ``|M - lam*E|`` by the Faddeev-LeVerrier recurrence.

    The recurrence runs in ``np.longdouble``: its absolute error grows like
    ``eps * rho(M)**n``, which swamps the (exactly zero) low coefficients of
    rank-deficient inputs in plain double precision.
    """
    M = _as_square(M)
    n = M.shape[0]
    if n > CHAR_POLY_MAX_DIM:
        raise DimensionError(f"char_poly supports n <= {CHAR_POLY_MAX_DIM}, got {n}")
    W = M.astype(np.longdouble)
    # monic det(lam*E - M) = sum c[k] lam^k
    c = np.zeros(n + 1, dtype=np.longdouble)
    c[n] = 1
    eye = np.eye(n, dtype=np.longdouble)
    Mk = np.zeros_like(W)
    for k in range(1, n + 1):
        Mk = W @ Mk + c[n - k + 1] * eye
        c[n - k] = -np.trace(W @ Mk) / k
    sign = -1.0 if n % 2 else 1.0
    coeffs = (sign * c).astype(float)
    coeffs[n] = sign
    return coeffs


def _lift(coeffs: np.ndarray, k: int) -> np.ndarray:
    """Multiply a polynomial by ``(-lam)**k``."""
    out = np.zeros(len(coeffs) + k)
    out[k:] = coeffs * (-1.0) ** k
    return out


def product_char_polys(A, B):
    """Return ``(chi_{A B^T}, chi_{A^T B})`` brought to a common degree.

    For ``m >= n`` the second polynomial is multiplied by ``(-lam)**(m-n)``;
    otherwise the roles are swapped (the transposed case).
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape != B.shape:
        raise DimensionError(f"A and B must share a shape, got {A.shape} and {B.shape}")
    m, n = A.shape
    outer = char_poly(A @ B.T)
    inner = char_poly(A.T @ B)
    if m >= n:
        return outer, _lift(inner, m - n)
    return _lift(outer, n - m), inner


def verify_product_char_identity(A, B) -> float:
    """Max coefficient difference between the two sides of the
    ``chi_{AB^T} = (-lam)^{m-n} chi_{A^T B}`` identity."""
    lhs, rhs = product_char_polys(A, B)
    return float(np.max(np.abs(lhs - rhs)))


class DSymbol(NamedTuple):
    value: float
    """``|E_n + Y|``, the field-invariant form."""
    outer_value: float
    """``|E_m + X|``, the coordinate form."""
    residual: float


def _vector_stack(vectors, name):
    arr = np.array(vectors, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty list of equal-length vectors")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


def d_symbol(f_vectors: Sequence, a_vectors: Sequence) -> DSymbol:
    """Evaluate the determinant symbol of two n-tuples of vectors in R^m.

    Both ``|E_m + sum F_i A_i^T|`` and ``|E_n + Y|`` with
    ``Y[i, j] = <F_j, A_i>`` (rows index the ``A`` tuple, columns the
    ``F`` tuple) are computed; ``residual`` is their absolute difference.
    """
    F = _vector_stack(f_vectors, "f_vectors")
    A = _vector_stack(a_vectors, "a_vectors")
    if F.shape != A.shape:
        raise DimensionError(f"vector tuples disagree: {F.shape} vs {A.shape}")
    n, m = F.shape
    X = F.T @ A
    Y = A @ F.T
    outer = det(np.eye(m) + X)
    inner = det(np.eye(n) + Y)
    return DSymbol(inner, outer, abs(outer - inner))


def d_symbol_tolerance(f_vectors, a_vectors, rel=1e-9) -> float:
    """Cross-form residual bound ``rel * (1 + prod |F_i| |A_i|)``."""
    F = np.atleast_2d(np.asarray(f_vectors, dtype=float))
    A = np.atleast_2d(np.asarray(a_vectors, dtype=float))
    scale = np.prod(np.linalg.norm(F, axis=1) * np.linalg.norm(A, axis=1))
    return rel * (1.0 + float(scale))


def gram_det(vectors: Sequence) -> float:
    """Gram determinant ``|<v_i, v_j>|``, clamped at zero from below."""
    V = np.array(vectors, dtype=float)
    if V.ndim != 2 or V.shape[0] == 0:
        raise DomainError("gram_det needs at least one vector")
    return max(det(V @ V.T), 0.0)


def matrix_exp(M, t: float = 1.0) -> np.ndarray:
    """``exp(t*M)`` by scaling and squaring a truncated Taylor series."""
    M = _as_square(M)
    m = M.shape[0]
    if m > MATRIX_EXP_MAX_DIM:
        raise DimensionError(f"matrix_exp supports n <= {MATRIX_EXP_MAX_DIM}, got {m}")
    tM = float(t) * M
    norm = np.linalg.norm(tM, 1)
    eye = np.eye(m)
    if norm == 0.0:
        return eye
    squarings = max(0, int(np.ceil(np.log2(norm / 0.5))))
    S = tM / 2.0**squarings
    result = eye.copy()
    term = eye
    for k in range(1, 30):
        term = term @ S / k
        result = result + term
        if np.linalg.norm(term, 1) <= 1e-18 * np.linalg.norm(result, 1):
            break
    for _ in range(squarings):
        result = result @ result
    if not np.all(np.isfinite(result)):
        raise DomainError(f"exp(t*M) overflows for |t|*|M| = {norm:.3g}")
    return result
