"""Small dense linear-algebra helpers used throughout the package."""
import numpy as np

SQRT2 = float(np.sqrt(2.0))


def as_matrix(value, name="matrix"):
    """Coerce to a 2-D float array, rejecting non-finite entries."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def symmetrize(mat):
    return 0.5 * (mat + mat.T)


def is_symmetric(mat, tol=1e-9):
    scale = 1.0 + np.linalg.norm(mat)
    return bool(np.max(np.abs(mat - mat.T)) <= tol * scale)


def min_eig(mat):
    """Smallest eigenvalue of a symmetric matrix."""
    return float(np.linalg.eigvalsh(symmetrize(mat))[0])


def svec_size(n):
    return n * (n + 1) // 2


def svec(mat):
    """Scaled lower-triangle vectorization (column-major, off-diagonals * sqrt(2)).

    Preserves inner products: svec(A) @ svec(B) == trace(A @ B) for symmetric
    A, B.
    """
    n = mat.shape[0]
    out = np.empty(svec_size(n))
    k = 0
    for c in range(n):
        out[k] = mat[c, c]
        k += 1
        rows = n - c - 1
        if rows:
            out[k:k + rows] = mat[c + 1:, c] * SQRT2
            k += rows
    return out


def svec_upper(mat):
    """Scaled upper-triangle vectorization (column-major, off-diagonals * sqrt(2)).

    Same inner-product property as :func:`svec` but enumerating the upper
    triangle column by column; the two orderings agree only for sizes <= 2,
    and conic solvers disagree on which one they expect.
    """
    n = mat.shape[0]
    out = np.empty(svec_size(n))
    k = 0
    for c in range(n):
        if c:
            out[k:k + c] = mat[:c, c] * SQRT2
            k += c
        out[k] = mat[c, c]
        k += 1
    return out


def smat(vec):
    """Inverse of :func:`svec`."""
    m = len(vec)
    n = int(round((np.sqrt(8 * m + 1) - 1) / 2))
    if svec_size(n) != m:
        raise ValueError(f"vector of length {m} is not a packed symmetric matrix")
    out = np.zeros((n, n))
    k = 0
    for c in range(n):
        out[c, c] = vec[k]
        k += 1
        rows = n - c - 1
        if rows:
            col = vec[k:k + rows] / SQRT2
            out[c + 1:, c] = col
            out[c, c + 1:] = col
            k += rows
    return out


def sym_basis(n):
    """Orthonormal basis of n x n symmetric matrices (Frobenius inner product).

    Ordering matches :func:`svec`, so coordinates of P in this basis equal
    svec(P).
    """
    basis = []
    for c in range(n):
        mat = np.zeros((n, n))
        mat[c, c] = 1.0
        basis.append(mat)
        for r in range(c + 1, n):
            mat = np.zeros((n, n))
            mat[r, c] = mat[c, r] = 1.0 / SQRT2
            basis.append(mat)
    return basis
