"""L1-constrained sparse coding (homotopy path) and dictionary learning.

The coder solves   min ||D a - y||^2  s.t.  ||a||_1 <= lam   exactly, by
following the penalized-LASSO regularization path downward and stopping at
the penalty level where the L1 norm reaches the budget (interpolating within
the final path segment). Learning alternates exact coding with a block
coordinate-descent dictionary update projected onto the unit-norm ball, so
the objective is non-increasing by construction.
"""

from __future__ import annotations

import dataclasses
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.linalg import lapack as _lapack

from .errors import DimensionError, NumericalError


@dataclasses.dataclass(frozen=True)
class Dictionary:
    matrix: np.ndarray  # (dim, atoms)
    training_objectives: tuple = ()

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2:
            raise DimensionError(f"dictionary matrix must be 2-D, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NumericalError("dictionary contains non-finite entries")
        norms = np.linalg.norm(m, axis=0)
        if np.any(norms > 1.0 + 1e-9):
            raise NumericalError(f"dictionary column norm {norms.max():.12f} exceeds 1")
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def atoms(self) -> int:
        return self.matrix.shape[1]

    def gram(self) -> np.ndarray:
        return self.matrix.T @ self.matrix


@dataclasses.dataclass(frozen=True)
class SparseCode:
    coefficients: np.ndarray
    l1_norm: float
    objective: float


def _solve(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.solve(mat, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(mat, rhs, rcond=None)[0]


def _solve_spd(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Low-overhead SPD solve for the tiny active-set systems on the
    homotopy path; falls back to LU/lstsq when the block is not PD."""
    _, x, info = _lapack.dposv(mat, rhs)
    if info != 0:
        return _solve(mat, rhs)
    return x


def lasso_constrained_gram(
    gram: np.ndarray, corr: np.ndarray, lam: float, tol: float = 1e-10
) -> np.ndarray:
    """Homotopy solve of min a'Ga - 2 b'a  s.t. ||a||_1 <= lam.

    gram is D'D, corr is D'y. Returns the coefficient vector.
    """
    n = len(corr)
    alpha = np.zeros(n)
    t_cur = float(np.max(np.abs(corr))) if n else 0.0
    if t_cur <= tol or lam <= 0.0:
        return alpha

    # Near-duplicate atoms make the active Gram block singular and push the
    # path through the lstsq fallback, where an iterate can be arbitrarily
    # bad. Every feasible iterate is therefore scored (in Gram form, where
    # the zero vector scores 0) and the best one wins, so the result is
    # never worse than coding nothing.
    best_obj = 0.0
    best_alpha = alpha
    idx_all = np.arange(n)

    def consider(A, Gaa, corr_A, vals):
        nonlocal best_obj, best_alpha
        if not np.isfinite(vals).all() or float(np.abs(vals).sum()) > lam + tol:
            return
        obj = float(vals @ (Gaa @ vals) - 2.0 * (corr_A @ vals))
        if obj < best_obj:
            best_obj = obj
            best_alpha = np.zeros(n)
            best_alpha[A] = vals

    first = int(np.argmax(np.abs(corr)))
    active: list[int] = [first]
    signs: list[float] = [float(np.sign(corr[first]))]
    mask = np.zeros(n, dtype=bool)
    mask[first] = True

    with np.errstate(divide="ignore", invalid="ignore"):
        for _ in range(8 * n + 32):
            A = np.array(active)
            s = np.array(signs)
            Gaa = gram[A[:, None], A]
            corr_A = corr[A]
            rhs = np.empty((len(active), 2))
            rhs[:, 0] = corr_A
            rhs[:, 1] = s
            both = _solve_spd(Gaa, rhs)
            alpha0 = both[:, 0]
            w = both[:, 1]

            s0 = float(s @ alpha0)
            sw = float(s @ w)

            # Next event going down in t: an inactive atom joins or an
            # active coefficient crosses zero.
            inactive = idx_all[~mask]
            t_event = 0.0
            event = ("end", -1)
            if inactive.size:
                Gia = gram[inactive[:, None], A]
                c0 = corr[inactive] - Gia @ alpha0
                g = Gia @ w
                cand_pos = c0 / (1.0 - g)
                cand_neg = -c0 / (1.0 + g)
                for cands, sgn in ((cand_pos, 1.0), (cand_neg, -1.0)):
                    ok = np.isfinite(cands) & (cands > tol) & (cands < t_cur - tol)
                    if ok.any():
                        j = int(np.argmax(np.where(ok, cands, -np.inf)))
                        if cands[j] > t_event:
                            t_event = float(cands[j])
                            event = ("join", int(inactive[j]), sgn)
            cross = alpha0 / w
            okc = np.isfinite(cross) & (cross > tol) & (cross < t_cur - tol)
            if okc.any():
                i = int(np.argmax(np.where(okc, cross, -np.inf)))
                if cross[i] > t_event:
                    t_event = float(cross[i])
                    event = ("drop", int(A[i]))

            # Does the L1 budget bind before the next event?
            l1_at_event = s0 - t_event * sw
            if l1_at_event >= lam - tol and abs(sw) > tol:
                t_star = (s0 - lam) / sw
                t_star = min(max(t_star, t_event), t_cur)
                consider(A, Gaa, corr_A, alpha0 - t_star * w)
                return best_alpha

            consider(A, Gaa, corr_A, alpha0 - t_event * w)
            if event[0] == "end":
                return best_alpha
            if event[0] == "join":
                active.append(event[1])
                signs.append(event[2])
                mask[event[1]] = True
            else:
                idx = active.index(event[1])
                active.pop(idx)
                signs.pop(idx)
                mask[event[1]] = False
                if not active:
                    return best_alpha
            t_cur = t_event
    return best_alpha


def sparse_code(
    dictionary: Dictionary,
    signal: np.ndarray,
    lam: float,
    tol: float = 1e-10,
    gram: np.ndarray | None = None,
) -> SparseCode:
    signal = np.asarray(signal, dtype=np.float64).ravel()
    if signal.shape[0] != dictionary.dim:
        raise DimensionError(
            f"signal dimension {signal.shape[0]} != dictionary dimension {dictionary.dim}"
        )
    if not np.all(np.isfinite(signal)):
        raise NumericalError("signal contains non-finite values")
    if not np.isfinite(lam) or lam <= 0:
        raise NumericalError(f"lambda must be positive and finite, got {lam}")
    G = dictionary.gram() if gram is None else gram
    b = dictionary.matrix.T @ signal
    alpha = lasso_constrained_gram(G, b, lam, tol=tol)
    resid = dictionary.matrix @ alpha - signal
    return SparseCode(
        coefficients=alpha,
        l1_norm=float(np.sum(np.abs(alpha))),
        objective=float(resid @ resid),
    )


def default_lambda(dim: int) -> float:
    """Scale-aware sparsity budget used when none is given."""
    return 0.15 * float(np.sqrt(dim))


def _code_batch(gram, B, lam, tol, threads):
    n = B.shape[1]
    codes = np.empty((gram.shape[0], n))

    def run(i):
        codes[:, i] = lasso_constrained_gram(gram, B[:, i], lam, tol=tol)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run, range(n)))
    else:
        for i in range(n):
            run(i)
    return codes


def learn_dictionary(
    samples: np.ndarray,
    k: int,
    lam: float | None = None,
    epochs: int = 20,
    seed: int = 0,
    tol: float = 1e-10,
    threads: int = 1,
) -> Dictionary:
    """Alternating minimization: exact coding then per-atom least-squares
    updates projected onto the unit-norm ball.

    The per-epoch objective (recorded on the returned Dictionary) is the
    total squared residual right after the coding step.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] < 1 or k < 1:
        raise DimensionError(f"need a (dim, N) sample matrix and k >= 1, got {X.shape}, k={k}")
    dim, n = X.shape
    if lam is None:
        lam = default_lambda(dim)
    rng = np.random.default_rng(seed)

    # Initialize from k distinct samples; pad with seeded noise if N < k.
    if k <= n:
        picks = rng.choice(n, size=k, replace=False)
        D = X[:, picks].copy()
    else:
        warnings.warn(f"k={k} exceeds sample count {n}; padding atoms with noise")
        D = np.concatenate([X, rng.standard_normal((dim, k - n))], axis=1)
    norms = np.linalg.norm(D, axis=0)
    zero = norms < 1e-12
    if np.any(zero):
        D[:, zero] = rng.standard_normal((dim, int(zero.sum())))
        norms = np.linalg.norm(D, axis=0)
    D /= norms

    objectives = []
    prev_codes = None
    prev_E = None
    prev_err = None
    for _ in range(epochs):
        G = D.T @ D
        B = D.T @ X
        codes = _code_batch(G, B, lam, tol, threads)
        E = X - D @ codes
        if prev_codes is not None:
            # Alternating-minimization safeguard: if the coder fits a sample
            # worse than last epoch's code does under the current dictionary,
            # keep the old code, so the objective cannot increase.
            worse = np.einsum("ij,ij->j", E, E) > prev_err
            if np.any(worse):
                codes[:, worse] = prev_codes[:, worse]
                E[:, worse] = prev_E[:, worse]
        objectives.append(float(np.sum(E * E)))

        for j in range(k):
            row = codes[j]
            users = np.nonzero(row)[0]
            if users.size == 0:
                continue
            aj = row[users]
            R = E[:, users] + np.outer(D[:, j], aj)
            u = R @ aj / (aj @ aj)
            nu = np.linalg.norm(u)
            if nu > 1.0:
                u = u / nu
            E[:, users] += np.outer(D[:, j] - u, aj)
            D[:, j] = u

        # E now holds this epoch's codes under the updated dictionary, which
        # is exactly the comparison point the next epoch's safeguard needs.
        prev_codes = codes
        prev_E = E
        prev_err = np.einsum("ij,ij->j", E, E)

    return Dictionary(matrix=D, training_objectives=tuple(objectives))
