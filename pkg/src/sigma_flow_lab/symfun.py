"""Elementary symmetric functions, Garding cones and quotient-operator algebra.

Every function accepts either a single spectrum of shape ``(n,)`` or a batch
of shape ``(..., n)``; reductions run over the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConeViolationError, DomainError

#: relative part of the default closure floor, see :func:`cone_membership`
CONE_FLOOR = 1e-14


def _as_spectrum(values) -> np.ndarray:
    lam = np.asarray(values, dtype=float)
    if lam.ndim == 0 or lam.shape[-1] < 1:
        raise DomainError("a spectrum needs at least one entry")
    if not np.all(np.isfinite(lam)):
        raise DomainError("spectrum contains non-finite entries")
    return lam


def _polymul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched product of coefficient arrays (ascending powers of 1/x)."""
    nb = b.shape[-1]
    out = np.zeros(np.broadcast_shapes(a.shape[:-1], b.shape[:-1]) + (a.shape[-1] + nb - 1,))
    for i in range(a.shape[-1]):
        out[..., i:i + nb] += a[..., i, None] * b
    return out


def _expand(lam: np.ndarray) -> np.ndarray:
    """Coefficients (sigma_0, ..., sigma_m) of prod (x + lam_i), pairwise split."""
    m = lam.shape[-1]
    if m == 0:
        return np.ones(lam.shape[:-1] + (1,))
    if m == 1:
        return np.stack([np.ones_like(lam[..., 0]), lam[..., 0]], axis=-1)
    h = m // 2
    return _polymul(_expand(lam[..., :h]), _expand(lam[..., h:]))


def elementary_symmetric(values) -> np.ndarray:
    """All of sigma_0..sigma_n of a spectrum, shape ``(..., n + 1)``."""
    return _expand(_as_spectrum(values))


def sigma_k(values, k: int):
    """k-th elementary symmetric function; ``sigma_0 = 1``.

    Examples
    --------
    >>> float(sigma_k([1, 1, 1, 1], 2))
    6.0
    """
    lam = _as_spectrum(values)
    n = lam.shape[-1]
    if not 0 <= k <= n:
        raise DomainError(f"k={k} outside [0, {n}]")
    out = _expand(lam)[..., k]
    return out if out.ndim else float(out)


def deleted_sigmas(values, k: int) -> np.ndarray:
    """``sigma_k(Lambda_i)`` for every i at once, shape ``(..., n)``.

    Built from prefix/suffix products of the linear factors, so no
    subtraction or division by ``lambda_i`` is involved.
    """
    lam = _as_spectrum(values)
    n = lam.shape[-1]
    if not 0 <= k <= n - 1:
        raise DomainError(f"k={k} outside [0, {n - 1}] for deleted spectra")
    if k == 0:
        return np.ones_like(lam)
    lead = lam.shape[:-1]
    prefix = [np.ones(lead + (1,))]
    for i in range(n - 1):
        prefix.append(_polymul(prefix[-1], np.stack([np.ones(lead), lam[..., i]], axis=-1)))
    suffix = [np.ones(lead + (1,))]
    for i in range(n - 1, 0, -1):
        suffix.append(_polymul(suffix[-1], np.stack([np.ones(lead), lam[..., i]], axis=-1)))
    suffix.reverse()
    out = np.empty_like(lam)
    for i in range(n):
        pre, suf = prefix[i], suffix[i]
        # coefficient k of pre*suf without forming the full product
        lo = max(0, k - (suf.shape[-1] - 1))
        hi = min(k, pre.shape[-1] - 1)
        acc = np.zeros(lead)
        for j in range(lo, hi + 1):
            acc = acc + pre[..., j] * suf[..., k - j]
        out[..., i] = acc
    return out


def sigma_k_deleted(values, k: int, i: int):
    """``sigma_k`` of the spectrum with entry ``i`` removed."""
    lam = _as_spectrum(values)
    n = lam.shape[-1]
    if not -n <= i < n:
        raise DomainError(f"index {i} out of range for n={n}")
    out = deleted_sigmas(lam, k)[..., i]
    return out if out.ndim else float(out)


def newton_transform(A, k: int) -> np.ndarray:
    """Newton transformation ``T_k(A) = sum_j (-1)^j sigma_{k-j}(A) A^j``.

    The coefficients come from power-sum traces through the Newton-Girard
    identities, so no eigendecomposition is performed.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError("expected a square matrix")
    n = A.shape[0]
    scale = max(1.0, float(np.max(np.abs(A))))
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * scale):
        raise DomainError("matrix is not symmetric")
    if not 0 <= k <= n:
        raise DomainError(f"k={k} outside [0, {n}]")
    powers = [np.eye(n)]
    for _ in range(k):
        powers.append(powers[-1] @ A)
    traces = [np.trace(P) for P in powers]
    e = [1.0]
    for j in range(1, k + 1):
        e.append(sum((-1) ** (i - 1) * e[j - i] * traces[i] for i in range(1, j + 1)) / j)
    T = np.zeros((n, n))
    for j in range(k + 1):
        T += (-1) ** j * e[k - j] * powers[j]
    return 0.5 * (T + T.T)


@dataclass(frozen=True)
class ConeMembership:
    """Result of :func:`cone_membership` (arrays for batched input).

    ``max_k`` is the largest k with sigma_1..sigma_k all above the floor,
    ``margin`` the smallest of those sigma_j (sigma_1 itself when max_k = 0).
    """

    max_k: np.ndarray | int
    margin: np.ndarray | float

    def contains(self, k: int):
        return self.max_k >= k


def _floors(lam: np.ndarray, floor: float) -> np.ndarray:
    n = lam.shape[-1]
    l1 = np.sum(np.abs(lam), axis=-1)
    j = np.arange(1, n + 1)
    return floor * np.maximum(1.0, l1[..., None] ** j)


def cone_membership(values, floor: float = CONE_FLOOR) -> ConeMembership:
    """Classify a spectrum against the nested Garding cones.

    ``sigma_j`` counts as positive when it exceeds
    ``floor * max(1, ||Lambda||_1 ** j)``; values at or below that floor are
    treated as lying on the closure.
    """
    lam = _as_spectrum(values)
    s = _expand(lam)[..., 1:]
    ok = s > _floors(lam, floor)
    max_k = np.sum(np.cumprod(ok, axis=-1), axis=-1)
    idx = np.arange(1, lam.shape[-1] + 1)
    masked = np.where(idx <= np.maximum(max_k, 1)[..., None], s, np.inf)
    margin = masked.min(axis=-1)
    if lam.ndim == 1:
        return ConeMembership(int(max_k), float(margin))
    return ConeMembership(max_k, margin)


def _require_cone(lam: np.ndarray, k: int, what: str = "spectrum") -> np.ndarray:
    """Return sigma_0..sigma_n after checking membership in Gamma_k^+."""
    s = _expand(lam)
    ok = np.all(s[..., 1:k + 1] > _floors(lam, CONE_FLOOR)[..., :k], axis=-1)
    if not np.all(ok):
        okf = np.atleast_1d(ok)
        where = int(np.flatnonzero(~okf.ravel())[0])
        node = np.unravel_index(where, okf.shape) if lam.ndim > 1 else None
        worst = float(np.reshape(s[..., 1:k + 1], (-1, k))[where].min())
        raise ConeViolationError(
            f"{what} is not in Gamma_{k}^+ (smallest sigma_j = {worst:.3e})",
            node=tuple(int(b) for b in node) if node is not None else None,
            margin=worst, k=k)
    return s


def _check_pair(n: int, k: int, l: int, lmin: int = 0):
    if not (lmin <= l < k <= n):
        raise DomainError(f"need {lmin} <= l < k <= n, got n={n}, k={k}, l={l}")


def newton_maclaurin_gap(values, k: int, l: int):
    """``l(n-k+1) s_l s_{k-1} - k(n-l+1) s_k s_{l-1}``, nonnegative on Gamma_k^+."""
    lam = _as_spectrum(values)
    n = lam.shape[-1]
    _check_pair(n, k, l, lmin=1)
    s = _require_cone(lam, k)
    lhs = l * (n - k + 1) * s[..., l] * s[..., k - 1]
    rhs = k * (n - l + 1) * s[..., k] * s[..., l - 1]
    out = lhs - rhs
    return out if out.ndim else float(out)


def quotient_operator(values, k: int, l: int):
    """``F = (sigma_k / sigma_l) ** (1 / (k - l))`` on Gamma_k^+."""
    lam = _as_spectrum(values)
    _check_pair(lam.shape[-1], k, l)
    s = _require_cone(lam, k)
    out = np.exp((np.log(s[..., k]) - np.log(s[..., l])) / (k - l))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class QuotientCoefficients:
    """Value and eigenframe diagonal ``F^{ii}`` of the quotient operator."""

    F_value: np.ndarray | float
    diag: np.ndarray
    k: int
    l: int


def quotient_coefficients(values, k: int, l: int) -> QuotientCoefficients:
    """Derivatives ``F^{ii} = dF/dlambda_i`` of the degree-one quotient operator."""
    lam = _as_spectrum(values)
    n = lam.shape[-1]
    _check_pair(n, k, l)
    s = _require_cone(lam, k)
    sk, sl = s[..., k], s[..., l]
    F = np.exp((np.log(sk) - np.log(sl)) / (k - l))
    dk = deleted_sigmas(lam, k - 1)
    dl = deleted_sigmas(lam, l - 1) if l >= 1 else np.zeros_like(lam)
    # F* (s_l s_{k-1}(i) - s_k s_{l-1}(i)) with F* = F / ((k-l) s_k s_l)
    diag = (F / (k - l))[..., None] * (dk / sk[..., None] - dl / sl[..., None])
    F_out = F if F.ndim else float(F)
    return QuotientCoefficients(F_out, diag, k, l)


def garding_gap(values, reference, k: int, l: int):
    """Linearisation gap of the quotient operator between two cone points.

    Returns ``sum_i (s_{k-1}(L_i)/s_k - s_{l-1}(L_i)/s_l) mu_i - (k-l) F(mu)/F(L)``
    where ``L = values`` and ``mu = reference``.
    """
    lam = _as_spectrum(values)
    mu = _as_spectrum(reference)
    if lam.shape[-1] != mu.shape[-1]:
        raise DomainError("spectra have different lengths")
    _check_pair(lam.shape[-1], k, l)
    s = _require_cone(lam, k)
    _require_cone(mu, k, what="reference spectrum")
    dk = deleted_sigmas(lam, k - 1)
    dl = deleted_sigmas(lam, l - 1) if l >= 1 else np.zeros_like(lam)
    lin = np.sum((dk / s[..., k, None] - dl / s[..., l, None]) * mu, axis=-1)
    out = lin - (k - l) * quotient_operator(mu, k, l) / quotient_operator(lam, k, l)
    return out if np.ndim(out) else float(out)


def ellipticity_constant(n: int, k: int, l: int) -> float:
    """``(n-k+1)(n-l+1)/(n+1)``."""
    return (n - k + 1) * (n - l + 1) / (n + 1)


def ellipticity_ratio_bound(values, k: int, l: int):
    """Return ``(sum_i F^{ii} / F^{jj}, alpha0)`` with j the largest entry.

    Requires ``(n-k+1)(n-l+1) > 2(n+1)``.
    """
    lam = _as_spectrum(values)
    n = lam.shape[-1]
    _check_pair(n, k, l)
    if not (n - k + 1) * (n - l + 1) > 2 * (n + 1):
        raise DomainError(
            f"restriction (n-k+1)(n-l+1) > 2(n+1) fails for n={n}, k={k}, l={l}")
    if np.any(lam.max(axis=-1) <= 0):
        raise DomainError("largest eigenvalue must be positive")
    q = quotient_coefficients(lam, k, l)
    top = np.take_along_axis(q.diag, np.argmax(lam, axis=-1)[..., None], axis=-1)[..., 0]
    ratio = q.diag.sum(axis=-1) / top
    ratio = ratio if ratio.ndim else float(ratio)
    return ratio, ellipticity_constant(n, k, l)


def sample_cone(rng: np.random.Generator, n: int, k: int, size: int,
                spread: float = 1.5) -> np.ndarray:
    """Rejection-sample ``size`` spectra from Gamma_k^+.

    Draws positive vectors and subtracts bounded random amounts, keeping the
    ones that survive :func:`cone_membership`; this populates the region near
    the cone boundary as well as the interior.
    """
    out = []
    have = 0
    while have < size:
        m = 2 * (size - have) + 16
        base = rng.exponential(1.0, size=(m, n))
        shift = rng.uniform(0.0, spread, size=(m, n)) * rng.integers(0, 2, size=(m, n))
        lam = base - shift
        keep = cone_membership(lam).max_k >= k
        out.append(lam[keep])
        have += int(keep.sum())
    return np.concatenate(out)[:size]
