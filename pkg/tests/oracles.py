"""Independent reference implementations used as test oracles.

Everything here is deliberately written as naive per-element loops (or routed
through scipy) so it shares no code path with the package implementations it
checks.
"""

import numpy as np

RIN_EPS = 1e-5


def onehot_loop(labels: np.ndarray, num_regions: int) -> np.ndarray:
    h, w = labels.shape
    out = np.zeros((num_regions, h, w), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            out[labels[y, x], y, x] = 1
    return out


def channel_stats_loop(f: np.ndarray, eps: float = RIN_EPS):
    """Two-pass per-channel statistics over (N, C, H, W)."""
    n, c, h, w = f.shape
    means = np.zeros(c)
    stds = np.zeros(c)
    for ci in range(c):
        total = 0.0
        for ni in range(n):
            for y in range(h):
                for x in range(w):
                    total += f[ni, ci, y, x]
        mean = total / (n * h * w)
        sq = 0.0
        for ni in range(n):
            for y in range(h):
                for x in range(w):
                    sq += f[ni, ci, y, x] ** 2
        means[ci] = mean
        stds[ci] = np.sqrt(max(sq / (n * h * w) - mean**2, 0.0) + eps)
    return means, stds


def rin_forward_loop(
    f: np.ndarray, cm: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = RIN_EPS
) -> np.ndarray:
    """Literal per-pixel region-wise normalization with masked beta.

    f: (N, C, H, W); cm: (N, R, H, W); gamma, beta: (N, R, C).
    """
    n, c, h, w = f.shape
    r = cm.shape[1]
    means, stds = channel_stats_loop(f, eps)
    out = np.zeros_like(f)
    for ni in range(n):
        for ci in range(c):
            for y in range(h):
                for x in range(w):
                    acc = 0.0
                    for ri in range(r):
                        m = cm[ni, ri, y, x]
                        normed = (f[ni, ci, y, x] - means[ci]) / stds[ci] * m
                        acc += normed * (1.0 + gamma[ni, ri, ci]) + beta[ni, ri, ci] * m
                    out[ni, ci, y, x] = acc
    return out


def region_pool_loop(feat: np.ndarray, onehot: np.ndarray) -> np.ndarray:
    """Masked-mean pooling: (N, D, H, W) x (N, R, H, W) -> (N, R, D)."""
    n, d, h, w = feat.shape
    r = onehot.shape[1]
    out = np.zeros((n, r, d))
    for ni in range(n):
        for ri in range(r):
            count = 0
            acc = np.zeros(d)
            for y in range(h):
                for x in range(w):
                    if onehot[ni, ri, y, x]:
                        count += 1
                        acc += feat[ni, :, y, x]
            out[ni, ri] = acc / max(count, 1)
    return out


def region_matching_loop(
    x: np.ndarray, x_hat: np.ndarray, r_hat: np.ndarray, cm: np.ndarray, region: int
) -> float:
    """Literal per-pixel evaluation of the region matching loss."""
    n, c, h, w = x.shape
    total = 0.0
    for ni in range(n):
        for ci in range(c):
            for y in range(h):
                for x_ in range(w):
                    inside = cm[ni, region, y, x_]
                    outside = sum(
                        cm[ni, j, y, x_] for j in range(cm.shape[1]) if j != region
                    )
                    total += abs(r_hat[ni, ci, y, x_] - x_hat[ni, ci, y, x_]) * inside
                    total += abs(r_hat[ni, ci, y, x_] - x[ni, ci, y, x_]) * outside
    return total / (n * c * h * w)


def gaussian_summary_loop(feats: np.ndarray):
    """Two-pass mean and unbiased covariance."""
    m, d = feats.shape
    mean = np.zeros(d)
    for i in range(m):
        mean += feats[i]
    mean /= m
    cov = np.zeros((d, d))
    for i in range(m):
        diff = feats[i] - mean
        cov += np.outer(diff, diff)
    return mean, cov / (m - 1)


def frechet_scipy_oracle(mu1, cov1, mu2, cov2) -> float:
    """Independent route: general (Schur-based) matrix square root of the
    covariance product via scipy."""
    from scipy import linalg

    diff = mu1 - mu2
    covmean = linalg.sqrtm(cov1 @ cov2)
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    return float(diff @ diff + np.trace(cov1) + np.trace(cov2) - 2.0 * np.trace(covmean))


def finite_difference_grad(fn, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function of a float64 array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = fn(x)
        flat[i] = orig - eps
        f_minus = fn(x)
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max absolute deviation normalized by the numeric gradient's scale."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(numeric).max(), 1e-8)
    return float(np.abs(analytic - numeric).max() / scale)
