"""Per-element distance hypothesis test: the non-learned baseline authenticator.

A transmitter is authenticated when every measured CSI element lies within
Euclidean distance z of the enrolled element; a single element outside its
disk denies authentication. The threshold scale derives from the average
eigenvalue of the 2x2 real covariance of one element's measurement error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import _as_csi
from .rng import RngStream


@dataclass(frozen=True)
class Threshold:
    """z = multiplier * sqrt(lambda_ave)."""

    multiplier: float
    lambda_ave: float

    def __post_init__(self):
        if self.multiplier < 0:
            raise ValueError(f"multiplier must be >= 0, got {self.multiplier}")
        if self.lambda_ave <= 0:
            raise ValueError(f"lambda_ave must be > 0, got {self.lambda_ave}")

    @property
    def z(self) -> float:
        return self.multiplier * np.sqrt(self.lambda_ave)

    @classmethod
    def from_sigma2(cls, multiplier: float, sigma2: float) -> "Threshold":
        """Threshold for isotropic complex noise of total variance sigma2.

        Each real component has variance sigma2/2, so lambda_ave = sigma2/2.
        A test sample is a single measurement; no 1/s averaging applies.
        """
        return cls(multiplier, sigma2 / 2.0)


@dataclass(frozen=True)
class AuthDecision:
    accept: bool
    per_element_dist2: np.ndarray
    failing_elements: list = field(default_factory=list)


def lambda_ave(cov: np.ndarray) -> float:
    """Average eigenvalue of a 2x2 real symmetric PSD matrix: trace/2."""
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (2, 2):
        raise ValueError(f"expected a 2x2 covariance, got shape {cov.shape}")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise ValueError("covariance must be symmetric")
    eigs = np.linalg.eigvalsh(cov)
    if eigs[0] < -1e-12:
        raise ValueError(f"covariance must be positive semi-definite, eigenvalues {eigs}")
    return float(np.trace(cov)) / 2.0


def decide(
    h_hat: np.ndarray,
    h_ref: np.ndarray,
    threshold: Threshold | None = None,
    per_element_z: np.ndarray | None = None,
) -> AuthDecision:
    """Accept iff |h_hat - h_ref| <= z for every element.

    A single scalar z applies to all elements by default; `per_element_z`
    is the optional hook for element-specific radii (same shape as the CSI).
    """
    h_hat = _as_csi(h_hat)
    h_ref = _as_csi(h_ref)
    if h_hat.shape != h_ref.shape:
        raise ValueError(f"shape mismatch: {h_hat.shape} vs {h_ref.shape}")
    if (threshold is None) == (per_element_z is None):
        raise ValueError("provide exactly one of threshold or per_element_z")
    if per_element_z is not None:
        z = np.asarray(per_element_z, dtype=float)
        if z.shape != h_hat.shape:
            raise ValueError(f"per_element_z shape {z.shape} != CSI shape {h_hat.shape}")
        if np.any(z < 0):
            raise ValueError("per-element thresholds must be >= 0")
        z2 = z**2
    else:
        z2 = threshold.z**2
    d2 = np.abs(h_hat - h_ref) ** 2
    fail_mask = d2 > z2
    failing = [(int(n), int(m)) for n, m in zip(*np.nonzero(fail_mask))]
    return AuthDecision(accept=not failing, per_element_dist2=d2, failing_elements=failing)


def false_accept_rate_sim(
    h_ref: np.ndarray, threshold: Threshold, n_trials: int, rng: RngStream
) -> float:
    """Monte Carlo fraction of unrelated CN(0,1) transmitters that authenticate."""
    h_ref = _as_csi(h_ref)
    if n_trials < 1:
        raise ValueError(f"n_trials must be >= 1, got {n_trials}")
    g = rng.generator()
    z2 = threshold.z**2
    accepted = 0
    # Chunked so very large trial counts stay memory-bounded.
    remaining = n_trials
    while remaining > 0:
        chunk = min(remaining, 1 << 16)
        shape = (chunk,) + h_ref.shape
        imp = np.sqrt(0.5) * (g.standard_normal(shape) + 1j * g.standard_normal(shape))
        d2 = np.abs(imp - h_ref[np.newaxis]) ** 2
        accepted += int(np.sum(np.all(d2 <= z2, axis=(1, 2))))
        remaining -= chunk
    return accepted / n_trials
