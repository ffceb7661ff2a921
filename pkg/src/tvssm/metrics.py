"""Evaluation metrics: MSE, SNR, and scale-invariant SNR."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["mse", "snr_db", "si_snr_db", "MetricReport", "aggregate_rows"]

# Relative guard applied inside the log arguments; caps the reported
# range at +-120 dB instead of letting exact matches hit infinity.
EPS_REL = 1e-12


def mse(s, s_hat) -> float:
    """Mean squared per-element error."""
    s = np.asarray(s, dtype=np.float64)
    s_hat = np.asarray(s_hat, dtype=np.float64)
    if s.shape != s_hat.shape:
        raise ValueError(f"shape mismatch: {s.shape} vs {s_hat.shape}")
    diff = s - s_hat
    return float(np.mean(diff * diff))


def snr_db(target, estimate) -> float:
    """10*log10 of target power over error power, in dB.

    The denominator carries a 1e-12 relative guard, so a perfect
    estimate reports the 120 dB cap rather than infinity.
    """
    target = np.asarray(target, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if target.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {target.shape} vs {estimate.shape}")
    p_target = float(np.sum(target * target))
    if p_target <= 0.0:
        raise ValueError("target signal has zero power")
    err = estimate - target
    p_err = float(np.sum(err * err))
    return 10.0 * np.log10(p_target / (p_err + EPS_REL * p_target))


def si_snr_db(target, estimate) -> float:
    """Scale-invariant SNR in dB.

    Both signals are mean-removed, the estimate is projected onto the
    target direction, and the ratio of projection power to residual
    power is reported. The guard enters both log arguments relative to
    the other, which keeps the value exactly invariant to rescaling the
    estimate and caps the range at +-120 dB (a residual orthogonal to
    the target reports the negative cap instead of failing).
    """
    target = np.asarray(target, dtype=np.float64).ravel()
    estimate = np.asarray(estimate, dtype=np.float64).ravel()
    if target.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {target.shape} vs {estimate.shape}")
    target = target - target.mean()
    estimate = estimate - estimate.mean()
    p_target = float(np.dot(target, target))
    if p_target <= 0.0:
        raise ValueError("target signal has zero power after mean removal")
    alpha = float(np.dot(estimate, target)) / p_target
    proj = alpha * target
    resid = estimate - proj
    num = float(np.dot(proj, proj))
    den = float(np.dot(resid, resid))
    return 10.0 * np.log10((num + EPS_REL * den) / (den + EPS_REL * num))


@dataclass(frozen=True)
class MetricReport:
    """Test-split metrics aggregated over model initializations."""

    mse_mean: float
    mse_std: float
    snr_db_mean: float
    snr_db_std: float
    si_snr_db_mean: float
    si_snr_db_std: float
    n_samples: int
    n_seeds: int

    def to_record(self) -> dict:
        return {
            "mse_mean": self.mse_mean, "mse_std": self.mse_std,
            "snr_db_mean": self.snr_db_mean, "snr_db_std": self.snr_db_std,
            "si_snr_db_mean": self.si_snr_db_mean, "si_snr_db_std": self.si_snr_db_std,
            "n_samples": self.n_samples, "n_seeds": self.n_seeds,
        }


def aggregate_rows(rows: list[dict], n_samples: int) -> MetricReport:
    """Mean and (population) std over per-seed metric rows."""
    if not rows:
        raise ValueError("no rows to aggregate")

    def stats(key):
        vals = np.array([row[key] for row in rows], dtype=np.float64)
        return float(vals.mean()), float(vals.std())

    mse_m, mse_s = stats("mse")
    snr_m, snr_s = stats("snr_db")
    si_m, si_s = stats("si_snr_db")
    return MetricReport(mse_m, mse_s, snr_m, snr_s, si_m, si_s, n_samples, len(rows))
