"""Generator eigenvalues, frequency gaps and empirical DFT spectra."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.signal import find_peaks

from .errors import InputError

GAP_TOL = 1e-9


def composite_eigenvalues(block, theta_f=None) -> np.ndarray:
    """All ``2^N`` signed half-weight sums of a product generator, sorted.

    For commuting single-qubit terms ``sum_m w_m sigma/2`` the spectrum is
    every combination ``sum_m (+-w_m / 2)``; degeneracies are kept.
    """
    weights = np.asarray(block.weights(theta_f), dtype=float)
    return signed_sums(weights)


def signed_sums(weights) -> np.ndarray:
    weights = np.asarray(weights, dtype=float)
    signs = np.array(list(product((-1.0, 1.0), repeat=len(weights))))
    return np.sort(signs @ weights / 2.0)


def spectral_gaps(eigenvalues, dedup_tol: float = GAP_TOL) -> np.ndarray:
    """Sorted unique positive differences between eigenvalues."""
    eig = np.unique(np.asarray(eigenvalues, dtype=float))
    if eig.size < 2:
        return np.empty(0)
    diffs = (eig[None, :] - eig[:, None])[np.triu_indices(eig.size, k=1)]
    return _dedup(np.sort(diffs[diffs > dedup_tol]), dedup_tol)


def _dedup(sorted_vals: np.ndarray, tol: float) -> np.ndarray:
    if sorted_vals.size == 0:
        return sorted_vals
    keep = np.concatenate([[True], np.diff(sorted_vals) > tol])
    return sorted_vals[keep]


def model_eigenvalues(model, dim: int = 0) -> np.ndarray:
    """Unique eigenvalues of the effective generator for one input dimension.

    Every encoding gate on ``dim`` (including re-uploaded copies) contributes
    ``+-w/2``; the frequencies a QNN can express in that dimension are the
    gaps of the resulting set of sums.
    """
    occ = model.circuit.occurrences
    mask = occ.is_encoding & (occ.dim == dim)
    ext = np.append(model.theta_f, 1.0)
    theta = ext[np.where(occ.param[mask] >= 0, occ.param[mask], len(model.theta_f))]
    weights = occ.gamma[mask] * occ.scale[mask] * theta
    values = np.zeros(1)
    for w in weights:
        values = np.concatenate([values - w / 2, values + w / 2])
        values = _dedup(np.sort(values), GAP_TOL)
    return values


def model_frequencies(model, dim: int = 0) -> np.ndarray:
    return spectral_gaps(model_eigenvalues(model, dim))


@dataclass(frozen=True)
class DftSpectrum:
    """One-sided DFT magnitudes against angular frequency."""

    frequencies: np.ndarray
    magnitudes: np.ndarray
    resolution: float  # 2 pi / sampled span; the unpadded bin width

    def peaks(self, rel_height: float = 0.05) -> list[tuple[float, float]]:
        """Local maxima with magnitude at least ``rel_height * max``."""
        mags = self.magnitudes
        if mags.size == 0:
            return []
        height = rel_height * mags.max()
        # pad so edge maxima (e.g. the DC term) count as peaks
        padded = np.concatenate([[-np.inf], mags, [-np.inf]])
        idx, _ = find_peaks(padded, height=height)
        return [(float(self.frequencies[i - 1]), float(mags[i - 1])) for i in idx]

    def dominant(self) -> tuple[float, float]:
        i = int(np.argmax(self.magnitudes))
        return float(self.frequencies[i]), float(self.magnitudes[i])

    def as_pairs(self) -> list[tuple[float, float]]:
        return list(zip(self.frequencies.tolist(), self.magnitudes.tolist()))


def dft_spectrum(xs, ys, *, window: str = "hann", pad_factor: int = 8) -> DftSpectrum:
    """Amplitude spectrum of samples on a uniform grid.

    Frequencies are angular, ``omega_k = 2 pi k / (n dx padded)``, so
    ``cos(w x)`` peaks at ``w``. Magnitudes are normalised by the window's
    coherent gain so a unit-amplitude cosine peaks at 1. The weighted mean is
    removed first and reported as the zero-frequency magnitude, so a constant
    leaks nowhere. A Hann window keeps sidelobes below 3% of a peak; zero
    padding interpolates the spectrum between bins.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
        raise InputError("need matching 1-D sample arrays with at least 2 points")
    steps = np.diff(xs)
    dx = steps.mean()
    if dx <= 0 or not np.allclose(steps, dx, rtol=1e-8, atol=1e-12 * max(1.0, abs(dx))):
        raise InputError("sample grid must be uniformly spaced and increasing")
    n = xs.size
    if window == "hann":
        w = np.hanning(n + 2)[1:-1]  # periodic-like, no zero end points
    elif window in ("none", "rect", None):
        w = np.ones(n)
    else:
        raise InputError(f"unknown window {window!r}")
    nfft = max(1, int(pad_factor)) * n
    offset = float(ys @ w / w.sum())
    spec = np.fft.rfft((ys - offset) * w, n=nfft)
    mags = 2.0 * np.abs(spec) / w.sum()
    mags[0] = abs(offset)
    freqs = 2 * np.pi * np.fft.rfftfreq(nfft, d=dx)
    return DftSpectrum(freqs, mags, 2 * np.pi / (n * dx))


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray
    gaps: np.ndarray
    mode: str = "qnn_gaps"
    dft: DftSpectrum | None = None

    @property
    def frequencies(self) -> np.ndarray:
        """Model frequency set: gaps for QNNs, eigenvalues for kernels."""
        if self.mode == "kernel_eigenvalues":
            return np.unique(self.eigenvalues)
        return self.gaps

    def to_dict(self) -> dict:
        out = {
            "mode": self.mode,
            "eigenvalues": self.eigenvalues.tolist(),
            "gaps": self.gaps.tolist(),
            "frequencies": self.frequencies.tolist(),
        }
        if self.dft is not None:
            out["dft_peaks"] = self.dft.peaks()
        return out


def spectrum_report(block, theta_f=None, *, mode: str = "qnn_gaps", dft=None) -> SpectrumReport:
    if mode not in ("qnn_gaps", "kernel_eigenvalues"):
        raise InputError(f"unknown spectrum mode {mode!r}")
    eig = composite_eigenvalues(block, theta_f)
    return SpectrumReport(eig, spectral_gaps(eig), mode, dft)
