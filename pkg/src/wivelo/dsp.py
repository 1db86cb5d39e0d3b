"""Power smoothing, subcarrier shift distributions and the sign distance.

Two flavours of SSD are produced:

* time-offset SSDs (``unit="ms"``): integer packet lags between the
  smoothed power waveforms of subcarrier pairs, found by normalized
  cross-correlation.  Their signs drive the direction voters.
* range SSDs (``unit="m"``): the same pair offsets expressed as the
  reflected path length they imply.  These are comparable across antennas
  and feed the arrival-time search.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import next_fast_len
from scipy.ndimage import uniform_filter1d
from scipy.signal import butter, hilbert, savgol_coeffs, savgol_filter, sosfiltfilt

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_MAX_LAG = 16
DEFAULT_WINDOW = 32
FLAT_FLOOR = 1e-10
MIN_CONTRAST = 0.8
NOISE_FACTOR = 3.0
PEAK_TOLERANCE = 0.2


class DspError(ValueError):
    pass


class SeriesTooShort(DspError):
    pass


class FlatSignal(DspError):
    pass


class AllFlat(DspError):
    pass


class PairMismatch(DspError):
    pass


@dataclass(frozen=True)
class SgfConfig:
    window: int = 31
    order: int = 3

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise DspError(f"sgf.window: must be odd and positive, got {self.window}")
        if not 0 <= self.order < self.window:
            raise DspError(f"sgf.order: must satisfy 0 <= order < window, got {self.order}")


def default_pairs(n_subcarriers: int = 30, separation: int = 15) -> tuple:
    """Pairs ``(i + separation, i)`` for every valid ``i``."""
    if not 0 < separation < n_subcarriers:
        raise DspError("separation must lie in (0, n_subcarriers)")
    return tuple((i + separation, i) for i in range(n_subcarriers - separation))


def sgf_smooth(series, cfg: SgfConfig = SgfConfig(), axis: int = 0) -> np.ndarray:
    """Savitzky-Golay smoothing along ``axis``.

    Terminal samples come from the polynomial fitted to the first/last full
    window, so polynomials up to ``cfg.order`` pass through unchanged.
    """
    x = np.asarray(series, dtype=float)
    if x.shape[axis] < cfg.window:
        raise SeriesTooShort(f"series has {x.shape[axis]} samples, SGF window needs {cfg.window}")
    return savgol_filter(x, cfg.window, cfg.order, axis=axis, mode="interp")


@dataclass(frozen=True)
class SsdVector:
    elements: np.ndarray
    antenna: int
    start: float
    pairs: tuple
    flags: np.ndarray = field(default=None)
    unit: str = "ms"

    def __post_init__(self):
        e = np.asarray(self.elements)
        if e.ndim != 1 or e.size < 1:
            raise DspError("SSD vector needs at least one element")
        if len(self.pairs) != e.size:
            raise PairMismatch(f"{e.size} elements but {len(self.pairs)} pairs")
        object.__setattr__(self, "elements", e)
        object.__setattr__(self, "pairs", tuple(tuple(p) for p in self.pairs))
        if self.flags is None:
            object.__setattr__(self, "flags", np.zeros(e.size, dtype=bool))

    def __len__(self):
        return self.elements.size

    @property
    def all_flat(self) -> bool:
        return bool(np.all(self.flags))

    def signs(self) -> np.ndarray:
        return np.sign(self.elements).astype(int)


def _check_pairs(pairs, n_sub: int) -> np.ndarray:
    p = np.asarray(pairs, dtype=int).reshape(-1, 2)
    if p.size == 0:
        raise DspError("pair list is empty")
    if np.any(p < 0) or np.any(p >= n_sub):
        raise DspError(f"pair index outside 0..{n_sub - 1}")
    return p


def smoothed_noise_std(raw_power, cfg: SgfConfig = SgfConfig(), axis: int = 0) -> np.ndarray:
    """Noise standard deviation left in ``sgf_smooth(raw_power)``.

    The white-noise level of the raw power is estimated robustly from the
    median absolute first difference and scaled by the L2 norm of the
    central Savitzky-Golay kernel.
    """
    x = np.asarray(raw_power, dtype=float)
    d = np.diff(x, axis=axis)
    mad = np.median(np.abs(d - np.median(d, axis=axis, keepdims=True)), axis=axis)
    sigma = 1.4826 * mad / math.sqrt(2.0)
    h = savgol_coeffs(cfg.window, cfg.order)
    return sigma * float(np.sqrt(np.sum(h * h)))


def _window_sums(x, window: int) -> np.ndarray:
    """Sums of ``window`` consecutive rows, one per valid start."""
    c = np.cumsum(x, axis=0)
    out = c[window - 1:].copy()
    out[1:] -= c[:-window]
    return out


def ssd_batch(power, starts, pairs, window: int = DEFAULT_WINDOW, max_lag: int = DEFAULT_MAX_LAG,
              floor: float = FLAT_FLOOR, contrast: float = MIN_CONTRAST, noise_std=None,
              noise_factor: float = NOISE_FACTOR):
    """Time-offset SSD elements for many window starts at once.

    Parameters
    ----------
    power : ndarray, shape (n_samples, n_subcarriers)
        Smoothed power of one antenna.
    starts : array_like of int
        First sample of each analysis window.  Windows running past the end
        of the series are pulled back so they fit.
    pairs : sequence of (hi, lo)
    window, max_lag : int
        Window length and lag range in samples.
    floor : float
        Relative variance floor; a segment whose variance is below
        ``floor * range(power)**2`` counts as flat.
    contrast : float
        Minimum drop of the correlation from its peak to its lowest value
        over the searched lags.  Waveforms without an oscillation inside the
        lag range correlate almost equally at every lag and are rejected.
    noise_std : array_like, shape (n_subcarriers,), optional
        Noise level of each smoothed subcarrier.  Segments whose standard
        deviation stays below ``noise_factor * noise_std`` also count as flat.

    Returns
    -------
    lags : ndarray of int, shape (n_starts, n_pairs)
        Positive when the ``hi`` waveform leads; swapping a pair negates its
        element.  Fast oscillations repeat
        inside the lag range, so the interior correlation peak nearest zero
        lag (within ``PEAK_TOLERANCE`` of the best one) is taken.  Peaks on
        the edge of the searchable lag range are unresolved and reported as 0.
    flags : ndarray of bool, shape (n_starts, n_pairs)
        True where the element could not be resolved (flat, edge peak or
        low contrast).
    """
    P = np.asarray(power, dtype=float)
    if P.ndim != 2:
        raise DspError("power must be (samples, subcarriers)")
    n = P.shape[0]
    if window < 2 * max_lag:
        raise DspError(f"window ({window}) must be at least 2 * max_lag ({2 * max_lag})")
    if n < window:
        raise SeriesTooShort(f"{n} samples but the SSD window needs {window}")
    pr = _check_pairs(pairs, P.shape[1])
    # The higher subcarrier always holds the fixed window; reversed pairs are negated.
    flip = pr[:, 0] < pr[:, 1]
    pr = np.where(flip[:, None], pr[:, ::-1], pr)
    starts = np.clip(np.atleast_1d(np.asarray(starts, dtype=int)), 0, n - window)
    if starts.size == 0:
        return np.zeros((0, len(pr)), dtype=int), np.zeros((0, len(pr)), dtype=bool)

    span = float(P.max() - P.min())
    var_floor = floor * span * span
    if noise_std is None:
        noise_var = np.zeros(P.shape[1])
    else:
        noise_var = (noise_factor * np.broadcast_to(np.asarray(noise_std, dtype=float), (P.shape[1],))) ** 2
    lags = np.arange(-max_lag, max_lag + 1)
    hi, lo = pr[:, 0], pr[:, 1]

    # Every window sum (plain, squared, lagged product) comes from cumulative sums.
    off = max(0, int(starts.min()) - max_lag)
    end = min(n, int(starts.max()) + window + max_lag)
    X = P[off:end] - P.mean(axis=0)
    m = X.shape[0]
    u = starts - off
    A, B = X[:, hi], X[:, lo]
    prod = np.zeros((m, len(lags), len(pr)))
    for i, lag in enumerate(lags):
        t0, t1 = max(0, -lag), min(m, m - lag)
        if t1 > t0:
            prod[t0:t1, i] = A[t0:t1] * B[t0 + lag:t1 + lag]
    wa, waa = _window_sums(A, window), _window_sums(A * A, window)
    wb, wbb = _window_sums(B, window), _window_sums(B * B, window)
    wab = _window_sums(prod, window)

    ub = u[:, None] + lags[None, :]
    valid = (ub + off >= 0) & (ub + off + window <= n)
    ubc = np.clip(ub, 0, m - window)
    sa = wa[u]
    va = waa[u] - sa * sa / window
    sb = wb[ubc]
    vb = wbb[ubc] - sb * sb / window
    num = wab[u] - sa[:, None, :] * sb / window

    flat_a = va / window < np.maximum(var_floor, noise_var[hi])
    flat_b = vb / window < np.maximum(var_floor, noise_var[lo])
    with np.errstate(invalid="ignore", divide="ignore"):
        ncc = num / np.sqrt(np.maximum(va, 0)[:, None, :] * np.maximum(vb, 0))
    ncc[~valid[:, :, None] | flat_b | ~np.isfinite(ncc)] = -np.inf

    top = np.argmax(ncc, axis=1)
    peak = np.take_along_axis(ncc, top[:, None, :], axis=1)[:, 0]
    low = np.min(np.where(np.isfinite(ncc), ncc, np.inf), axis=1)
    # Interior local maxima close to the best correlation; nearest to zero lag wins.
    local = np.zeros(ncc.shape, dtype=bool)
    local[:, 1:-1] = (ncc[:, 1:-1] > ncc[:, :-2]) & (ncc[:, 1:-1] >= ncc[:, 2:])
    local &= np.isfinite(ncc) & (ncc >= peak[:, None, :] - PEAK_TOLERANCE)
    rank = np.where(local, np.abs(lags)[None, :, None] - 1e-3 * ncc, np.inf)
    best = np.argmin(rank, axis=1)
    unresolved = flat_a | ~np.isfinite(peak) | ~local.any(axis=1) | (peak - low < contrast)
    out = np.where(unresolved, 0, lags[best]).astype(int)
    return np.where(flip, -out, out), unresolved


def ssd_series(power, pairs, window: int = DEFAULT_WINDOW, max_lag: int = DEFAULT_MAX_LAG,
               noise_std=None, chunk: int = 2048):
    """:func:`ssd_batch` for every start ``0 .. n - 1``, evaluated in chunks.

    Starts past ``n - window`` repeat the last full window.
    """
    n = np.asarray(power).shape[0]
    parts = [ssd_batch(power, np.arange(i, min(i + chunk, n)), pairs, window, max_lag, noise_std=noise_std)
             for i in range(0, n, chunk)]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def compute_ssd(power, pairs, start: int, window: int = DEFAULT_WINDOW,
                max_lag: int = DEFAULT_MAX_LAG, antenna: int = 0, rate: float = 1000.0) -> SsdVector:
    """Time-offset SSD vector of one antenna for the window ``[start, start + window)``.

    Raises
    ------
    AllFlat
        When no pair yields a resolvable offset.
    """
    lags, flags = ssd_batch(power, [start], pairs, window, max_lag)
    if flags.all():
        raise AllFlat(f"antenna {antenna}: every subcarrier pair is flat at sample {start}")
    return SsdVector(lags[0], antenna, start / rate, tuple(map(tuple, pairs)), flags[0])


def sign_distance(s1: SsdVector, s2: SsdVector) -> float:
    """Normalized inner product of the sign patterns of two SSD vectors.

    Each sign vector is normalized by the square root of its nonzero count;
    the result is 0 when either vector has no nonzero element.
    """
    if s1.pairs != s2.pairs:
        raise PairMismatch("sign distance needs identical pair lists")
    if s1.antenna != s2.antenna:
        raise PairMismatch(f"antennas differ ({s1.antenna} vs {s2.antenna})")
    return float(sign_distance_batch(s1.elements[None], s2.elements[None])[0])


def sign_distance_batch(a, b) -> np.ndarray:
    """Row-wise sign distance of two ``(m, n)`` element arrays."""
    sa = np.sign(np.asarray(a))
    sb = np.sign(np.asarray(b))
    na = np.count_nonzero(sa, axis=-1)
    nb = np.count_nonzero(sb, axis=-1)
    dot = np.sum(sa * sb, axis=-1)
    den = np.sqrt(na * nb)
    return np.divide(dot, den, out=np.zeros(dot.shape, dtype=float), where=den > 0)


@dataclass(frozen=True)
class RangeSsdConfig:
    """Knobs of the path-length SSD extractor.

    ``highpass_hz`` removes the slowly varying power baseline, ``smooth``
    averages the pair cross-products (samples) and ``static_window`` is the
    moving-average length (samples) used to estimate the static channel.
    """

    highpass_hz: float = 4.0
    smooth: int = 33
    static_window: int = 255


def range_ssd(frames, frequencies, pairs, los_length: float, rate: float = 1000.0,
              sgf: SgfConfig = SgfConfig(), cfg: RangeSsdConfig = RangeSsdConfig(),
              power=None) -> np.ndarray:
    """Per-packet path-length SSD elements of one antenna.

    The smoothed power of every subcarrier is high-passed and turned into an
    analytic signal.  The phase lead of ``hi`` over ``lo`` equals
    ``2 pi df (d_h - d_s) / c`` where ``d_s`` is the effective static path
    length; ``d_s`` is recovered from the phase slope of the slowly varying
    complex channel, with its branch chosen next to the line-of-sight length.

    Parameters
    ----------
    frames : ndarray, shape (n_samples, n_subcarriers)
        Complex CFR of one antenna.
    frequencies : ndarray
        Subcarrier frequencies in Hz.
    pairs : sequence of (hi, lo)
    los_length : float
        Transmitter-to-antenna distance in meters.
    power : ndarray, optional
        ``sgf_smooth(|frames|**2, sgf)`` when the caller already has it.

    Returns
    -------
    ndarray, shape (n_samples, n_pairs)
        Estimated reflected path length (meters) per pair.
    """
    H = np.asarray(frames)
    f = np.asarray(frequencies, dtype=float)
    pr = _check_pairs(pairs, H.shape[1])
    n = H.shape[0]
    if n < max(sgf.window, 3 * 9):
        raise SeriesTooShort(f"{n} samples are too few for range SSD extraction")
    if power is None:
        power = sgf_smooth(H.real**2 + H.imag**2, sgf)
    sos = butter(4, cfg.highpass_hz, "highpass", fs=rate, output="sos")
    padlen = min(3 * (2 * len(sos) + 1), n - 1)
    # Zero-padding to a fast FFT length only touches the last few samples.
    z = hilbert(sosfiltfilt(sos, power, axis=0, padlen=padlen), N=next_fast_len(n), axis=0)[:n]
    hi, lo = pr[:, 0], pr[:, 1]
    cross = z[:, hi] * np.conj(z[:, lo])
    cross = uniform_filter1d(cross.real, cfg.smooth, axis=0) + 1j * uniform_filter1d(cross.imag, cfg.smooth, axis=0)

    w = min(cfg.static_window, n)
    static = uniform_filter1d(H.real, w, axis=0, mode="nearest") + 1j * uniform_filter1d(H.imag, w, axis=0, mode="nearest")
    df = f[hi] - f[lo]
    los_phase = -2 * np.pi * df * los_length / SPEED_OF_LIGHT
    static_phase = np.angle(static[:, hi] * np.conj(static[:, lo]))
    static_phase = los_phase + np.angle(np.exp(1j * (static_phase - los_phase)))
    return (np.abs(np.angle(cross)) - static_phase) * SPEED_OF_LIGHT / (2 * np.pi * df)
