"""Waveform resynthesis: pitch modification by TD-PSOLA and formant shifting by Burg LPC.

Both transforms are time-domain and deterministic. PSOLA moves two-period
windowed grains anchored at glottal epochs; the formant shifter re-filters
the LPC residual through a pole-modified all-pole filter frame by frame.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import butter, lfilter, sosfiltfilt

from .audio import Waveform, num_frames, resample
from .pitch import F0Trajectory, interpolate_unvoiced

UNVOICED_ANCHOR_S = 0.010
MIN_PERIOD_S = 0.002
MAX_PERIOD_S = 0.050
PSOLA_F0_MIN = 20.0


@dataclass(frozen=True)
class EpochSequence:
    """Glottal-cycle anchor samples; unvoiced stretches carry synthetic anchors."""

    positions: np.ndarray
    voiced: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64)
        v = np.asarray(self.voiced, dtype=bool)
        if pos.shape != v.shape or pos.ndim != 1:
            raise ValueError("positions and voiced flags must be matching 1-D arrays")
        if pos.size > 1 and not np.all(np.diff(pos) > 0):
            raise ValueError("positions must be strictly increasing")
        if pos.size and pos[0] < 0:
            raise ValueError("positions must be nonnegative")
        for name, arr in (("positions", pos), ("voiced", v)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.positions.size


@dataclass(frozen=True)
class FormantShiftConfig:
    """factor scales the angles of the n_formants lowest formant pole pairs.

    Analysis runs at 2*max_formant_hz (signal resampled down when needed):
    LPC poles then cover only the formant band instead of being spent on
    the empty top octaves.
    """

    factor: float
    n_formants: int = 3
    lpc_order: Optional[int] = None
    frame: float = 0.025
    hop: float = 0.010
    preemphasis_hz: float = 50.0
    max_formant_hz: float = 5500.0

    def __post_init__(self):
        if self.factor <= 0:
            raise ValueError("factor must be positive")
        if self.n_formants < 1:
            raise ValueError("n_formants must be at least 1")
        if self.lpc_order is not None and self.lpc_order < 2 * self.n_formants + 2:
            raise ValueError("lpc_order must be at least 2*n_formants + 2")
        if not (self.frame > self.hop > 0):
            raise ValueError("need frame > hop > 0")
        if self.max_formant_hz <= 0:
            raise ValueError("max_formant_hz must be positive")

    def resolve_order(self, sample_rate: float) -> int:
        if self.lpc_order is not None:
            return self.lpc_order
        return int(round(sample_rate / 1000.0)) + 2


def _voiced_sample_spans(f0: F0Trajectory, fs: float, n: int):
    """Half-hop-padded sample ranges covered by runs of voiced frames."""
    spans = []
    start = None
    hop = float(np.median(np.diff(f0.times))) if len(f0) > 1 else UNVOICED_ANCHOR_S
    for k in range(len(f0)):
        if f0.voiced[k] and start is None:
            start = f0.times[k] - hop / 2
        elif not f0.voiced[k] and start is not None:
            spans.append((start, f0.times[k - 1] + hop / 2))
            start = None
    if start is not None:
        spans.append((start, f0.times[-1] + hop / 2))
    out = []
    for t0, t1 in spans:
        a, b = max(0, int(t0 * fs)), min(n, int(t1 * fs))
        if b - a > 2:
            out.append((a, b))
    return out


def detect_epochs(w: Waveform, f0: F0Trajectory) -> EpochSequence:
    """Peak-following epoch marker.

    Voiced spans: one anchor per local period, found on the low-passed
    signal by searching [0.7p, 1.4p] ahead of the previous anchor. Unvoiced
    spans: uniform 10 ms anchors, so PSOLA passes them through unchanged.
    """
    fs = w.sample_rate
    x = w.samples
    n = x.size
    if f0.n_voiced > 0 and not np.all(np.isfinite(f0.values)):
        raise ValueError("epoch detection needs an interpolated (all-finite) trajectory")

    voiced_spans = _voiced_sample_spans(f0, fs, n)
    positions, flags = [], []

    if voiced_spans:
        cutoff = min(1000.0, 0.45 * fs)
        sos = butter(4, cutoff / (fs / 2), output="sos")
        lp = sosfiltfilt(sos, x)
        period_at = lambda s: fs / float(np.interp(s / fs, f0.times, f0.values))
        for a, b in voiced_spans:
            seg = lp[a:b]
            sign = 1.0 if np.max(seg) >= -np.min(seg) else -1.0
            ref = sign * lp
            p0 = int(np.clip(period_at(a), MIN_PERIOD_S * fs, MAX_PERIOD_S * fs))
            cur = a + int(np.argmax(ref[a : min(a + p0, b)]))
            span_marks = [cur]
            while True:
                p = np.clip(period_at(cur), MIN_PERIOD_S * fs, MAX_PERIOD_S * fs)
                lo = cur + int(0.7 * p)
                hi = min(cur + int(1.4 * p) + 1, b)
                if lo >= hi:
                    break
                cur = lo + int(np.argmax(ref[lo:hi]))
                span_marks.append(cur)
            positions.extend(span_marks)
            flags.extend([True] * len(span_marks))

    hop = max(1, int(round(UNVOICED_ANCHOR_S * fs)))
    gaps = []
    prev_end = 0
    for a, b in voiced_spans:
        if a > prev_end:
            gaps.append((prev_end, a))
        prev_end = max(prev_end, b)
    if prev_end < n:
        gaps.append((prev_end, n))
    for a, b in gaps:
        anchors = list(range(a, b, hop))
        if not anchors:
            anchors = [a]
        positions.extend(anchors)
        flags.extend([False] * len(anchors))

    order = np.argsort(positions, kind="stable")
    pos = np.asarray(positions, dtype=np.int64)[order]
    v = np.asarray(flags, dtype=bool)[order]
    keep = np.concatenate([[True], np.diff(pos) >= 2])
    return EpochSequence(pos[keep], v[keep])


def _grain_window(pl: int, pr: int) -> np.ndarray:
    """Asymmetric two-period Hanning: rises over pl samples, falls over pr."""
    rise = np.hanning(2 * pl + 1)[: pl + 1]
    fall = np.hanning(2 * pr + 1)[pr:]
    return np.concatenate([rise, fall[1:]])


def _add_grain(out, norm, x, center_src, center_out, pl, pr):
    n = x.size
    win = _grain_window(pl, pr)
    src_lo, src_hi = center_src - pl, center_src + pr + 1
    out_lo, out_hi = center_out - pl, center_out + pr + 1
    # clip against both signal and output bounds, keeping window alignment
    cut_lo = max(0, -src_lo, -out_lo)
    cut_hi = max(0, src_hi - n, out_hi - out.size)
    if cut_lo + cut_hi >= win.size:
        return
    sl_src = slice(src_lo + cut_lo, src_hi - cut_hi)
    sl_out = slice(out_lo + cut_lo, out_hi - cut_hi)
    wpart = win[cut_lo : win.size - cut_hi]
    out[sl_out] += x[sl_src] * wpart
    norm[sl_out] += wpart


def psola_modify(w: Waveform, source_f0: F0Trajectory, target_f0: F0Trajectory) -> Waveform:
    """Impose target_f0 on the waveform; duration and unvoiced spans are preserved.

    Synthesis marks march through voiced spans at the measured epoch spacing
    scaled by f0_source/f0_target, and are pinned to the source anchors
    elsewhere; each mark receives the grain of the nearest source epoch.
    Scaling the measured spacing (rather than stepping by fs/f0_target)
    keeps the identity mapping exact: equal trajectories give ratio 1 and
    marks that never leave the anchors.
    """
    fs = w.sample_rate
    x = w.samples
    n = x.size
    if len(source_f0) != len(target_f0) or not np.allclose(source_f0.times, target_f0.times):
        raise ValueError("source and target trajectories must share the frame grid")
    tv = target_f0.values[target_f0.voiced]
    if tv.size and (np.min(tv) < PSOLA_F0_MIN or np.max(tv) > fs / 4):
        raise ValueError(f"target f0 must lie within [{PSOLA_F0_MIN:g} Hz, sample_rate/4]")

    src = interpolate_unvoiced(source_f0) if source_f0.n_voiced else source_f0
    epochs = detect_epochs(w, src)
    pos = epochs.positions
    n_ep = len(epochs)
    if n_ep == 0:
        return Waveform(x.copy(), fs)

    # per-epoch one-sided periods from neighbor distances
    dist = np.diff(pos)
    pl = np.empty(n_ep, dtype=np.int64)
    pr = np.empty(n_ep, dtype=np.int64)
    pl[1:] = dist
    pr[:-1] = dist
    pl[0] = pr[0] if n_ep > 1 else int(UNVOICED_ANCHOR_S * fs)
    pr[-1] = pl[-1]
    lo, hi = int(MIN_PERIOD_S * fs), int(MAX_PERIOD_S * fs)
    pl = np.clip(pl, lo, hi)
    pr = np.clip(pr, lo, hi)

    if target_f0.n_voiced and source_f0.n_voiced:
        tgt = interpolate_unvoiced(target_f0)
        ratio_at = lambda s: float(
            np.interp(s / fs, src.times, src.values) / np.interp(s / fs, tgt.times, tgt.values)
        )
    else:
        ratio_at = lambda s: 1.0

    # stepping uses the spacing to the following epoch (the local period),
    # unclipped; pl/pr above are clipped only for window sizing
    step_src = np.empty(n_ep, dtype=np.float64)
    if n_ep > 1:
        step_src[:-1] = dist
        step_src[-1] = dist[-1]
    else:
        step_src[0] = UNVOICED_ANCHOR_S * fs

    out = np.zeros(n)
    norm = np.zeros(n)

    # walk runs of equal voicing over the epoch sequence
    run_starts = [0] + [k for k in range(1, n_ep) if epochs.voiced[k] != epochs.voiced[k - 1]] + [n_ep]
    for r in range(len(run_starts) - 1):
        a, b = run_starts[r], run_starts[r + 1]
        if not epochs.voiced[a]:
            for k in range(a, b):
                _add_grain(out, norm, x, int(pos[k]), int(pos[k]), int(pl[k]), int(pr[k]))
            continue
        run_pos = pos[a:b]
        tau = float(run_pos[0])
        end = float(run_pos[-1])
        while tau <= end + 1:
            k = a + int(np.argmin(np.abs(run_pos - tau)))
            _add_grain(out, norm, x, int(pos[k]), int(round(tau)), int(pl[k]), int(pr[k]))
            step = step_src[k] * ratio_at(tau)
            tau += float(np.clip(step, MIN_PERIOD_S * fs, MAX_PERIOD_S * fs))

    covered = norm > 1e-3
    out[covered] /= norm[covered]
    out[~covered] = 0.0
    return Waveform(out, fs)


def burg_lpc(x: np.ndarray, order: int) -> np.ndarray:
    """Burg-method AR coefficients [1, a1..a_order] for the prediction filter A(z).

    Lattice recursion minimizing forward plus backward prediction error;
    reflection coefficients stay in [-1, 1] so the model is stable.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    if order < 1:
        raise ValueError("order must be at least 1")
    if n <= order:
        raise ValueError(f"need more than order ({order}) samples, got {n}")
    a = np.zeros(order + 1)
    a[0] = 1.0
    f = x.copy()
    b = x.copy()
    for m in range(order):
        fm = f[1:]
        bm = b[:-1]
        den = fm @ fm + bm @ bm
        k = 0.0 if den <= 0 else -2.0 * (bm @ fm) / den
        prev = a[: m + 2].copy()
        a[1 : m + 2] = prev[1 : m + 2] + k * prev[m::-1]
        f, b = fm + k * bm, bm + k * fm
    return a


def _pole_formants(a: np.ndarray, fs: float):
    """(frequency, bandwidth, root) for upper-half-plane poles, frequency ascending."""
    roots = np.roots(a)
    upper = roots[np.imag(roots) > 1e-9]
    freqs = np.angle(upper) * fs / (2 * np.pi)
    radii = np.abs(upper)
    bws = -np.log(np.maximum(radii, 1e-12)) * fs / np.pi
    order = np.argsort(freqs)
    return [(float(freqs[i]), float(bws[i]), upper[i]) for i in order]


FORMANT_MIN_HZ = 90.0
FORMANT_EDGE_HZ = 200.0  # keep clear of DC and Nyquist tilt poles
FORMANT_MAX_BW = 400.0


def _classify_formants(triples, fs: float):
    return [
        (fq, bw, r)
        for fq, bw, r in triples
        if FORMANT_MIN_HZ <= fq <= fs / 2 - FORMANT_EDGE_HZ and bw < FORMANT_MAX_BW
    ]


def track_formants(
    w: Waveform,
    lpc_order: int,
    frame: float = 0.025,
    hop: float = 0.010,
    max_formant_hz: float = 5500.0,
):
    """Per-frame formant (frequency, bandwidth) lists; None marks an unusable frame.

    The signal is resampled to 2*max_formant_hz before analysis so the LPC
    fit is not distracted by the (usually empty) top octaves.
    """
    if lpc_order < 8:
        raise ValueError("tracking three formants needs lpc_order >= 8")
    if w.sample_rate > 2.0 * max_formant_hz:
        w = resample(w, 2.0 * max_formant_hz)
    fs = w.sample_rate
    alpha = float(np.exp(-2 * np.pi * 50.0 / fs))
    y = lfilter([1.0, -alpha], [1.0], w.samples)
    fl = int(round(frame * fs))
    hp = int(round(hop * fs))
    win = np.hanning(fl)
    result = []
    for k in range(num_frames(y.size, fl, hp)):
        seg = y[k * hp : k * hp + fl] * win
        if not np.any(seg):
            result.append(None)
            continue
        try:
            a = burg_lpc(seg, lpc_order)
            triples = _pole_formants(a, fs)
        except (ValueError, np.linalg.LinAlgError):
            result.append(None)
            continue
        result.append([(fq, bw) for fq, bw, _ in _classify_formants(triples, fs)])
    return result


@dataclass(frozen=True)
class FormantShift:
    """Shifted waveform plus the count of pole radii clamped for stability."""

    waveform: Waveform
    clamped_poles: int


def shift_formants_detailed(w: Waveform, cfg: FormantShiftConfig) -> FormantShift:
    fs = w.sample_rate
    n = w.samples.size
    if n < int(round(cfg.frame * fs)):
        raise ValueError("signal shorter than one analysis frame")
    if cfg.factor == 1.0:
        return FormantShift(Waveform(w.samples.copy(), fs), 0)

    # work in the formant band; top octaves carry no formants
    wa = resample(w, 2.0 * cfg.max_formant_hz) if fs > 2.0 * cfg.max_formant_hz else w
    fa = wa.sample_rate
    order = cfg.resolve_order(fa)
    alpha = float(np.exp(-2 * np.pi * cfg.preemphasis_hz / fa))
    x = wa.samples
    na = x.size
    fl = int(round(cfg.frame * fa))
    hp = int(round(cfg.hop * fa))

    y = lfilter([1.0, -alpha], [1.0], x)
    n_fr = num_frames(na, fl, hp) + 1  # one extra to cover the tail
    pad = (n_fr - 1) * hp + fl
    y = np.concatenate([y, np.zeros(pad - na)])
    win = np.hanning(fl)

    out = np.zeros(pad)
    den = np.zeros(pad)
    clamped = 0
    max_angle = 0.95 * np.pi

    for k in range(n_fr):
        seg = y[k * hp : k * hp + fl] * win
        if not np.any(seg):
            continue
        a = burg_lpc(seg, order)
        roots = np.roots(a)
        upper = np.nonzero(np.imag(roots) > 1e-9)[0]
        freqs = np.angle(roots[upper]) * fa / (2 * np.pi)
        bws = -np.log(np.maximum(np.abs(roots[upper]), 1e-12)) * fa / np.pi
        is_formant = (
            (freqs >= FORMANT_MIN_HZ)
            & (freqs <= fa / 2 - FORMANT_EDGE_HZ)
            & (bws < FORMANT_MAX_BW)
        )
        by_freq = upper[is_formant][np.argsort(freqs[is_formant])]
        to_shift = set(by_freq[: cfg.n_formants].tolist())

        new_upper = []
        for ri in upper:
            radius = abs(roots[ri])
            angle = np.angle(roots[ri])
            if ri in to_shift and angle * cfg.factor < max_angle:
                angle *= cfg.factor
            if radius >= 1.0:
                radius = 0.998
                clamped += 1
            new_upper.append(radius * np.exp(1j * angle))
        new_real = []
        for rr in np.real(roots[np.abs(np.imag(roots)) <= 1e-9]):
            if abs(rr) >= 1.0:
                rr = np.sign(rr) * 0.998
                clamped += 1
            new_real.append(rr)
        new_upper = np.asarray(new_upper, dtype=complex)
        a_mod = np.real(np.poly(np.concatenate([new_upper, np.conj(new_upper), new_real])))
        resid = lfilter(a, [1.0], seg)
        resyn = lfilter([1.0], a_mod, resid)
        # moving poles off the harmonic comb changes the frame gain; restore it
        rms_in = float(np.sqrt(seg @ seg))
        rms_out = float(np.sqrt(resyn @ resyn))
        if rms_out > 0:
            resyn *= np.clip(rms_in / rms_out, 0.25, 4.0)
        out[k * hp : k * hp + fl] += resyn * win
        den[k * hp : k * hp + fl] += win**2

    covered = den > 1e-8
    out[covered] /= den[covered]
    out = out[:na]
    result = lfilter([1.0], [1.0, -alpha], out)
    if fa != fs:
        result = resample(Waveform(result, fa), fs).samples
        if result.size < n:
            result = np.concatenate([result, np.zeros(n - result.size)])
        else:
            result = result[:n]
    return FormantShift(Waveform(result, fs), clamped)


def shift_formants(w: Waveform, cfg: FormantShiftConfig) -> Waveform:
    """Scale the lowest n_formants formant frequencies by cfg.factor.

    Frame-wise Burg analysis; formant pole pairs get their angles scaled
    with radii (bandwidths) preserved; the inverse-filtered residual is
    re-filtered through the modified all-pole filter and overlap-added.
    """
    return shift_formants_detailed(w, cfg).waveform
