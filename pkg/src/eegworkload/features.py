"""Welch PSD, band-power features and per-channel topography statistics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
import scipy.stats

from .core import EpochSet, Label, Montage, standard_montage


@dataclass(frozen=True)
class BandDefinition:
    name: str
    low: float
    high: float


BANDS = (
    BandDefinition("delta", 1.0, 4.0),
    BandDefinition("theta", 4.0, 8.0),
    BandDefinition("alpha", 8.0, 13.0),
    BandDefinition("beta", 13.0, 30.0),
)
BAND_BY_NAME = {b.name: b for b in BANDS}
# Greek aliases accepted on the command line
BAND_ALIASES = {"δ": "delta", "θ": "theta", "α": "alpha", "β": "beta"}


def get_band(name: str) -> BandDefinition:
    key = BAND_ALIASES.get(name, name).lower()
    if key not in BAND_BY_NAME:
        raise ValueError(f"unknown band {name!r}; choose from {', '.join(BAND_BY_NAME)}")
    return BAND_BY_NAME[key]


def welch_psd(x, fs: float = 100.0, nperseg: int = 50, noverlap: int = 25):
    """One-sided Welch PSD along the last axis.

    Hann (periodic) windows, per-segment mean removal, density scaling in
    units^2/Hz. Returns ``(freqs, psd)``; ``psd.sum(-1) * df`` equals the
    average windowed segment variance (Parseval).
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    if n < nperseg:
        raise ValueError(f"need at least {nperseg} samples for Welch PSD, got {n}")
    step = nperseg - noverlap
    n_seg = 1 + (n - nperseg) // step
    win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(nperseg) / nperseg)
    starts = np.arange(n_seg) * step
    segs = np.stack([x[..., s:s + nperseg] for s in starts], axis=-2)
    segs = segs - segs.mean(axis=-1, keepdims=True)
    spec = np.fft.rfft(segs * win, axis=-1)
    p = (np.abs(spec) ** 2) / (fs * np.sum(win ** 2))
    if nperseg % 2 == 0:
        p[..., 1:-1] *= 2
    else:
        p[..., 1:] *= 2
    freqs = np.fft.rfftfreq(nperseg, 1.0 / fs)
    return freqs, p.mean(axis=-2)


def band_masks(freqs: np.ndarray, bands=BANDS) -> np.ndarray:
    """Boolean [band x freq] membership, ``low <= f < high`` (top band closed).

    Each frequency bin belongs to at most one band, so a tone centred on a
    band-edge bin is never split between neighbouring bands.
    """
    masks = []
    for k, b in enumerate(bands):
        upper = freqs <= b.high if k == len(bands) - 1 else freqs < b.high
        masks.append((freqs >= b.low) & upper)
    return np.array(masks)


def band_power(data, fs: float = 100.0, log: bool = False, bands=BANDS) -> np.ndarray:
    """Band power per channel: ``[..., channels, 4]`` for input ``[..., channels, samples]``.

    Each bin contributes ``psd * df`` to the band containing it; with
    ``log=True`` the feature variant ``log(1 + power)`` is returned.
    """
    freqs, psd = welch_psd(data, fs)
    df = freqs[1] - freqs[0]
    out = psd @ band_masks(freqs, bands).T.astype(np.float64) * df
    return np.log1p(out) if log else out


def band_power_features(epochs) -> np.ndarray:
    """Flattened log band powers, ``[n_epochs, channels * 4]``."""
    data = epochs.data if isinstance(epochs, EpochSet) else np.asarray(epochs)
    bp = band_power(data, log=True)
    return bp.reshape(bp.shape[0], -1)


@dataclass(frozen=True)
class TopographyRow:
    channel: str
    band: str
    contrast: tuple[str, str]
    mean_power: dict
    statistic: float
    p_value: float

    @property
    def significant(self) -> bool:
        return self.p_value < 0.05


class InsufficientEpochsError(ValueError):
    pass


def topography_stats(epochs: EpochSet, band, labels=("NS", "HW"), montage: Montage | None = None,
                     fs: float = 100.0) -> list[TopographyRow]:
    """Per-channel two-sided Welch t-test of epoch band power between two labels.

    The statistic is positive when the second label has the larger mean.
    p-values are not corrected for the number of channels.
    """
    montage = montage or standard_montage()
    band = get_band(band) if isinstance(band, str) else band
    a_lab, b_lab = (Label[l] if isinstance(l, str) else Label(l) for l in labels)
    power = band_power(epochs.data, fs, bands=(band,))[..., 0]
    groups = {lab: power[epochs.labels == lab] for lab in Label}
    for lab in (a_lab, b_lab):
        if groups[lab].shape[0] < 2:
            raise InsufficientEpochsError(f"label {lab.name} needs >= 2 epochs, has {groups[lab].shape[0]}")
    a, b = groups[a_lab], groups[b_lab]
    rows = []
    for c, name in enumerate(montage.eeg_channels):
        va, vb = a[:, c], b[:, c]
        if np.array_equal(np.sort(va), np.sort(vb)):
            t, p = 0.0, 1.0
        else:
            t, p = scipy.stats.ttest_ind(vb, va, equal_var=False)
            t, p = float(t), float(p)
            if not np.isfinite(p):
                t, p = 0.0, 1.0
        means = {lab.name: float(groups[lab][:, c].mean()) if groups[lab].shape[0] else float("nan")
                 for lab in Label}
        rows.append(TopographyRow(name, band.name, (a_lab.name, b_lab.name), means, t, p))
    return rows


TOPO_COLUMNS = ("channel", "band", "contrast", "mean_NS", "mean_LW", "mean_HW", "t", "p_value", "significant")


def topography_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TOPO_COLUMNS)
    for r in rows:
        w.writerow([r.channel, r.band, f"{r.contrast[0]}-vs-{r.contrast[1]}",
                    *(f"{r.mean_power[k]:.6g}" for k in ("NS", "LW", "HW")),
                    f"{r.statistic:.6g}", f"{r.p_value:.6g}", int(r.significant)])
    return buf.getvalue()


def idw_grid(values, positions, resolution: int = 41, power: float = 2.0):
    """Inverse-distance-weighted interpolation of channel values over the unit disk."""
    values = np.asarray(values, dtype=float)
    pos = np.asarray(positions, dtype=float)
    g = np.linspace(-1, 1, resolution)
    gx, gy = np.meshgrid(g, -g)
    d = np.hypot(gx[..., None] - pos[:, 0], gy[..., None] - pos[:, 1])
    w = 1.0 / np.maximum(d, 1e-9) ** power
    grid = (w * values).sum(-1) / w.sum(-1)
    grid[np.hypot(gx, gy) > 1] = np.nan
    return grid


def _color(v):
    # blue -> white -> red
    v = float(np.clip(v, 0, 1))
    if v < 0.5:
        k = v / 0.5
        return f"#{int(40 + 215 * k):02x}{int(80 + 175 * k):02x}ff"
    k = (v - 0.5) / 0.5
    return f"#ff{int(255 - 175 * k):02x}{int(255 - 215 * k):02x}"


def scalp_svg(rows, label: str = "HW", montage: Montage | None = None, resolution: int = 41) -> str:
    """Scalp map of mean band power for ``label``; significant channels marked ``*``."""
    montage = montage or standard_montage()
    vals = np.array([r.mean_power[label] for r in rows])
    grid = idw_grid(vals, montage.positions, resolution)
    lo, hi = np.nanmin(grid), np.nanmax(grid)
    scale = (grid - lo) / (hi - lo) if hi > lo else np.zeros_like(grid)
    size, cell = 400, 400 / resolution
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 30}" '
           f'viewBox="0 0 {size} {size + 30}">']
    for i in range(resolution):
        for j in range(resolution):
            if np.isnan(grid[i, j]):
                continue
            out.append(f'<rect x="{j * cell:.2f}" y="{i * cell:.2f}" width="{cell + 0.05:.2f}" '
                       f'height="{cell + 0.05:.2f}" fill="{_color(scale[i, j])}"/>')
    c = size / 2
    out.append(f'<circle cx="{c}" cy="{c}" r="{c - 1}" fill="none" stroke="black" stroke-width="2"/>')
    out.append(f'<path d="M {c - 15} 6 L {c} -8 L {c + 15} 6" fill="none" stroke="black" stroke-width="2"/>')
    for r, (x, y) in zip(rows, montage.positions):
        px, py = c + x * (c - 1), c - y * (c - 1)
        out.append(f'<circle cx="{px:.1f}" cy="{py:.1f}" r="2.5" fill="black"/>')
        if r.significant:
            out.append(f'<text x="{px + 4:.1f}" y="{py - 4:.1f}" font-size="16" fill="#666666">*</text>')
    band = rows[0].band if rows else ""
    out.append(f'<text x="8" y="{size + 22}" font-size="14">{band} {label} '
               f'[{lo:.3g}, {hi:.3g}] uV^2; * p&lt;0.05 {"-vs-".join(rows[0].contrast) if rows else ""}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
