"""Self-affine rough interface synthesis and spectral analysis.

Interfaces between the Si well and the SiGe barriers are modeled as
isotropic self-affine random fields with a power-law height PSD

    C(k) ~ |k|^(-2*(1+H)),

with Hurst exponent H and a self-similar band between 2*pi/lambda_max and
2*pi/lambda_min.  A surface is synthesized as a finite sum of random plane
waves,

    h(s) = <h> + C * sum_n G_n |k_n|^-(1+H) cos(k_n . s + U_n),

where the wavevectors k_n are drawn uniformly by area from the annulus
(the natural measure for an isotropic field), G_n are standard normal
amplitudes and U_n are uniform phases on [0, pi).  The x component of each
k_n is snapped to a multiple of 2*pi/period so the surface tiles the
conveyor-belt unit cell exactly in x.  The overall constant C is fixed
after sampling so the realized sample RMS matches the requested value
exactly, which is what makes roughness amplitudes comparable across seeds.

Heights are in Angstrom, lateral coordinates and wavelengths in nm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .device import RoughnessSpec
from .errors import ConfigError

__all__ = [
    "ModeSet",
    "SurfaceField",
    "synthesize_surface",
    "sample_rms",
    "radial_psd",
    "fit_hurst",
    "sector_powers",
    "step_surface",
]


@dataclass(frozen=True)
class ModeSet:
    """Sampled plane-wave modes of one surface realization."""

    kx: np.ndarray              # rad/nm, snapped to 2*pi/period multiples
    ky: np.ndarray              # rad/nm
    amplitude: np.ndarray       # G_n * |k_n|^-(1+H), pre-normalization
    phase: np.ndarray           # U_n in [0, pi)


@dataclass(frozen=True)
class SurfaceField:
    """Gridded height field h(x, y) over one unit cell.

    ``heights`` has shape (nx, ny) with axis 0 along x; the field is
    periodic in x with period nx*dx and non-periodic in y.
    """

    heights: np.ndarray         # Angstrom
    dx: float                   # nm
    dy: float                   # nm
    mean_height: float
    rms: float
    hurst: float
    seed: int
    modes: ModeSet | None = field(default=None, compare=False, repr=False)

    @property
    def x_period(self) -> float:
        return self.heights.shape[0] * self.dx

    def sample(self, x, y):
        """Bilinear height lookup, periodic in x, clamped in y (Angstrom)."""
        h = self.heights
        nx, ny = h.shape
        fx = np.asarray(x, dtype=float) / self.dx
        fy = np.clip(np.asarray(y, dtype=float) / self.dy, 0.0, ny - 1.0)
        ix0 = np.floor(fx).astype(int)
        iy0 = np.minimum(np.floor(fy).astype(int), ny - 2) if ny > 1 \
            else np.zeros_like(np.floor(fy).astype(int))
        tx = fx - ix0
        ty = fy - iy0 if ny > 1 else np.zeros_like(fy)
        ix0 = np.mod(ix0, nx)
        ix1 = np.mod(ix0 + 1, nx)
        iy1 = np.minimum(iy0 + 1, ny - 1)
        return ((1 - tx) * (1 - ty) * h[ix0, iy0]
                + tx * (1 - ty) * h[ix1, iy0]
                + (1 - tx) * ty * h[ix0, iy1]
                + tx * ty * h[ix1, iy1])


def synthesize_surface(spec: RoughnessSpec,
                       dims: tuple[int, int],
                       extents: tuple[float, float],
                       x_period: float | None = None,
                       seed: int | None = None) -> SurfaceField:
    """Draw one rough-surface realization on an (nx, ny) grid.

    extents are the physical (x, y) sizes in nm; x_period defaults to the
    x extent and sets the wavenumber quantization for x periodicity.  The
    sample RMS of the returned heights equals spec.rms exactly (about the
    sample mean), and their mean equals spec.mean_height exactly.
    """
    nx, ny = dims
    lx, ly = extents
    if nx < 2 or ny < 1:
        raise ConfigError(f"surface dims must be at least (2, 1), got {dims}")
    if lx <= 0 or ly <= 0:
        raise ConfigError(f"surface extents must be positive, got {extents}")
    if x_period is None:
        x_period = lx
    use_seed = spec.seed if seed is None else seed
    rng = np.random.default_rng(use_seed)

    k_lo = 2.0 * np.pi / spec.lambda_max
    k_hi = 2.0 * np.pi / spec.lambda_min
    n = spec.num_modes

    # uniform-by-area radii in the annulus, isotropic directions
    u = rng.uniform(size=n)
    k_mag = np.sqrt(k_lo ** 2 + u * (k_hi ** 2 - k_lo ** 2))
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    gauss = rng.standard_normal(n)
    phase = rng.uniform(0.0, np.pi, size=n)

    dk = 2.0 * np.pi / x_period
    kx = np.round(k_mag * np.cos(theta) / dk) * dk
    ky = k_mag * np.sin(theta)
    # snapping can push |k| below the annulus for long-wavelength modes;
    # clamp the spectral weight there so no single mode blows up
    k_eff = np.maximum(np.hypot(kx, ky), k_lo)
    amplitude = gauss * k_eff ** (-(1.0 + spec.hurst))
    modes = ModeSet(kx=kx, ky=ky, amplitude=amplitude, phase=phase)

    xs = np.arange(nx) * (lx / nx)
    ys = np.arange(ny) * (ly / ny) if ny > 1 else np.zeros(1)
    # h = cos(kx x) @ [a cos(ky y + U)] - sin(kx x) @ [a sin(ky y + U)],
    # two real matmuls instead of a mode loop
    ax = np.outer(xs, kx)
    by = np.outer(ky, ys) + phase[:, None]
    raw = np.cos(ax) @ (amplitude[:, None] * np.cos(by)) \
        - np.sin(ax) @ (amplitude[:, None] * np.sin(by))

    raw -= raw.mean()
    raw_rms = np.sqrt(np.mean(raw ** 2))
    if spec.rms == 0.0 or raw_rms == 0.0:
        heights = np.full((nx, ny), spec.mean_height)
    else:
        heights = spec.mean_height + (spec.rms / raw_rms) * raw
    return SurfaceField(heights=heights, dx=lx / nx, dy=ly / ny,
                        mean_height=spec.mean_height, rms=spec.rms,
                        hurst=spec.hurst, seed=use_seed, modes=modes)


def step_surface(height_step: float,
                 dims: tuple[int, int],
                 extents: tuple[float, float],
                 x_step: float | None = None) -> SurfaceField:
    """Hand-built terrace: h = 0 for x < x_step, ``height_step`` beyond.

    Used for the monolayer-step interference oracle; x_step defaults to
    the middle of the cell.
    """
    nx, ny = dims
    lx, ly = extents
    if x_step is None:
        x_step = 0.5 * lx
    xs = np.arange(nx) * (lx / nx)
    heights = np.where(xs >= x_step, height_step, 0.0)[:, None] \
        * np.ones((1, ny))
    return SurfaceField(heights=heights, dx=lx / nx, dy=ly / ny,
                        mean_height=float(heights.mean()),
                        rms=float(np.sqrt(np.mean((heights - heights.mean()) ** 2))),
                        hurst=0.0, seed=0)


def sample_rms(surface: SurfaceField) -> float:
    """Root-mean-square height about the sample mean."""
    h = surface.heights
    return float(np.sqrt(np.mean((h - h.mean()) ** 2)))


def radial_psd(surface: SurfaceField,
               num_bins: int = 24,
               min_count: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Radially averaged periodogram of the height field.

    Returns (k, S) with k in rad/nm and S the mean squared spectral
    amplitude per annular bin.  Bins are log-spaced between the lowest
    nonzero grid wavenumber and the axis Nyquist limit; bins with fewer
    than ``min_count`` grid points are merged into their neighbor so that
    every reported point is a meaningful average.
    """
    h = surface.heights - surface.heights.mean()
    nx, ny = h.shape
    spec2 = np.abs(np.fft.fft2(h)) ** 2 * (surface.dx * surface.dy) / (nx * ny)
    kxg = 2.0 * np.pi * np.fft.fftfreq(nx, d=surface.dx)
    kyg = 2.0 * np.pi * np.fft.fftfreq(ny, d=surface.dy)
    kk = np.hypot(kxg[:, None], kyg[None, :]).ravel()
    pp = spec2.ravel()

    k_nyq = min(np.pi / surface.dx, np.pi / surface.dy)
    k_min = min(abs(kxg[1]) if nx > 1 else k_nyq,
                abs(kyg[1]) if ny > 1 else k_nyq)
    keep = (kk >= 0.5 * k_min) & (kk <= k_nyq)
    kk, pp = kk[keep], pp[keep]
    edges = np.geomspace(0.5 * k_min, k_nyq, num_bins + 1)
    idx = np.clip(np.searchsorted(edges, kk, side="right") - 1, 0, num_bins - 1)

    ks, ps = [], []
    acc_k, acc_p, acc_n = [], 0.0, 0
    for b in range(num_bins):
        sel = idx == b
        acc_k.extend(kk[sel])
        acc_p += pp[sel].sum()
        acc_n += int(sel.sum())
        if acc_n >= min_count:
            ks.append(np.exp(np.mean(np.log(acc_k))))
            ps.append(acc_p / acc_n)
            acc_k, acc_p, acc_n = [], 0.0, 0
    return np.asarray(ks), np.asarray(ps)


def fit_hurst(k: np.ndarray, psd: np.ndarray,
              band: tuple[float, float]) -> tuple[float, float]:
    """Least-squares log-log slope of the PSD over ``band``.

    Returns (hurst, slope); for a self-affine surface slope = -2*(1+H).
    """
    k = np.asarray(k, dtype=float)
    psd = np.asarray(psd, dtype=float)
    sel = (k >= band[0]) & (k <= band[1]) & (psd > 0)
    if sel.sum() < 3:
        raise ConfigError(
            f"PSD fit band {band} contains only {int(sel.sum())} points")
    slope, _ = np.polyfit(np.log(k[sel]), np.log(psd[sel]), 1)
    return (-slope / 2.0 - 1.0, float(slope))


def sector_powers(surface: SurfaceField,
                  num_sectors: int = 8,
                  band: tuple[float, float] | None = None) -> np.ndarray:
    """Mean periodogram power per angular sector (isotropy diagnostic).

    Opposite wavevectors carry identical power for a real field, so angles
    are folded onto [0, pi).
    """
    h = surface.heights - surface.heights.mean()
    nx, ny = h.shape
    spec2 = np.abs(np.fft.fft2(h)) ** 2 * (surface.dx * surface.dy) / (nx * ny)
    kxg = 2.0 * np.pi * np.fft.fftfreq(nx, d=surface.dx)
    kyg = 2.0 * np.pi * np.fft.fftfreq(ny, d=surface.dy)
    kk = np.hypot(kxg[:, None], kyg[None, :])
    ang = np.mod(np.arctan2(kyg[None, :], kxg[:, None]), np.pi)
    if band is None:
        band = (2.0 * abs(kxg[1]), min(np.pi / surface.dx, np.pi / surface.dy))
    sel = (kk >= band[0]) & (kk <= band[1])
    sector = np.minimum((ang[sel] / np.pi * num_sectors).astype(int),
                        num_sectors - 1)
    out = np.zeros(num_sectors)
    for s in range(num_sectors):
        vals = spec2[sel][sector == s]
        out[s] = vals.mean() if vals.size else 0.0
    return out
