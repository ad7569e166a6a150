"""Seeded synthetic dataset generator with a planted, recoverable label rule.

The generator reproduces the source data's statistical profile (feature
means, standard deviations, and maxima) and its 97.39/2.61 class imbalance.
Labels follow a planted rule -- non-residential iff area_sqft > T_a or
ht > T_h -- with an empty margin band around each threshold, so a perfect
classifier exists and serves as the verification oracle for training tests.

Draws use jittered stratified quantiles (one stratum per sample, permuted),
which pins empirical moments to the target distribution far more tightly
than iid sampling, keeping the heavy-tailed area column inside the profile
tolerance at any seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .errors import InfeasibleConfig, SceneOverflow
from .features import SQFT_PER_SQM, AttributeRow, AttributeTable
from .geodata import DemGrid, FootprintRecord


@dataclass(frozen=True)
class FeatureProfile:
    mean: float
    std: float
    max: float


# Statistical profile of the source attribute table (see README).
DEFAULT_PROFILE: dict[str, FeatureProfile] = {
    "zonal_mean": FeatureProfile(25.2176, 3.3335, 78.7562),
    "floor": FeatureProfile(8.4058, 1.1111, 26.2520),
    "area_sqft": FeatureProfile(1552.0230, 4037.1331, 191268.2879),
    "area_sqm": FeatureProfile(144.1876, 375.0619, 17769.4054),
    "nodes": FeatureProfile(5.1131, 3.5721, 106.0),
    "ht": FeatureProfile(7.7176, 3.3335, 61.2562),
}

ROOF_COLORS = ("grey", "red", "blue", "green")
_RES_TYPES = ("apartment", "house", "bungalow")
_NONRES_TYPES = ("office", "school", "mall", "church")

MIN_HT = 0.5  # meters; keeps every building above ground level


@dataclass(frozen=True)
class PlantedRule:
    """Thresholds of the label rule: non-residential iff either exceeds."""

    area_sqft_threshold: float
    ht_threshold: float

    def apply(self, area_sqft: np.ndarray, ht: np.ndarray) -> np.ndarray:
        """Labels under the rule: 1 = residential, 0 = non-residential."""
        nonres = (area_sqft > self.area_sqft_threshold) | (ht > self.ht_threshold)
        return (~nonres).astype(int)


@dataclass
class SceneConfig:
    buildings: int = 12
    ncols: int = 120
    nrows: int = 120
    cellsize: float = 1.0
    xll: float = 0.0
    yll: float = 0.0
    gap: int = 2          # empty cells between buildings
    min_side: int = 2     # building side, in cells
    max_side: int = 10
    heights: list[float] | None = None  # override sampled building heights


@dataclass
class SynthConfig:
    n: int = 15999
    minority_fraction: float = 0.0261
    seed: int = 0
    noise_rate: float = 0.0
    profile: dict[str, FeatureProfile] = field(
        default_factory=lambda: dict(DEFAULT_PROFILE)
    )
    rule: PlantedRule | None = None   # calibrated from the data when None
    margin_frac: float = 0.15         # majority-side margin as a fraction of feature std
    minority_clearance: float = 6.0   # minority-side margin, in units of margin_frac
    nodes_cap: float = 30.0           # node counts above this are not generated
    ground_elev: float = 17.5
    floor_height: float = 3.0
    sqft_per_sqm: float = SQFT_PER_SQM
    scene: SceneConfig = field(default_factory=SceneConfig)


@dataclass
class SynthResult:
    table: AttributeTable
    oracle_labels: np.ndarray  # planted-rule labels before noise
    rule: PlantedRule


@dataclass
class SceneResult:
    grid: DemGrid
    footprints: list[FootprintRecord]
    table: AttributeTable
    oracle_labels: np.ndarray
    rule: PlantedRule


# --- truncated distribution machinery ------------------------------------------


class TruncNormal:
    """Normal(mu, sigma) restricted to [lo, hi], parametrized by quantile."""

    def __init__(self, mu: float, sigma: float, lo: float, hi: float):
        self.mu, self.sigma, self.lo, self.hi = mu, sigma, lo, hi
        self._phi_lo = stats.norm.cdf((lo - mu) / sigma)
        self._phi_hi = stats.norm.cdf((hi - mu) / sigma)

    def ppf(self, q):
        p = self._phi_lo + np.asarray(q) * (self._phi_hi - self._phi_lo)
        return self.mu + self.sigma * stats.norm.ppf(p)

    def cdf(self, x):
        p = stats.norm.cdf((np.asarray(x) - self.mu) / self.sigma)
        return (p - self._phi_lo) / (self._phi_hi - self._phi_lo)


class TruncLogNormal:
    """exp(Normal(mu, sigma)) truncated above at ``upper``."""

    def __init__(self, mu: float, sigma: float, upper: float):
        self.mu, self.sigma, self.upper = mu, sigma, upper
        self._phi_top = stats.norm.cdf((math.log(upper) - mu) / sigma)

    def ppf(self, q):
        return np.exp(self.mu + self.sigma * stats.norm.ppf(np.asarray(q) * self._phi_top))

    def cdf(self, x):
        return stats.norm.cdf((np.log(np.asarray(x)) - self.mu) / self.sigma) / self._phi_top

    def moment(self, k: int) -> float:
        # log-space evaluation: the untruncated factor and the tail cdf can
        # individually overflow/underflow while the product stays modest
        z_top = (math.log(self.upper) - self.mu) / self.sigma
        log_m = (
            k * self.mu + 0.5 * k * k * self.sigma**2
            + float(stats.norm.logcdf(z_top - k * self.sigma))
            - float(stats.norm.logcdf(z_top))
        )
        return math.exp(log_m)


def _solve_truncnorm(mean: float, std: float, lo: float, hi: float) -> TruncNormal:
    """Normal parameters whose [lo, hi]-truncation matches the target moments."""

    def residual(p):
        mu, log_sigma = p
        sigma = math.exp(log_sigma)
        a, b = (lo - mu) / sigma, (hi - mu) / sigma
        m, v = stats.truncnorm.stats(a, b, loc=mu, scale=sigma, moments="mv")
        return [float(m) - mean, math.sqrt(float(v)) - std]

    sol, _, ok, msg = optimize.fsolve(
        residual, [mean, math.log(std)], full_output=True
    )
    if ok != 1 or max(abs(r) for r in residual(sol)) > 1e-6 * max(1.0, std):
        raise InfeasibleConfig(f"cannot match truncated-normal profile: {msg}")
    return TruncNormal(sol[0], math.exp(sol[1]), lo, hi)


def _solve_trunclognorm(mean: float, std: float, upper: float) -> TruncLogNormal:
    """Lognormal parameters whose upper truncation matches the target moments."""
    m2_target = std * std + mean * mean
    sigma0_sq = math.log(1.0 + (std / mean) ** 2)
    init = [math.log(mean) - sigma0_sq / 2.0, math.log(math.sqrt(sigma0_sq))]

    def residual(p):
        mu, log_sigma = p
        dist = TruncLogNormal(mu, math.exp(log_sigma), upper)
        m1 = dist.moment(1)
        m2 = dist.moment(2)
        return [m1 - mean, (m2 - m1 * m1) - (m2_target - mean * mean)]

    sol, _, ok, msg = optimize.fsolve(residual, init, full_output=True)
    res = residual(sol)
    if ok != 1 or abs(res[0]) > 1e-6 * mean or abs(res[1]) > 1e-6 * std * std:
        raise InfeasibleConfig(f"cannot match truncated-lognormal profile: {msg}")
    return TruncLogNormal(sol[0], math.exp(sol[1]), upper)


def _stratified_quantiles(rng: np.random.Generator, count: int) -> np.ndarray:
    """One jittered quantile per stratum of [0, 1), in random order."""
    if count == 0:
        return np.empty(0)
    return rng.permutation((np.arange(count) + rng.random(count)) / count)


def _carve_band(values: np.ndarray, eligible: np.ndarray, t: float,
                d_lo: float, d_hi: float) -> None:
    """Empty the (t - d_lo, t + d_hi) band of ``values`` in place.

    Eligible rows inside the band move outward: those at or below t move
    down by d_lo, those above t move up by d_hi. Only in-band rows move,
    so the marginal distribution changes by at most the band mass times
    the shift.
    """
    side_lo = eligible & (values > t - d_lo) & (values <= t)
    values[side_lo] -= d_lo
    side_hi = eligible & (values > t) & (values < t + d_hi)
    values[side_hi] += d_hi


# --- dataset generation ---------------------------------------------------------


def _validate(config: SynthConfig) -> int:
    if config.n < 2:
        raise InfeasibleConfig(f"n must be >= 2, got {config.n}")
    if not 0.0 < config.minority_fraction < 0.5:
        raise InfeasibleConfig(
            f"minority_fraction must be in (0, 0.5), got {config.minority_fraction}"
        )
    if not 0.0 <= config.noise_rate < 0.5:
        raise InfeasibleConfig(f"noise_rate must be in [0, 0.5), got {config.noise_rate}")
    if config.margin_frac < 0:
        raise InfeasibleConfig("margin_frac must be >= 0")
    minority = int(math.floor(config.n * config.minority_fraction))
    if minority < 1:
        raise InfeasibleConfig(
            f"n={config.n} at fraction {config.minority_fraction} yields no minority rows"
        )
    return minority


def _base_distributions(config: SynthConfig) -> tuple[TruncNormal, TruncLogNormal, TruncLogNormal]:
    ht_prof = config.profile["ht"]
    area_prof = config.profile["area_sqm"]
    nodes_prof = config.profile["nodes"]
    ht_dist = _solve_truncnorm(ht_prof.mean, ht_prof.std, MIN_HT, ht_prof.max)
    area_dist = _solve_trunclognorm(area_prof.mean, area_prof.std, area_prof.max)
    # Node counts are irrelevant to the planted rule; capping their tail
    # (default well below the profile max) keeps standardized outliers in a
    # range the classifier interpolates over, while mean/std still match.
    nodes_dist = _solve_trunclognorm(
        nodes_prof.mean - 4.0,
        nodes_prof.std,
        min(nodes_prof.max, config.nodes_cap) - 4.0,
    )
    return ht_dist, area_dist, nodes_dist


def generate(config: SynthConfig) -> SynthResult:
    """Synthesize the attribute table plus the clean planted-rule labels.

    Exactly floor(n * minority_fraction) rows are non-residential before
    label noise; with noise_rate = 0 the table labels equal the oracle.
    """
    minority = _validate(config)
    n = config.n
    rng = np.random.default_rng(config.seed)
    ht_dist, area_dist, nodes_dist = _base_distributions(config)

    area = area_dist.ppf(_stratified_quantiles(rng, n))
    ht = ht_dist.ppf(_stratified_quantiles(rng, n))
    nodes = 4 + np.rint(nodes_dist.ppf(_stratified_quantiles(rng, n))).astype(int)

    if config.rule is not None:
        rule = config.rule
    else:
        rule = _calibrate_rule(area * config.sqft_per_sqm, ht, minority)
    t_area = rule.area_sqft_threshold / config.sqft_per_sqm
    t_ht = rule.ht_threshold

    # Push rows out of a band around each threshold so the classes are
    # separated by an empty corridor (wider on the minority side, where a
    # young decision boundary tends to wander). Only the in-band rows move.
    d_area = config.margin_frac * config.profile["area_sqm"].std
    d_ht = config.margin_frac * config.profile["ht"].std
    up = config.minority_clearance
    flagged_area = area > t_area
    _carve_band(area, np.ones(n, dtype=bool), t_area, d_area, up * d_area)
    _carve_band(ht, ~flagged_area, t_ht, d_ht, up * d_ht)
    # A smooth boundary rounds the corner of the residential region, so
    # majority rows close to BOTH thresholds also need clearing: push them
    # down in height, out of the corner zone.
    corner = (
        ~flagged_area & (ht <= t_ht)
        & (area > t_area - up * d_area) & (ht > t_ht - up * d_ht)
    )
    ht[corner] -= up * d_ht

    res_clean = rule.apply(area * config.sqft_per_sqm, ht)
    if config.rule is None and int((res_clean == 0).sum()) != minority:
        raise InfeasibleConfig("cannot realize exact class counts (tied values)")

    flips = rng.random(n) < config.noise_rate
    res_noisy = np.where(flips, 1 - res_clean, res_clean)

    zonal_std = np.abs(rng.normal(0.0, 0.4, size=n))
    zonal_spread = rng.uniform(1.5, 3.0, size=n)
    roof = rng.integers(0, len(ROOF_COLORS), size=n)
    type_pick = rng.integers(0, 1 << 16, size=n)

    table = AttributeTable()
    for i in range(n):
        zonal_mean = ht[i] + config.ground_elev
        if res_noisy[i] == 1:
            build_type = _RES_TYPES[type_pick[i] % len(_RES_TYPES)]
        else:
            build_type = _NONRES_TYPES[type_pick[i] % len(_NONRES_TYPES)]
        table.rows.append(
            AttributeRow(
                uid=f"b{i:06d}",
                build_type=build_type,
                roof_color=ROOF_COLORS[roof[i]],
                zonal_mean=zonal_mean,
                zonal_max=zonal_mean + zonal_std[i] * zonal_spread[i],
                zonal_std=float(zonal_std[i]),
                floor=zonal_mean / config.floor_height,
                area_sqft=area[i] * config.sqft_per_sqm,
                area_sqm=float(area[i]),
                nodes=int(nodes[i]),
                res=int(res_noisy[i]),
                ht=float(ht[i]),
            )
        )
    return SynthResult(table=table, oracle_labels=res_clean, rule=rule)


# --- rasterized scene ------------------------------------------------------------


def _calibrate_rule(area_sqft: np.ndarray, ht: np.ndarray, minority: int) -> PlantedRule:
    """Order-statistic thresholds flagging exactly ``minority`` rows."""
    k_area = (minority + 1) // 2
    order_a = np.sort(area_sqft)[::-1]
    if k_area == 0:
        t_area = float(order_a[0]) + 1.0
    elif k_area >= area_sqft.size:
        raise InfeasibleConfig("minority count exceeds building count")
    else:
        t_area = float((order_a[k_area - 1] + order_a[k_area]) / 2.0)
    flagged = area_sqft > t_area
    k_ht = minority - int(flagged.sum())
    rest = np.sort(ht[~flagged])[::-1]
    if k_ht < 0 or k_ht > rest.size:
        raise InfeasibleConfig("cannot realize exact class counts")
    if k_ht == 0:
        t_ht = float(rest[0]) + 1.0 if rest.size else float(ht.max()) + 1.0
    elif k_ht == rest.size:
        raise InfeasibleConfig("cannot realize exact class counts")
    else:
        t_ht = float((rest[k_ht - 1] + rest[k_ht]) / 2.0)
    rule = PlantedRule(area_sqft_threshold=t_area, ht_threshold=t_ht)
    if int((rule.apply(area_sqft, ht) == 0).sum()) != minority:
        raise InfeasibleConfig("cannot realize exact class counts (tied values)")
    return rule


def rasterize_synthetic_scene(config: SynthConfig) -> SceneResult:
    """Lay out rectangular buildings on a flat DEM as elevation plateaus.

    Every building covers an exact cell-aligned rectangle, so extraction
    recovers its area exactly and its height to within the plateau value.
    """
    scene = config.scene
    rng = np.random.default_rng(config.seed)
    cs = scene.cellsize
    ground = config.ground_elev
    values = np.full((scene.nrows, scene.ncols), ground, dtype=np.float64)
    grid = DemGrid(
        ncols=scene.ncols, nrows=scene.nrows, xll=scene.xll, yll=scene.yll,
        cellsize=cs, nodata=-9999.0, values=values,
    )
    if scene.buildings == 0:
        return SceneResult(grid=grid, footprints=[], table=AttributeTable(),
                           oracle_labels=np.empty(0, dtype=int),
                           rule=PlantedRule(np.inf, np.inf))

    if scene.heights is not None:
        if len(scene.heights) != scene.buildings:
            raise InfeasibleConfig("heights override must list one value per building")
        heights = [float(h) for h in scene.heights]
    else:
        ht_prof = config.profile["ht"]
        ht_dist = _solve_truncnorm(ht_prof.mean, ht_prof.std, MIN_HT, ht_prof.max)
        heights = list(ht_dist.ppf(_stratified_quantiles(rng, scene.buildings)))

    dims = rng.integers(scene.min_side, scene.max_side + 1, size=(scene.buildings, 2))
    row0, col0 = scene.gap, scene.gap
    band_depth = 0
    placements = []
    for (w, h) in dims:
        if w > scene.ncols - 2 * scene.gap or h > scene.nrows - 2 * scene.gap:
            raise SceneOverflow(f"building footprint {w}x{h} cells exceeds scene extent")
        if col0 + w > scene.ncols - scene.gap:
            row0 += band_depth + scene.gap
            col0 = scene.gap
            band_depth = 0
        if row0 + h > scene.nrows - scene.gap:
            raise SceneOverflow(
                f"{scene.buildings} buildings do not fit a {scene.ncols}x{scene.nrows} scene"
            )
        placements.append((row0, col0, int(w), int(h)))
        col0 += w + scene.gap
        band_depth = max(band_depth, int(h))

    areas = np.array([w * h * cs * cs for (_, _, w, h) in placements])
    area_sqft = areas * config.sqft_per_sqm
    hts = np.array(heights)
    minority = int(math.floor(scene.buildings * config.minority_fraction))
    rule = config.rule or _calibrate_rule(area_sqft, hts, minority)
    labels = rule.apply(area_sqft, hts)

    footprints = []
    table = AttributeTable()
    roof = rng.integers(0, len(ROOF_COLORS), size=scene.buildings)
    type_pick = rng.integers(0, 1 << 16, size=scene.buildings)
    for i, (r0, c0, w, h) in enumerate(placements):
        values[r0:r0 + h, c0:c0 + w] = ground + heights[i]
        x0, x1 = scene.xll + c0 * cs, scene.xll + (c0 + w) * cs
        y1 = scene.yll + (scene.nrows - r0) * cs
        y0 = scene.yll + (scene.nrows - r0 - h) * cs
        ring = [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
        uid = f"s{i:04d}"
        build_type = (_RES_TYPES if labels[i] else _NONRES_TYPES)[
            type_pick[i] % (len(_RES_TYPES) if labels[i] else len(_NONRES_TYPES))
        ]
        roof_color = ROOF_COLORS[roof[i]]
        footprints.append(
            FootprintRecord(
                uid=uid,
                parts=[[ring]],
                attributes={
                    "UID": uid, "BuildType": build_type,
                    "RoofColor": roof_color, "res": int(labels[i]),
                },
                geometry_type="Polygon",
            )
        )
        zonal_mean = ground + heights[i]
        table.rows.append(
            AttributeRow(
                uid=uid, build_type=build_type, roof_color=roof_color,
                zonal_mean=zonal_mean, zonal_max=zonal_mean, zonal_std=0.0,
                floor=zonal_mean / config.floor_height,
                area_sqft=float(area_sqft[i]), area_sqm=float(areas[i]),
                nodes=4, res=int(labels[i]), ht=float(heights[i]),
            )
        )
    return SceneResult(grid=grid, footprints=footprints, table=table,
                       oracle_labels=labels, rule=rule)
