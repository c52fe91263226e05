"""Noisy generative processes and samplers.

A process mixes an informative region (mass ``alpha``, low label noise) with
an uninformative one (mass ``1 - alpha``, high noise). The latent draw z
decides whether a point keeps its true label or gets a fair coin flip:

    P[z = 1 | x] = 1/2 + lambda(x)   on the informative region
    P[z = 1 | x] = 1/2 - lambda(x)   on the uninformative region
    y = f_star(x) if z = 1 else y ~ Uniform{+1, -1}

Marginally, P[y = f_star(x) | x] = 3/4 + g_star(x) * lambda(x) / 2 where
g_star is +1 exactly on the informative region.

Region membership is recorded at generation time, never re-inferred, so
overlapping mixtures cannot corrupt the oracle tags.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import (
    Array,
    LabeledSample,
    NEGATIVE,
    OracleSample,
    POSITIVE,
    Region,
    labels_from_unit,
    rng_from_seed,
)

LAMBDA_TOL = 1e-12


def informative_mask(regions) -> Array:
    """Normalize region tags (Region, 'I'/'U', or booleans) to a bool array."""
    regions = list(regions) if not isinstance(regions, np.ndarray) else regions
    out = np.empty(len(regions), dtype=bool)
    for i, r in enumerate(regions):
        if isinstance(r, Region):
            out[i] = r is Region.INFORMATIVE
        elif isinstance(r, str):
            if r not in ("I", "U"):
                raise ValueError(f"region tag must be 'I' or 'U', got {r!r}")
            out[i] = r == "I"
        elif isinstance(r, (bool, np.bool_)):
            out[i] = bool(r)
        else:
            raise ValueError(f"unrecognized region tag {r!r}")
    return out


@dataclass(frozen=True)
class SampleBatch(Sequence):
    """Array-backed batch of oracle samples.

    Behaves as a sequence of :class:`OracleSample` (or plain
    :class:`LabeledSample` when the oracle columns are absent) while keeping
    everything vectorized for the risk and training code.
    """

    x: Array
    y: Array
    z: Array | None = None
    informative: Array | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValueError("batch features must be a nonempty (n, d) matrix")
        if not np.all(np.isfinite(x)):
            raise ValueError("batch features must be finite")
        y = np.asarray(self.y, dtype=int)
        if y.shape != (x.shape[0],) or not np.all(np.isin(y, (POSITIVE, NEGATIVE))):
            raise ValueError("batch labels must be (n,) of +1/-1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        if self.z is not None:
            z = np.asarray(self.z, dtype=int)
            if z.shape != y.shape or not np.all(np.isin(z, (POSITIVE, NEGATIVE))):
                raise ValueError("z column must be (n,) of +1/-1")
            object.__setattr__(self, "z", z)
        if self.informative is not None:
            inf = np.asarray(self.informative, dtype=bool)
            if inf.shape != y.shape:
                raise ValueError("region column must have one tag per sample")
            object.__setattr__(self, "informative", inf)

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def y_unit(self) -> Array:
        return (self.y == POSITIVE).astype(float)

    @property
    def g_star(self) -> Array:
        """Signed oracle selector labels (+1 informative), if tags exist."""
        if self.informative is None:
            raise ValueError("missing oracle")
        return np.where(self.informative, POSITIVE, NEGATIVE)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return SampleBatch(
                self.x[i],
                self.y[i],
                None if self.z is None else self.z[i],
                None if self.informative is None else self.informative[i],
            )
        sample = LabeledSample(self.x[i], int(self.y[i]))
        if self.informative is None:
            return sample
        region = Region.INFORMATIVE if self.informative[i] else Region.UNINFORMATIVE
        z = None if self.z is None else int(self.z[i])
        return OracleSample(sample=sample, z=z, region=region)

    def to_list(self) -> list:
        return [self[i] for i in range(len(self))]


# ---------------------------------------------------------------------------
# Process specifications
# ---------------------------------------------------------------------------

# A draw function maps (n, rng) -> (x, informative, lambda_values, f_star_labels).
DrawFn = Callable[[int, np.random.Generator], tuple[Array, Array, Array, Array]]


@dataclass(frozen=True)
class ProcessSpec:
    """Full description of one noisy generative process.

    ``draw`` owns the x-sampler and reports, per sample, the exact region
    tag, the local noise-gap value, and the true label. ``f_star`` and the
    optional ``region_fn`` evaluate on arbitrary points for processes whose
    geometry supports it. The experiments' default sets lambda(x) equal to
    its lower bound, so the lambda invariant is `lambda(x) >= lambda_bar`
    (equality allowed) with values capped at 1/2.
    """

    alpha: float
    lambda_bar: float
    draw: DrawFn
    f_star: Callable[[Array], Array]
    region_fn: Callable[[Array], Array] | None = None
    lambda_fn: Callable[[Array], Array] | None = None
    description: str = ""

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("invalid process spec: alpha must be in (0, 1)")
        if not 0.0 < self.lambda_bar <= 0.5:
            raise ValueError("invalid process spec: lambda_bar must be in (0, 0.5]")


def sample_process(spec: ProcessSpec, n: int, seed) -> SampleBatch:
    """Draw n oracle samples from the process.

    The call sequence on the generator is fixed (x draw, z draw, coin draw),
    so identical (spec, n, seed) triples give identical batches.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = rng_from_seed(seed)
    x, informative, lam, f_vals = spec.draw(n, rng)
    x = np.asarray(x, dtype=float)
    informative = np.asarray(informative, dtype=bool)
    lam = np.asarray(lam, dtype=float)
    f_vals = np.asarray(f_vals, dtype=int)
    if np.any(lam < spec.lambda_bar - LAMBDA_TOL) or np.any(lam > 0.5 + LAMBDA_TOL):
        raise ValueError("invalid process spec")
    if not np.all(np.isin(f_vals, (POSITIVE, NEGATIVE))):
        raise ValueError("invalid process spec")
    p_z1 = np.where(informative, 0.5 + lam, 0.5 - lam)
    z = np.where(rng.random(n) < p_z1, POSITIVE, NEGATIVE)
    coin = rng.integers(0, 2, size=n) * 2 - 1
    y = np.where(z == POSITIVE, f_vals, coin)
    return SampleBatch(x=x, y=y, z=z, informative=informative)


# ---------------------------------------------------------------------------
# Finite-support (exact oracle) specs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteSpec:
    """Finite-support process on which population risks are exact sums.

    Atoms are distinct feature vectors with positive masses summing to one.
    """

    x: Array            # (m, d) atom locations
    mass: Array         # (m,) probabilities
    informative: Array  # (m,) region tags
    lam: Array          # (m,) noise-gap values
    f_labels: Array     # (m,) true labels, +1/-1

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, np.newaxis]
        mass = np.asarray(self.mass, dtype=float)
        informative = np.asarray(self.informative, dtype=bool)
        lam = np.asarray(self.lam, dtype=float)
        f_labels = np.asarray(self.f_labels, dtype=int)
        m = x.shape[0]
        if m == 0:
            raise ValueError("invalid process spec: no atoms")
        for name, arr in (("mass", mass), ("informative", informative), ("lam", lam), ("f_labels", f_labels)):
            if arr.shape != (m,):
                raise ValueError(f"invalid process spec: {name} must have one entry per atom")
        if np.any(mass <= 0) or abs(mass.sum() - 1.0) > 1e-12:
            raise ValueError("invalid process spec: masses must be positive and sum to 1")
        if len({row.tobytes() for row in x}) != m:
            raise ValueError("invalid process spec: atoms must be distinct")
        if np.any(lam <= 0) or np.any(lam > 0.5 + LAMBDA_TOL):
            raise ValueError("invalid process spec: lambda values must be in (0, 0.5]")
        if not np.all(np.isin(f_labels, (POSITIVE, NEGATIVE))):
            raise ValueError("invalid process spec: f_labels must be +1/-1")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "mass", mass)
        object.__setattr__(self, "informative", informative)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "f_labels", f_labels)

    @property
    def n_atoms(self) -> int:
        return self.x.shape[0]

    @property
    def alpha(self) -> float:
        return float(self.mass[self.informative].sum())

    @property
    def lambda_bar(self) -> float:
        """Uniform lower bound on the noise gap; equals min over atoms."""
        return float(self.lam.min())

    @property
    def g_star(self) -> Array:
        return np.where(self.informative, POSITIVE, NEGATIVE)

    def atom_indices(self, x: Array) -> Array:
        """Map sampled points back to their atom index (exact match)."""
        lookup = {self.x[j].tobytes(): j for j in range(self.n_atoms)}
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, np.newaxis]
        try:
            return np.array([lookup[row.tobytes()] for row in x], dtype=int)
        except KeyError as exc:
            raise ValueError("point is not an atom of this spec") from exc

    def f_star(self, x: Array) -> Array:
        return self.f_labels[self.atom_indices(x)]

    def to_process_spec(self) -> ProcessSpec:
        spec = self

        def _draw(n: int, rng: np.random.Generator):
            idx = rng.choice(spec.n_atoms, size=n, p=spec.mass)
            return spec.x[idx], spec.informative[idx], spec.lam[idx], spec.f_labels[idx]

        alpha = min(max(self.alpha, np.finfo(float).tiny), 1.0 - 1e-15)
        return ProcessSpec(
            alpha=alpha,
            lambda_bar=self.lambda_bar,
            draw=_draw,
            f_star=self.f_star,
            region_fn=lambda x: self.informative[self.atom_indices(x)],
            lambda_fn=lambda x: self.lam[self.atom_indices(x)],
            description="discrete",
        )


def make_two_atom_spec(lam: float = 0.5) -> DiscreteSpec:
    """Smallest nontrivial spec: one clean atom, one noisy atom, mass 1/2 each."""
    return DiscreteSpec(
        x=np.array([[0.0], [1.0]]),
        mass=np.array([0.5, 0.5]),
        informative=np.array([True, False]),
        lam=np.array([lam, lam]),
        f_labels=np.array([POSITIVE, POSITIVE]),
    )


def make_threshold_discrete_spec(
    n_atoms: int = 100,
    alpha: float = 0.5,
    lambda_bar: float = 0.5,
    f_star_threshold: float = 0.45,
) -> DiscreteSpec:
    """Canonical 1-D instance: uniform atoms on [0, 1), informative left part.

    Atoms sit at the cell midpoints (i + 1/2) / n_atoms; the informative
    region is [0, alpha) and the true label is +1 iff x <= f_star_threshold.
    Both boundaries fall between atoms, so threshold hypothesis classes on a
    matching grid contain the exact oracles.
    """
    if n_atoms < 2:
        raise ValueError("need at least two atoms")
    xs = (np.arange(n_atoms) + 0.5) / n_atoms
    return DiscreteSpec(
        x=xs[:, np.newaxis],
        mass=np.full(n_atoms, 1.0 / n_atoms),
        informative=xs < alpha,
        lam=np.full(n_atoms, lambda_bar),
        f_labels=np.where(xs <= f_star_threshold, POSITIVE, NEGATIVE),
    )


def make_grid_discrete_spec(
    m_region: int = 10,
    m_label: int = 100,
    alpha: float = 0.4,
    lambda_bar: float = 0.3,
    f_star_threshold: float = 0.475,
) -> DiscreteSpec:
    """Two-axis instance where the label boundary crosses both regions.

    Coordinate 0 carries the region structure (informative iff x0 < alpha,
    so the oracle selector is a threshold on x0); coordinate 1 carries the
    label (+1 iff x1 <= f_star_threshold). Because every label-axis cell
    mixes informative and uninformative mass, noisy samples dilute a
    full-data fit of the label boundary while a selector-masked fit sees
    only the low-noise part; on the pure interval instance the two fits
    coincide.
    """
    if m_region < 2 or m_label < 2:
        raise ValueError("need at least two cells per axis")
    c0 = (np.arange(m_region) + 0.5) / m_region
    c1 = (np.arange(m_label) + 0.5) / m_label
    x0, x1 = np.meshgrid(c0, c1, indexing="ij")
    x = np.column_stack([x0.ravel(), x1.ravel()])
    m = m_region * m_label
    return DiscreteSpec(
        x=x,
        mass=np.full(m, 1.0 / m),
        informative=x[:, 0] < alpha,
        lam=np.full(m, lambda_bar),
        f_labels=np.where(x[:, 1] <= f_star_threshold, POSITIVE, NEGATIVE),
    )


def random_discrete_spec(
    rng,
    max_atoms: int = 12,
    lambda_bar_range: tuple[float, float] = (0.05, 0.5),
    dim: int = 1,
) -> DiscreteSpec:
    """Random small spec for property sweeps; lambda values stay >= the drawn bound."""
    rng = rng_from_seed(rng)
    m = int(rng.integers(2, max_atoms + 1))
    lambda_bar = float(rng.uniform(*lambda_bar_range))
    mass = rng.dirichlet(np.ones(m))
    mass = mass / mass.sum()
    informative = rng.integers(0, 2, size=m).astype(bool)
    # keep both regions nonempty so g_star is nontrivial
    if informative.all():
        informative[int(rng.integers(0, m))] = False
    elif not informative.any():
        informative[int(rng.integers(0, m))] = True
    lam = rng.uniform(lambda_bar, 0.5, size=m)
    x = np.arange(m, dtype=float)[:, np.newaxis] * np.ones(dim)
    return DiscreteSpec(
        x=x,
        mass=mass,
        informative=informative,
        lam=lam,
        f_labels=rng.choice([POSITIVE, NEGATIVE], size=m),
    )


# ---------------------------------------------------------------------------
# Gaussian mixture spec (2-D illustration instance)
# ---------------------------------------------------------------------------


def make_gaussian_mixture_spec(
    centers_informative,
    centers_uninformative,
    stddev: float,
    alpha: float,
    lambda_const: float,
    boundary: tuple[Array, float],
) -> ProcessSpec:
    """Isotropic Gaussian clusters per region with a linear true boundary.

    ``boundary`` is (w, b): the true label is +1 iff w.x + b > 0. Which
    mixture generated each point is recorded at sample time, so the region
    tag is exact even where clusters overlap.
    """
    ci = np.atleast_2d(np.asarray(centers_informative, dtype=float))
    cu = np.atleast_2d(np.asarray(centers_uninformative, dtype=float))
    if ci.size == 0 or cu.size == 0:
        raise ValueError("center lists must be nonempty")
    if ci.shape[1] != cu.shape[1]:
        raise ValueError("center groups must share a dimension")
    if stddev <= 0:
        raise ValueError("stddev must be positive")
    if not 0.0 < lambda_const <= 0.5:
        raise ValueError("lambda_const must be in (0, 0.5]")
    w, b = boundary
    w = np.asarray(w, dtype=float)
    if w.shape != (ci.shape[1],):
        raise ValueError("boundary weight vector must match the feature dimension")
    d = ci.shape[1]

    def _f_star(x: Array) -> Array:
        return np.where(x @ w + b > 0, POSITIVE, NEGATIVE)

    def _draw(n: int, rng: np.random.Generator):
        informative = rng.random(n) < alpha
        idx_i = rng.integers(0, ci.shape[0], size=n)
        idx_u = rng.integers(0, cu.shape[0], size=n)
        centers = np.where(informative[:, np.newaxis], ci[idx_i], cu[idx_u])
        x = centers + stddev * rng.standard_normal((n, d))
        lam = np.full(n, lambda_const)
        return x, informative, lam, _f_star(x)

    return ProcessSpec(
        alpha=alpha,
        lambda_bar=lambda_const,
        draw=_draw,
        f_star=_f_star,
        lambda_fn=lambda x: np.full(x.shape[0], lambda_const),
        description="gaussian_mixture",
    )


# ---------------------------------------------------------------------------
# Hard-instance spec on scaled basis vectors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LeCamSpec:
    """Parameters of the hard instance on scaled canonical basis vectors.

    Points are x = tau * e_j with |tau| <= 1. Coordinate 1 carries mass
    1 - epsilon / lambda_bar; the rest is spread uniformly over coordinates
    2..d. The selected band on each coordinate axis flips with sigma_j and
    the middle band alpha <= |tau| <= 1 - alpha always abstains.
    """

    d: int
    alpha: float
    lambda_bar: float
    epsilon: float
    sigma: tuple | None = None

    def __post_init__(self):
        if self.d < 2:
            raise ValueError("d must be at least 2")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if not 0.0 < self.lambda_bar <= 0.5:
            raise ValueError("lambda_bar must be in (0, 0.5]")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.epsilon > self.lambda_bar:
            raise ValueError("epsilon exceeds noise gap")
        if self.sigma is not None:
            sigma = tuple(int(s) for s in self.sigma)
            if len(sigma) != self.d or any(s not in (POSITIVE, NEGATIVE) for s in sigma):
                raise ValueError("sigma must be a +1/-1 vector of length d")
            object.__setattr__(self, "sigma", sigma)


def lecam_coordinate_weights(spec: LeCamSpec) -> Array:
    """Exact categorical weights of the coordinate index draw."""
    ratio = spec.epsilon / spec.lambda_bar
    weights = np.full(spec.d, ratio / (spec.d - 1))
    weights[0] = 1.0 - ratio
    return weights


def lecam_selector_values(x: Array, sigma, alpha: float) -> Array:
    """Sum of the three band indicator terms of the oracle selector.

    Evaluated term by term; points off every axis (the all-zero vector)
    get 0, which the sign adapter treats as abstain.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    sigma = np.asarray(sigma, dtype=float)
    hit = x != 0.0                      # (n, d); at most one true per row
    sigma_j = hit @ sigma               # sigma of the active coordinate, 0 if none
    on_axis = hit.any(axis=1).astype(float)
    norm = np.linalg.norm(x, axis=1)
    high = (norm >= 1.0 - alpha).astype(float)
    low = (norm <= alpha).astype(float)
    mid = ((alpha <= norm) & (norm <= 1.0 - alpha)).astype(float)
    return -high * sigma_j + low * sigma_j - mid * on_axis


def make_lecam_spec(params: LeCamSpec, seed=0) -> ProcessSpec:
    """Instantiate the hard-instance process; draws sigma from seed if unset."""
    if params.sigma is None:
        rng = rng_from_seed(seed)
        sigma = tuple(int(s) for s in rng.choice([POSITIVE, NEGATIVE], size=params.d))
        params = LeCamSpec(params.d, params.alpha, params.lambda_bar, params.epsilon, sigma)
    sigma = np.asarray(params.sigma, dtype=float)
    weights = lecam_coordinate_weights(params)

    def _f_star(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[np.newaxis, :]
        return 2 * (x.sum(axis=1) > 0).astype(int) - 1

    def _region(x: Array) -> Array:
        return lecam_selector_values(x, sigma, params.alpha) > 0

    def _draw(n: int, rng: np.random.Generator):
        j = rng.choice(params.d, size=n, p=weights)
        tau = rng.uniform(-1.0, 1.0, size=n)
        x = np.zeros((n, params.d))
        x[np.arange(n), j] = tau
        lam = np.full(n, params.lambda_bar)
        return x, _region(x), lam, _f_star(x)

    # selected mass per coordinate: the sigma-favored band alone; for
    # alpha > 1/2 the two bands overlap and the overlap cancels to abstain
    alpha_mass = float(min(params.alpha, 1.0 - params.alpha))
    return ProcessSpec(
        alpha=min(max(alpha_mass, 1e-12), 1 - 1e-12),
        lambda_bar=params.lambda_bar,
        draw=_draw,
        f_star=_f_star,
        region_fn=_region,
        description="lecam",
    )


# ---------------------------------------------------------------------------
# Semi-synthetic label corruption
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseInjection:
    """Uniform label corruption rates per region for integer class labels."""

    tau_informative: float
    tau_uninformative: float
    num_classes: int

    def __post_init__(self):
        if not 0.0 <= self.tau_informative < 1.0:
            raise ValueError("tau_informative must be in [0, 1)")
        if not 0.0 < self.tau_uninformative <= 1.0:
            raise ValueError("tau_uninformative must be in (0, 1]")
        if self.tau_informative >= self.tau_uninformative:
            raise ValueError("tau_informative must be smaller than tau_uninformative")
        if self.num_classes < 2:
            raise ValueError("num_classes must be at least 2")


def inject_class_noise(labels, regions, inj: NoiseInjection, seed) -> Array:
    """Corrupt class labels region-wise, drawing uniformly over the wrong classes.

    Exclusive replacement: a corrupted label always changes, so the tau rates
    equal the realized corruption rates in expectation.
    """
    labels = np.asarray(labels, dtype=int)
    if labels.ndim != 1:
        raise ValueError("labels must be a 1-D array of class indices")
    if np.any(labels < 0) or np.any(labels >= inj.num_classes):
        raise ValueError("labels must lie in [0, num_classes)")
    informative = informative_mask(regions)
    if informative.shape != labels.shape:
        raise ValueError("regions must have one tag per label")
    rng = rng_from_seed(seed)
    rate = np.where(informative, inj.tau_informative, inj.tau_uninformative)
    flip = rng.random(labels.shape[0]) < rate
    offsets = rng.integers(1, inj.num_classes, size=labels.shape[0])
    corrupted = (labels + offsets) % inj.num_classes
    return np.where(flip, corrupted, labels)


def lambda_bar_from_taus(tau_informative: float, tau_uninformative: float) -> float:
    """Noise-gap bound implied by a per-region corruption pair.

    Only pairs satisfying (0.9 - tau_I) / 1.8 == tau_U / 1.8 describe a single
    process of this family; anything else is rejected rather than averaged.
    """
    from_informative = (0.9 - tau_informative) / 1.8
    from_uninformative = tau_uninformative / 1.8
    if abs(from_informative - from_uninformative) > 1e-9:
        raise ValueError("tau pair does not define a single lambda_bar")
    return 0.5 * (from_informative + from_uninformative)


# ---------------------------------------------------------------------------
# CSV ingestion / emission
# ---------------------------------------------------------------------------

_LABEL_COL = "label"
_REGION_COL = "region"
_Z_COL = "z"


def load_feature_csv(path):
    """Read samples from a headered CSV file.

    Feature columns are everything except ``label`` and the optional
    ``region`` (I/U) and ``z`` (+1/-1) columns. Labels may use either the
    signed or the unit alphabet; {0, 1} files are mapped through the unit
    view. Returns a list of OracleSample when a region column is present,
    else a list of LabeledSample.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty CSV file") from None
        rows = list(reader)
    if _LABEL_COL not in header:
        raise ValueError("CSV must include a 'label' column")
    label_idx = header.index(_LABEL_COL)
    region_idx = header.index(_REGION_COL) if _REGION_COL in header else None
    z_idx = header.index(_Z_COL) if _Z_COL in header else None
    feat_idx = [i for i in range(len(header)) if i not in (label_idx, region_idx, z_idx)]
    if not feat_idx or not rows:
        raise ValueError("CSV must contain feature columns and at least one row")

    features = np.empty((len(rows), len(feat_idx)))
    raw_labels = []
    regions = []
    zs = []
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise ValueError(f"row {r + 2}: expected {len(header)} cells, got {len(row)}")
        for c, i in enumerate(feat_idx):
            try:
                features[r, c] = float(row[i])
            except ValueError:
                raise ValueError(
                    f"non-numeric feature cell at row {r + 2}, column {header[i]!r}"
                ) from None
        try:
            raw_labels.append(float(row[label_idx]))
        except ValueError:
            raise ValueError(f"non-numeric label at row {r + 2}") from None
        if region_idx is not None:
            tag = row[region_idx].strip()
            if tag not in ("I", "U"):
                raise ValueError(f"row {r + 2}: region must be I or U, got {tag!r}")
            regions.append(tag)
        if z_idx is not None:
            if row[z_idx].strip() not in ("1", "+1", "-1"):
                raise ValueError(f"row {r + 2}: z must be +1 or -1")
            zs.append(int(row[z_idx]))

    values = set(raw_labels)
    if values <= {0.0, 1.0}:
        y = labels_from_unit(np.asarray(raw_labels))
    elif values <= {-1.0, 1.0}:
        y = np.asarray(raw_labels, dtype=int)
    else:
        raise ValueError("mixed label alphabets: labels must all be in {0,1} or all in {-1,1}")

    if region_idx is None:
        return [LabeledSample(features[i], int(y[i])) for i in range(len(rows))]
    informative = informative_mask(regions)
    out = []
    for i in range(len(rows)):
        region = Region.INFORMATIVE if informative[i] else Region.UNINFORMATIVE
        z = zs[i] if z_idx is not None else None
        out.append(OracleSample(LabeledSample(features[i], int(y[i])), z, region))
    return out


def batch_from_samples(samples) -> SampleBatch:
    """Stack LabeledSample/OracleSample records into a SampleBatch."""
    if not samples:
        raise ValueError("no samples")
    if isinstance(samples[0], OracleSample):
        x = np.stack([s.sample.x for s in samples])
        y = np.array([s.sample.y for s in samples])
        informative = np.array([s.region is Region.INFORMATIVE for s in samples])
        zs = [s.z for s in samples]
        z = np.array(zs) if all(v is not None for v in zs) else None
        return SampleBatch(x=x, y=y, z=z, informative=informative)
    x = np.stack([s.x for s in samples])
    y = np.array([s.y for s in samples])
    return SampleBatch(x=x, y=y)


def save_feature_csv(path, batch: SampleBatch) -> None:
    """Write a batch using the same schema load_feature_csv reads."""
    header = [f"feat_{j}" for j in range(batch.dim)] + [_LABEL_COL]
    if batch.informative is not None:
        header.append(_REGION_COL)
    if batch.z is not None:
        header.append(_Z_COL)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(len(batch)):
            row = [repr(float(v)) for v in batch.x[i]] + [str(int(batch.y[i]))]
            if batch.informative is not None:
                row.append("I" if batch.informative[i] else "U")
            if batch.z is not None:
                row.append(str(int(batch.z[i])))
            writer.writerow(row)
