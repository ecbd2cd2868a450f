"""B-spline curve representation and functional PCA in coefficient space.

Curves live on the normalized domain [0,1]. All inner products are true L2
inner products: the basis is not orthonormal, so the Gram matrix enters
every projection. The eigenproblem is solved in the metric-corrected
coordinates Y = (X - mean) @ L with G = L L^T, which makes ordinary PCA on Y
equivalent to functional PCA on the curves.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular

MODEL_FORMAT_VERSION = 1

DEFAULT_N_BASIS = 202
DEFAULT_ORDER = 4
DEFAULT_LAMBDA = 1e-8
DEFAULT_GRID_POINTS = 600


@dataclass(frozen=True, eq=False)
class BSplineBasis:
    """B-spline system on [0,1]: order = degree + 1, knots with order-fold endpoints."""

    order: int
    n_basis: int
    knots: np.ndarray

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=np.float64)
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @property
    def degree(self) -> int:
        return self.order - 1

    @property
    def breakpoints(self) -> np.ndarray:
        """Distinct span boundaries, endpoints included."""
        return np.unique(self.knots)


def same_basis(a: BSplineBasis, b: BSplineBasis) -> bool:
    return a.order == b.order and a.n_basis == b.n_basis and np.array_equal(a.knots, b.knots)


def build_basis(n_basis: int = DEFAULT_N_BASIS, order: int = DEFAULT_ORDER) -> BSplineBasis:
    """Equally spaced interior knots on [0,1] with order-fold endpoint knots.

    The count convention is n_basis = order + number of interior knots, so
    (202, 4) places 198 interior knots.
    """
    if order < 2:
        raise ValueError("order must be at least 2")
    if n_basis < order:
        raise ValueError(f"n_basis ({n_basis}) must be at least order ({order})")
    n_interior = n_basis - order
    breaks = np.linspace(0.0, 1.0, n_interior + 2)
    knots = np.concatenate([np.zeros(order), breaks[1:-1], np.ones(order)])
    return BSplineBasis(order=order, n_basis=n_basis, knots=knots)


@dataclass(frozen=True, eq=False)
class FunctionalCurve:
    basis: BSplineBasis
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=np.float64)
        if c.shape != (self.basis.n_basis,):
            raise ValueError(
                f"coefficient vector of length {c.shape} does not match n_basis {self.basis.n_basis}"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    def __call__(self, t) -> np.ndarray:
        spl = BSpline(self.basis.knots, self.coefficients, self.basis.degree, extrapolate=False)
        return spl(np.asarray(t, dtype=np.float64))


@dataclass(frozen=True)
class CurveLabel:
    """Identity of one training curve: which utterance, by whom, under what condition."""

    curve_id: str
    speaker: str
    group: str
    condition: str


@dataclass(frozen=True, eq=False)
class ScoreVector:
    values: np.ndarray
    curve_id: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("scores must be a 1-D vector")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


def design_matrix(basis: BSplineBasis, t: np.ndarray) -> np.ndarray:
    """Dense matrix of basis values, rows indexed by evaluation points."""
    t = np.asarray(t, dtype=np.float64)
    return BSpline.design_matrix(t, basis.knots, basis.degree).toarray()


def _deriv2_design(basis: BSplineBasis, t: np.ndarray) -> np.ndarray:
    spl = BSpline(basis.knots, np.eye(basis.n_basis), basis.degree)
    return spl.derivative(2)(np.asarray(t, dtype=np.float64))


def _quadrature_nodes(basis: BSplineBasis):
    """Gauss-Legendre nodes/weights over every knot span, (order+1) per span.

    Exact for polynomials up to degree 2*order+1, which covers products of
    basis functions (degree 2*(order-1)) and of their second derivatives.
    """
    gx, gw = np.polynomial.legendre.leggauss(basis.order + 1)
    breaks = basis.breakpoints
    lo, hi = breaks[:-1], breaks[1:]
    half = 0.5 * (hi - lo)
    nodes = (half[:, None] * (gx[None, :] + 1.0) + lo[:, None]).ravel()
    weights = (half[:, None] * gw[None, :]).ravel()
    return nodes, weights


def gram_matrix(basis: BSplineBasis) -> np.ndarray:
    """G[i,j] = integral of phi_i * phi_j over [0,1], exact by quadrature."""
    nodes, weights = _quadrature_nodes(basis)
    d = design_matrix(basis, nodes)
    g = d.T @ (weights[:, None] * d)
    return 0.5 * (g + g.T)


def penalty_matrix(basis: BSplineBasis) -> np.ndarray:
    """P[i,j] = integral of phi_i'' * phi_j''; null space is the affine curves."""
    if basis.order < 3:
        raise ValueError("second-derivative penalty needs order >= 3")
    nodes, weights = _quadrature_nodes(basis)
    d2 = _deriv2_design(basis, nodes)
    p = d2.T @ (weights[:, None] * d2)
    return 0.5 * (p + p.T)


def uniform_resample(times: np.ndarray, values: np.ndarray, n_points: int) -> np.ndarray:
    """Map an irregular time axis onto n_points equal steps of [0,1] by linear interpolation."""
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if times.size < 2:
        raise ValueError("need at least two samples to define a time span")
    span = times[-1] - times[0]
    if span <= 0:
        raise ValueError("times must span a positive interval")
    tn = (times - times[0]) / span
    return np.interp(np.linspace(0.0, 1.0, n_points), tn, values)


def smooth_curve(samples: np.ndarray, basis: BSplineBasis, lam: float = DEFAULT_LAMBDA) -> FunctionalCurve:
    """Penalized least-squares fit of uniformly sampled values on [0,1].

    Minimizes sum (y_k - f(t_k))^2 + lam * integral (f'')^2 with t_k the
    uniform grid k/(m-1). The normal matrix is solved by Cholesky; failure
    there means the sampling cannot support the basis.
    """
    y = np.asarray(samples, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("samples must be a 1-D array")
    if not np.all(np.isfinite(y)):
        raise ValueError("samples must be finite")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    m = y.size
    if m < basis.n_basis / 3:
        raise ValueError(
            f"{m} samples underdetermine a {basis.n_basis}-function basis; need at least n_basis/3"
        )
    t = np.linspace(0.0, 1.0, m)
    d = design_matrix(basis, t)
    a = d.T @ d + lam * penalty_matrix(basis)
    try:
        c = cho_solve(cho_factor(a), d.T @ y)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"singular normal matrix; degenerate sampling or basis: {exc}") from exc
    return FunctionalCurve(basis, c)


def sample_curve(curve: FunctionalCurve, n_points: int) -> np.ndarray:
    """Values f(k/(n_points-1)) for k = 0..n_points-1."""
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    return curve(np.linspace(0.0, 1.0, n_points))


@dataclass(frozen=True, eq=False)
class FpcaModel:
    """Functional PCA decomposition: mean curve, eigenfunctions, and the training record.

    components are orthonormal under the L2 inner product, not in raw
    coefficient space. gram caches the basis Gram matrix so projections skip
    the quadrature.
    """

    basis: BSplineBasis
    mean: FunctionalCurve
    components: tuple
    eigenvalues: np.ndarray
    variance_fraction: np.ndarray
    training_scores: np.ndarray
    labels: Optional[tuple]
    gram: np.ndarray

    @property
    def n_components(self) -> int:
        return len(self.components)

    def component_matrix(self) -> np.ndarray:
        """Coefficients of the eigenfunctions, one column per component."""
        return np.column_stack([c.coefficients for c in self.components])


def _fix_component_signs(b: np.ndarray, gram_ones: np.ndarray) -> np.ndarray:
    """Flip columns so each eigenfunction has nonnegative integral over [0,1].

    Since the basis is a partition of unity, integral(PC_i) = b_i . (G @ 1).
    Near-zero integrals fall back to the first nonzero coefficient.
    """
    b = b.copy()
    for j in range(b.shape[1]):
        integral = float(b[:, j] @ gram_ones)
        if abs(integral) > 1e-10:
            if integral < 0:
                b[:, j] = -b[:, j]
            continue
        nz = np.nonzero(np.abs(b[:, j]) > 1e-12)[0]
        if nz.size and b[nz[0], j] < 0:
            b[:, j] = -b[:, j]
    return b


def fpca_fit(curves: Sequence[FunctionalCurve], labels: Optional[Sequence[CurveLabel]] = None) -> FpcaModel:
    """Fit functional PCA over curves sharing one basis.

    The coefficient covariance C is transformed to L^T C L (G = L L^T); its
    symmetric eigendecomposition gives eigenfunctions B = L^{-T} U that are
    orthonormal under G. Eigenvalues equal the per-component variance of the
    training scores (ddof 1). Components with index >= n_curves - 1 carry no
    variance and are dropped.
    """
    curves = list(curves)
    if len(curves) < 2:
        raise ValueError("functional PCA needs at least 2 curves")
    basis = curves[0].basis
    for k, c in enumerate(curves[1:], start=1):
        if not same_basis(c.basis, basis):
            raise ValueError(f"curve {k} is on a different basis than curve 0")
    if labels is not None:
        labels = tuple(labels)
        if len(labels) != len(curves):
            raise ValueError("one label per curve required")

    x = np.stack([c.coefficients for c in curves])
    n_curves = x.shape[0]
    mean_c = x.mean(axis=0)
    xc = x - mean_c

    g = gram_matrix(basis)
    l = cholesky(g, lower=True)
    y = xc @ l
    cov = (y.T @ y) / (n_curves - 1)
    w, u = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    w = np.maximum(w[order], 0.0)
    u = u[:, order]

    n_keep = min(n_curves - 1, basis.n_basis)
    b = solve_triangular(l, u[:, :n_keep], trans="T", lower=True)
    b = _fix_component_signs(b, g @ np.ones(basis.n_basis))

    total = float(np.sum(w))
    if total <= 0:
        raise ValueError("zero total variance; curves are all identical")
    eigenvalues = w[:n_keep]
    variance_fraction = eigenvalues / total
    scores = xc @ (g @ b)

    components = tuple(FunctionalCurve(basis, b[:, j]) for j in range(n_keep))
    return FpcaModel(
        basis=basis,
        mean=FunctionalCurve(basis, mean_c),
        components=components,
        eigenvalues=eigenvalues,
        variance_fraction=variance_fraction,
        training_scores=scores,
        labels=labels,
        gram=g,
    )


def fpca_project(curve: FunctionalCurve, model: FpcaModel, curve_id: str = "") -> ScoreVector:
    """Scores s_i = <curve - mean, PC_i> under the L2 inner product."""
    if not same_basis(curve.basis, model.basis):
        raise ValueError("curve basis does not match model basis")
    centered = curve.coefficients - model.mean.coefficients
    values = (model.gram @ centered) @ model.component_matrix()
    return ScoreVector(values=values, curve_id=curve_id)


def reconstruct(model: FpcaModel, scores: ScoreVector, n: int) -> FunctionalCurve:
    """Eq.-style synthesis: mean + sum_{i<n} s_i * PC_i, in coefficient space."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n > model.n_components:
        raise ValueError(f"n = {n} exceeds the {model.n_components} available components")
    if n > len(scores):
        raise ValueError(f"n = {n} exceeds the {len(scores)} provided scores")
    c = model.mean.coefficients.copy()
    if n:
        c = c + model.component_matrix()[:, :n] @ scores.values[:n]
    return FunctionalCurve(model.basis, c)


def save_model(path, model: FpcaModel) -> None:
    """Serialize to JSON. The Gram matrix is recomputed on load, not stored."""
    payload = {
        "version": MODEL_FORMAT_VERSION,
        "basis": {"n_basis": model.basis.n_basis, "order": model.basis.order},
        "mean": model.mean.coefficients.tolist(),
        "components": [c.coefficients.tolist() for c in model.components],
        "eigenvalues": model.eigenvalues.tolist(),
        "variance_fraction": model.variance_fraction.tolist(),
        "training_scores": model.training_scores.tolist(),
        "labels": None
        if model.labels is None
        else [
            {"curve_id": l.curve_id, "speaker": l.speaker, "group": l.group, "condition": l.condition}
            for l in model.labels
        ],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path) -> FpcaModel:
    with open(path) as fh:
        payload = json.load(fh)
    version = payload.get("version")
    if version != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model file version: {version!r}")
    basis = build_basis(payload["basis"]["n_basis"], payload["basis"]["order"])
    labels = payload["labels"]
    if labels is not None:
        labels = tuple(
            CurveLabel(
                curve_id=l["curve_id"], speaker=l["speaker"], group=l["group"], condition=l["condition"]
            )
            for l in labels
        )
    components = tuple(FunctionalCurve(basis, np.asarray(c)) for c in payload["components"])
    return FpcaModel(
        basis=basis,
        mean=FunctionalCurve(basis, np.asarray(payload["mean"])),
        components=components,
        eigenvalues=np.asarray(payload["eigenvalues"], dtype=np.float64),
        variance_fraction=np.asarray(payload["variance_fraction"], dtype=np.float64),
        training_scores=np.asarray(payload["training_scores"], dtype=np.float64),
        labels=labels,
        gram=gram_matrix(basis),
    )
