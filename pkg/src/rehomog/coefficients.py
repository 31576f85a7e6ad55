"""Two-scale coefficient catalog and the scale coupling delta(eps).

A coefficient is a matrix field ``a(y, z)``, 1-periodic in both arguments
on the cell ``[-1/2, 1/2]^d``. Fields are built by name from
:data:`CATALOG`; each entry ships its ellipticity constant ``mu`` and its
Lipschitz constant in ``y`` so :func:`verify_hypotheses` can check them.
"""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

TWO_PI = 2.0 * np.pi


def wrap(x):
    """Map coordinates to the periodicity cell [-1/2, 1/2)."""
    return x - np.floor(x + 0.5)


def _as_points(p, dim):
    p = np.asarray(p, dtype=float)
    if dim == 1 and (p.ndim == 0 or p.shape[-1] != 1):
        p = p[..., None]
    if p.shape[-1] != dim:
        raise ValueError(f"expected points with trailing dimension {dim}, got {p.shape}")
    return p


@dataclass(frozen=True)
class CoefficientField:
    """Immutable two-scale matrix field ``a(y, z)``."""

    name: str
    dim: int
    mu: float
    lipschitz_y: float
    symmetric: bool
    fn: Callable = field(repr=False, compare=False)
    params: dict = field(default_factory=dict, compare=False)
    transposed: bool = False

    def evaluate(self, y, z):
        """Return ``a(y mod 1, z mod 1)`` with shape ``(..., d, d)``.

        ``y`` and ``z`` are arrays of shape ``(..., d)``; in 1D plain arrays of
        coordinates are accepted as well.
        """
        y = wrap(_as_points(y, self.dim))
        z = wrap(_as_points(z, self.dim))
        y, z = np.broadcast_arrays(y, z)
        a = self.fn(y, z)
        if self.transposed:
            a = np.swapaxes(a, -1, -2)
        return a

    def transpose(self):
        """Field of transposed matrices (the adjoint coefficient)."""
        if self.symmetric:
            return self
        return CoefficientField(self.name, self.dim, self.mu, self.lipschitz_y,
                                self.symmetric, self.fn, self.params,
                                not self.transposed)

    @property
    def is_constant(self):
        return self.lipschitz_y == 0.0 and self.params.get("constant", False)


def _scalar(s, d):
    return s[..., None, None] * np.eye(d)


# --------------------------------------------------------------------------
# catalog


def constant(dim=1, c=1.0):
    c = float(c)
    return CoefficientField(
        "constant", dim, min(c, 1.0 / c), 0.0, True,
        lambda y, z: _scalar(np.full(y.shape[:-1], c), dim),
        {"c": c, "constant": True})


def constant_matrix(matrix=((2.0, 0.5), (-0.3, 1.5))):
    A = np.array(matrix, dtype=float)
    dim = A.shape[0]
    lam = np.linalg.eigvalsh(0.5 * (A + A.T)).min()
    mu = min(lam, 1.0 / np.linalg.norm(A, 2))
    return CoefficientField(
        "constant_matrix", dim, float(mu), 0.0, bool(np.allclose(A, A.T)),
        lambda y, z: np.broadcast_to(A, y.shape[:-1] + A.shape).copy(),
        {"matrix": A.tolist(), "constant": True})


def trig_product(dim=1):
    """(2 + cos 2pi y)(2 + cos 2pi z) in 1D; averaged-cosine analogue in 2D."""
    if dim == 1:
        def fn(y, z):
            return _scalar((2 + np.cos(TWO_PI * y[..., 0])) * (2 + np.cos(TWO_PI * z[..., 0])), 1)
        return CoefficientField("trig_product", 1, 1.0 / 9.0, 3 * TWO_PI, True, fn, {"dim": 1})

    def fn(y, z):
        ay = 2 + 0.5 * (np.cos(TWO_PI * y[..., 0]) + np.cos(TWO_PI * y[..., 1]))
        bz = 2 + 0.5 * (np.cos(TWO_PI * z[..., 0]) + np.cos(TWO_PI * z[..., 1]))
        return _scalar(ay * bz, 2)
    return CoefficientField("trig_product", 2, 1.0 / 9.0, 3 * np.sqrt(2) * np.pi, True, fn,
                            {"dim": 2})


def coupled_trig(amp=0.5, mod=0.4):
    """1D, non-separable: 2 + (amp + mod sin 2pi y) cos 2pi z."""
    lo, hi = 2 - amp - mod, 2 + amp + mod

    def fn(y, z):
        c = amp + mod * np.sin(TWO_PI * y[..., 0])
        return _scalar(2 + c * np.cos(TWO_PI * z[..., 0]), 1)
    return CoefficientField("coupled_trig", 1, min(lo, 1 / hi), mod * TWO_PI, True, fn,
                            {"amp": amp, "mod": mod})


def modulated_laminate(amp=0.5, mod1=0.2, mod2=0.2):
    """2D laminate in z_1 whose contrast is modulated in y:
    (2 + c(y) cos 2pi z_1) I with c(y) = amp + mod1 sin 2pi y_1 + mod2 cos 2pi y_2.
    """
    cmax = amp + mod1 + mod2

    def fn(y, z):
        c = amp + mod1 * np.sin(TWO_PI * y[..., 0]) + mod2 * np.cos(TWO_PI * y[..., 1])
        return _scalar(2 + c * np.cos(TWO_PI * z[..., 0]), 2)
    return CoefficientField("modulated_laminate", 2, min(2 - cmax, 1 / (2 + cmax)),
                            TWO_PI * np.hypot(mod1, mod2), True, fn,
                            {"amp": amp, "mod1": mod1, "mod2": mod2})


def laminate(dim=2):
    """(2 + cos 2pi z_1) I, no y dependence."""
    def fn(y, z):
        return _scalar(2 + np.cos(TWO_PI * z[..., 0]), dim)
    return CoefficientField("laminate", dim, 1.0 / 3.0, 0.0, True, fn, {"dim": dim})


def _smooth_square(t, sharp):
    return np.tanh(sharp * np.sin(TWO_PI * t)) / np.tanh(sharp)


def checkerboard(contrast=0.8, sharp=4.0):
    """Smoothed two-scale checkerboard, weakly modulated in y."""
    lo, hi = 2 - contrast, 2 + contrast

    def fn(y, z):
        cz = _smooth_square(z[..., 0], sharp) * _smooth_square(z[..., 1], sharp)
        wy = 0.75 + 0.25 * np.cos(TWO_PI * y[..., 0]) * np.cos(TWO_PI * y[..., 1])
        return _scalar(2 + contrast * cz * wy, 2)
    return CoefficientField("checkerboard", 2, min(lo, 1 / hi), 0.25 * contrast * TWO_PI, True,
                            fn, {"contrast": contrast, "sharp": sharp})


def nonsymmetric():
    """alpha(y,z) I + kappa(y,z) J with J the rotation by pi/2."""
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])

    def fn(y, z):
        alpha = (2 + 0.5 * np.cos(TWO_PI * z[..., 0])
                 + 0.3 * np.sin(TWO_PI * y[..., 0]) * np.cos(TWO_PI * z[..., 1]))
        kappa = 0.5 * np.sin(TWO_PI * z[..., 1]) * (1 + 0.5 * np.cos(TWO_PI * y[..., 0]))
        return _scalar(alpha, 2) + kappa[..., None, None] * J
    amax, kmax = 2.8, 0.75
    mu = min(1.2, 1.0 / np.hypot(amax, kmax))
    return CoefficientField("nonsymmetric", 2, mu, np.hypot(0.3, 0.25) * TWO_PI, False, fn, {})


CATALOG = {
    "constant": constant,
    "constant_matrix": constant_matrix,
    "trig_product": trig_product,
    "coupled_trig": coupled_trig,
    "laminate": laminate,
    "modulated_laminate": modulated_laminate,
    "checkerboard": checkerboard,
    "nonsymmetric": nonsymmetric,
}


def make_coefficient(name, **params):
    try:
        factory = CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown coefficient {name!r}; choose from {sorted(CATALOG)}") from None
    return factory(**params)


def evaluate(field, y, z):
    return field.evaluate(y, z)


# --------------------------------------------------------------------------
# hypothesis check


@dataclass
class HypothesisReport:
    mu_observed: float
    bound_observed: float
    cL_observed: float
    passed: bool
    witness: dict | None = None

    # alias for callers that expect a "pass" field
    @property
    def pass_(self):
        return self.passed


def verify_hypotheses(field, n_samples=1000, seed=0, slack=1e-12):
    """Monte-Carlo check of ellipticity, boundedness and y-Lipschitz bounds.

    ``mu_observed`` is the smallest observed eigenvalue of the symmetric part,
    ``bound_observed`` the largest observed operator norm. Violations are
    reported with a witness point, never raised.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    d = field.dim
    y = rng.uniform(-0.5, 0.5, (n_samples, d))
    z = rng.uniform(-0.5, 0.5, (n_samples, d))
    # half the partners are close (local slope), half anywhere in the cell
    step = rng.normal(size=(n_samples, d))
    step *= (10.0 ** rng.uniform(-4, -1, n_samples))[:, None]
    yp = np.where((np.arange(n_samples) % 2 == 0)[:, None], y + step,
                  rng.uniform(-0.5, 0.5, (n_samples, d)))

    a = field.evaluate(y, z)
    ap = field.evaluate(yp, z)
    eig = np.linalg.eigvalsh(0.5 * (a + np.swapaxes(a, -1, -2))).min(axis=-1)
    norm = np.linalg.norm(a, 2, axis=(-2, -1))
    dist = np.linalg.norm(wrap(y - yp), axis=-1)
    diff = np.linalg.norm(a - ap, 2, axis=(-2, -1))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dist > 0, diff / dist, 0.0)

    witness = None
    bad_mu = eig < field.mu - slack
    bad_norm = norm > 1.0 / field.mu + slack
    bad_lip = diff > field.lipschitz_y * dist + slack
    for kind, mask in (("ellipticity", bad_mu), ("boundedness", bad_norm), ("lipschitz_y", bad_lip)):
        if mask.any():
            i = int(np.argmax(mask))
            witness = {"violation": kind, "y": y[i].tolist(), "z": z[i].tolist(),
                       "y_prime": yp[i].tolist(), "min_eig": float(eig[i]),
                       "norm": float(norm[i]), "lipschitz_ratio": float(ratio[i])}
            break
    return HypothesisReport(float(eig.min()), float(norm.max()), float(ratio.max()),
                            witness is None, witness)


# --------------------------------------------------------------------------
# scale coupling


@dataclass(frozen=True)
class ScaleCoupling:
    """delta = eps**gamma (``law="power"``) or an explicit delta table."""

    epsilons: tuple
    gamma: float | None = 2.0
    law: str = "power"
    deltas: tuple | None = None

    def __post_init__(self):
        eps = np.asarray(self.epsilons, dtype=float)
        if eps.size == 0 or np.any(eps <= 0):
            raise ValueError("epsilons must be positive")
        if self.law == "power":
            if self.gamma is None or self.gamma <= 1:
                raise ValueError("power law needs gamma > 1 so that delta/eps -> 0")
        elif self.law == "table":
            if self.deltas is None or len(self.deltas) != eps.size:
                raise ValueError("table law needs one delta per epsilon")
        else:
            raise ValueError(f"unknown law {self.law!r}")

    def delta(self, eps):
        if self.law == "power":
            return float(eps) ** self.gamma
        i = [float(e) for e in self.epsilons].index(float(eps))
        return float(self.deltas[i])

    def tau(self, eps):
        return max(float(eps), self.delta(eps) / float(eps))

    @property
    def table(self):
        """Rows (eps, delta, delta/eps, tau) in list order."""
        return [(e, self.delta(e), self.delta(e) / e, self.tau(e)) for e in map(float, self.epsilons)]

    def ratio_decreasing(self):
        r = [row[2] for row in self.table]
        return all(b < a for a, b in zip(r, r[1:]))
