"""Two-wing constant-source panel model used to build the benchmark operators.

The state is the vector of panel source strengths; the kernel gives the
normal velocity each unit source induces at every collocation point (panel
midpoint), so ``T @ sigma = q`` enforces non-penetration with
``q_j = v_w . n_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ContractViolation, GeometryDegenerate, SingularOperator
from .linalg import LUFactor, condition_number
from .objective import ObservationSelector, TrainingSet, observe

# closed trailing edge variant of the 4-digit thickness polynomial
_NACA_COEFFS = (0.2969, -0.1260, -0.3516, 0.2843, -0.1036)

MAX_KAPPA = 1e8


@dataclass(frozen=True)
class Panel:
    start: np.ndarray
    end: np.ndarray

    @property
    def centroid(self):
        return 0.5 * (self.start + self.end)

    @property
    def length(self):
        return float(np.hypot(*(self.end - self.start)))

    @property
    def normal(self):
        # counter-clockwise traversal: outward normal is the tangent rotated by -90 degrees
        dx, dy = (self.end - self.start) / self.length
        return np.array([dy, -dx])


@dataclass(frozen=True)
class WingConfig:
    panels_per_wing: int = 198
    chord: float = 1.0
    thickness_ratio: float = 0.12
    second_wing_offset: tuple = (0.0, 0.5)

    def __post_init__(self):
        if self.panels_per_wing < 8 or self.panels_per_wing % 2:
            raise ContractViolation("panels_per_wing must be an even number >= 8")
        if not self.chord > 0:
            raise ContractViolation("chord must be positive")
        if not 0 < self.thickness_ratio < 1:
            raise ContractViolation("thickness_ratio must lie in (0, 1)")
        object.__setattr__(self, "second_wing_offset", tuple(float(x) for x in self.second_wing_offset))


def default_training_angles():
    return np.linspace(-45.0, 45.0, 50)


def default_test_angles():
    return np.linspace(-44.55, 44.55, 100)


@dataclass(frozen=True)
class DatasetConfig:
    angles_deg: tuple = field(default_factory=lambda: tuple(default_training_angles()))
    speed: float = 1.0
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        angles = tuple(float(a) for a in np.atleast_1d(self.angles_deg))
        if not angles:
            raise ContractViolation("angles_deg must be non-empty")
        if not self.speed > 0:
            raise ContractViolation("speed must be positive")
        if self.noise_std < 0:
            raise ContractViolation("noise_std must be nonnegative")
        object.__setattr__(self, "angles_deg", angles)


def thickness(x, chord, thickness_ratio):
    xb = np.asarray(x, dtype=float) / chord
    a0, a1, a2, a3, a4 = _NACA_COEFFS
    poly = a0 * np.sqrt(xb) + a1 * xb + a2 * xb**2 + a3 * xb**3 + a4 * xb**4
    return 5.0 * thickness_ratio * chord * poly


def wing_vertices(config, offset=(0.0, 0.0)):
    """Counter-clockwise polygon vertices, starting at the trailing edge."""
    half = config.panels_per_wing // 2
    beta = np.linspace(0.0, np.pi, half + 1)
    x = 0.5 * config.chord * (1.0 + np.cos(beta))  # trailing edge -> leading edge
    y = thickness(x, config.chord, config.thickness_ratio)
    y[0] = y[-1] = 0.0
    upper = np.column_stack([x, y])
    lower = np.column_stack([x[::-1], -y[::-1]])[1:-1]
    verts = np.vstack([upper, lower])
    return verts + np.asarray(offset, dtype=float)


def wing_profile(config, offset=(0.0, 0.0)):
    """Closed list of ``config.panels_per_wing`` panels with outward normals."""
    verts = wing_vertices(config, offset)
    nxt = np.roll(verts, -1, axis=0)
    return [Panel(a.copy(), b.copy()) for a, b in zip(verts, nxt)]


def _arrays(panels):
    centroids = np.array([p.centroid for p in panels])
    normals = np.array([p.normal for p in panels])
    lengths = np.array([p.length for p in panels])
    return centroids, normals, lengths


def influence_matrix(panels):
    """Source influence on normal velocity, midpoint quadrature, self term 1/2."""
    if not panels:
        raise ContractViolation("no panels")
    r, nrm, ln = _arrays(panels)
    diff = r[:, None, :] - r[None, :, :]
    dist2 = np.sum(diff * diff, axis=-1)
    np.fill_diagonal(dist2, 1.0)
    if np.min(dist2) < 1e-24:
        i, j = np.unravel_index(np.argmin(dist2), dist2.shape)
        raise GeometryDegenerate(f"panels {i} and {j} have coincident centroids")
    proj = np.einsum("ijk,ik->ij", diff, nrm)
    K = ln[None, :] / (2.0 * np.pi) * proj / dist2
    np.fill_diagonal(K, 0.5)
    return K


def assemble_full_operator(wing1, wing2):
    """Dense influence matrix over ``wing1 + wing2`` panels, checked invertible."""
    if not wing1 or not wing2:
        raise ContractViolation("both wings need panels")
    T = influence_matrix(list(wing1) + list(wing2))
    try:
        LUFactor(T)
    except SingularOperator as exc:
        raise GeometryDegenerate(f"influence matrix is singular: {exc}") from exc
    return T


def misspecified_operator(T, wing1_size):
    T = np.asarray(T, dtype=float)
    if not 0 < wing1_size <= T.shape[0]:
        raise ContractViolation(f"wing1_size must lie in (0, {T.shape[0]}]")
    return T[:wing1_size, :wing1_size].copy()


def control_vector(panels, angle_deg, speed=1.0):
    """``q_j = v_w . n_j`` for a wing velocity of ``speed`` at ``angle_deg``."""
    if not speed > 0:
        raise ContractViolation("speed must be positive")
    theta = np.deg2rad(angle_deg)
    normals = np.array([p.normal for p in panels])
    return speed * (normals @ np.array([np.cos(theta), np.sin(theta)]))


def generate_dataset(T, selector, panels, config):
    """Noiseless (by default) observation pairs from the full operator.

    Column ``i`` of ``Q`` is the full control restricted to the observed
    panels and column ``i`` of ``D`` the observed part of ``T^{-1} q``.
    """
    lu = LUFactor(T)
    q_full = np.column_stack([control_vector(panels, a, config.speed) for a in config.angles_deg])
    states = lu.solve(q_full)
    D = observe(selector, states)
    if config.noise_std > 0:
        rng = np.random.default_rng(config.seed)
        D = D + config.noise_std * rng.standard_normal(D.shape)
    Q = observe(selector, q_full)
    return TrainingSet(Q, D)


@dataclass(frozen=True)
class CaseStudy:
    wing1: list
    wing2: list
    T: np.ndarray
    M: np.ndarray
    selector: ObservationSelector

    @property
    def panels(self):
        return list(self.wing1) + list(self.wing2)


def build_case(config=None):
    """Geometry, full operator ``T``, single-wing operator ``M``, selector."""
    config = config or WingConfig()
    wing1 = wing_profile(config)
    wing2 = wing_profile(config, np.asarray(config.second_wing_offset) * config.chord)
    T = assemble_full_operator(wing1, wing2)
    kappa = condition_number(T)
    if kappa >= MAX_KAPPA:
        raise GeometryDegenerate(f"condition number of T is {kappa:.3e}")
    M = misspecified_operator(T, len(wing1))
    selector = ObservationSelector(T.shape[0], tuple(range(len(wing1))))
    return CaseStudy(wing1, wing2, T, M, selector)
