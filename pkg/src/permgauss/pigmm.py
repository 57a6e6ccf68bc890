"""The 13-parameter permutation-invariant Gaussian matrix model.

Parameter order: the two means (mu1, mu2), the V0 block (11, 12, 22), the
VH block (11, 12, 13, 22, 23, 33), then the V2 and V3 scalars.  All block
entries are covariances.

The V0 means are projections on the all-ones matrix and on the traceless
identity direction.  The three VH copies are the column-sum, row-sum and
diagonal directions, with the diagonal copy orthogonalised against the
other two.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PARAM_NAMES = (
    "mu1", "mu2",
    "V0_11", "V0_12", "V0_22",
    "VH_11", "VH_12", "VH_13", "VH_22", "VH_23", "VH_33",
    "V2", "V3",
)

# Second-moment classes for two entries; letters name distinct index values.
PATTERN_CLASSES = (
    "ii,ii", "ii,jj", "ii,ij", "ii,ji", "ii,jk",
    "ij,ij", "ij,ji", "ij,ik", "ij,kj", "ij,jk", "ij,kl",
)

# Features the fit is linear in: I1..I13 followed by I1^2, I1*I2, I2^2.
N_FEATURES = 16

PSD_TOL = 1e-12
MAX_JITTER = 1e-10


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    d: int
    f: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float).reshape(-1)
        if f.shape != (13,):
            raise ValueError(f"expected 13 parameters, got {f.shape[0]}")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "d", int(self.d))

    def as_dict(self) -> dict:
        return dict(zip(PARAM_NAMES, self.f.tolist()))


@dataclass(frozen=True)
class PatternMoments:
    mean_diag: float
    mean_off: float
    second: np.ndarray  # raw second moments in PATTERN_CLASSES order

    def moment(self, name: str) -> float:
        return float(self.second[PATTERN_CLASSES.index(name)])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.mean_diag, self.mean_off], self.second])


@dataclass(frozen=True)
class BlockGaussian:
    d: int
    mu: np.ndarray
    S_V0: np.ndarray
    S_VH: np.ndarray
    s_V2: float
    s_V3: float
    multiplicities: tuple = field(init=False)

    def __post_init__(self):
        d = self.d
        object.__setattr__(self, "multiplicities", (1, d - 1, d * (d - 3) // 2, (d - 1) * (d - 2) // 2))


@dataclass(frozen=True)
class PSDReport:
    is_valid: bool
    min_eig_V0: float
    min_eig_VH: float
    s_V2: float
    s_V3: float

    @property
    def min_eigenvalue(self) -> float:
        return min(self.min_eig_V0, self.min_eig_VH, self.s_V2, self.s_V3)


def _check_dim(d: int):
    if d < 4:
        raise DomainError(f"the 13-parameter model needs d >= 4, got d={d}")


def fit_coefficients(d: int) -> np.ndarray:
    """Matrix ``C`` with ``f = C @ features`` (see :func:`lq_features`)."""
    _check_dim(d)
    C = np.zeros((13, N_FEATURES))
    r1, r2 = np.sqrt(d - 1.0), np.sqrt(d - 2.0)
    d2 = d * d
    # column index of I_k is k-1; 13, 14, 15 hold I1^2, I1*I2, I2^2
    I1, I2, I3, I4, I5, I6, I7, I8, I9, I10, I11, I12, I13, I1I1, I1I2, I2I2 = range(16)

    C[0, I2] = 1 / d
    C[1, [I1, I2]] = np.array([d, -1]) / (d * r1)
    C[2, [I2I2, I10]] = np.array([-1, 1]) / d2
    C[3, [I1I2, I2I2, I10, I13]] = -np.array([d, -1, 1, -d]) / (d2 * r1)
    C[4, [I1I1, I1I2, I2I2, I10, I12, I13]] = -np.array([d2, -2 * d, 1, -1, -d2, 2 * d]) / (d2 * (d - 1))
    C[5, [I8, I10]] = np.array([d, -1]) / (d2 * (d - 1))
    C[6, [I9, I10]] = np.array([d, -1]) / (d2 * (d - 1))
    C[7, [I6, I8, I9, I10, I13]] = np.array([d2, -d, -d, 2, -d]) / (d2 * (d - 1) * r2)
    C[8, [I7, I10]] = np.array([d, -1]) / (d2 * (d - 1))
    C[9, [I5, I7, I9, I10, I13]] = np.array([d2, -d, -d, 2, -d]) / (d2 * (d - 1) * r2)
    C[10, [I5, I6, I7, I8, I9, I10, I11, I12, I13]] = -np.array(
        [2 * d2, 2 * d2, -d, -d, -2 * d, 4, -d ** 3, d2, -4 * d]
    ) / (d2 * (d - 1) * (d - 2))
    a, b = (d - 1) * (d - 2), d - 1
    C[11, [I3, I4, I5, I6, I7, I8, I9, I10, I11, I12, I13]] = np.array(
        [a, a, 4 * b, 4 * b, -b, -b, -2 * b, 2, -2 * d * b, 2, -4]
    ) / (d * (d - 1) * (d - 2) * (d - 3))
    C[12, [I3, I4, I7, I8, I9]] = np.array([d, -d, -1, -1, 2]) / (d * (d - 1) * (d - 2))
    return C


def lq_features(lq_means) -> np.ndarray:
    m = np.asarray(lq_means, dtype=float)
    if m.shape[-1] != 13:
        raise ValueError("expected the 13 linear and quadratic invariant means")
    I1, I2 = m[..., 0:1], m[..., 1:2]
    return np.concatenate([m, I1 * I1, I1 * I2, I2 * I2], axis=-1)


def fit_params(lq_means, d: int) -> ModelParams:
    """Model parameters from ensemble means of I1..I13."""
    return ModelParams(d, fit_coefficients(d) @ lq_features(lq_means))


def expected_lq_invariants(params: ModelParams) -> np.ndarray:
    """Model expectations of I1..I13 (the inverse of the fit map)."""
    d, f = params.d, params.f
    C = fit_coefficients(d)
    I2 = d * f[0]
    I1 = np.sqrt(d - 1.0) * f[1] + f[0]
    # f[2:] is affine in I3..I13 once I1 and I2 are fixed
    known = C[2:, [0, 1, 13, 14, 15]] @ np.array([I1, I2, I1 * I1, I1 * I2, I2 * I2])
    quad = np.linalg.solve(C[2:, 2:13], f[2:] - known)
    return np.concatenate([[I1, I2], quad])


def _falling(d: int, k: int) -> float:
    out = 1.0
    for j in range(k):
        out *= d - j
    return out


def counting_matrix(d: int) -> np.ndarray:
    """Linear map from pattern moments (mean_diag, mean_off, 11 classes) to <I1>..<I13>.

    Each unrestricted index sum splits by which indices coincide; a split with
    b distinct values occurs d(d-1)...(d-b+1) times.
    """
    n1, n2, n3, n4 = (_falling(d, k) for k in (1, 2, 3, 4))
    rows = (
        {"mean_diag": n1},
        {"mean_diag": n1, "mean_off": n2},
        {"ii,ii": n1, "ij,ij": n2},
        {"ii,ii": n1, "ij,ji": n2},
        {"ii,ii": n1, "ii,ij": n2},
        {"ii,ii": n1, "ii,ji": n2},
        {"ii,ii": n1, "ii,ij": 2 * n2, "ij,ij": n2, "ij,ik": n3},
        {"ii,ii": n1, "ii,ji": 2 * n2, "ij,ij": n2, "ij,kj": n3},
        {"ii,ii": n1, "ii,ij": n2, "ii,ji": n2, "ij,ji": n2, "ij,jk": n3},
        {"ii,ii": n1, "ii,ij": 2 * n2, "ii,ji": 2 * n2, "ii,jj": n2, "ij,ij": n2, "ij,ji": n2,
         "ii,jk": 2 * n3, "ij,ik": n3, "ij,kj": n3, "ij,jk": 2 * n3, "ij,kl": n4},
        {"ii,ii": n1},
        {"ii,ii": n1, "ii,jj": n2},
        {"ii,ii": n1, "ii,ij": n2, "ii,ji": n2, "ii,jj": n2, "ii,jk": n3},
    )
    columns = ("mean_diag", "mean_off") + PATTERN_CLASSES
    K = np.zeros((13, 13))
    for r, terms in enumerate(rows):
        for name, count in terms.items():
            K[r, columns.index(name)] = count
    return K


def to_pattern_moments(params: ModelParams) -> PatternMoments:
    _check_dim(params.d)
    x = np.linalg.solve(counting_matrix(params.d), expected_lq_invariants(params))
    return PatternMoments(float(x[0]), float(x[1]), x[2:].copy())


def from_pattern_moments(pm: PatternMoments, d: int) -> ModelParams:
    _check_dim(d)
    return fit_params(counting_matrix(d) @ pm.as_vector(), d)


def to_blocks(params: ModelParams) -> BlockGaussian:
    _check_dim(params.d)
    f = params.f
    S_V0 = np.array([[f[2], f[3]], [f[3], f[4]]])
    S_VH = np.array([[f[5], f[6], f[7]], [f[6], f[8], f[9]], [f[7], f[9], f[10]]])
    return BlockGaussian(params.d, f[:2].copy(), S_V0, S_VH, float(f[11]), float(f[12]))


def psd_check(params: ModelParams, tol: float = PSD_TOL) -> PSDReport:
    b = to_blocks(params)
    e0 = float(np.linalg.eigvalsh(b.S_V0).min())
    eH = float(np.linalg.eigvalsh(b.S_VH).min())
    valid = min(e0, eH, b.s_V2, b.s_V3) >= -tol
    return PSDReport(valid, e0, eH, b.s_V2, b.s_V3)


def require_psd(params: ModelParams, what: str = "operation"):
    rep = psd_check(params)
    if not rep.is_valid:
        raise DomainError(
            f"{what} needs positive semidefinite blocks; smallest eigenvalue is {rep.min_eigenvalue:.3e}"
        )
    return rep


def clip_to_psd(params: ModelParams) -> ModelParams:
    """Project each covariance block onto the PSD cone (negative eigenvalues set to 0)."""
    b = to_blocks(params)

    def clip(S):
        w, V = np.linalg.eigh(S)
        return (V * np.clip(w, 0, None)) @ V.T

    S0, SH = clip(b.S_V0), clip(b.S_VH)
    f = params.f.copy()
    f[2:5] = S0[0, 0], S0[0, 1], S0[1, 1]
    f[5:11] = SH[0, 0], SH[0, 1], SH[0, 2], SH[1, 1], SH[1, 2], SH[2, 2]
    f[11], f[12] = max(f[11], 0.0), max(f[12], 0.0)
    return ModelParams(params.d, f)


def dense_moments(params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Mean vector and covariance of the d*d entries, row-major entry order."""
    pm = to_pattern_moments(params)
    d = params.d
    i, j = np.divmod(np.arange(d * d), d)
    diag = i == j
    mean = np.where(diag, pm.mean_diag, pm.mean_off)

    a, b = i[:, None], j[:, None]
    c, e = i[None, :], j[None, :]
    da, db = a == b, c == e
    second = np.full((d * d, d * d), np.nan)

    def assign(mask, name):
        second[mask] = pm.moment(name)

    # both entries diagonal
    assign(da & db & (a == c), "ii,ii")
    assign(da & db & (a != c), "ii,jj")
    # exactly one diagonal entry; x is the diagonal index, (p, q) the other entry
    for x, p, q, mask in ((a, c, e, da & ~db), (c, a, b, db & ~da)):
        assign(mask & (p == x), "ii,ij")
        assign(mask & (q == x), "ii,ji")
        assign(mask & (p != x) & (q != x), "ii,jk")
    # both entries off-diagonal
    off = ~da & ~db
    same_row, same_col = a == c, b == e
    cross_ab, cross_ba = b == c, a == e
    assign(off & same_row & same_col, "ij,ij")
    assign(off & cross_ab & cross_ba, "ij,ji")
    assign(off & same_row & ~same_col, "ij,ik")
    assign(off & same_col & ~same_row, "ij,kj")
    assign(off & (cross_ab ^ cross_ba), "ij,jk")
    assign(off & ~same_row & ~same_col & ~cross_ab & ~cross_ba, "ij,kl")
    assert not np.isnan(second).any()
    cov = second - np.outer(mean, mean)
    return mean, cov


class MatrixSampler:
    """Draws d x d matrices from a model; the covariance factor is computed once."""

    def __init__(self, params: ModelParams):
        require_psd(params, "sampling")
        self.params = params
        self.mean, cov = dense_moments(params)
        self.factor = _factor(cov)

    def draw(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        d = self.params.d
        n = 1 if size is None else int(size)
        z = rng.standard_normal((n, d * d))
        out = (self.mean + z @ self.factor.T).reshape(n, d, d)
        return out[0] if size is None else out


def _factor(cov: np.ndarray) -> np.ndarray:
    eye = np.eye(cov.shape[0])
    for jitter in (0.0, 1e-14, 1e-12, MAX_JITTER):
        try:
            return np.linalg.cholesky(cov + jitter * eye)
        except np.linalg.LinAlgError:
            continue
    # semidefinite with larger round-off: symmetric square root
    w, V = np.linalg.eigh(cov)
    return V * np.sqrt(np.clip(w, 0, None))


def sample_matrix(params: ModelParams, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    return MatrixSampler(params).draw(rng, size)


def simple_gaussian_params(sigma2: float, d: int) -> ModelParams:
    """i.i.d. zero-mean entries with variance ``sigma2``."""
    if sigma2 <= 0:
        raise ValueError("variance must be positive")
    f = np.zeros(13)
    f[[2, 4, 5, 8, 10, 11, 12]] = sigma2
    return ModelParams(d, f)


def uniform_equivalent_params(sigma: float, d: int) -> ModelParams:
    """Model matching i.i.d. entries uniform on [-sigma, sigma]."""
    if sigma <= 0:
        raise ValueError("width must be positive")
    return simple_gaussian_params(sigma * sigma / 3.0, d)


def reference_params(scheme: str, d: int, fan_in: int | None = None) -> ModelParams:
    """The initialization model of a weight scheme with the given fan-in."""
    fan_in = d if fan_in is None else fan_in
    if scheme == "gaussian":
        return simple_gaussian_params(1.0 / fan_in, d)
    if scheme == "uniform":
        return uniform_equivalent_params(1.0 / np.sqrt(fan_in), d)
    raise ValueError(f"unknown scheme {scheme!r}")
