"""Seeded synthetic irregular tensors drawn from a known PARAFAC2 model."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError
from .irregular import IrregularTensor, SparseSlice, filter_zero_rows

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeneratorSpec:
    K: int
    J: int
    I_max: int
    R_true: int
    density: float = 1.0
    seed: int = 0
    nonneg_factors: bool = True

    def __post_init__(self):
        if min(self.K, self.J, self.I_max, self.R_true) < 1:
            raise ConfigError("K, J, I_max and R_true must all be >= 1")
        if not 0.0 < self.density <= 1.0:
            raise ConfigError(f"density must lie in (0, 1], got {self.density}")
        if self.R_true > min(self.I_max, self.J):
            raise ConfigError(f"R_true={self.R_true} exceeds min(I_max, J)={min(self.I_max, self.J)}")

    def to_dict(self) -> dict:
        return asdict(self)


def generate_synthetic(spec: GeneratorSpec) -> IrregularTensor:
    """Draw ``X_k = Q_k H diag(S_k) V^T`` and keep each entry with probability ``density``.

    ``Q_k`` is the orthonormal factor of a Gaussian ``I_max x R_true``
    matrix; ``H``, ``V`` and ``S_k`` are uniform on [0, 1) (standard
    normal when ``nonneg_factors`` is off). Entry masks are drawn as a
    binomial count followed by a uniform subset, which is equivalent to
    independent Bernoulli trials. All-zero rows are filtered, so realized
    ``I_k <= I_max``; subjects left empty are dropped with a warning.
    The generator is PCG64 seeded with ``spec.seed``.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    K, J, I, R = spec.K, spec.J, spec.I_max, spec.R_true
    draw = rng.random if spec.nonneg_factors else rng.standard_normal
    H = draw((R, R))
    V = draw((J, R))
    S = draw((K, R))
    n_cells = I * J
    slices = []
    dropped = 0
    for k in range(K):
        Qk, _ = np.linalg.qr(rng.standard_normal((I, R)))
        A = Qk @ (H * S[k])
        n_keep = n_cells if spec.density >= 1.0 else int(rng.binomial(n_cells, spec.density))
        if n_keep == n_cells:
            cells = np.arange(n_cells)
        else:
            cells = np.sort(rng.choice(n_cells, size=n_keep, replace=False))
        rows, cols = np.divmod(cells, J)
        vals = np.einsum("nr,nr->n", A[rows], V[cols])
        sl = SparseSlice.from_coo(rows, cols, vals, (I, J))
        if sl.nnz == 0:
            dropped += 1
            continue
        slices.append(filter_zero_rows(sl)[0])
    if dropped:
        log.warning("dropped %d empty subjects out of %d", dropped, K)
    return IrregularTensor.from_slices(slices)
