#  Copyright (c) 2023. DataRobot, Inc. and its affiliates.
#  All rights reserved.
#  This is proprietary source code of DataRobot, Inc. and its affiliates.
#  Released under the terms of DataRobot Tool and Utility Agreement.

"""
A multivariate normal mixture whose marginals are fixed univariate mixtures. Each joint
component is a cell of the regime grid: its means and variances are taken from the marginal
components of that cell, and only its probability and its covariances are free.
"""

import logging
from dataclasses import dataclass
from dataclasses import field

import numpy as np
from scipy import linalg
from scipy import special

from common import constants
from common.data_types import ICReport
from common.data_types import ReturnsPanel
from common.exceptions import DomainError
from common.exceptions import NotPositiveDefinite
from lp_structure import marginal_system
from regime_grid import CellGrid
from regime_grid import build_cell_grid
from regime_grid import cell_lookup
from stats_core import information_criteria

logger = logging.getLogger()

PROBABILITY_SUM_TOLERANCE = 1e-9
SYMMETRY_TOLERANCE = 1e-12


def covariance_pairs(num_assets):
    """The (j, k), j < k, asset pairs, in the order of the covariance vector."""

    return [(j, k) for j in range(num_assets) for k in range(j + 1, num_assets)]


@dataclass
class JointMixture:
    """
    A joint mixture over N assets.

    Attributes
    ----------
    marginals : list[common.data_types.UnivariateMixture]
        One fixed mixture per asset.
    cells : list[tuple[int]]
        The component tuple of every joint component.
    probs : numpy.ndarray
        The component probabilities.
    covs : numpy.ndarray
        The G x N x N component covariances. The diagonals are always the marginal variances.
    """

    marginals: list
    cells: list
    probs: np.ndarray
    covs: np.ndarray
    grid: CellGrid = field(init=False, repr=False)

    def __post_init__(self):
        self.cells = [tuple(int(index) for index in comps) for comps in self.cells]
        self.probs = np.atleast_1d(np.asarray(self.probs, dtype=float)).copy()
        self.covs = np.array(self.covs, dtype=float, copy=True)
        self.grid = build_cell_grid([mix.num_components for mix in self.marginals])

        num_comps, num_assets = len(self.cells), len(self.marginals)
        if not num_comps or self.probs.shape != (num_comps,):
            raise DomainError(
                f"Expecting one probability per joint component ({num_comps}), "
                f"got: {self.probs.shape}"
            )
        if self.covs.shape != (num_comps, num_assets, num_assets):
            raise DomainError(
                f"Expecting covariances of shape {(num_comps, num_assets, num_assets)}, "
                f"got: {self.covs.shape}"
            )
        for comps in self.cells:
            cell_lookup(self.grid, comps)
        if len(set(self.cells)) != num_comps:
            raise DomainError(f"Joint components must occupy distinct cells: {self.cells}")
        if np.any(self.probs <= 0.0) or np.any(self.probs > 1.0):
            raise DomainError(f"Joint component probabilities must be in (0, 1]: {self.probs}")
        if abs(self.probs.sum() - 1.0) > PROBABILITY_SUM_TOLERANCE:
            raise DomainError(f"Joint probabilities must sum to 1, sum: {self.probs.sum()!r}")
        scale = max(1.0, float(np.abs(self.covs).max()))
        if not np.allclose(
            self.covs, np.swapaxes(self.covs, 1, 2), rtol=0.0, atol=SYMMETRY_TOLERANCE * scale
        ):
            raise DomainError("Joint component covariances must be symmetric.")

        variances = self.stds**2
        for comp_index in range(num_comps):
            np.fill_diagonal(self.covs[comp_index], variances[comp_index])

    @classmethod
    def from_correlations(cls, marginals, cells, probs, correlations):
        """
        Build a joint mixture from component correlations.

        Parameters
        ----------
        marginals : list[common.data_types.UnivariateMixture]
            The marginal mixtures.
        cells : list[tuple[int]]
            The component tuple of every joint component.
        probs : list[float]
            The component probabilities.
        correlations : list[list[float]]
            Per component, the correlations of the asset pairs in covariance_pairs order.

        Returns
        -------
        JointMixture,
            The mixture, with covariance rho_jk * sigma_j * sigma_k.
        """

        num_assets = len(marginals)
        pairs = covariance_pairs(num_assets)
        correlations = np.asarray(correlations, dtype=float).reshape(len(cells), len(pairs))
        covs = np.zeros((len(cells), num_assets, num_assets))
        for comp_index, comps in enumerate(cells):
            stds = [marginals[j].stds[comps[j]] for j in range(num_assets)]
            for pair_index, (j, k) in enumerate(pairs):
                value = correlations[comp_index, pair_index] * stds[j] * stds[k]
                covs[comp_index, j, k] = covs[comp_index, k, j] = value
        return cls(marginals, cells, probs, covs)

    @property
    def num_components(self):
        """The number of joint components G."""

        return len(self.cells)

    @property
    def num_assets(self):
        """The number of assets N."""

        return len(self.marginals)

    @property
    def means(self):
        """The G x N component means, taken from the marginal components."""

        return self._per_component("means")

    @property
    def stds(self):
        """The G x N component standard deviations, taken from the marginal components."""

        return self._per_component("stds")

    def _per_component(self, attribute):
        values = [
            [getattr(mix, attribute)[comps[j]] for j, mix in enumerate(self.marginals)]
            for comps in self.cells
        ]
        return np.array(values, dtype=float).reshape(self.num_components, self.num_assets)

    @property
    def cell_ids(self):
        """The regime grid cell id of every joint component."""

        return [cell_lookup(self.grid, comps) for comps in self.cells]

    def correlations(self):
        """The G x N x N component correlation matrices."""

        stds = self.stds
        return self.covs / (stds[:, :, np.newaxis] * stds[:, np.newaxis, :])

    def determinants(self):
        """The determinant of every component covariance."""

        return np.linalg.det(self.covs)

    def covariance_vector(self):
        """The free covariances, component-major and in covariance_pairs order."""

        pairs = covariance_pairs(self.num_assets)
        if not pairs:
            return np.zeros(0)
        rows, cols = zip(*pairs)
        return self.covs[:, list(rows), list(cols)].ravel()

    def with_covariance_vector(self, vector):
        """A copy of the mixture with its free covariances replaced."""

        pairs = covariance_pairs(self.num_assets)
        vector = np.asarray(vector, dtype=float).reshape(self.num_components, len(pairs))
        covs = self.covs.copy()
        for pair_index, (j, k) in enumerate(pairs):
            covs[:, j, k] = covs[:, k, j] = vector[:, pair_index]
        return JointMixture(self.marginals, self.cells, self.probs, covs)

    def with_covariances(self, covs):
        """A copy of the mixture with all its covariance matrices replaced."""

        return JointMixture(self.marginals, self.cells, self.probs, covs)

    def with_components(self, indices, probs):
        """A copy of the mixture restricted to some of its components, with new probabilities."""

        indices = list(indices)
        return JointMixture(
            self.marginals, [self.cells[index] for index in indices], probs, self.covs[indices]
        )

    def marginal_weights(self, asset_index):
        """The weights of an asset's components implied by the joint probabilities."""

        return np.bincount(
            [comps[asset_index] for comps in self.cells],
            weights=self.probs,
            minlength=self.marginals[asset_index].num_components,
        )

    def marginal_residual(self):
        """The largest absolute deviation of the implied marginal weights from the marginals."""

        lhs, rhs, _ = marginal_system(self.grid, self.marginals, self.cell_ids)
        return float(np.max(np.abs(lhs @ self.probs - rhs)))

    def count_free_params(self):
        """
        The number of free parameters: a mean and a std per marginal component, N(N-1)/2
        covariances per joint component and the joint probabilities left free by the rank of
        the marginal system.
        """

        lhs, _, _ = marginal_system(self.grid, self.marginals, self.cell_ids)
        marginal_params = sum(2 * mix.num_components for mix in self.marginals)
        covariance_params = self.num_components * len(covariance_pairs(self.num_assets))
        probability_params = self.num_components - int(np.linalg.matrix_rank(lhs))
        return marginal_params + covariance_params + probability_params


def _validate_square_symmetric(cov):
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or not cov.size:
        raise DomainError(f"A covariance matrix must be square, shape: {cov.shape}")
    scale = max(1.0, float(np.abs(cov).max()))
    if not np.allclose(cov, cov.T, rtol=0.0, atol=SYMMETRY_TOLERANCE * scale):
        raise DomainError("A covariance matrix must be symmetric.")
    return cov


def is_positive_definite(
    cov, min_eigenvalue=constants.PD_MIN_EIGENVALUE, min_determinant=constants.DET_MIN
):
    """
    Whether a symmetric matrix is numerically positive definite: its smallest eigenvalue and its
    determinant must both exceed their thresholds.

    Parameters
    ----------
    cov : numpy.ndarray
        A symmetric matrix.
    min_eigenvalue : float
        The eigenvalue threshold.
    min_determinant : float
        The determinant threshold.

    Returns
    -------
    bool,
        Whether the matrix is positive definite.
    """

    cov = _validate_square_symmetric(cov)
    return bool(
        np.linalg.eigvalsh(cov).min() > min_eigenvalue and np.linalg.det(cov) > min_determinant
    )


def shrink_off_diagonal(cov, scale):
    """Divide the off-diagonal entries by a scale, leaving the diagonal untouched."""

    shrunk = np.asarray(cov, dtype=float) / scale
    np.fill_diagonal(shrunk, np.diag(cov))
    return shrunk


def ridge_repair(
    cov,
    multiplier,
    max_iters=constants.RIDGE_MAX_ITERS,
    min_eigenvalue=constants.PD_MIN_EIGENVALUE,
    min_determinant=constants.DET_MIN,
):
    """
    Make a covariance positive definite by shrinking its off-diagonal entries. At iteration i
    the off-diagonals are divided by 1 + i * multiplier, and the multiplier grows tenfold every
    100 iterations.

    Parameters
    ----------
    cov : numpy.ndarray
        A symmetric matrix with a positive diagonal.
    multiplier : float
        The shrinkage multiplier, in [2, 10].
    max_iters : int
        The iteration budget.
    min_eigenvalue : float
        The eigenvalue threshold of positive definiteness.
    min_determinant : float
        The determinant threshold of positive definiteness.

    Returns
    -------
    numpy.ndarray,
        The repaired matrix. A positive definite input is returned unchanged.
    """

    cov = _validate_square_symmetric(cov).copy()
    if not constants.RIDGE_MULT_MIN <= multiplier <= constants.RIDGE_MULT_MAX:
        raise DomainError(
            f"The ridge multiplier must be in [{constants.RIDGE_MULT_MIN}, "
            f"{constants.RIDGE_MULT_MAX}], value: {multiplier}"
        )
    if np.any(np.diag(cov) <= 0.0):
        raise DomainError(f"A covariance diagonal must be positive: {np.diag(cov)}")
    if is_positive_definite(cov, min_eigenvalue, min_determinant):
        return cov

    for iteration in range(1, max_iters + 1):
        if iteration % 100 == 0:
            multiplier *= 10.0
        repaired = shrink_off_diagonal(cov, 1.0 + iteration * multiplier)
        if is_positive_definite(repaired, min_eigenvalue, min_determinant):
            return repaired

    raise NotPositiveDefinite(
        f"The covariance could not be repaired within {max_iters} iterations, "
        f"diagonal: {np.diag(cov)}"
    )


def _log_density_terms(values, mean, cov):
    try:
        chol = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError as ex:
        raise NotPositiveDefinite(f"A component covariance is not positive definite: {cov}") from ex
    scaled = linalg.solve_triangular(chol, (values - mean).T, lower=True)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (mean.size * np.log(2.0 * np.pi) + log_det + np.sum(scaled**2, axis=0))


def mvn_pdf(x, mean, cov):
    """
    The multivariate normal density.

    Parameters
    ----------
    x : numpy.ndarray
        A point, or a T x N matrix of points.
    mean : numpy.ndarray
        The mean vector.
    cov : numpy.ndarray
        A positive definite covariance.

    Returns
    -------
    float or numpy.ndarray,
        The density value(s).
    """

    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    points = np.asarray(x, dtype=float)
    if points.shape[-1] != mean.size:
        raise DomainError(f"Dimension mismatch, point: {points.shape}, mean: {mean.shape}")
    if not is_positive_definite(cov):
        raise NotPositiveDefinite(f"The covariance is not positive definite: {cov}")
    densities = np.exp(_log_density_terms(np.atleast_2d(points), mean, np.asarray(cov, float)))
    return float(densities[0]) if points.ndim == 1 else densities


def component_log_densities(values, model: JointMixture):
    """
    The log density of every time point under every joint component.

    Returns
    -------
    numpy.ndarray,
        A T x G matrix.
    """

    values = np.atleast_2d(np.asarray(values, dtype=float))
    means = model.means
    return np.column_stack(
        [
            _log_density_terms(values, means[comp_index], model.covs[comp_index])
            for comp_index in range(model.num_components)
        ]
    )


def joint_log_likelihood(panel: ReturnsPanel, model: JointMixture):
    """
    The joint mixture log-likelihood of a returns panel.

    Returns
    -------
    float,
        The log-likelihood, or the large negative sentinel when the density vanishes at any
        time point.
    """

    if panel.num_assets != model.num_assets:
        raise DomainError(
            f"The panel holds {panel.num_assets} assets, the model: {model.num_assets}"
        )
    with np.errstate(divide="ignore"):
        weighted = component_log_densities(panel.values, model) + np.log(model.probs)
    per_time = special.logsumexp(weighted, axis=1)
    if not np.all(np.isfinite(per_time)):
        return constants.NEGATIVE_LL_SENTINEL
    return float(per_time.sum())


def mixture_covariance(model: JointMixture):
    """
    The overall mean, covariance and correlation of a joint mixture.

    Returns
    -------
    tuple(numpy.ndarray, numpy.ndarray, numpy.ndarray),
        The mean vector, the covariance and the correlation matrices.
    """

    means = model.means
    mean = model.probs @ means
    second = np.einsum("c,cjk->jk", model.probs, model.covs + np.einsum("cj,ck->cjk", means, means))
    cov = second - np.outer(mean, mean)
    stds = np.sqrt(np.diag(cov))
    return mean, cov, cov / np.outer(stds, stds)


@dataclass
class MVNBaseline:
    """A single multivariate normal fitted by maximum likelihood, used as a benchmark."""

    mean: np.ndarray
    cov: np.ndarray
    log_likelihood: float
    free_params: int
    criteria: ICReport = None


def mvn_baseline(panel: ReturnsPanel):
    """
    Fit a single multivariate normal to a returns panel.

    Returns
    -------
    MVNBaseline,
        The sample mean, the MLE covariance (divides by T), the log-likelihood and
        N + N(N+1)/2 free parameters.
    """

    values = panel.values
    num_assets = panel.num_assets
    mean = values.mean(axis=0)
    cov = np.atleast_2d(np.cov(values, rowvar=False, bias=True))
    if not is_positive_definite(cov):
        raise NotPositiveDefinite("The sample covariance of the panel is not positive definite.")
    value = float(np.sum(_log_density_terms(values, mean, cov)))
    free_params = num_assets + num_assets * (num_assets + 1) // 2
    criteria = None
    if panel.num_timepoints > free_params + 2:
        criteria = information_criteria(value, free_params, panel.num_timepoints)
    return MVNBaseline(mean, cov, value, free_params, criteria)


def structure_to_model(solution, marginals):
    """
    Turn a structure LP solution into a starting joint mixture: one component per kept cell,
    with marginal variances and zero covariances.

    Parameters
    ----------
    solution : lp_structure.StructureSolution
        The LP solution.
    marginals : list[common.data_types.UnivariateMixture]
        The marginal mixtures.

    Returns
    -------
    JointMixture,
        The starting mixture.
    """

    grid = build_cell_grid([mix.num_components for mix in marginals])
    kept = list(solution.kept_cells)
    probs = solution.probs[kept]
    cells = [grid.tuple_of(cell) for cell in kept]
    num_assets = len(marginals)
    covs = np.zeros((len(kept), num_assets, num_assets))
    return JointMixture(marginals, cells, probs / probs.sum(), covs)
