"""scikit-learn style wrappers.

``fit`` takes the input polygon (or, for the patcher, the patch pairs) and
computes the exact decomposition; the fitted attributes end in ``_`` and the
prediction methods answer point queries from it.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import analysis, dnn, patch, symbolic
from ._validation import check_domain, check_halfspaces, check_network, check_plane_points
from .geom2d import contains_points


class PiecewiseLinearDecomposition(TransformerMixin, BaseEstimator):
    """Exact affine pieces of ``network`` over a 2D input polygon.

    After ``fit(domain)``, ``transform`` returns network outputs at plane
    points computed from the pieces and ``apply`` returns piece indices.
    """

    def __init__(self, network=None, max_partitions=symbolic.DEFAULT_MAX_PARTITIONS):
        self.network = network
        self.max_partitions = max_partitions

    def fit(self, X, y=None):
        net = check_network(self.network)
        self.domain_ = check_domain(X)
        self.rep_ = symbolic.fhat(net, self.domain_, self.max_partitions)
        self.n_partitions_ = len(self.rep_)
        self.n_features_in_ = 2
        return self

    def transform(self, X):
        check_is_fitted(self, "rep_")
        return symbolic.evaluate(self.rep_, check_plane_points(X))

    def apply(self, X):
        check_is_fitted(self, "rep_")
        return symbolic.locate_many(self.rep_, check_plane_points(X))


class DecisionRegions(ClassifierMixin, BaseEstimator):
    """Argmax decision regions of ``network`` over a 2D input polygon."""

    def __init__(self, network=None, max_partitions=symbolic.DEFAULT_MAX_PARTITIONS):
        self.network = network
        self.max_partitions = max_partitions

    def fit(self, X, y=None):
        net = check_network(self.network)
        self.domain_ = check_domain(X)
        rep = symbolic.fhat(net, self.domain_, self.max_partitions)
        self.regions_ = analysis.classify(rep, net.output_dim, self.max_partitions)
        self.classes_ = np.arange(net.output_dim)
        self.area_by_class_ = analysis.region_area_by_label(self.regions_, net.output_dim)
        self.n_features_in_ = 2
        return self

    def predict(self, X):
        check_is_fitted(self, "regions_")
        U = check_plane_points(X)
        labels = np.full(len(U), -1, dtype=np.int64)
        todo = np.ones(len(U), dtype=bool)
        for region in self.regions_:
            hit = todo & contains_points(region.poly.vertices, U)
            labels[hit] = region.label
            todo &= ~hit
        if todo.any():
            raise ValueError("some points lie outside the fitted domain")
        return labels


class WeakestPrecondition(BaseEstimator):
    """Input polygons whose images satisfy ``halfspaces``."""

    def __init__(self, network=None, halfspaces=None, max_partitions=symbolic.DEFAULT_MAX_PARTITIONS):
        self.network = network
        self.halfspaces = halfspaces
        self.max_partitions = max_partitions

    def fit(self, X, y=None):
        net = check_network(self.network)
        Y = check_halfspaces(self.halfspaces, net.output_dim)
        self.domain_ = check_domain(X)
        rep = symbolic.fhat(net, self.domain_, self.max_partitions)
        self.polygons_ = analysis.weakest_pre(rep, Y)
        self.area_ = float(sum(p.area for p in self.polygons_))
        return self

    def predict(self, X):
        """True where a plane point falls inside the precondition."""
        check_is_fitted(self, "polygons_")
        U = check_plane_points(X)
        inside = np.zeros(len(U), dtype=bool)
        for p in self.polygons_:
            inside |= contains_points(p.vertices, U)
        return inside


class NetworkPatcher(BaseEstimator):
    """Greedy values-only repair.

    ``fit(X, y)`` takes a list of input polygons ``X`` and, for each, an output
    constraint ``y`` (a HalfspaceSet or an argmax class index).
    """

    def __init__(self, network=None, layer=None, iterations=10, max_partitions=symbolic.DEFAULT_MAX_PARTITIONS):
        self.network = network
        self.layer = layer
        self.iterations = iterations
        self.max_partitions = max_partitions

    def fit(self, X, y):
        net = check_network(self.network, allow_masking=True)
        mnet = net if isinstance(net, dnn.MaskingNetwork) else dnn.to_masking(net)
        if len(X) != len(y):
            raise ValueError(f"{len(X)} input polytopes but {len(y)} output constraints")
        spec = patch.PatchSpec(
            [(check_domain(Xi), check_halfspaces(yi, mnet.output_dim)) for Xi, yi in zip(X, y)]
        )
        layer = self.layer if self.layer is not None else mnet.affine_layer_indices()[-1]
        result = patch.greedy_patch(
            mnet, spec, mnet.weight_ids(layer), self.iterations, max_partitions=self.max_partitions
        )
        self.spec_ = spec
        self.network_ = result.network
        self.applied_ = result.applied
        self.history_ = result.history
        self.key_points_ = result.key_points
        self.verification_ = patch.verify_patch(result.network, spec, mnet, self.max_partitions)
        return self

    def predict(self, X):
        """Patched network outputs at ambient input points."""
        check_is_fitted(self, "network_")
        X = check_array(X)
        return dnn.eval_masking(self.network_, X)[0]
