"""Shared test fixtures that are plain objects rather than pytest fixtures."""

import numpy as np

from nodalknot import knotgeom as kg


class EuclideanField:
    """Flat metric on the unit torus with no tube."""

    def chart(self, x):
        n = len(x)
        return kg.ChartSample(np.full(n, np.nan), np.full((n, 2), np.nan), np.full(n, kg.EXTERIOR, np.int8))

    def base_metric(self, x, chart=None):
        return np.broadcast_to(np.eye(3), (len(x), 3, 3)).copy()

    def scale_factor(self, chart):
        return np.ones(len(chart))
