"""Chain estimators into pipelines."""
from sklearn.base import BaseEstimator, clone
from sklearn.preprocessing import StandardScaler


class Pipeline(BaseEstimator):
    """Chain transformers with final estimator."""

    def __init__(self, steps):
        self.steps = [(name, clone(est)) for name, est in steps]

    def fit(self, X, y=None):
        """Fit all pipeline steps."""
        for _, step in self.steps[:-1]:
            X = step.fit_transform(X)
        self.steps[-1][1].fit(X, y)
        return self

    def predict(self, X):
        """Predict with final estimator."""
        for _, step in self.steps[:-1]:
            X = step.transform(X)
        return self.steps[-1][1].predict(X)


def make_pipeline(*estimators):
    """Build pipeline from estimators."""
    steps = [(type(e).__name__.lower(), e) for e in estimators]
    return Pipeline(steps)


def default_pipeline():
    """Build default scaling pipeline."""
    return make_pipeline(StandardScaler())
