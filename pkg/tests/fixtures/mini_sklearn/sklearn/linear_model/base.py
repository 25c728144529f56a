"""Linear regression models."""
from sklearn import metrics
from sklearn.base import BaseEstimator
from sklearn.preprocessing.data import StandardScaler
from sklearn.utils import validation


class LinearModel(BaseEstimator):
    """Predict with linear coefficients."""

    def predict(self, X):
        """Predict target values."""
        validation.check_is_fitted(self, "coef_")
        X = validation.check_array(X)
        return [sum(c * v for c, v in zip(self.coef_, row)) + self.intercept_ for row in X]

    def score(self, X, y):
        """Compute regression score."""
        return metrics.regression.r2_score(y, self.predict(X))


class _FitHistory:
    """Record fitting iterations."""

    def __init__(self):
        self.steps = []


class LinearRegression(LinearModel):
    """Fit ordinary least squares."""

    scaler: StandardScaler

    def __init__(self, normalize=False):
        self.normalize = normalize
        self.history = _FitHistory()

    def fit(self, X, y):
        """Fit linear coefficients."""
        if self.normalize:
            X = self.scaler.fit_transform(X)
        n = len(X[0])
        self.coef_ = [0.0] * n
        self.intercept_ = _center(y)
        return self


def _center(y):
    """Compute target mean."""
    return sum(y) / len(y)
