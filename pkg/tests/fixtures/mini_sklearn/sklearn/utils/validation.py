"""Input validation helpers."""


class NotFittedError(ValueError):
    """Signal use of unfitted estimator."""


def _num_samples(X):
    """Count input samples."""
    return len(X)


def check_array(X):
    """Validate input array."""
    if _num_samples(X) == 0:
        raise ValueError("empty input")
    return [list(row) for row in X]


def check_is_fitted(estimator, attribute):
    """Check estimator is fitted."""
    if not hasattr(estimator, attribute):
        raise NotFittedError(type(estimator).__name__)
