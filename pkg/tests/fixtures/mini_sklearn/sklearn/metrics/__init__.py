from .regression import mean_squared_error, r2_score
