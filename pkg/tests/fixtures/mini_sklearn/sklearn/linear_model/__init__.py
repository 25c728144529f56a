from sklearn.linear_model.base import LinearRegression
