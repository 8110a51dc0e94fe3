"""Eigenvalues for the 5x4 PCA fixture in test_diagnostics.cpp (numpy)."""
import numpy as np

X = np.array([
    [2.0, 0.5, -1.0, 3.0],
    [1.0, 1.5, 0.0, 2.0],
    [-0.5, 2.0, 1.0, 0.0],
    [3.0, -1.0, 2.0, 1.0],
    [0.0, 0.0, 0.5, -2.0],
])
C = X - X.mean(axis=0)
cov = C.T @ C / X.shape[0]
ev = np.sort(np.linalg.eigvalsh(cov))[::-1]
print("top2 = %.15f, %.15f" % (ev[0], ev[1]))
print("trace = %.15f" % np.trace(cov))
