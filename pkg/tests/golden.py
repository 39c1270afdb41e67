"""Published calibration table values (rows c, columns Gamma = 0, 1/4, 1/2)."""
from math import sqrt

GAMMAS = (0.0, 0.25, 0.5)
CS = (0.0, 0.5, 1 / sqrt(2), 1.0, sqrt(2), 2.0)

S_SINE_1 = (
    (1.000, 0.750, 0.500),
    (1.033, 0.741, 0.466),
    (1.132, 0.772, 0.446),
    (1.329, 0.963, 0.451),
    (1.408, 1.125, 0.779),
    (1.414, 1.145, 0.863),
)
S_SINE_2 = (
    (2.000, 1.750, 1.500),
    (1.701, 1.485, 1.264),
    (1.584, 1.363, 1.147),
    (1.474, 1.242, 1.021),
    (1.420, 1.163, 0.914),
    (1.414, 1.146, 0.869),
)
S_GAUSS = (
    (1.000, 0.778, 0.600),
    (0.839, 0.650, 0.498),
    (0.751, 0.578, 0.440),
    (0.641, 0.487, 0.367),
    (0.519, 0.385, 0.283),
    (0.402, 0.285, 0.199),
)
CHI = (
    (1.000, 0.943, 0.894),
    (0.991, 0.935, 0.888),
    (0.974, 0.921, 0.876),
    (0.933, 0.886, 0.848),
    (0.855, 0.814, 0.786),
    (0.754, 0.705, 0.677),
)


def cells(table):
    for i, c in enumerate(CS):
        for j, g in enumerate(GAMMAS):
            yield g, c, table[i][j]
