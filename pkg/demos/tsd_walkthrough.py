"""Serial dictatorship, hard and soft.

Runs ordinary SD on a tiny market, then the tensor version on the same
ranking, then loosens the ranking into a doubly stochastic matrix and watches
the matching go soft.
"""
import numpy as np

from matchkit import PreferenceProfile, run_sd
from matchkit.autodiff import Tensor
from matchkit.tsd import build_preference_tensor, build_ranking_matrix, tsd

np.set_printoptions(precision=3, suppress=True)

# two workers, two firms; the last option in each list is "stay single"
#   w0: f0 > f1 > single      w1: f0 > single > f1
#   f0: w1 > w0 > single      f1: w0 > single > w1
profile = PreferenceProfile.from_lists([[0, 1, 2], [0, 2, 1]], [[1, 0, 2], [0, 2, 1]])

ranking = [0, 3, 1, 2]   # w0 picks first, then f1, w1, f0
M = run_sd(profile, ranking)
print("SD matching (rows: workers + single, cols: firms + single)")
print(M)

PW, PF = build_preference_tensor(profile)
R = build_ranking_matrix(ranking, profile.n, profile.m)
M_tensor = tsd(PW, PF, Tensor(R)).data
print("\ntensor SD on the one-hot ranking agrees:", np.array_equal(M_tensor.round(), M))

# blend the hard ranking with the uniform one
k = R.shape[0]
for mix in (0.0, 0.2, 0.5, 1.0):
    R_soft = (1 - mix) * R + mix * np.full((k, k), 1.0 / k)
    M_soft = tsd(PW, PF, Tensor(R_soft)).data
    print(f"\nmix={mix:.1f}")
    print(M_soft)
