"""Walk through the kernel machinery on random features.

Linear CKA is the cosine between double-centered Grams, so it ignores
isotropic scaling and rotations of the feature space. The smoothed energy
keeps a usable gradient where the cosine similarity flattens out.

Run: python demos/01_kernel_geometry.py
"""

import numpy as np
from scipy.stats import ortho_group

from hecka import kernels as K
from hecka import tensor as T

rng = np.random.default_rng(0)

# %% CKA is the inner product of unit-norm centered Grams
F1, F2 = rng.normal(size=(40, 16)), rng.normal(size=(40, 16))
K1, K2 = K.gram_linear(F1), K.gram_linear(F2)
v1, v2 = K.center_unit_vectorize(K1), K.center_unit_vectorize(K2)
print(f"CKA                      {K.cka(K1, K2):.6f}")
print(f"<vec(K1c), vec(K2c)>     {float(v1 @ v2):.6f}")
print(f"unbiased CKA             {K.cka(K1, K2, estimator='unbiased'):.6f}")

# %% Invariances
Q = ortho_group.rvs(16, random_state=1)
print(f"after scaling by 7.3     {K.cka(K.gram_linear(7.3 * F1), K2):.6f}")
print(f"after a rotation         {K.cka(K.gram_linear(F1 @ Q), K2):.6f}")

# %% Energy of a small ensemble of feature maps
grams = [np.stack([K.gram_linear(rng.normal(size=(40, 8))) for _ in range(4)]) for _ in range(3)]
cfg = K.RepulsionConfig(eps_arc=0.01)
print(f"mean pairwise CKA        {K.cka_pairwise(grams):.4f}")
print(f"smoothed Riesz energy    {K.he_smooth(grams, cfg):.4f}")
print(f"exponential energy       {K.he_exp(grams, cfg):.4f}")

# %% Gradients near coincidence: cosine flattens, the smoothed energy does not
for d in (1e-1, 1e-2, 1e-3):
    t = T.Tensor(np.array(d), requires_grad=True)
    T.backward((1.0 + cfg.eps_dist) / (T.power(t, 2.0) + cfg.eps_dist))
    print(f"d={d:<6} |d cos/dd|={abs(np.sin(d)):.2e}  |d riesz/dd|={abs(float(t.grad)):.2e}")
