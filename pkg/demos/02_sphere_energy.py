"""Spread 30 points over the sphere two ways and compare.

Both arms start from the same two clumps. One arm minimizes the mean
pairwise cosine similarity directly; the other minimizes the Riesz energy
of the geodesic distances. The energy arm ends with the lower cosine
similarity because its gradient does not vanish for nearby points.

Run: python demos/02_sphere_energy.py
"""

from hecka.experiments import sphere_study

res = sphere_study(seed=0)
cos_arm, he_arm = res["cossim"], res["energy"]

print("iter  cossim arm: cossim   energy arm: cossim")
for i in range(0, len(cos_arm["cossim"]), 5):
    print(f"{i:4d}  {cos_arm['cossim'][i]:18.4f}   {he_arm['cossim'][i]:18.4f}")

print(f"\nfinal cosine similarity, cossim arm  {cos_arm['cossim'][-1]:.4f}")
print(f"final cosine similarity, energy arm  {he_arm['cossim'][-1]:.4f}")
