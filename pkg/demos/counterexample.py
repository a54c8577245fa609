"""Two four-point spaces whose pairwise-distance laws agree but whose
three-point distance-matrix laws do not.

    python demos/counterexample.py
"""

from dmw.estimators import enumerate_matrix_law, exact_dmw
from dmw.gw import gw_entropic, gw_permutation_min
from dmw.spaces import space_counterexample_x, space_counterexample_y


def main():
    X, Y = space_counterexample_x(), space_counterexample_y()
    print("distance matrices")
    print(X.distances)
    print(Y.distances)

    for name, S in (("X", X), ("Y", Y)):
        law = enumerate_matrix_law(S, 2).merged()
        pairs = ", ".join(f"{a[0]:g}: {w:g}" for a, w in zip(law.atoms, law.weights))
        print(f"two-point law of {name}: {pairs}")

    for n in (2, 3, 4):
        print(f"exact DMW order {n}: {exact_dmw(X, Y, n, 1):.6f}")

    # any order sits below GW, so both upper bounds bracket the values above
    print(f"GW upper bound, best relabeling: {gw_permutation_min(X, Y, 1).value:.6f}")
    print(f"GW upper bound, entropic coupling: {gw_entropic(X, Y, p=1, epsilon=1e-2).value:.6f}")


if __name__ == "__main__":
    main()
