"""Plot Hamiltonian traces written by ``mindlin-ph simulate`` (needs matplotlib)."""
import sys

import matplotlib.pyplot as plt
import numpy as np


def main(paths):
    fig, ax = plt.subplots()
    for path in paths:
        data = np.genfromtxt(path, delimiter=",", names=True)
        ax.semilogy(data["t"], np.maximum(data["H_plant"], 1e-300), label=path)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("H [J]")
    ax.legend()
    fig.savefig("traces.png", dpi=150)


if __name__ == "__main__":
    main(sys.argv[1:])
