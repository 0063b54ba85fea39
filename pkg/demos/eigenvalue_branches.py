"""Eigenvalue branches of the coupling matrix at normal incidence.

Writes ``k, branch, re, im, variation`` rows to stdout.
"""

import csv
import math
import sys

import numpy as np

from helmres.farfield import assemble_R, track_eigenvalues
from helmres.geometry import WaveParams, reference_cell
from helmres.scattering import branch_variation, classify_variation


def main(samples=30, nodes=300):
    cell = reference_cell(0.01)
    ks = np.linspace(1.5, 1.775, samples)
    tracked = track_eigenvalues([assemble_R(cell, WaveParams(float(k), math.pi / 2), nodes).eigenvalues()
                                 for k in ks])
    out = csv.writer(sys.stdout, lineterminator="\n")
    out.writerow(["k", "branch", "re", "im", "variation", "kind"])
    for b in range(tracked.shape[1]):
        v = branch_variation(tracked[:, b])
        for k, ev in zip(ks, tracked[:, b]):
            out.writerow([f"{k:.6f}", b, f"{ev.real:.8f}", f"{ev.imag:.8f}", f"{v:.5f}", classify_variation(v)])


if __name__ == "__main__":
    main()
