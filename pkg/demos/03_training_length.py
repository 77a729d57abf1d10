"""Why more training slots help: the ML objective sharpens as N grows.

For a unit-gain path at (0, 0) we evaluate the noiseless objective on a grid
for N = 4, 8, 12 and 16 nested random beams and report the two highest
peaks. The first peak stays at the truth while the runner-up falls behind.
"""

from irsbeam.experiments import ExperimentConfig
from irsbeam.experiments.figures import contour

config = ExperimentConfig().with_run(trials=5)
_, peaks = contour(config)

print(f"{'seed':>4} {'N':>3} {'peak 1':>9} {'peak 2':>9} {'gap':>9}  location")
for r in peaks:
    loc = f"({r['peak1_theta']:+.3f}, {r['peak1_phi']:+.3f})"
    print(f"{r['seed']:>4} {r['n_training']:>3} {r['peak1']:9.3f} {r['peak2']:9.3f} {r['gap']:9.3f}  {loc}")
