"""Plot data for a simulated ensemble: trajectory cloud, histograms and beta fits.

Writes CSV files to ./plot_data using a reference CIR parameter table.
"""
from pathlib import Path

import numpy as np

from ratingsde import reporting, sde

table = np.array(
    [
        [2.41e-01, 2.29e-01, 1.28e-01],
        [3.73e-02, 3.73e-02, 1.17e-01],
        [6.80e-02, 6.74e-03, 1.21e-01],
        [9.25e-02, 9.19e-02, 4.59e-02],
        [1.50e-01, 1.47e-01, 6.01e-02],
        [5.34e-02, 5.44e-02, 2.47e-01],
        [2.06e-02, 2.01e-02, 6.74e-03],
        [3.01e-01, 1.87e-01, 9.14e-03],
        [4.07e-01, 3.69e-01, 2.62e-01],
    ]
)
params = sde.ModelParams("cir", 4, *table.T)
monthly = tuple(k / 12 for k in range(1, 13))
series = sde.simulate(params, sde.SimulationGrid(1000, obs_times=monthly, seed=0)).to_series()

out = Path("plot_data")
out.mkdir(exist_ok=True)
for name, text in reporting.trajectory_csvs(series, max_paths=100).items():
    (out / f"trajectory_{name}.csv").write_text(text)
hists = reporting.histograms(series, bins=40)
(out / "histograms.csv").write_text(reporting.histogram_csv(hists))
(out / "beta_curves.csv").write_text(reporting.beta_curve_csv(hists))

for h in hists:
    if h.months == 12 and h.entry in ("1-2", "2-3", "3-4"):
        print(f"{h.entry}: beta fit alpha={h.alpha:.3f} beta={h.beta:.3f}")
print("wrote", len(list(out.iterdir())), "files to", out)
