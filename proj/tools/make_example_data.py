"""Writes the bundled example CSV files under data/."""

import argparse
from pathlib import Path

import numpy as np


def location_scale_sample(rng, n, burn_in=200):
    chol = np.linalg.cholesky(np.array([[1.0, 1.2], [1.2, 4.0]]))
    xi = rng.normal() * np.sqrt(1 / (1 - 0.6**2))
    z2 = rng.normal() * np.sqrt(1 / (1 - 0.75**2))
    z1_path, z2_path = [], []
    for _ in range(n + burn_in):
        xi = 0.6 * xi + rng.normal()
        z2 = 0.75 * z2 + rng.normal()
        z1_path.append(0.3 + 0.4 * np.exp(xi))
        z2_path.append(z2)
    z1 = np.array(z1_path[burn_in:])
    z2 = np.array(z2_path[burn_in:])
    eps = (rng.normal(size=(n, 2)) @ chol.T) / np.sqrt(rng.chisquare(6, size=n) / 6)[:, None]
    loc = 1 + 1.5 * z1 + 2 * z2
    scale = 0.25 + 0.5 * z1
    return {"y": loc + scale * eps[:, 1], "x": loc + scale * eps[:, 0], "z1": z1, "z2": z2}


def portfolio_sample(rng, n, assets=5, df=5):
    corr = np.full((assets, assets), 0.4) + 0.6 * np.eye(assets)
    chol = np.linalg.cholesky(corr)
    vol = np.linspace(1.0, 2.2, assets)
    log_vix = np.log(20.0)
    vix = np.empty(n + 1)
    for t in range(n + 1):
        log_vix = np.log(20.0) + 0.9 * (log_vix - np.log(20.0)) + 0.15 * rng.normal()
        vix[t] = np.exp(log_vix)
    vix_lag = vix[:-1]
    shocks = (rng.normal(size=(n, assets)) @ chol.T) / np.sqrt(rng.chisquare(df, size=n) / df)[:, None]
    losses = -0.05 + (vix_lag / 20.0)[:, None] * vol[None, :] * shocks
    cols = {f"asset{d + 1}": losses[:, d] for d in range(assets)}
    cols["vix_lag"] = vix_lag
    return cols


def write(path, cols):
    names = list(cols)
    rows = np.column_stack([cols[k] for k in names])
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(names) + "\n")
        for row in rows:
            f.write(",".join(repr(float(v)) for v in row) + "\n")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "data")
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    write(args.out / "example_fit.csv", location_scale_sample(np.random.default_rng(20240601), 500))
    write(args.out / "portfolio_5asset.csv", portfolio_sample(np.random.default_rng(20240602), 1500))


if __name__ == "__main__":
    main()
