"""Fill factor and lens geometry versus pitch at a fixed gap (80 um apertures)."""

import argparse

from proxmla.formats import METRIC_COLUMNS, format_table, metrics_row
from proxmla.resist import ProcessRecipe
from proxmla.studio import REFERENCE_MASK, Simulator, sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pitches", type=float, nargs="+", default=[90.0, 100.0, 110.0, 120.0])
    ap.add_argument("--gap", type=float, default=360.0)
    ap.add_argument("--exposure-scale", type=float, default=1.0)
    ap.add_argument("--gamma", type=float, default=2.0)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--rate-max", type=float, default=0.15)
    ap.add_argument("--dx", type=float, default=0.4)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    recipe = ProcessRecipe(
        gap_um=args.gap,
        exposure_scale=args.exposure_scale,
        contrast_gamma=args.gamma,
        absorption_per_um=args.alpha,
        rate_max_um_per_s=args.rate_max,
    )
    sim = Simulator(dx_um=args.dx, allow_undersampling=True)
    res = sweep(recipe, "pitch", args.pitches, REFERENCE_MASK, sim, max_workers=args.workers)
    rows = [metrics_row(f"{p.value:g}", p.metrics) for p in res.points]
    print(format_table(rows, ("pitch_um",) + METRIC_COLUMNS[1:]), end="")


if __name__ == "__main__":
    main()
