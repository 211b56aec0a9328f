"""Grid scan of the resist parameters over the reference gap series.

For each (K, gamma, alpha), where K = rate_max * develop_time / thickness sets the
development budget, report sag and regime per gap and whether the observed
pattern (FlatTop at 120, Concave over 240-720 with falling sag, Blurred at 840)
is reproduced. Exposure scale is held at 1 since only rate_max * scale**gamma
enters the development.
"""

import argparse
import itertools

from proxmla.resist import ProcessRecipe
from proxmla.metrology import Regime
from proxmla.studio import REFERENCE_MASK, Simulator

GAPS = (120.0, 240.0, 360.0, 480.0, 600.0, 720.0, 840.0)
TARGET = [Regime.FLAT_TOP] + [Regime.CONCAVE] * 5 + [Regime.BLURRED]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--budgets", type=float, nargs="+", default=[0.5, 1, 2, 4, 8, 16, 32, 64])
    ap.add_argument("--gammas", type=float, nargs="+", default=[1, 2, 3, 5])
    ap.add_argument("--alphas", type=float, nargs="+", default=[0.01, 0.05, 0.2, 0.5])
    ap.add_argument("--dx", type=float, default=0.4)
    args = ap.parse_args()
    base = ProcessRecipe()
    sim = Simulator(dx_um=args.dx, allow_undersampling=True, cache_size=len(GAPS))
    hits = 0
    print("K\tgamma\talpha\t" + "\t".join(f"g{g:g}" for g in GAPS) + "\tregimes_match\tsag_falls")
    for K, gam, alpha in itertools.product(args.budgets, args.gammas, args.alphas):
        recipe = base.with_(
            rate_max_um_per_s=K * base.resist_thickness_um / base.develop_time_s,
            contrast_gamma=gam,
            absorption_per_um=alpha,
        )
        runs = [sim.run(REFERENCE_MASK, recipe.with_(gap_um=g)) for g in GAPS]
        sags = [r.sag_um for r in runs]
        regimes = [r.report.regime for r in runs]
        match = regimes == TARGET
        falls = all(b < a for a, b in zip(sags[1:6], sags[2:6]))
        hits += match and falls
        cells = "\t".join(f"{s:.2f}{str(r)[0]}" for s, r in zip(sags, regimes))
        print(f"{K:g}\t{gam:g}\t{alpha:g}\t{cells}\t{match}\t{falls}", flush=True)
    print(f"# combinations reproducing the full pattern: {hits}")


if __name__ == "__main__":
    main()
