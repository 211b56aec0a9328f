"""Recompute RC, f and NA of the tabulated lenses from their D and sag."""

import argparse

from proxmla.metrology import lens_metrics
from proxmla.studio import LENS_TABLE


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--index", type=float, default=1.44)
    args = ap.parse_args()
    print("gap_um\tD_um\th_um\tRC_um\tRC_ref\tf_um\tf_ref\tNA\tNA_ref\tmax_rel_err")
    for gap, (D, h, rc, f, na) in sorted(LENS_TABLE.items()):
        got = lens_metrics(D, h, args.index)
        err = max(abs(g - e) / e for g, e in zip(got, (rc, f, na)))
        print(f"{gap}\t{D}\t{h}\t{got[0]:.2f}\t{rc}\t{got[1]:.2f}\t{f}\t{got[2]:.4f}\t{na}\t{err:.1e}")


if __name__ == "__main__":
    main()
