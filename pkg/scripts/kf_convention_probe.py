"""Rejection rate and mean n2 of the n1=2 sample-size-formula scenario under nearby conventions.

Used to pick the multiplier / planning levels for the glimm-s2-kf preset.
"""
import argparse
from dataclasses import replace

from ssrlab.mc import run_scenario
from ssrlab.presets import get_preset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=1_000_000)
    args = ap.parse_args()
    base = replace(get_preset("glimm-s2-kf").config, reps=args.reps)
    for mult in (1.0, 2.0, 4.0):
        for a_plan in (0.025, 0.05):
            for b_plan in (0.1, 0.2):
                rule = replace(base.rule, multiplier=mult, alpha_plan=a_plan, beta_plan=b_plan)
                est = run_scenario(replace(base, rule=rule))
                print(f"multiplier={mult:g} alpha_plan={a_plan:g} beta_plan={b_plan:g}  "
                      f"reject={est.reject_rate:.5f} (se {est.se:.5f})  mean_n2={est.mean_n2:.3f}  "
                      f"p_stage2={est.p_stage2:.3f}")


if __name__ == "__main__":
    main()
