"""
Operating characteristics and sensitivity
=========================================

Monte Carlo evaluation of competing designs on a built-in scenario, plus
the effect-half-life robustness sweep.  Replication is deterministic under
a fixed seed and splits across worker processes without changing a single
draw, so `reps` and `n_jobs` can be scaled freely.

Command-line equivalents:
    titepk simulate --scenario 1 --method titepk,crm,blrm --reps 1000
    titepk sensitivity --data <csv> --te 5:50:5
"""
from titepk import DosingRegimen, replicate, sensitivity_sweep
from titepk import datasets
from titepk.simulate import SCENARIOS

scn = SCENARIOS["1"]
probs = scn.phases[0].probs
print(f"scenario 1: daily panel {scn.doses}")
print(f"true p(DLT): {probs} (targeted band 0.20-0.40)\n")

# 200 replications keep this demo under half a minute; the acceptance
# campaign runs 1000.
print(f"{'design':>8} {'P(target)':>10} {'P(over)':>8} {'P(none)':>8} "
      f"{'mean n':>7} {'mean DLT':>9}")
for method in ("titepk", "crm", "blrm"):
    m = replicate("1", method, reps=200, seed=11)
    print(f"{method:>8} {m.p_target:>10.3f} {m.p_over:>8.3f} "
          f"{m.p_none:>8.3f} {m.mean_patients:>7.2f} {m.mean_dlt:>9.2f}")

# A sequential scenario: q48h phase then daily phase.  The exposure model
# carries phase-1 information through the PK scale; the hierarchical
# comparator borrows it through a meta-analytic prior.
m9 = replicate("9", "titepk", reps=200, seed=11)
print(f"\nscenario 9 (sequential), exposure model: "
      f"P(target)={m9.p_target:.3f}, mean n={m9.mean_patients:.1f}")

# Robustness: refit the bundled dataset across elimination half-lives.
records = datasets.load_dataset(datasets.everolimus_path())
rows = sensitivity_sweep(datasets.outcomes(records),
                         DosingRegimen(5.0, 24.0), te_grid=(5, 15, 30, 45))
print("\nposterior median p(2.5 daily) vs assumed half-life:")
for row in rows:
    r = next(r for r in row["summary"].rows
             if r.regimen.dose == 2.5 and r.regimen.interval == 24.0)
    print(f"  T_e={row['t_e']:>4.0f} h -> median {r.median:.4f}  "
          f"P(OD) {r.p_od:.4f}")
print("The answer barely moves: misreading the half-life by a factor of "
      "three\nshifts the driving exposure for every patient in the same "
      "direction, and the\nnormalization cancels most of it.")
