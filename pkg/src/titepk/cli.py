"""Command-line interface.

Subcommands: `analyze` (dataset posterior report), `simulate` (operating
characteristics), `sensitivity` (effect-half-life / event-timing sweep),
`skeleton` (indifference-interval ladder utility), `serve` (HTTP API).

Exit codes: 0 success, 2 input/validation error, 3 convergence failure.
Option precedence: command-line flags > config file > built-in defaults.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import datasets
from .comparators import (BlrmPrior, MapHyper, Skeleton, blrm_fit, blrm_map_fit,
                          crm_fit, crm_recommend, crm_safety_stop,
                          lee_cheung_skeleton)
from .inference import MCMCConfig
from .model import TitePkPrior, quadrature_posterior, summarize
from .pk import PKParams, DosingRegimen, reference_scale
from .simulate import (METHODS, SCENARIOS, Metrics, Scenario, replicate,
                       sensitivity_sweep)
from .trial import EscalationRules


class InputError(ValueError):
    """User-input problem; maps to exit code 2."""


class ConvergenceError(RuntimeError):
    """Fit did not converge; maps to exit code 3."""


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

DEFAULTS = {
    "pk": {"T_e": 30.0, "log_keff": 0.37},
    "reference": {"dose": 5.0, "interval": 24.0},
    "prior": {"median_p": 0.30, "sd": 1.25, "m2": 0.0, "s2": 1.0, "rho": 0.0},
    "rules": {},
    "panel": {},
    "hier": {"tau_scales": [0.5, 0.25]},
    "crm": {"theta": 0.30, "delta": 0.10, "prior_sd": 2.0},
    "mcmc": {"chains": 16, "warmup": 1600, "samples": 2000, "target_accept": 0.25},
}


def _load_config(path) -> dict:
    if path is None:
        return {}
    text = open(path, "rb").read()
    if str(path).endswith(".json"):
        return json.loads(text.decode())
    try:
        import tomllib  # Python >= 3.11
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(text.decode())


def _merged(config: dict) -> dict:
    out = {}
    for section, defaults in DEFAULTS.items():
        out[section] = {**defaults, **config.get(section, {})}
    for extra in config:
        if extra not in out:
            out[extra] = config[extra]
    return out


def _pk_from(cfg) -> PKParams:
    return PKParams(t_e=float(cfg["pk"]["T_e"]),
                    k_eff=float(np.exp(cfg["pk"]["log_keff"])))


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def _panel_from(cfg, records, schedule):
    pcfg = cfg["panel"]
    if pcfg.get("doses"):
        doses = [float(d) for d in pcfg["doses"]]
        interval = float(pcfg.get("interval", 24.0))
    else:
        doses = sorted({r.dose for r in records if schedule is None
                        or r.schedule == schedule})
        interval = None
        for r in records:
            if schedule is None or r.schedule == schedule:
                interval = r.interval
        if not doses:
            doses = [float(cfg["reference"]["dose"])]
            interval = float(cfg["reference"]["interval"])
    label = pcfg.get("label", schedule or "panel")
    return doses, float(interval), label


def _summary_payload(rows, eligible, extra=None):
    payload = {"doses": [
        {"dose": r.dose if hasattr(r, "dose") else r.regimen.dose,
         "median": r.median, "ci50": list(r.ci50), "ci95": list(r.ci95),
         "p_ud": r.p_ud, "p_tt": r.p_tt, "p_od": r.p_od}
        for r in rows], "ewoc_eligible": eligible}
    if extra:
        payload.update(extra)
    return payload


def _print_summary(payload, stream=None):
    w = (stream or sys.stdout).write
    w(f"{'dose':>8} {'median':>8} {'50% CI':>17} {'95% CI':>17} "
      f"{'P(UD)':>7} {'P(TT)':>7} {'P(OD)':>7}\n")
    for row in payload["doses"]:
        ci50 = f"[{row['ci50'][0]:.3f},{row['ci50'][1]:.3f}]"
        ci95 = f"[{row['ci95'][0]:.3f},{row['ci95'][1]:.3f}]"
        w(f"{row['dose']:>8.3g} {row['median']:>8.3f} {ci50:>17} {ci95:>17} "
          f"{row['p_ud']:>7.3f} {row['p_tt']:>7.3f} {row['p_od']:>7.3f}\n")
    w(f"EWOC-eligible doses: {payload['ewoc_eligible'] or 'none'}\n")


def cmd_analyze(args) -> int:
    cfg = _merged(_load_config(args.config))
    records = datasets.load_dataset(args.data)
    scheds = datasets.schedules(records)
    pk = _pk_from(cfg)
    ewoc = float(cfg["rules"].get("ewoc", 0.25))
    target = tuple(cfg["rules"].get("target", (0.20, 0.40)))
    sequential = args.strata == "sequential"
    current_sched = scheds[-1] if scheds else None
    doses, interval, label = _panel_from(cfg, records,
                                         None if not scheds else current_sched)
    report = {"input": str(args.data), "model": args.model, "strata": args.strata,
              "seed": args.seed, "config": str(args.config) if args.config else None,
              "panel": {"doses": doses, "interval": interval, "label": label}}

    if args.model == "titepk":
        ref_cfg = cfg["reference"]
        ref = reference_scale(DosingRegimen(float(ref_cfg["dose"]),
                                            float(ref_cfg["interval"])), pk)
        prior = TitePkPrior(ref=ref, median_p=float(cfg["prior"]["median_p"]),
                            sd=float(cfg["prior"]["sd"]))
        data = datasets.outcomes(records) if (sequential or not scheds) \
            else datasets.outcomes(records, current_sched)
        post = quadrature_posterior(data, prior, pk)
        regimens = [DosingRegimen(d, interval, label=label) for d in doses]
        s = summarize(post, regimens, pk, ref, target)
        eligible = [r.regimen.dose for r in s.rows if r.p_od < ewoc]
        report["posterior"] = _summary_payload(s.rows, eligible)
    elif args.model == "blrm":
        if sequential:
            raise InputError("--strata sequential with --model blrm: use blrm-map")
        if len(scheds) > 1:
            raise InputError("multiple schedules present; analyze one schedule "
                             "or use --model blrm-map --strata sequential")
        d_ref = float(cfg["reference"]["dose"])
        prior = BlrmPrior(s1=float(cfg["prior"]["sd"]), m2=float(cfg["prior"]["m2"]),
                          s2=float(cfg["prior"]["s2"]), rho=float(cfg["prior"]["rho"]))
        data = datasets.to_binary(records, current_sched, doses=None)
        s = blrm_fit(doses, d_ref, data, prior).summary(target)
        eligible = [r.dose for r in s.rows if r.p_od < ewoc]
        report["posterior"] = _summary_payload(s.rows, eligible)
    elif args.model == "blrm-map":
        if not sequential or len(scheds) < 2:
            raise InputError("--model blrm-map requires --strata sequential and "
                             "two schedules in the data")
        hist_sched, cur_sched = scheds[0], scheds[-1]
        ref_dose = float(cfg["reference"]["dose"])
        iv = {r.schedule: r.interval for r in records}
        refs = (ref_dose * iv[hist_sched] / 24.0, ref_dose * iv[cur_sched] / 24.0)
        hyper = MapHyper(ref_doses=refs,
                         mu_sd=(float(cfg["prior"]["sd"]), float(cfg["prior"]["s2"])),
                         tau_scales=tuple(cfg["hier"]["tau_scales"]))
        mc = cfg["mcmc"]
        mcmc = MCMCConfig(seed=args.seed, chains=int(mc["chains"]),
                          warmup=int(mc["warmup"]), samples=int(mc["samples"]),
                          target_accept=float(mc["target_accept"]))
        fit = blrm_map_fit(datasets.to_binary(records, hist_sched),
                           datasets.to_binary(records, cur_sched),
                           hyper, mcmc, doses=doses, intervals=target)
        if not fit.converged:
            raise ConvergenceError(
                f"hierarchical fit R-hat {np.nanmax(fit.rhat):.3f}")
        eligible = [r.dose for r in fit.rows if r.p_od < ewoc]
        report["posterior"] = _summary_payload(
            fit.rows, eligible, {"rhat_max": float(np.nanmax(fit.rhat))})
    elif args.model == "crm":
        if sequential:
            raise InputError("--model crm does not support --strata sequential")
        if len(scheds) > 1:
            raise InputError("multiple schedules present; CRM analyzes one")
        ccfg = cfg["crm"]
        if ccfg.get("probs"):
            skel = Skeleton(tuple(float(p) for p in ccfg["probs"]),
                            float(ccfg["theta"]), float(ccfg["delta"]),
                            int(ccfg.get("nu", 1)))
        else:
            skel = lee_cheung_skeleton(len(doses), float(ccfg["theta"]),
                                       float(ccfg["delta"]),
                                       nu=int(ccfg.get("nu", (len(doses) + 1) // 2)))
            skel = skel.rounded()
        skel = skel.with_doses(doses)
        data = datasets.to_binary(records, current_sched, doses=None)
        fit = crm_fit(skel, data, prior_sd=float(ccfg["prior_sd"]))
        med = fit.median_probs()
        rec = crm_recommend(med, skel.theta)
        stop = crm_safety_stop(fit, skel.theta)
        report["posterior"] = {
            "skeleton": list(skel.probs),
            "doses": [{"dose": float(d), "median": float(m),
                       "p_above_target": fit.p_above(i, skel.theta)}
                      for i, (d, m) in enumerate(zip(doses, med))],
            "recommended_dose": float(doses[rec]),
            "safety_stop": bool(stop),
        }
    else:
        raise InputError(f"unknown model {args.model!r}")

    if args.format == "json":
        out = json.dumps(report, indent=2)
        if args.out:
            open(args.out, "w").write(out + "\n")
        else:
            print(out)
    else:
        print(f"# model={args.model} strata={args.strata} data={args.data} "
              f"seed={args.seed}")
        if args.model == "crm":
            p = report["posterior"]
            print(f"skeleton: {p['skeleton']}")
            for row in p["doses"]:
                print(f"{row['dose']:>8.3g} median={row['median']:.3f} "
                      f"P(pi>target)={row['p_above_target']:.3f}")
            print(f"recommended dose: {p['recommended_dose']}  "
                  f"safety stop: {p['safety_stop']}")
        else:
            _print_summary(report["posterior"])
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

_CSV_FIELDS = ["scenario", "method", "mode", "reps", "p_target", "p_over",
               "p_under", "p_none", "mean_patients", "prop_od_patients",
               "prop_dlt", "mean_dlt", "errors", "se_p_target", "se_p_over",
               "se_p_none", "se_mean_patients", "se_mean_dlt"]


def _parse_scenario_arg(arg) -> tuple:
    """Scenario source: builtin id spec ("3", "1-6", "1,3,9", "all") or a
    TOML/JSON file with a `scenarios` list; the file may also set `rules`
    and `seed`."""
    if str(arg).endswith((".toml", ".json")):
        cfg = _load_config(arg)
        rules = cfg.get("rules") or None
        seed = cfg.get("seed")
        scns = []
        for entry in cfg.get("scenarios", []):
            if isinstance(entry, (str, int)):
                key = str(entry)
                if key not in SCENARIOS:
                    raise InputError(f"unknown scenario id {key!r}")
                scns.append(SCENARIOS[key])
            else:
                scns.append(Scenario.from_dict(entry))
        if not scns:
            raise InputError(f"{arg}: no scenarios defined")
        return scns, rules, seed
    ids = []
    for part in str(arg).split(","):
        part = part.strip()
        if part == "all":
            ids.extend(SCENARIOS)
        elif "-" in part:
            lo, hi = part.split("-", 1)
            ids.extend(str(i) for i in range(int(lo), int(hi) + 1))
        elif part:
            ids.append(part)
    missing = [i for i in ids if i not in SCENARIOS]
    if missing:
        raise InputError(f"unknown scenario ids: {missing}")
    return [SCENARIOS[i] for i in ids], None, None


def _applicable(scn: Scenario, method: str) -> bool:
    if method in ("crm", "blrm"):
        return not scn.sequential
    if method == "blrm-map":
        return scn.sequential
    return True


def cmd_simulate(args) -> int:
    scns, file_rules, file_seed = _parse_scenario_arg(args.scenarios)
    seed = args.seed if args.seed is not None else (file_seed or 0)
    if args.all_models:
        methods = list(METHODS)
    else:
        methods = [args.model]
    results: list[Metrics] = []
    for scn in scns:
        rules = None
        if file_rules:
            rules = EscalationRules(doses=tuple(scn.doses),
                                    **{k: v for k, v in file_rules.items()
                                       if k != "doses"})
        for method in methods:
            if not _applicable(scn, method):
                if args.all_models:
                    continue
                raise InputError(
                    f"method {method} does not apply to scenario {scn.id} "
                    f"({'sequential' if scn.sequential else 'single-schedule'})")
            m = replicate(scn, method, rules=rules, reps=args.reps, seed=seed,
                          mode=args.mode, n_jobs=args.threads,
                          keep_transcript=args.reps == 1)
            results.append(m)
            print(f"scenario {m.scenario:>3} {m.method:>9}: "
                  f"TT={m.p_target:.3f} OD={m.p_over:.3f} none={m.p_none:.3f} "
                  f"N={m.mean_patients:.1f} DLT={m.mean_dlt:.1f}"
                  + (f" errors={m.errors}" if m.errors else ""))
            if args.reps == 1 and m.transcript is not None:
                print(json.dumps({"scenario": m.scenario, "method": m.method,
                                  "transcript": m.transcript}, indent=2))
    if args.out:
        with open(args.out, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=_CSV_FIELDS, extrasaction="ignore")
            wr.writeheader()
            for m in results:
                wr.writerow({k: m.to_dict().get(k, "") for k in _CSV_FIELDS})
        print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# sensitivity
# ---------------------------------------------------------------------------

def cmd_sensitivity(args) -> int:
    cfg = _merged(_load_config(args.config))
    records = datasets.load_dataset(args.data)
    if not records:
        raise InputError(f"{args.data}: no usable rows")
    te_grid = [float(x) for x in args.te.split(",")] if "," in args.te else None
    if te_grid is None:
        parts = args.te.split(":")
        if len(parts) == 3:
            lo, hi, step = (float(p) for p in parts)
            te_grid = list(np.arange(lo, hi + step / 2, step))
        else:
            te_grid = [float(args.te)]
    ref_cfg = cfg["reference"]
    ref_reg = DosingRegimen(float(ref_cfg["dose"]), float(ref_cfg["interval"]))
    rows = sensitivity_sweep(datasets.outcomes(records), ref_reg, te_grid,
                             timing_shift=args.timing,
                             median_p=float(cfg["prior"]["median_p"]),
                             prior_sd=float(cfg["prior"]["sd"]))
    out = sys.stdout if not args.out else open(args.out, "w")
    try:
        out.write("t_e\tdose\tinterval\tmedian\tlo50\thi50\tlo95\thi95\t"
                  "p_ud\tp_tt\tp_od\n")
        for row in rows:
            for r in row["summary"].rows:
                out.write(f"{row['t_e']:g}\t{r.regimen.dose:g}\t"
                          f"{r.regimen.interval:g}\t{r.median:.6f}\t"
                          f"{r.ci50[0]:.6f}\t{r.ci50[1]:.6f}\t"
                          f"{r.ci95[0]:.6f}\t{r.ci95[1]:.6f}\t"
                          f"{r.p_ud:.6f}\t{r.p_tt:.6f}\t{r.p_od:.6f}\n")
    finally:
        if args.out:
            out.close()
            print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# skeleton / serve
# ---------------------------------------------------------------------------

def cmd_skeleton(args) -> int:
    skel = lee_cheung_skeleton(args.levels, args.theta, args.delta,
                               nu=args.nu or (args.levels + 1) // 2)
    print(f"levels={args.levels} theta={args.theta} delta={args.delta} "
          f"nu={skel.nu}")
    print("full:   ", " ".join(f"{p:.6f}" for p in skel.probs))
    print("display:", " ".join(f"{p:.2f}" for p in skel.rounded().probs))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    app = create_app(state_dir=args.state_dir, token=args.token)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="titepk",
        description="Exposure-response dose-escalation toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="posterior report for a dataset CSV")
    pa.add_argument("data", help="dataset CSV path")
    pa.add_argument("--model", default="titepk",
                    choices=["titepk", "crm", "blrm", "blrm-map"])
    pa.add_argument("--config", default=None, help="TOML/JSON config file")
    pa.add_argument("--strata", default="single",
                    choices=["single", "sequential"])
    pa.add_argument("--seed", type=int, default=1234)
    pa.add_argument("--format", default="text", choices=["text", "json"])
    pa.add_argument("--out", default=None)
    pa.set_defaults(fn=cmd_analyze)

    ps = sub.add_parser("simulate", help="operating-characteristics campaign")
    ps.add_argument("scenarios",
                    help='builtin ids ("1-6", "9", "all") or a TOML/JSON file')
    ps.add_argument("--model", default="titepk", choices=list(METHODS))
    ps.add_argument("--all-models", action="store_true")
    ps.add_argument("--reps", type=int, default=1000)
    ps.add_argument("--seed", type=int, default=None)
    ps.add_argument("--mode", default="exposure-inverse",
                    choices=["exposure-inverse", "fixed-day"])
    ps.add_argument("--threads", type=int, default=1,
                    help="worker processes for replication")
    ps.add_argument("--out", default=None, help="results CSV path")
    ps.set_defaults(fn=cmd_simulate)

    pn = sub.add_parser("sensitivity",
                        help="effect half-life / DLT-timing sweep")
    pn.add_argument("data")
    pn.add_argument("--te", default="5:50:5",
                    help='grid "lo:hi:step" or comma list (hours)')
    pn.add_argument("--timing", default="observed",
                    choices=["early", "observed", "late"])
    pn.add_argument("--config", default=None)
    pn.add_argument("--out", default=None, help="TSV output path")
    pn.set_defaults(fn=cmd_sensitivity)

    pk_ = sub.add_parser("skeleton", help="indifference-interval CRM ladder")
    pk_.add_argument("levels", type=int)
    pk_.add_argument("--theta", type=float, default=0.30)
    pk_.add_argument("--delta", type=float, default=0.10)
    pk_.add_argument("--nu", type=int, default=None)
    pk_.set_defaults(fn=cmd_skeleton)

    pv = sub.add_parser("serve", help="run the HTTP service")
    pv.add_argument("--host", default="127.0.0.1")
    pv.add_argument("--port", type=int, default=8000)
    pv.add_argument("--state-dir", default=None,
                    help="directory for event logs and snapshots")
    pv.add_argument("--token", default=None,
                    help="require this bearer token on API calls")
    pv.set_defaults(fn=cmd_serve)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (InputError, datasets.DatasetError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
