"""Command-line front end. All quantities are SI: seconds, volts, Hz.

Exit codes: 0 success, 2 usage/config error, 3 data/range error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import lut as lutmod
from ._io import atomic_write_text
from .coincidence import CoincidenceMeasurement, correct, correct_with_eta
from .config import ConfigError, RunConfig, load_config
from .detector import EstimateError, estimate, simulate
from .events import RNG_NAME, SourceModel, child_seed, generate
from .experiment import PairSourceModel, generate_fringe_dataset, measure_accidentals
from .fringe import FitError, FringeDataset, analyze

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def _dump(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _config(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def cmd_simulate_detector(args):
    cfg = _config(args)
    rate = args.rate if args.rate is not None else cfg.source.get("rate")
    if rate is None:
        raise ConfigError("no input rate: give --rate or source.rate in the config")
    dark = cfg.source.get("dark_rate", 0.0)
    duration = args.duration if args.duration is not None else cfg.duration
    if duration is None:
        raise ConfigError("no duration: give --duration or duration in the config")
    seed = args.seed if args.seed is not None else cfg.seed
    effective = cfg.effective() | {"source": {"rate": rate, "dark_rate": dark}, "duration": duration, "seed": seed}
    gen_seed, sim_seed = child_seed(seed, 0), child_seed(seed, 1)
    seq = generate(SourceModel(rate=rate, dark_rate=dark), duration, gen_seed)
    trace = simulate(seq, cfg.detector, sim_seed)
    est = estimate(trace, cfg.detector)
    summary = est.to_dict() | {"source_rate": rate + dark, "dispositions": trace.counts(), "config": effective, "rng": RNG_NAME}
    header = "config: " + json.dumps(effective, sort_keys=True)
    if args.out:
        trace.write_csv(args.out, header)
    if args.summary:
        atomic_write_text(args.summary, _dump(summary))
    sys.stdout.write(_dump(summary))


def cmd_build_lut(args):
    cfg = _config(args)
    if not cfg.lut:
        raise ConfigError("config has no lut block")
    seed = args.seed if args.seed is not None else cfg.seed
    jobs = args.jobs or cfg.jobs
    table = lutmod.build(
        cfg.detector,
        cfg.lut["v_e_values"],
        cfg.lut["input_rates"],
        duration=cfg.lut.get("duration_per_cell"),
        events_per_cell=cfg.lut.get("events_per_cell"),
        seed=seed,
        jobs=jobs,
    )
    table.provenance["config"] = cfg.effective() | {"seed": seed}
    lutmod.save(table, args.out)
    if args.csv:
        lutmod.write_flat_csv(table, args.csv)
    n_valid = int((table.eta_grid == table.eta_grid).sum())
    print(f"wrote {args.out}: {table.shape[0]} x {table.shape[1]} grid, {n_valid} valid cells")


def cmd_lookup(args):
    table = lutmod.load(args.lut)
    print(repr(table.lookup_eta(args.ve, args.rate)))


def cmd_correct(args):
    m = CoincidenceMeasurement(args.s1, args.s2, args.tau1, args.tau2, args.craw, args.ve1, args.ve2)
    if args.eta1 is not None or args.eta2 is not None:
        if args.eta1 is None or args.eta2 is None:
            raise ConfigError("give both --eta1 and --eta2, or LUTs")
        res = correct_with_eta(m, args.eta1, args.eta2)
    else:
        if not args.lut1:
            raise ConfigError("give --lut1 (and optionally --lut2) or --eta1/--eta2")
        t1 = lutmod.load(args.lut1)
        t2 = lutmod.load(args.lut2) if args.lut2 else t1
        res = correct(m, t1, t2)
    doc = res.to_dict()
    if args.json:
        sys.stdout.write(_dump(doc))
    else:
        for key in ("eta1", "eta2", "c_acc_naive", "c_acc_corrected", "c_corrected"):
            print(f"{key:16s} {doc[key]!r}")
        if res.negative:
            print("warning: corrected coincidence rate is negative (reported unclamped)")


def cmd_generate_fringe(args):
    cfg = _config(args)
    if not cfg.fringe:
        raise ConfigError("config has no fringe block")
    fr = cfg.fringe
    seed = args.seed if args.seed is not None else cfg.seed
    src = PairSourceModel(fr["pair_rate"], fr["background1"], fr["background2"], fr["true_visibility"], fr["phase_deg"])
    ds = generate_fringe_dataset(
        src, cfg.detector, cfg.arm2, fr["angles"], fr["tau1"], fr["tau2"], fr["duration_per_angle"], seed,
        jobs=args.jobs or cfg.jobs,
    )
    ds.write_csv(args.out)
    print(f"wrote {args.out}: {len(ds.points)} angles")


def cmd_measure_accidentals(args):
    cfg = _config(args)
    seed = args.seed if args.seed is not None else cfg.seed
    res = measure_accidentals(cfg.detector, cfg.arm2, args.rate1, args.rate2, args.tau1, args.tau2, args.duration, seed)
    sys.stdout.write(_dump({
        "measured_rate": res.measured_rate, "stderr": res.stderr, "s1": res.s1, "s2": res.s2,
        "coincidences": res.coincidences, "duration": res.duration,
    }))


def cmd_fit_visibility(args):
    ds = FringeDataset.read_csv(args.data, tau1=args.tau1, tau2=args.tau2, v_e1=args.ve1, v_e2=args.ve2)
    if args.eta1 is not None and args.eta2 is not None:
        result = analyze(ds, None, eta=(args.eta1, args.eta2))
    else:
        if not args.lut1:
            raise ConfigError("give --lut1 (and optionally --lut2) or --eta1/--eta2")
        t1 = lutmod.load(args.lut1)
        t2 = lutmod.load(args.lut2) if args.lut2 else t1
        result = analyze(ds, t1, t2)
    doc = result.to_dict()
    if args.json:
        sys.stdout.write(_dump(doc))
    else:
        for name in ("fit_raw", "fit_naive", "fit_corrected"):
            f = doc[name]
            flag = "  (visibility > 1)" if f["unphysical"] else ""
            print(
                f"{name:14s} V = {f['visibility']:.4f} +- {f['uncertainties']['visibility']:.4f}  "
                f"phase = {f['phase']:.2f} deg  offset = {f['offset']:.6g} Hz{flag}"
            )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apdcoinc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-detector", help="simulate one detector on a Poisson stream")
    p.add_argument("--config")
    p.add_argument("--rate", type=float, help="input carrier rate [Hz]")
    p.add_argument("--duration", type=float, help="[s]")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="trace CSV path")
    p.add_argument("--summary", help="also write the JSON summary here")
    p.set_defaults(func=cmd_simulate_detector)

    p = sub.add_parser("build-lut", help="tabulate the duty cycle over (v_e, rate)")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", help="flat (v_e, observed_rate, eta) export")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_build_lut)

    p = sub.add_parser("lookup", help="interpolate eta from a table")
    p.add_argument("--lut", required=True)
    p.add_argument("--ve", type=float, required=True)
    p.add_argument("--rate", type=float, required=True, help="observed rate [Hz]")
    p.set_defaults(func=cmd_lookup)

    p = sub.add_parser("correct", help="accidental-coincidence correction for one measurement")
    for name in ("s1", "s2", "tau1", "tau2", "craw"):
        p.add_argument(f"--{name}", type=float, required=True)
    p.add_argument("--ve1", type=float)
    p.add_argument("--ve2", type=float)
    p.add_argument("--lut1")
    p.add_argument("--lut2")
    p.add_argument("--eta1", type=float)
    p.add_argument("--eta2", type=float)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("generate-fringe", help="synthetic polarization-correlation dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int)
    p.set_defaults(func=cmd_generate_fringe)

    p = sub.add_parser("measure-accidentals", help="AND-gate accidentals for two independent arms")
    p.add_argument("--config")
    for name in ("rate1", "rate2", "tau1", "tau2", "duration"):
        p.add_argument(f"--{name}", type=float, required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_measure_accidentals)

    p = sub.add_parser("fit-visibility", help="fit raw, naive- and duty-cycle-corrected fringes")
    p.add_argument("--data", required=True)
    p.add_argument("--lut1")
    p.add_argument("--lut2")
    p.add_argument("--eta1", type=float)
    p.add_argument("--eta2", type=float)
    p.add_argument("--tau1", type=float)
    p.add_argument("--tau2", type=float)
    p.add_argument("--ve1", type=float)
    p.add_argument("--ve2", type=float)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_fit_visibility)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except FitError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (lutmod.LUTError, EstimateError, ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
