"""Command-line entry point: ``stopgo <command> [options]``.

Exit codes: 0 ok, 2 config error, 3 IO or input-format error,
4 training divergence or a crash during evaluation.
"""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__, kernels
from .config import ConfigError, RunConfig, load_config
from .ddpg import PolicyBundle, TrainingDiverged, train
from .metrics import compare_scenarios
from .sim import PlatoonEnv, Trajectory, rollout
from .trajdata import (
    PATTERNS,
    CongestionFilterConfig,
    LeadProfile,
    TrackFormatError,
    filter_congested,
    ingest_tracks,
    stitch_segments,
    synth_profile,
)

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_FAIL = 0, 2, 3, 4
FROZEN_CONFIG_NAME = "resolved_config.ini"

# convenience flags that map straight onto config keys
_REWARD_FLAGS = ("alpha", "beta", "gamma_w", "delta", "v_ept", "h_c")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# -- helpers ------------------------------------------------------------------

def _resolve_config(args):
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        overrides[key.strip()] = value
    for name in _REWARD_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            overrides[f"reward.{name}"] = repr(value)
    if getattr(args, "seed", None) is not None:
        overrides["run.seed"] = str(args.seed)
    if getattr(args, "steps", None) is not None:
        overrides["ddpg.train_steps"] = str(args.steps)
    return cfg.with_values(overrides) if overrides else cfg


def _read_profile(path):
    if not Path(path).is_file():
        raise CliError(f"profile not found: {path}", EXIT_IO)
    return LeadProfile.read_csv(path)


def _track_files(path):
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("*_tracks.csv")) or sorted(p.glob("*.csv"))
        if not files:
            raise CliError(f"no track files in {path}", EXIT_IO)
        return files
    if not p.is_file():
        raise CliError(f"tracks path not found: {path}", EXIT_IO)
    return [p]


def _check_normalization(bundle, cfg):
    sim, dd = cfg.sim_config(), cfg.ddpg_config()
    expected = {
        "action_bounds": [float(sim.action_low), float(sim.action_high)],
        "state_scale": [float(v) for v in dd.state_scale],
        "state_offset": [float(v) for v in dd.state_offset],
        "action_scale": float(dd.action_scale),
    }
    got = bundle.header()
    for key, want in expected.items():
        if got[key] != want:
            raise ConfigError(f"policy {key} {got[key]} does not match config {want}")


def _eval_horizon(cfg, profile, requested):
    limit = len(profile) - 1
    h = requested if requested is not None else cfg.run.eval_horizon
    if not h:
        return limit
    if h > limit:
        raise CliError(f"horizon {h} exceeds profile length ({limit} steps available)", EXIT_CONFIG)
    return h


def _scenario(job):
    cfg, profile, policy_bytes, horizon = job
    bundle = PolicyBundle.from_bytes(policy_bytes) if policy_bytes is not None else None
    env = PlatoonEnv(cfg.sim_config(), profile, cfg.krauss, baseline=bundle is None, record=True)
    return rollout(env, bundle, horizon=horizon)


# -- commands -----------------------------------------------------------------

def cmd_ingest(args):
    filt = CongestionFilterConfig(args.max_speed, args.min_std)
    segments = []
    for f in _track_files(args.tracks):
        segments.extend(ingest_tracks(f, args.rate))
    kept = filter_congested(segments, filt)
    if not kept:
        raise CliError(f"no congested segments in {args.tracks} "
                       f"(cap {filt.max_speed_cap} m/s, min std {filt.min_speed_std} m/s)", EXIT_IO)
    profile = stitch_segments(kept, args.dt, args.ramp)
    profile.write_csv(args.out)
    print(f"ingest: {len(kept)} of {len(segments)} segments kept, "
          f"{len(profile)} samples ({profile.duration:.1f} s) -> {args.out}")
    return EXIT_OK


def cmd_synth_profile(args):
    profile = synth_profile(args.pattern, args.base, args.amp, args.period,
                            args.duration, args.dt, args.seed)
    profile.write_csv(args.out)
    print(f"synth-profile: {args.pattern}, {len(profile)} samples -> {args.out}")
    return EXIT_OK


def cmd_train(args):
    cfg = _resolve_config(args)
    profile = _read_profile(args.profile)
    sim = cfg.sim_config()
    if abs(profile.dt - sim.dt) > 1e-9:
        raise ConfigError(f"profile dt {profile.dt} differs from [sim] dt {sim.dt}")
    out_policy = Path(args.out_policy or Path(cfg.run.out_dir) / "policy.bin")
    out_log = Path(args.log or out_policy.with_name("train_log.csv"))
    out_policy.parent.mkdir(parents=True, exist_ok=True)
    out_log.parent.mkdir(parents=True, exist_ok=True)
    (out_policy.parent / FROZEN_CONFIG_NAME).write_text(cfg.to_ini())

    try:
        result = train(sim, profile, cfg.ddpg_config(), cfg.reward, cfg.krauss,
                       probe_window=cfg.rolling.window)
    except TrainingDiverged as exc:
        if exc.result is not None:
            exc.result.write_log(out_log)
            last = exc.result.log[-1] if exc.result.log else None
            tail = f"; last log row: {last}" if last else ""
        else:
            tail = ""
        raise CliError(f"training diverged: {exc}{tail}", EXIT_FAIL) from None
    result.bundle.save(out_policy)
    result.write_log(out_log)
    print(f"train: {len(result.log)} episodes -> {out_policy}, log {out_log}")
    return EXIT_OK


def cmd_eval(args):
    cfg = _resolve_config(args)
    profile = _read_profile(args.profile)
    horizon = _eval_horizon(cfg, profile, args.horizon)
    jobs = []
    if args.baseline:
        jobs.append((args.out, None))
    else:
        if not args.policy:
            raise CliError("eval needs --policy unless --baseline is given", EXIT_CONFIG)
        try:
            bundle = PolicyBundle.load(args.policy)
        except FileNotFoundError:
            raise CliError(f"policy not found: {args.policy}", EXIT_IO) from None
        _check_normalization(bundle, cfg)
        jobs.append((args.out, bundle.to_bytes()))
        if args.baseline_out:
            jobs.append((args.baseline_out, None))
    work = [(cfg, profile, blob, horizon) for _, blob in jobs]
    if args.jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(min(args.jobs, len(work))) as ex:
            trajs = list(ex.map(_scenario, work))
    else:
        trajs = [_scenario(w) for w in work]
    crashed = False
    for (path, blob), traj in zip(jobs, trajs):
        traj.write_csv(path)
        kind = "baseline" if blob is None else "policy"
        state = "CRASH" if traj.crashed else "ok"
        print(f"eval: {kind} {len(traj.t)} steps x {traj.n_vehicles} vehicles [{state}] -> {path}")
        crashed |= traj.crashed
    return EXIT_FAIL if crashed else EXIT_OK


def cmd_compare(args):
    cfg = _resolve_config(args)
    rolling = cfg.rolling
    if args.window is not None:
        rolling = cfg.with_values({"rolling.window": str(args.window)}).rolling
    for p in (args.test, args.base):
        if not Path(p).is_file():
            raise CliError(f"trajectory log not found: {p}", EXIT_IO)
    test, base = Trajectory.read_csv(args.test), Trajectory.read_csv(args.base)
    report = compare_scenarios(test, base, rolling, cfg.fuel, cfg.sim.vehicle_length, jobs=args.jobs)
    report.write(args.out)
    print(_table(report))
    return EXIT_OK


def _table(report):
    head = "vehicle " + " ".join(f"{v:>7d}" for v in report.vehicles)
    rows = [head]
    for name, vals in (("test", report.sbar_test), ("base", report.sbar_base),
                       ("change%", report.sbar_pct)):
        rows.append(f"{name:<8}" + " ".join(f"{v:7.2f}" for v in vals))
    rows.append(f"ego gap {report.ego_gap_mean:.2f} +- {report.ego_gap_std:.2f} m, "
                f"baseline {report.base_gap_mean:.2f} +- {report.base_gap_std:.2f} m; "
                f"crash steps {report.crashes_test}")
    return "\n".join(rows)


def cmd_print_config(args):
    sys.stdout.write(_resolve_config(args).to_ini())
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def _add_config_flags(p, reward=False):
    p.add_argument("--config", help="INI run config (defaults apply to missing keys)")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                   help="override one config value; repeatable")
    p.add_argument("--seed", type=int, help="top-level seed (overrides [run] seed)")
    if reward:
        for name in _REWARD_FLAGS:
            p.add_argument("--" + name.replace("_", "-"), dest=name, type=float,
                           help=f"reward {name}")


def build_parser():
    parser = argparse.ArgumentParser(prog="stopgo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__} (kernels: {kernels.BACKEND})")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0,
                        help="log progress (-vv for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="build a lead profile from drone track files")
    p.add_argument("--tracks", required=True, help="tracks CSV or a directory of them")
    p.add_argument("--rate", type=float, default=25.0, help="frame rate in Hz")
    p.add_argument("--max-speed", type=float, default=18.0)
    p.add_argument("--min-std", type=float, default=2.0)
    p.add_argument("--ramp", type=float, default=0.2, help="stitching ramp in m/s^2")
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth-profile", parents=[common], help="write a synthetic lead profile")
    p.add_argument("--pattern", choices=PATTERNS, default="sine")
    p.add_argument("--base", type=float, default=5.0)
    p.add_argument("--amp", type=float, default=3.0)
    p.add_argument("--period", type=float, default=60.0)
    p.add_argument("--duration", type=float, default=7200.0)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_profile)

    p = sub.add_parser("train", parents=[common], help="train a policy on a lead profile")
    p.add_argument("--profile", required=True)
    p.add_argument("--out-policy")
    p.add_argument("--log")
    p.add_argument("--steps", type=int, help="environment steps (overrides [ddpg] train_steps)")
    _add_config_flags(p, reward=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="roll out a policy or the all-human baseline")
    p.add_argument("--profile", required=True)
    p.add_argument("--policy")
    p.add_argument("--baseline", action="store_true", help="all-human platoon, no policy")
    p.add_argument("--baseline-out", help="also run the baseline and write it here")
    p.add_argument("--horizon", type=int, help="steps to simulate (default: whole profile)")
    p.add_argument("--jobs", type=int, default=1, help="parallel scenario runs")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", parents=[common], help="per-vehicle report of a test log against a baseline")
    p.add_argument("--test", required=True)
    p.add_argument("--base", required=True)
    p.add_argument("--window", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("print-config", parents=[common], help="print the fully resolved configuration")
    _add_config_flags(p, reward=True)
    p.set_defaults(func=cmd_print_config)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"stopgo {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"stopgo {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, TrackFormatError) as exc:
        print(f"stopgo {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"stopgo {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
