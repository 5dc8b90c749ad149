"""Experiment harness: seeded decoding trials, SE tracking, threshold tables,
potential curves, and spatially coupled runs, all emitted as CSV.

Configuration comes from CLI flags, optionally backed by a flat key=value
config file (flags win). Every CSV starts with a comment line echoing the
full effective config and the toolkit version, so a file is reproducible
from its own header. Exit codes: 0 success, 2 configuration error, 3
numerical failure.
"""

import argparse
import math
import sys

import numpy as np

from . import __version__
from .channels import capacity, parse_channel, sample_output
from .gamp import GampConfig, GampDivergenceError, decode
from .message import CodeParams, random_message, to_dense
from .operators import parse_operator, parse_operator_spec
from .potential import default_e_grid, potential_curve, r_pot
from .se import r_gamp, se_run

__all__ = ["main", "cmd_decode_trials", "cmd_se_track", "cmd_threshold", "cmd_potential", "cmd_coupled"]


class CliConfigError(Exception):
    pass


def _fmt(x):
    if isinstance(x, float):
        return format(x, ".10g")
    if isinstance(x, (list, tuple)):
        return ",".join(_fmt(v) for v in x)
    return str(x)


def _parse_int_list(text):
    return [int(tok) for tok in str(text).split(",") if tok.strip()]


def _parse_bracket(text):
    parts = [float(tok) for tok in str(text).split(",") if tok.strip()]
    if len(parts) != 2:
        raise ValueError("expected two comma-separated values, got %r" % (text,))
    return (parts[0], parts[1])


# name -> (converter from string, default); None default means required
_COMMON_FIELDS = {
    "channel": (str, None),
    "operator": (str, "gaussian"),
    "L": (int, None),
    "B": (int, None),
    "R": (float, None),
    "trials": (int, 100),
    "seed": (int, 0),
    "t_max": (int, 200),
    "stop_u": (float, 1e-7),
    "damping": (float, 0.0),
    "ser_success": (float, 1e-2),
    "se_samples": (int, 20000),
    "out": (str, ""),
}

_FIELDS = {
    "decode-trials": dict(_COMMON_FIELDS),
    "se-track": dict(_COMMON_FIELDS),
    "coupled": dict(_COMMON_FIELDS),
    "threshold": dict(
        _COMMON_FIELDS,
        B_list=(_parse_int_list, None),
        rate_bracket=(_parse_bracket, None),
        rate_resolution=(float, 0.01),
        se_resolution=(float, 1e-3),
        skip_pot=(int, 0),
    ),
    "potential": dict(_COMMON_FIELDS, e_points=(int, 0)),
}
for _cmd in ("threshold",):
    _FIELDS[_cmd].pop("R")  # threshold sweeps rates over the bracket
    _FIELDS[_cmd].pop("B")  # per-B rows come from B_list instead
for _cmd in ("potential",):
    for _k in ("trials", "t_max", "stop_u", "damping", "ser_success", "operator", "L"):
        _FIELDS[_cmd].pop(_k)


def _read_config_file(path):
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise CliConfigError("cannot read config file %s: %s" % (path, exc)) from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliConfigError("%s:%d: expected key=value, got %r" % (path, lineno, line))
        values[key.strip().replace("-", "_")] = (value.strip(), lineno)
    return values


def _merge_config(cmd, args):
    fields = _FIELDS[cmd]
    file_values = _read_config_file(args.config) if args.config else {}
    cfg = {}
    for name, (conv, default) in fields.items():
        cli_val = getattr(args, name, None)
        if cli_val is not None:
            cfg[name] = cli_val
            continue
        if name in file_values:
            raw, lineno = file_values[name]
            try:
                cfg[name] = conv(raw)
            except (ValueError, TypeError) as exc:
                raise CliConfigError(
                    "%s:%d: bad value for %s: %s" % (args.config, lineno, name, exc)
                ) from None
            continue
        if default is None:
            raise CliConfigError("missing required option --%s" % name.replace("_", "-"))
        cfg[name] = default
    unknown = set(file_values) - set(fields)
    if unknown:
        raise CliConfigError("unknown config keys for %s: %s" % (cmd, ", ".join(sorted(unknown))))
    _validate_cfg(cmd, cfg)
    return cfg


def _validate_cfg(cmd, cfg):
    """Reject malformed specs and impossible code dimensions up front."""
    try:
        if "channel" in cfg:
            parse_channel(cfg["channel"])
        if "operator" in cfg:
            parse_operator_spec(cfg["operator"])
        if "L" in cfg and "B" in cfg and "R" in cfg:
            _code_params(cfg)
        elif "B" in cfg and cfg.get("B") is not None and cmd == "potential":
            CodeParams(L=1, B=cfg["B"], M=1)
        if cmd == "threshold":
            lo, hi = cfg["rate_bracket"]
            if not (0 < lo < hi):
                raise ValueError("rate bracket must satisfy 0 < lo < hi, got (%g, %g)" % (lo, hi))
            for b_val in cfg["B_list"]:
                CodeParams(L=cfg["L"], B=b_val, M=1)
    except ValueError as exc:
        raise CliConfigError(str(exc)) from None


def _code_params(cfg):
    m = int(round(cfg["L"] * math.log2(cfg["B"]) / cfg["R"]))
    if m < 1:
        raise CliConfigError("derived codeword length M < 1; lower the rate")
    return CodeParams(L=cfg["L"], B=cfg["B"], M=m)


def _gamp_config(cfg):
    return GampConfig(t_max=cfg["t_max"], u=cfg["stop_u"], damping=cfg["damping"])


def _header_line(cmd, cfg, extra=None):
    items = ["cmd=%s" % cmd]
    items += ["%s=%s" % (k, _fmt(v)) for k, v in sorted(cfg.items()) if k != "out"]
    if extra:
        items += ["%s=%s" % (k, _fmt(v)) for k, v in extra.items()]
    return "# sscodes v%s | %s" % (__version__, " | ".join(items))


def _emit(cfg, lines):
    text = "\n".join(lines) + "\n"
    if cfg.get("out"):
        with open(cfg["out"], "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _run_single_trial(ch, op_spec, params, gcfg, master_seed, trial):
    """One encode -> channel -> decode pipeline on its own derived seed streams."""
    ss = np.random.SeedSequence([master_seed, trial])
    op_ss, msg_ss, noise_ss = ss.spawn(3)
    op = parse_operator(op_spec, params, op_ss)
    msg = random_message(params, np.random.default_rng(msg_ss))
    z = op.forward(to_dense(msg))
    y = sample_output(ch, z, np.random.default_rng(noise_ss))
    _, trajectory = decode(y, op, params, ch, gcfg, truth=msg)
    return trajectory


def _trial_rows(cfg, early_stop=False):
    """Per-trial summaries; optionally stop once the >=half verdict is decided."""
    ch = parse_channel(cfg["channel"])
    params = _code_params(cfg)
    gcfg = _gamp_config(cfg)
    trials = cfg["trials"]
    need = math.ceil(trials / 2) if trials else 0  # decoded iff successes reach half
    rows = []
    successes = 0
    failures = 0
    for trial in range(trials):
        trajectory = _run_single_trial(ch, cfg["operator"], params, gcfg, cfg["seed"], trial)
        last = trajectory[-1]
        decoded = last.ser <= cfg["ser_success"]
        successes += int(decoded)
        failures += int(not decoded)
        rows.append((trial, last.t, last.mse, last.ser, int(decoded), trajectory))
        if early_stop and (successes >= need or failures > trials - need):
            break
    return rows, successes


def cmd_decode_trials(cfg, cmd_name="decode-trials"):
    rows, successes = _trial_rows(cfg)
    params = _code_params(cfg)
    lines = [_header_line(cmd_name, cfg, {"M": params.M}), "seed,iterations,mse,ser,decoded"]
    for trial, iters, mse_val, ser_val, decoded, _ in rows:
        lines.append("%d,%d,%s,%s,%d" % (trial, iters, _fmt(mse_val), _fmt(ser_val), decoded))
    if cfg["trials"] > 0:
        lines.append("# decoded %d/%d" % (successes, cfg["trials"]))
    _emit(cfg, lines)
    return 0


def cmd_coupled(cfg):
    if not cfg["operator"].startswith("coupled:"):
        raise CliConfigError("the coupled command needs --operator coupled:<base>,...")
    return cmd_decode_trials(cfg, cmd_name="coupled")


def cmd_se_track(cfg):
    ch = parse_channel(cfg["channel"])
    params = _code_params(cfg)
    rows, _ = _trial_rows(cfg)
    if not rows:
        raise CliConfigError("se-track needs trials >= 1")
    mse_lists = [[pt.mse for pt in row[5]] for row in rows]
    t_len = max(len(m) for m in mse_lists)
    padded = np.array([m + [m[-1]] * (t_len - len(m)) for m in mse_lists])
    means = padded.mean(axis=0)
    stderrs = padded.std(axis=0, ddof=1) / math.sqrt(len(rows)) if len(rows) > 1 else np.zeros(t_len)
    traj = se_run(ch, cfg["R"], cfg["B"], E0=1.0, n_samples=cfg["se_samples"], rng=cfg["seed"])
    e_values = list(traj.E_values) + [traj.fixed_point] * max(0, t_len + 1 - len(traj.E_values))
    lines = [_header_line("se-track", cfg, {"M": params.M}), "t,mse_gamp_mean,mse_gamp_stderr,E_se"]
    lines.append("0,%s,%s,%s" % (_fmt(1.0), _fmt(0.0), _fmt(e_values[0])))
    for t in range(1, t_len + 1):
        lines.append("%d,%s,%s,%s" % (t, _fmt(means[t - 1]), _fmt(stderrs[t - 1]), _fmt(e_values[t])))
    _emit(cfg, lines)
    return 0


def _empirical_threshold(cfg, b_val, bracket, resolution):
    """Highest rate with at least half the instances decoded, by bisection."""

    def decodes(rate):
        sub = dict(cfg, B=b_val, R=rate)
        _, successes = _trial_rows(sub, early_stop=True)
        return successes >= math.ceil(cfg["trials"] / 2)

    lo, hi = bracket
    if not decodes(lo):
        raise ValueError("empirical bracket lower end R=%g does not decode at B=%d" % (lo, b_val))
    if decodes(hi):
        raise ValueError("empirical bracket upper end R=%g decodes at B=%d" % (hi, b_val))
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if decodes(mid):
            lo = mid
        else:
            hi = mid
    return lo


def cmd_threshold(cfg):
    ch = parse_channel(cfg["channel"])
    lines = [
        _header_line("threshold", cfg),
        "B,R_gamp_empirical,R_gamp_se,R_pot,capacity",
    ]
    for b_val in cfg["B_list"]:
        r_emp = _empirical_threshold(cfg, b_val, cfg["rate_bracket"], cfg["rate_resolution"])
        r_se = r_gamp(
            ch,
            b_val,
            cfg["rate_bracket"],
            resolution=cfg["se_resolution"],
            n_samples=cfg["se_samples"],
            rng=cfg["seed"],
        )
        if cfg["skip_pot"]:
            r_p = math.nan
        else:
            r_p = r_pot(
                ch,
                b_val,
                (cfg["rate_bracket"][0], min(cfg["rate_bracket"][1], capacity(ch) - 1e-3)),
                n_samples=cfg["se_samples"],
                rng=cfg["seed"],
            )
        lines.append(
            "%d,%s,%s,%s,%s" % (b_val, _fmt(r_emp), _fmt(r_se), _fmt(r_p), _fmt(capacity(ch)))
        )
    _emit(cfg, lines)
    return 0


def cmd_potential(cfg):
    ch = parse_channel(cfg["channel"])
    if cfg["e_points"]:
        n = cfg["e_points"]
        n_log = max(n * 4 // 7, 1)
        grid = np.concatenate(
            [np.geomspace(1e-6, 0.1, n_log), np.linspace(0.1, 1.0, n - n_log + 1)[1:]]
        )
        grid = grid[:n] if len(grid) > n else grid
    else:
        grid = default_e_grid()
    curve = potential_curve(ch, cfg["R"], cfg["B"], e_grid=grid, n_samples=cfg["se_samples"], rng=cfg["seed"])
    lines = [_header_line("potential", cfg), "channel,param,B,R,E,F_u"]
    for e_val, f_val in curve.grid:
        lines.append(
            "%s,%s,%d,%s,%s,%s" % (ch.kind, _fmt(ch.param), cfg["B"], _fmt(cfg["R"]), _fmt(e_val), _fmt(f_val))
        )
    for e_min, f_min in curve.minima:
        lines.append("# minimum E=%s F_u=%s" % (_fmt(e_min), _fmt(f_min)))
    lines.append("# classification=%s" % curve.classification)
    _emit(cfg, lines)
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(prog="sscodes", description="Sparse superposition code experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    specs = {
        "decode-trials": "run independent encode/decode trials and report per-trial results",
        "se-track": "compare per-iteration decoder MSE with the state-evolution prediction",
        "threshold": "tabulate empirical, state-evolution, and potential thresholds per B",
        "potential": "sample the potential curve on an E grid and locate its minima",
        "coupled": "decoding trials for spatially coupled operators",
    }
    for cmd, help_text in specs.items():
        p = sub.add_parser(cmd, help=help_text)
        p.add_argument("--config", help="flat key=value config file; flags win")
        fields = _FIELDS[cmd]
        for name in fields:
            flag = "--" + name.replace("_", "-")
            conv, _default = fields[name]
            p.add_argument(flag, dest=name, type=conv if conv is not str else str, default=None)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge_config(args.command, args)
    except CliConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    handlers = {
        "decode-trials": cmd_decode_trials,
        "se-track": cmd_se_track,
        "threshold": cmd_threshold,
        "potential": cmd_potential,
        "coupled": cmd_coupled,
    }
    try:
        return handlers[args.command](cfg)
    except CliConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except (GampDivergenceError, ValueError, RuntimeError, FloatingPointError, ArithmeticError) as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
