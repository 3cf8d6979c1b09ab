"""Command-line front end: run a sweep, write a CSV.

Subcommands: uncoded | coded | mse | mismatch | floor | components.
Flags can also come from a key=value config file (--config); explicit
command-line flags win.  Exit code 0 on success, 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import sys

from . import harness

_MODES = ("uncoded", "coded", "mse", "mismatch", "floor", "components")


class ConfigError(ValueError):
    pass


def _parse_snr(text: str) -> tuple[float, ...]:
    """'a:b:step' inclusive grid, or a comma list, or a single value."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"bad --snr {text!r}; want a:b:step")
        a, b, step = (float(p) for p in parts)
        if step <= 0 or b < a:
            raise ConfigError(f"bad --snr range {text!r}")
        grid = []
        v = a
        while v <= b + 1e-9:
            grid.append(round(v, 10))
            v += step
        return tuple(grid)
    return tuple(float(p) for p in text.split(","))


def _parse_schedules(text: str) -> tuple[tuple[int, int], ...]:
    out = []
    for part in text.split(","):
        bits = part.split(":")
        if len(bits) != 2:
            raise ConfigError(f"bad --schedule {part!r}; want IDET:IDEC")
        out.append((int(bits[0]), int(bits[1])))
    return tuple(out)


def _parse_list(cast):
    return lambda text: tuple(cast(p) for p in text.split(","))


_OPTIONS = {
    # name: (converter, help)
    "snr": (_parse_snr, "SNR grid in dB: a:b:step, comma list, or one value"),
    "sir_db": (float, "signal-to-interference ratio in dB"),
    "alpha": (_parse_list(float), "true channel correlation (comma list sweeps mismatch)"),
    "alpha_assumed": (float, "receiver's assumed correlation (default: true alpha)"),
    "channel": (str, "channel model: gm | clarke"),
    "fd": (float, "normalized Doppler for the clarke channel"),
    "pilot_period": (int, "one pilot every this many symbols"),
    "frame_len": (int, "symbols per frame"),
    "cap": (int, "maximum mixture components"),
    "caps": (_parse_list(int), "cap list for the components sweep"),
    "trials": (int, "Monte Carlo trials per grid point"),
    "seed": (int, "root seed"),
    "schedule": (_parse_schedules, "IDET:IDEC pairs, comma separated"),
    "receivers": (_parse_list(str), "subset of bp,mmse,genie,full_csi"),
    "no_interferer": (lambda s: s.lower() in ("1", "true", "yes"), "disable the interferer"),
    "workers": (int, "worker process cap (default: RX_THREADS or CPU count)"),
    "out": (str, "output CSV path (default: stdout)"),
}

_DEFAULTS = {
    "snr": (20.0,),
    "sir_db": 3.0,
    "alpha": (0.99,),
    "alpha_assumed": None,
    "channel": "gm",
    "fd": 0.02,
    "pilot_period": 4,
    "frame_len": 200,
    "cap": 8,
    "caps": (1, 2, 4, 8),
    "trials": 100,
    "seed": 0,
    "schedule": ((5, 10), (1, 50)),
    "receivers": ("bp", "mmse", "genie", "full_csi"),
    "no_interferer": False,
    "workers": None,
    "out": None,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmrx", description=__doc__)
    sub = parser.add_subparsers(dest="mode", required=True, metavar="|".join(_MODES))
    for mode in _MODES:
        p = sub.add_parser(mode)
        p.add_argument("--config", help="key=value file; flags override")
        for name, (conv, help_text) in _OPTIONS.items():
            flag = "--" + name.replace("_", "-")
            p.add_argument(flag, dest=name, type=str, default=None, help=help_text)
    return parser


def _read_config_file(path: str) -> dict[str, str]:
    values = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                key, _, val = line.partition("=")
                values[key.strip().replace("-", "_")] = val.strip()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    unknown = set(values) - set(_OPTIONS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return values


def _resolve(args: argparse.Namespace) -> dict:
    raw = {name: getattr(args, name) for name in _OPTIONS}
    if args.config:
        for key, val in _read_config_file(args.config).items():
            if raw[key] is None:
                raw[key] = val
    settings = {}
    for name, (conv, _) in _OPTIONS.items():
        if raw[name] is None:
            settings[name] = _DEFAULTS[name]
        else:
            try:
                settings[name] = conv(raw[name])
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad value for --{name.replace('_', '-')}: {exc}") from exc
    return settings


def _experiment_config(settings: dict, alpha: float) -> harness.ExperimentConfig:
    kind = {"gm": "gauss_markov", "gauss_markov": "gauss_markov", "clarke": "clarke"}.get(
        settings["channel"]
    )
    if kind is None:
        raise ConfigError(f"unknown channel {settings['channel']!r}")
    try:
        return harness.ExperimentConfig(
            snr_grid_db=settings["snr"],
            sir_db=settings["sir_db"],
            alpha=alpha,
            alpha_assumed=settings["alpha_assumed"],
            channel_kind=kind,
            fd_norm=settings["fd"],
            pilot_period=settings["pilot_period"],
            frame_len=settings["frame_len"],
            cap=settings["cap"],
            caps=settings["caps"],
            trials=settings["trials"],
            seed=settings["seed"],
            receivers=settings["receivers"],
            schedules=settings["schedule"],
            no_interferer=settings["no_interferer"],
            workers=settings["workers"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cli_main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        settings = _resolve(args)
        alphas = settings["alpha"]
        rows = []
        if args.mode == "mismatch":
            for alpha in alphas:
                rows.extend(harness.run_mismatch_sweep(_experiment_config(settings, alpha)))
        else:
            if len(alphas) != 1:
                raise ConfigError(f"mode {args.mode!r} takes a single --alpha")
            cfg = _experiment_config(settings, alphas[0])
            runner = {
                "uncoded": harness.run_uncoded_sweep,
                "coded": harness.run_coded_sweep,
                "mse": harness.run_mse_sweep,
                "floor": harness.run_floor_curve,
                "components": harness.run_components_sweep,
            }[args.mode]
            rows = runner(cfg)
    except ConfigError as exc:
        print(f"gmrx: {exc}", file=sys.stderr)
        return 2
    text = harness.format_csv(rows)
    if settings["out"]:
        with open(settings["out"], "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
