"""Command-line front end: binds configs to experiments, emits figure-ready
tables (CSV or JSON) with a full provenance header.

Commands: spectrum, resonant-walk, plan, transfer, qubit, dissipation.
Each output embeds a one-line JSON metadata comment carrying the resolved
config, seed, tool version and every assumed parameter, so any file can be
regenerated from its own header. Outputs contain no timestamps: rerunning
with the same flags and seed is bit-identical. Files are written atomically
(temp file in the target directory, then rename).

Exit codes: 0 success, 2 config error, 3 physics-regime refusal (doublet
unresolved, closed form inapplicable), 4 numerical-invariant violation.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import warnings
from dataclasses import dataclass

import numpy as np

from . import __version__
from .analytics import truncated_coherent_amplitudes
from .dynamics import decompose, evolve, single_photon_state, site_probabilities, \
    transfer_probability
from .errors import ClosedFormInapplicableError, ConfigError, \
    NumericalInvariantError, RegimeError
from .model import ArrayConfig, build_hamiltonian, config_from_dict, config_to_dict
from .open_system import average_transfer_fidelity, reference_qubit_states
from .protocol import make_plan, qubit_fidelity_curve

_COMMANDS = ("spectrum", "resonant-walk", "plan", "transfer", "qubit", "dissipation")

# Presets pin every assumed-but-unstated parameter in one auditable place.
# Frequencies are in units of the first cavity's resonance; time grids are
# in omega_1*t; dissipation grids are log-spaced gamma/J.
_PRESETS = {
    "fig1": {
        "command": "resonant-walk",
        "config": {"n_sites": 10, "frequencies": {"preset": "resonant", "C": 1.0},
                   "J": 0.05},
        "times": [0.0, 30.0, 40.0, 84.0],
    },
    "fig2": {
        "command": "spectrum",
        "config": {"n_sites": 10,
                   "frequencies": {"preset": "switching", "C": 1.0, "m": 3, "n": 7},
                   "J": 0.0013},
    },
    "fig3a": {
        "command": "transfer",
        "config": {"n_sites": 6,
                   "frequencies": {"preset": "switching", "C": 1.0, "m": 1, "n": 5},
                   "J": 0.0013},
    },
    "fig3b": {
        "command": "transfer",
        "config": {"n_sites": 6,
                   "frequencies": {"preset": "switching", "C": 1.0, "m": 2, "n": 4},
                   "J": 0.0013},
    },
    "fig4": {
        "command": "qubit",
        "config": {"n_sites": 6,
                   "frequencies": {"preset": "switching", "C": 1.0, "m": 1, "n": 4},
                   "J": 0.0013},
        "alpha": "0.5",
        "beta": "0.8660254037844386",
    },
    "fig5": {
        "command": "dissipation",
        "config": {"n_sites": 6, "frequencies": {"preset": "resonant", "C": 1.0},
                   "J": 0.0013},
        "pairs": [(1, 3), (2, 5)],
        "log_grid": (1e-3, 1.0, 25),
        "samples": 200,
    },
}

_DEFAULT_SWEEP_POINTS = 2001


@dataclass
class ResolvedExperiment:
    """Everything a command handler needs after flag/preset/config merging."""

    command: str
    config: ArrayConfig
    freq_mode: str           # "resonant" | "switching" | "explicit"
    pair: tuple | None       # (m, n) if known from preset/config/flags
    preset: dict
    preset_name: str | None
    args: argparse.Namespace


def _fmt(value) -> str:
    """Shortest round-trip text for one table cell."""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def _jsonable(value):
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def _atomic_write(path: str, text: str) -> None:
    parent = os.path.dirname(os.path.abspath(path)) or "."
    try:
        fd, tmp = tempfile.mkstemp(dir=parent, prefix=".gfsim-", suffix=".tmp")
    except OSError as exc:
        raise ConfigError(f"cannot write {path!r}: {exc}") from exc
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise ConfigError(f"cannot write {path!r}: {exc}") from exc
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_table(path: str | None, fmt: str, metadata: dict,
                columns: list[str], rows) -> None:
    metadata = _jsonable(metadata)
    if fmt == "csv":
        lines = ["# " + json.dumps(metadata, sort_keys=True)]
        lines.append(",".join(columns))
        for row in rows:
            lines.append(",".join(_fmt(cell) for cell in row))
        text = "\n".join(lines) + "\n"
    elif fmt == "json":
        payload = {
            "metadata": metadata,
            "columns": columns,
            "rows": [[_jsonable(cell) for cell in row] for row in rows],
        }
        text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    else:
        raise ConfigError(f"unknown output format {fmt!r}")
    if path is None:
        sys.stdout.write(text)
    else:
        _atomic_write(path, text)
        print(f"wrote {path}")


def _parse_grid(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"--grid must be start:end:n, got {text!r}")
    try:
        start, end = float(parts[0]), float(parts[1])
        count = int(parts[2])
    except ValueError as exc:
        raise ConfigError(f"--grid must be start:end:n with numeric fields: {exc}") from exc
    if count < 2:
        raise ConfigError(f"--grid needs at least 2 points, got {count}")
    if not (math.isfinite(start) and math.isfinite(end)) or end <= start:
        raise ConfigError(f"--grid needs finite start < end, got {text!r}")
    return start, end, count


def _parse_times(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"--times must be comma-separated numbers: {exc}") from exc
    if not values:
        raise ConfigError("--times is empty")
    if any(not math.isfinite(v) or v < 0 for v in values):
        raise ConfigError("--times values must be finite and >= 0")
    return values


def _parse_complex(text: str, flag: str) -> complex:
    try:
        return complex(text.replace(" ", ""))
    except ValueError as exc:
        raise ConfigError(f"{flag} must be a complex literal, got {text!r}") from exc


def _threads_from_env() -> int:
    raw = os.environ.get("GF_SIM_THREADS")
    if raw is None:
        return 1
    try:
        threads = int(raw)
    except ValueError as exc:
        raise ConfigError(f"GF_SIM_THREADS must be an integer, got {raw!r}") from exc
    if threads < 1:
        raise ConfigError(f"GF_SIM_THREADS must be >= 1, got {threads}")
    return threads


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gfsim",
        description="Photon transport and state transfer in a square-root-coupled cavity array",
    )
    parser.add_argument("--version", action="version", version=f"gfsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "spectrum": "frequency profile and eigenvalues of the array",
        "resonant-walk": "single-photon spreading on a resonant array vs the closed form",
        "plan": "design a transfer plan for a site pair",
        "transfer": "transfer probability curve (planned or direct sweep)",
        "qubit": "qubit transfer fidelity curve with the closed-form comparison",
        "dissipation": "averaged transfer fidelity vs gamma/J under uniform loss",
    }
    for name in _COMMANDS:
        cmd = sub.add_parser(name, help=descriptions[name])
        cmd.add_argument("--config", help="path to a JSON array config")
        cmd.add_argument("--preset", choices=sorted(_PRESETS),
                         help="named parameter preset")
        cmd.add_argument("--out", help="output path (default: stdout)")
        cmd.add_argument("--format", choices=("csv", "json"), default="csv")
        cmd.add_argument("--seed", type=int, help="RNG seed (dissipation)")
        cmd.add_argument("--eta", type=float,
                         help="bond phase override in radians")
        cmd.add_argument("--samples", type=int,
                         help="random qubit states per grid point")
        cmd.add_argument("--grid", help="sweep grid start:end:n "
                         "(omega_1*t for time sweeps, gamma/J log grid for dissipation)")
        cmd.add_argument("--times", help="explicit comma-separated omega_1*t values")
        cmd.add_argument("-m", "--source", type=int, help="source site (1-based)")
        cmd.add_argument("-n", "--target", type=int, help="target site (1-based)")
        cmd.add_argument("--alpha", help="vacuum amplitude (complex literal)")
        cmd.add_argument("--beta", help="photon amplitude (complex literal)")
        cmd.add_argument("--states", choices=("haar", "fixed4"), default="haar",
                         help="dissipation ensemble: Haar samples or the four reference states")
    return parser


def _load_json(path: str) -> dict:
    try:
        with open(path, "r") as handle:
            return json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc


def _freq_provenance(raw_config: dict):
    freq = raw_config.get("frequencies")
    if isinstance(freq, dict):
        mode = freq.get("preset")
        if mode == "switching":
            return "switching", (freq.get("m"), freq.get("n"))
        return str(mode), None
    return "explicit", None


def resolve_experiment(args: argparse.Namespace) -> ResolvedExperiment:
    preset = {}
    preset_name = None
    if args.preset and args.config:
        raise ConfigError("--preset and --config are mutually exclusive")
    if args.preset:
        preset = _PRESETS[args.preset]
        preset_name = args.preset
        # plan is a sub-step of the other experiments, so it may borrow
        # any preset; the rest must use their own
        if preset["command"] != args.command and args.command != "plan":
            raise ConfigError(
                f"preset {args.preset!r} belongs to the "
                f"{preset['command']!r} command"
            )
        raw = preset["config"]
    elif args.config:
        raw = _load_json(args.config)
    else:
        raise ConfigError("either --preset or --config is required")
    config = config_from_dict(raw)
    freq_mode, pair = _freq_provenance(raw)

    if args.source is not None or args.target is not None:
        if args.source is None or args.target is None:
            raise ConfigError("-m/--source and -n/--target must be given together")
        flag_pair = (args.source, args.target)
        if pair is not None and tuple(pair) != flag_pair:
            raise ConfigError(
                f"site pair {flag_pair} conflicts with the config profile pair {tuple(pair)}"
            )
        pair = flag_pair
    return ResolvedExperiment(args.command, config, freq_mode, pair,
                              preset, preset_name, args)


def _base_metadata(exp: ResolvedExperiment) -> dict:
    meta = {
        "command": exp.command,
        "version": __version__,
        "config": config_to_dict(exp.config),
        "assumptions": [
            "frequencies and rates in units of the first cavity resonance",
            "time columns are omega_1 * t",
        ],
    }
    if exp.preset_name:
        meta["preset"] = exp.preset_name
    base = float(exp.config.frequencies[0])
    if base == 1.0:
        meta["assumptions"].append("base frequency C = omega_1 = 1.0")
    return meta


def _time_grid(exp: ResolvedExperiment, default=None) -> np.ndarray:
    """Sweep times in omega_1*t units from --grid/--times, else `default`."""
    if exp.args.grid and exp.args.times:
        raise ConfigError("--grid and --times are mutually exclusive")
    if exp.args.times:
        return np.asarray(_parse_times(exp.args.times), dtype=float)
    if exp.args.grid:
        start, end, count = _parse_grid(exp.args.grid)
        if start < 0:
            raise ConfigError("time grid must start at >= 0")
        return np.linspace(start, end, count)
    if default is not None:
        return np.asarray(default, dtype=float)
    raise ConfigError("a time grid is required: pass --grid start:end:n or --times")


def _require_pair(exp: ResolvedExperiment) -> tuple[int, int]:
    if exp.pair is None:
        raise ConfigError(
            "a site pair is required: use -m/--source and -n/--target "
            "(or a switching-profile config)"
        )
    m, n = exp.pair
    if not isinstance(m, int) or not isinstance(n, int):
        raise ConfigError(f"site pair must be integers, got {exp.pair!r}")
    return m, n


def _capture_plan(template: ArrayConfig, m: int, n: int):
    """make_plan with purity warnings captured for metadata + stderr."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        plan = make_plan(template, m, n)
    notes = [str(w.message) for w in caught]
    for note in notes:
        print(f"warning: {note}", file=sys.stderr)
    return plan, notes


def cmd_spectrum(exp: ResolvedExperiment) -> int:
    spec = decompose(build_hamiltonian(exp.config))
    base = float(exp.config.frequencies[0])
    columns = ["site", "omega", "omega_over_base", "eigenvalue"]
    rows = []
    for k in range(exp.config.n_sites):
        w = float(exp.config.frequencies[k])
        rows.append([k + 1, w, w / base, float(spec.eigenvalues[k])])
    meta = _base_metadata(exp)
    meta["eigenvalue_note"] = "eigenvalues ascending; row pairing with sites is positional only"
    write_table(exp.args.out, exp.args.format, meta, columns, rows)
    return 0


def cmd_resonant_walk(exp: ResolvedExperiment) -> int:
    cfg = exp.config
    base = float(cfg.frequencies[0])
    detuning = float(np.max(np.abs(cfg.frequencies - base)))
    if detuning > 1e-12 * max(abs(base), 1.0):
        raise ClosedFormInapplicableError(
            "resonant-walk requires equal frequencies on every site "
            f"(max detuning {detuning:.3e}); the closed form does not apply"
        )
    times = _time_grid(exp, default=exp.preset.get("times"))
    spec = decompose(build_hamiltonian(cfg))
    start = single_photon_state(cfg.n_sites, 1)

    n = cfg.n_sites
    columns = (["omega1_t"] + [f"p_{k}" for k in range(1, n + 1)]
               + [f"closed_p_{k}" for k in range(1, n + 1)]
               + ["max_abs_deviation", "boundary_population"])
    rows = []
    for wt in times:
        t = float(wt) / base
        state = evolve(start, spec, t)
        probs = site_probabilities(state)
        profile = truncated_coherent_amplitudes(cfg.coupling_scale, t, n)
        # the closed form lives in the frame rotating at the resonance
        rotated = state.amplitudes[1:] * np.exp(1j * base * t)
        deviation = float(np.max(np.abs(rotated - profile.amplitudes)))
        closed_probs = np.abs(profile.amplitudes) ** 2
        rows.append([float(wt)] + [float(p) for p in probs]
                    + [float(p) for p in closed_probs]
                    + [deviation, float(probs[-1])])
    meta = _base_metadata(exp)
    meta["initial_site"] = 1
    meta["deviation_note"] = (
        "max_abs_deviation compares amplitudes in the resonant rotating frame"
    )
    write_table(exp.args.out, exp.args.format, meta, columns, rows)
    return 0


def cmd_plan(exp: ResolvedExperiment) -> int:
    m, n = _require_pair(exp)
    plan, notes = _capture_plan(exp.config, m, n)
    meta = _base_metadata(exp)
    if notes:
        meta["warnings"] = notes
    if exp.args.format == "json":
        payload = {"metadata": _jsonable(meta), "plan": plan.to_dict()}
        text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
        if exp.args.out is None:
            sys.stdout.write(text)
        else:
            _atomic_write(exp.args.out, text)
            print(f"wrote {exp.args.out}")
    else:
        rows = sorted(plan.to_dict().items())
        write_table(exp.args.out, "csv", meta, ["field", "value"],
                    [[k, json.dumps(_jsonable(v))] for k, v in rows])
    return 0


def _sidecar_path(out: str) -> str:
    return out + ".plan.json"


def cmd_transfer(exp: ResolvedExperiment) -> int:
    cfg = exp.config
    base = float(cfg.frequencies[0])
    m, n = _require_pair(exp)
    meta = _base_metadata(exp)
    if exp.freq_mode == "switching":
        plan, notes = _capture_plan(cfg, m, n)
        if notes:
            meta["warnings"] = notes
        t_star_wt = plan.transfer_time * base
        times_wt = _time_grid(exp, default=np.linspace(0.0, 2.0 * t_star_wt,
                                                       _DEFAULT_SWEEP_POINTS))
        eta = exp.args.eta if exp.args.eta is not None else plan.eta_star
        run_cfg = ArrayConfig(cfg.n_sites, plan.frequencies, cfg.coupling_scale,
                              coupling_phase=eta)
        meta["plan"] = plan.to_dict()
        meta["transfer_time_omega1_t"] = t_star_wt
    else:
        # no degeneracy engineering: plain probability sweep, grid required
        plan = None
        times_wt = _time_grid(exp)
        eta = exp.args.eta if exp.args.eta is not None else cfg.coupling_phase
        run_cfg = ArrayConfig(cfg.n_sites, cfg.frequencies, cfg.coupling_scale,
                              coupling_phase=eta)
    spec = decompose(build_hamiltonian(run_cfg))
    probs = transfer_probability(m, n, spec, times_wt / base)
    peak_idx = int(np.argmax(probs))
    meta.update({
        "source": m,
        "target": n,
        "eta_used": float(run_cfg.coupling_phase),
        "peak_probability": float(probs[peak_idx]),
        "peak_time_omega1_t": float(times_wt[peak_idx]),
    })
    if plan is not None:
        rel = abs(times_wt[peak_idx] - plan.transfer_time * base) / (plan.transfer_time * base)
        meta["peak_time_relative_offset"] = float(rel)
    rows = [[float(wt), float(p)] for wt, p in zip(times_wt, probs)]
    write_table(exp.args.out, exp.args.format, meta, ["omega1_t", "p_transfer"], rows)
    if plan is not None and exp.args.out is not None:
        sidecar = _sidecar_path(exp.args.out)
        _atomic_write(sidecar, json.dumps({"plan": plan.to_dict()},
                                          sort_keys=True, indent=2) + "\n")
        print(f"wrote {sidecar}")
    return 0


def cmd_qubit(exp: ResolvedExperiment) -> int:
    cfg = exp.config
    base = float(cfg.frequencies[0])
    m, n = _require_pair(exp)
    alpha_text = exp.args.alpha if exp.args.alpha is not None else exp.preset.get("alpha")
    beta_text = exp.args.beta if exp.args.beta is not None else exp.preset.get("beta")
    if alpha_text is None or beta_text is None:
        raise ConfigError("qubit requires --alpha and --beta (complex literals)")
    alpha = _parse_complex(str(alpha_text), "--alpha")
    beta = _parse_complex(str(beta_text), "--beta")

    plan, notes = _capture_plan(cfg, m, n)
    t_star_wt = plan.transfer_time * base
    times_wt = _time_grid(exp, default=np.linspace(0.0, 2.0 * t_star_wt,
                                                   _DEFAULT_SWEEP_POINTS))
    eta = exp.args.eta if exp.args.eta is not None else None
    numeric, closed = qubit_fidelity_curve(plan, alpha, beta, times_wt / base, eta=eta)
    at_star, at_star_closed = qubit_fidelity_curve(
        plan, alpha, beta, [plan.transfer_time], eta=eta)

    meta = _base_metadata(exp)
    if notes:
        meta["warnings"] = notes
    meta.update({
        "plan": plan.to_dict(),
        "alpha": [alpha.real, alpha.imag],
        "beta": [beta.real, beta.imag],
        "eta_used": float(plan.eta_star if eta is None else eta),
        "peak_fidelity": float(np.max(numeric)),
        "fidelity_at_transfer_time": float(at_star[0]),
        "closed_form_fidelity_at_transfer_time": float(at_star_closed[0]),
        "transfer_time_omega1_t": float(t_star_wt),
        "max_closed_form_deviation": float(np.max(np.abs(numeric - closed))),
    })
    rows = [[float(wt), float(f), float(c)]
            for wt, f, c in zip(times_wt, numeric, closed)]
    write_table(exp.args.out, exp.args.format, meta,
                ["omega1_t", "fidelity", "closed_form_fidelity"], rows)
    return 0


def cmd_dissipation(exp: ResolvedExperiment) -> int:
    cfg = exp.config
    if exp.args.seed is None:
        raise ConfigError("--seed is required for dissipation runs (reproducibility)")
    if exp.pair is not None:
        pairs = [exp.pair]
    elif exp.preset.get("pairs"):
        pairs = [tuple(p) for p in exp.preset["pairs"]]
    else:
        raise ConfigError("dissipation needs a site pair (-m/-n) or a preset with pairs")

    if exp.args.grid:
        start, end, count = _parse_grid(exp.args.grid)
        if start <= 0:
            raise ConfigError("dissipation --grid is log-spaced gamma/J: start must be > 0")
        grid = np.logspace(math.log10(start), math.log10(end), count)
    else:
        lo, hi, count = exp.preset.get("log_grid", (1e-3, 1.0, 25))
        grid = np.logspace(math.log10(lo), math.log10(hi), count)

    if exp.args.states == "fixed4":
        states = reference_qubit_states()
        samples = states[0].shape[0]
    else:
        states = None
        samples = exp.args.samples if exp.args.samples is not None \
            else exp.preset.get("samples", 200)
        if samples < 1:
            raise ConfigError(f"--samples must be >= 1, got {samples}")
    threads = _threads_from_env()

    multi = len(pairs) > 1
    columns = ["gamma_over_J", "mean_fidelity", "stderr", "samples", "t_star"]
    for m, n in pairs:
        plan, notes = _capture_plan(cfg, m, n)
        curve = average_transfer_fidelity(plan, grid, samples, exp.args.seed,
                                          states=states, threads=threads)
        meta = _base_metadata(exp)
        if notes:
            meta["warnings"] = notes
        meta.update({
            "source": m,
            "target": n,
            "seed": exp.args.seed,
            "samples": int(curve.samples),
            "states": exp.args.states,
            "plan": plan.to_dict(),
            "gamma_grid_note": "gamma/J grid, log-spaced",
        })
        rows = [[float(g), float(f), float(e), int(curve.samples),
                 float(curve.transfer_time)]
                for g, f, e in zip(curve.gamma_over_J, curve.mean_fidelity,
                                   curve.stderr)]
        out = exp.args.out
        if out is not None and multi:
            stem, ext = os.path.splitext(out)
            out = f"{stem}_m{m}n{n}{ext or ''}"
        write_table(out, exp.args.format, meta, columns, rows)
    return 0


_HANDLERS = {
    "spectrum": cmd_spectrum,
    "resonant-walk": cmd_resonant_walk,
    "plan": cmd_plan,
    "transfer": cmd_transfer,
    "qubit": cmd_qubit,
    "dissipation": cmd_dissipation,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        exp = resolve_experiment(args)
        return _HANDLERS[exp.command](exp)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RegimeError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 3
    except NumericalInvariantError as exc:
        print(f"numerical invariant violated: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
