"""Command-line driver: ``tetherbm <command> [--config FILE] [--key value ...]``.

Every command reads its settings from the section of the same name in an
INI-style config file (``key = value``), then applies command-line overrides
(flags win). A ``[common]`` section may hold ``seed``, ``threads`` and
``out_dir``. Unknown sections or keys are rejected, and every input path is
checked before anything is written.

Exit status: 0 on success, 1 on usage or configuration errors, 2 when the
computation itself fails numerically.
"""
import argparse
import configparser
import csv
import os
import sys

import numpy as np

from . import analyze as an
from . import data as dt
from . import pca as pc
from . import rbm
from . import tmc
from . import train as tr
from .seeding import derive_rngs

FMT = ".17g"


class ConfigError(Exception):
    pass


def _fmt(x):
    return format(float(x), FMT)


# ---------------------------------------------------------------- value parsers

def _bool(s):
    t = str(s).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int_list(s):
    return tuple(int(x) for x in str(s).replace(",", " ").split())


def _centers(s):
    """``"0.2, 0.8"`` for 1-D clusters, ``"0.2 0.8; 0.8 0.2"`` for 2-D ones."""
    rows = [r for r in str(s).split(";") if r.strip()]
    if len(rows) == 1:
        return tuple(float(x) for x in rows[0].replace(",", " ").split())
    return tuple(tuple(float(x) for x in r.replace(",", " ").split()) for r in rows)


def _opt_float(s):
    return None if str(s).strip().lower() in ("", "none") else float(s)


def _opt_int(s):
    return None if str(s).strip().lower() in ("", "none") else int(s)


def _choice(*options):
    def parse(s):
        if s not in options:
            raise ValueError(f"expected one of {options}, got {s!r}")
        return s
    return parse


# (parser, default); a default of REQUIRED must be supplied by config or flag
REQUIRED = object()

COMMON = {"seed": (int, 0), "threads": (int, 1), "out_dir": (str, ".")}

GRID_KEYS = {"components": (_int_list, (0,)), "alpha": (float, tmc.DEFAULT_ALPHA),
             "n_points": (_opt_int, None), "border": (float, tmc.DEFAULT_BORDER)}
SCAN_KEYS = {"n_chains": (int, 4), "n_sweeps": (int, 1000), "burn_in": (int, 100)}

SCHEMAS = {
    "gen-data": {"n_visible": (int, 100), "centers": (_centers, REQUIRED), "subspace_dim": (int, 1),
                 "spread": (float, 0.02), "samples_per_cluster": (int, 500),
                 "prototype": (_choice(*dt.PROTOTYPE_MODES), "random")},
    "pca": {"data": (str, REQUIRED), "n_components": (int, 2)},
    "train": {"data": (str, REQUIRED), "basis": (str, REQUIRED),
              "sampler": (_choice(*tr.SAMPLERS), "tmc"), "learning_rate": (_opt_float, None),
              "k_sweeps": (int, 10), "minibatch_size": (int, 100), "n_updates": (int, 481),
              "n_hidden": (int, 20), "n_chains": (int, 100), "tmc_chains_per_node": (int, 1),
              "time_avg_window": (_opt_int, None), "init_weight_std": (float, 0.01),
              "checkpoint_every": (int, 0), "loglik_every": (int, 0), **GRID_KEYS},
    "potential": {"model": (str, REQUIRED), "basis": (str, REQUIRED), **GRID_KEYS, **SCAN_KEYS},
    "sample": {"model": (str, REQUIRED), "basis": (str, REQUIRED),
               "mode": (_choice("tmc", "smc"), "tmc"), "n_samples": (int, 1000),
               "sweeps_per_sample": (int, tmc.DEFAULT_SWEEPS_PER_SAMPLE),
               "potential": (str, ""), "smc_sweeps": (int, 100000),
               "trajectory": (_bool, False), "trajectory_every": (int, 1), **GRID_KEYS, **SCAN_KEYS},
    "analyze": {"basis": (str, ""), "data": (str, ""), "samples": (str, ""), "model": (str, ""),
                "series": (str, ""), "components": (_int_list, (0,)), "n_bins": (int, 50),
                "range_min": (float, -tmc.DEFAULT_BORDER), "range_max": (float, 1 + tmc.DEFAULT_BORDER)},
}

# learning-rate defaults per negative-phase sampler
DEFAULT_LR = {"tmc": 1e-2, "smc": 1e-4}


def _flag(key):
    return "--" + key.replace("_", "-")


def read_config_file(path):
    """Parse an INI file into ``{section: {key: raw string}}`` after validating names."""
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    out = {}
    for section in cp.sections():
        schema = COMMON if section == "common" else SCHEMAS.get(section)
        if schema is None:
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key in cp[section]:
            if key not in schema:
                raise ConfigError(f"{path}: unknown key {key!r} in section [{section}]")
        out[section] = dict(cp[section])
    return out


def resolve_config(command, args):
    """Merge schema defaults, config-file values and flags (in rising priority)."""
    raw = read_config_file(args.config) if args.config else {}
    values = {}
    for schema, section in ((COMMON, "common"), (SCHEMAS[command], command)):
        for key, (parse, default) in schema.items():
            flag = getattr(args, key, None)
            src = flag if flag is not None else raw.get(section, {}).get(key)
            if src is None:
                if default is REQUIRED:
                    raise ConfigError(f"{command}: missing required setting {key!r} "
                                      f"(flag {_flag(key)} or config key)")
                values[key] = default
                continue
            try:
                values[key] = parse(src)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{command}: bad value for {key!r}: {exc}") from None
    if values["threads"] < 1:
        raise ConfigError("threads must be at least 1")
    return values


def _require_files(cfg, *keys):
    for key in keys:
        path = cfg.get(key)
        if path and not os.path.isfile(path):
            raise ConfigError(f"{key} file not found: {path}")


def _prepare_out_dir(path):
    if os.path.exists(path) and not os.path.isdir(path):
        raise ConfigError(f"out_dir exists and is not a directory: {path}")
    os.makedirs(path, exist_ok=True)
    return path


def _grid(cfg):
    try:
        return tmc.TetherGrid.regular(cfg["components"], cfg["alpha"], cfg["border"], cfg["n_points"])
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from None


def _check_components(grid, basis):
    if max(grid.component_indices) >= basis.n_components:
        raise ConfigError(f"components {grid.component_indices} exceed the {basis.n_components} "
                          "stored principal directions")


def _load(loader, path, what):
    try:
        return loader(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc}") from None


# ---------------------------------------------------------------- commands

def cmd_gen_data(cfg):
    try:
        spec = dt.ClusterSpec(cfg["n_visible"], cfg["centers"], cfg["spread"], cfg["samples_per_cluster"],
                              cfg["subspace_dim"], cfg["seed"], cfg["prototype"])
        spec.on_counts()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _prepare_out_dir(cfg["out_dir"])
    X, labels = dt.gen_clusters(spec)
    dt.save_binary_csv(X, os.path.join(out, "data.csv"))
    dt.save_labels(labels, os.path.join(out, "labels.csv"))
    D = spec.directions()
    proj = X @ D.T / np.sqrt(np.array([b.size for b in spec.blocks()]))
    print(f"rows {X.shape[0]} columns {X.shape[1]} clusters {spec.n_clusters}")
    for k in range(spec.n_clusters):
        centre = proj[labels == k].mean(axis=0)
        print(f"cluster {k}: n {int((labels == k).sum())} projection_center "
              + " ".join(_fmt(x) for x in centre))


def cmd_pca(cfg):
    _require_files(cfg, "data")
    X = _load(dt.load_binary_csv, cfg["data"], "dataset")
    try:
        basis = pc.compute_pca(X, cfg["n_components"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _prepare_out_dir(cfg["out_dir"])
    pc.save_basis_csv(basis, os.path.join(out, "basis.csv"))
    for a in range(basis.n_components):
        print(f"component {a}: eigenvalue {_fmt(basis.eigenvalues[a])} "
              f"range [{_fmt(basis.proj_min[a])}, {_fmt(basis.proj_max[a])}]")


def cmd_train(cfg):
    _require_files(cfg, "data", "basis")
    X = _load(dt.load_binary_csv, cfg["data"], "dataset")
    basis = _load(pc.load_basis_csv, cfg["basis"], "basis")
    if basis.n_visible != X.shape[1]:
        raise ConfigError("basis and dataset disagree on the number of visible units")
    grid = None
    if cfg["sampler"] == "tmc":
        grid = _grid(cfg)
        _check_components(grid, basis)
    lr = cfg["learning_rate"]
    if lr is None:
        lr = DEFAULT_LR[cfg["sampler"]]
    try:
        tcfg = tr.TrainConfig(sampler=cfg["sampler"], learning_rate=lr, k_sweeps=cfg["k_sweeps"],
                              minibatch_size=cfg["minibatch_size"], n_updates=cfg["n_updates"],
                              n_hidden=cfg["n_hidden"], n_chains=cfg["n_chains"],
                              tmc_chains_per_node=cfg["tmc_chains_per_node"], grid=grid,
                              time_avg_window=cfg["time_avg_window"], master_seed=cfg["seed"],
                              threads=cfg["threads"], init_weight_std=cfg["init_weight_std"],
                              checkpoint_every=cfg["checkpoint_every"], loglik_every=cfg["loglik_every"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = _prepare_out_dir(cfg["out_dir"])
    ckpt = os.path.join(out, "checkpoints") if tcfg.checkpoint_every else None
    state, rows = tr.train(tcfg, X, basis, checkpoint_dir=ckpt)
    rbm.save_params(state.params, os.path.join(out, "model.rbm"))
    tr.save_chains(state, os.path.join(out, "chains.bin"))
    tr.write_train_log(rows, os.path.join(out, "train_log.csv"))
    sv = an.singular_values(state.params)
    print(f"sampler {tcfg.sampler} learning_rate {_fmt(lr)} updates {state.t_age} "
          f"top_singular_value {_fmt(sv[0])}")


def _scan(params, basis, grid, cfg):
    sc = tmc.ScanConfig(cfg["n_chains"], cfg["n_sweeps"], cfg["burn_in"], cfg["seed"], cfg["threads"])
    return tmc.run_potential_scan(params, basis, grid, sc)


def _model_and_basis(cfg):
    _require_files(cfg, "model", "basis")
    params = _load(rbm.load_params, cfg["model"], "model")
    basis = _load(pc.load_basis_csv, cfg["basis"], "basis")
    if basis.n_visible != params.n_visible:
        raise ConfigError("basis and model disagree on the number of visible units")
    return params, basis


def _check_scan(cfg):
    if cfg["n_chains"] < 1 or cfg["n_sweeps"] < 1 or cfg["burn_in"] < 0:
        raise ConfigError("n_chains and n_sweeps must be positive, burn_in non-negative")


def cmd_potential(cfg):
    params, basis = _model_and_basis(cfg)
    grid = _grid(cfg)
    _check_components(grid, basis)
    _check_scan(cfg)
    out = _prepare_out_dir(cfg["out_dir"])
    est = _scan(params, basis, grid, cfg)
    tmc.save_potential_csv(est, os.path.join(out, "potential.csv"))
    mode = est.grid.nodes()[np.argmax(est.prob)]
    print(f"nodes {grid.n_nodes} alpha {_fmt(grid.alpha_strength)} most_probable "
          + " ".join(_fmt(x) for x in mode))


def _write_projections(path, m, targets=None):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        k = m.shape[1]
        head = ["sample"] + ([f"target_{a}" for a in range(k)] if targets is not None else [])
        out.writerow(head + [f"m_{a}" for a in range(k)])
        for i in range(m.shape[0]):
            row = [i] + ([_fmt(x) for x in targets[i]] if targets is not None else [])
            out.writerow(row + [_fmt(x) for x in m[i]])


def cmd_sample(cfg):
    params, basis = _model_and_basis(cfg)
    grid = _grid(cfg)
    _check_components(grid, basis)
    if cfg["n_samples"] < 0 or cfg["sweeps_per_sample"] < 1 or cfg["smc_sweeps"] < 0 \
            or cfg["trajectory_every"] < 1:
        raise ConfigError("n_samples, smc_sweeps must be non-negative; sweeps_per_sample and "
                          "trajectory_every positive")
    est = None
    if cfg["mode"] == "tmc":
        if cfg["potential"]:
            _require_files(cfg, "potential")
            est = _load(lambda p: tmc.load_potential_csv(p, grid.alpha_strength, grid.component_indices),
                        cfg["potential"], "potential")
            if est.grid.dims != grid.dims:
                raise ConfigError("potential file dimension does not match components")
        else:
            _check_scan(cfg)
    out = _prepare_out_dir(cfg["out_dir"])
    idx = grid.component_indices
    targets = None
    if cfg["mode"] == "tmc":
        if est is None:
            est = _scan(params, basis, grid, cfg)
        S, targets = tmc.tmc_generate_samples(params, basis, est, cfg["n_samples"],
                                              cfg["sweeps_per_sample"], cfg["seed"], cfg["threads"])
    else:
        n = cfg["n_samples"]
        rngs = derive_rngs(cfg["seed"], "smc-sample", n)
        V = np.zeros((n, params.n_visible))
        for j, r in enumerate(rngs):
            V[j] = r.random(params.n_visible) < 0.5
        H = np.zeros((n, params.n_hidden))
        every = cfg["trajectory_every"]
        traj = []
        observe = None
        if cfg["trajectory"]:
            def observe(t, V, H):
                if (t + 1) % every == 0:
                    traj.append((t + 1, pc.magnetizations(V, basis, idx)))
        rbm.smc_run(V, H, params, rngs, cfg["smc_sweeps"], observe=observe)
        S = V.astype(np.uint8)
        if cfg["trajectory"]:
            for a, comp in enumerate(idx):
                with open(os.path.join(out, f"trajectory_m{comp}.csv"), "w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["sweep"] + [f"chain_{j}" for j in range(n)])
                    for t, m in traj:
                        w.writerow([t] + [_fmt(x) for x in m[:, a]])
    dt.save_binary_csv(S, os.path.join(out, "samples.csv"))
    m = pc.magnetizations(S, basis, idx) if S.shape[0] else np.zeros((0, len(idx)))
    _write_projections(os.path.join(out, "projections.csv"), m, targets)
    print(f"mode {cfg['mode']} samples {S.shape[0]}")


def _read_series(path):
    """Columns of a CSV with a header row; a leading ``sweep`` column is skipped."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError("empty series file")
    head, body = rows[0], np.array([[float(x) for x in r] for r in rows[1:]]).reshape(-1, len(rows[0]))
    start = 1 if head and head[0] == "sweep" else 0
    return head[start:], body[:, start:]


def cmd_analyze(cfg):
    _require_files(cfg, "basis", "data", "samples", "model", "series")
    if (cfg["data"] or cfg["samples"]) and not cfg["basis"]:
        raise ConfigError("histograms need a basis file")
    if cfg["n_bins"] < 1 or not cfg["range_min"] < cfg["range_max"]:
        raise ConfigError("n_bins must be positive and range_min < range_max")
    basis = _load(pc.load_basis_csv, cfg["basis"], "basis") if cfg["basis"] else None
    if basis is not None and max(cfg["components"]) >= basis.n_components:
        raise ConfigError("components exceed the stored principal directions")
    sets = {}
    for key in ("data", "samples"):
        if cfg[key]:
            X = _load(dt.load_binary_csv, cfg[key], key)
            if X.size and X.shape[1] != basis.n_visible:
                raise ConfigError(f"{key} has {X.shape[1]} columns, basis expects {basis.n_visible}")
            sets[key] = X
    params = _load(rbm.load_params, cfg["model"], "model") if cfg["model"] else None
    series = _load(_read_series, cfg["series"], "series") if cfg["series"] else None
    out = _prepare_out_dir(cfg["out_dir"])
    edges = np.linspace(cfg["range_min"], cfg["range_max"], cfg["n_bins"] + 1)
    hists = {}
    for key, X in sets.items():
        m = pc.magnetizations(X, basis, cfg["components"]) if X.size else np.zeros((0, len(cfg["components"])))
        for a, comp in enumerate(cfg["components"]):
            h = an.histogram_from_masses(m[:, a], np.ones(m.shape[0]), edges)
            hists[key, comp] = h
            an.save_histogram_csv(h, os.path.join(out, f"hist_{key}_m{comp}.csv"))
    if len(sets) == 2:
        with open(os.path.join(out, "distance.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["component", "tv", "ks"])
            for comp in cfg["components"]:
                tv, ks = an.distribution_distance(hists["data", comp], hists["samples", comp])
                w.writerow([comp, _fmt(tv), _fmt(ks)])
                print(f"component {comp}: tv {_fmt(tv)} ks {_fmt(ks)}")
    if params is not None:
        sv = an.singular_values(params)
        with open(os.path.join(out, "singular_values.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "singular_value"])
            for i, s in enumerate(sv):
                w.writerow([i, _fmt(s)])
    if series is not None:
        names, cols = series
        results = [(name, an.integrated_autocorr_time(cols[:, j])) for j, name in enumerate(names)]
        an.save_tau_csv(results, os.path.join(out, "tau.csv"))
        for name, r in results:
            print(f"series {name}: tau_int {_fmt(r.tau_int)} window {r.window} reliable {int(r.reliable)}")


HELP = {"gen-data": "write a clustered binary dataset and its labels",
        "pca": "principal directions and projection ranges of a dataset",
        "train": "fit an RBM with Glauber or tethered negative phase",
        "potential": "tethered scan of a model: effective potential and p(m_hat)",
        "sample": "draw configurations by tethered generation or long Glauber chains",
        "analyze": "histograms, distances, autocorrelation times, singular values"}

COMMANDS = {"gen-data": cmd_gen_data, "pca": cmd_pca, "train": cmd_train,
            "potential": cmd_potential, "sample": cmd_sample, "analyze": cmd_analyze}


# ---------------------------------------------------------------- entry point

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="tetherbm", description="RBM training and tethered Monte Carlo sampling.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, schema in SCHEMAS.items():
        p = sub.add_parser(name, help=HELP[name])
        p.add_argument("--config", default=None, help="INI file with [common] and [%s] sections" % name)
        for key in list(COMMON) + list(schema):
            p.add_argument(_flag(key), dest=key, default=None, metavar="VALUE")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
        COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"tetherbm {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (tr.NumericalError, FloatingPointError) as exc:
        print(f"tetherbm {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
