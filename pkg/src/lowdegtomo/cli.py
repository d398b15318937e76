"""Config-driven experiment runner and command-line interface.

Subcommands expose the library pieces (``frames``, ``channel``, ``sample``,
``estimate``) and ``reproduce`` regenerates the numerical-experiment data
series (fig2..fig7) as CSV files plus a JSON run manifest.  All stochastic
commands require an explicit ``--seed``; reruns with the same seed and
config produce byte-identical CSVs regardless of ``--threads``.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import configparser
import csv
import json
import sys
import time
from dataclasses import dataclass, asdict
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .channels import (
    GateLayer,
    bitflip_product,
    bitflip_tail_bound,
    chi_from_kraus,
    chi_to_csv,
    compose_with_layer,
    correlated_xflip_channel,
    decaying_dephasing_channel,
    gate_pair_layer,
    iswap_layer,
    single_gate_layer,
    spurious_coupling_bound,
    truncate_chi,
)
from .estimation import (
    EstimatorAccumulator,
    analytic_variance,
    analytic_variance_exact,
    convergence_samples,
    eval_G_stream,
    plain_frames,
    rotated_frames,
)
from .frames import (
    GATES,
    FrameTable,
    build_f,
    build_g_shadow,
    g_min_closed_form,
    load_frame,
    load_unitary,
    rotated_frame,
    save_frame,
)
from .pauli import PauliString
from .sampling import SnapshotSampler, save_snapshots, worker_rng

SCHEMA_VERSION = "v1"

DEFAULT_GRIDS = {
    "fig2": list(range(4, 51, 2)),
    "fig3": [4, 8, 16, 32],
    "fig4": [4, 16, 64],
    "fig5": list(range(2, 51, 2)),
    "fig6": list(range(4, 21, 2)),
    "fig7": list(range(10, 41, 5)),
}

FIGURE_COLUMNS = {
    "fig2": ["n", "entry", "variance"],
    "fig3": ["n", "frame", "repetition", "samples_to_converge", "censored"],
    "fig4": ["n", "scenario", "entry", "repetition", "samples_to_converge", "censored"],
    "fig5": ["n", "entry", "variance"],
    "fig6": ["n", "entry", "variance"],
    "fig7": ["n", "dim", "trials", "mean_sum", "std_sum"],
}


@dataclass
class ExperimentConfig:
    kind: str
    seed: int | None = None
    out: str = "runs"
    threads: int = 1
    n_grid: list | None = None
    d: int = 1
    repetitions: int = 10
    epsilon: float = 0.05
    window: int | None = None
    cap: int = 10**6
    channel: str = "eq37"
    channel_params: dict | None = None
    layer: str = "iswap"
    frame: str = "rotated-min"
    entries: list | None = None
    trials: int = 10

    def require_seed(self):
        if self.seed is None:
            raise SystemExit("this experiment is stochastic: --seed is required")


def load_config(path, kind: str) -> ExperimentConfig:
    """Read the INI config (flat sections per module) into a config object."""
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    exp = parser["experiment"] if parser.has_section("experiment") else {}
    cfg = ExperimentConfig(kind=exp.get("kind", kind))
    if "seed" in exp:
        cfg.seed = int(exp["seed"])
    cfg.out = exp.get("out", cfg.out)
    cfg.threads = int(exp.get("threads", cfg.threads))
    if "n_grid" in exp:
        cfg.n_grid = [int(v) for v in exp["n_grid"].split()]
    cfg.d = int(exp.get("d", cfg.d))
    cfg.repetitions = int(exp.get("repetitions", cfg.repetitions))
    cfg.epsilon = float(exp.get("epsilon", cfg.epsilon))
    if "window" in exp:
        cfg.window = int(exp["window"])
    cfg.cap = int(exp.get("cap", cfg.cap))
    cfg.trials = int(exp.get("trials", cfg.trials))
    if parser.has_section("channel"):
        sec = parser["channel"]
        cfg.channel = sec.get("name", cfg.channel)
        cfg.channel_params = {
            k: float(v) for k, v in sec.items() if k != "name"
        }
    if parser.has_section("layer"):
        cfg.layer = parser["layer"].get("name", cfg.layer)
    if parser.has_section("frames"):
        cfg.frame = parser["frames"].get("kind", cfg.frame)
    return cfg


def build_channel(name: str, n: int, params: dict | None):
    params = dict(params or {})
    if name == "eq37":
        return decaying_dephasing_channel(
            n, params.get("p0", 0.1), params.get("gamma0", 0.1)
        )
    if name == "eq36":
        return correlated_xflip_channel(n, params.get("eps", 0.1))
    if name == "bitflip":
        return bitflip_product(n, params.get("p", 0.1))
    raise SystemExit(f"config-error: unknown channel {name!r}")


def build_layer(name: str, n: int) -> GateLayer | None:
    if name in ("none", ""):
        return None
    if name == "iswap":
        return iswap_layer(n)
    if name == "single-iswap":
        c = (n - 1) // 2
        return single_gate_layer(n, (c, c + 1), GATES["iswap"])
    if name == "t-pairs":
        return gate_pair_layer(n, GATES["tt"])
    raise SystemExit(f"config-error: unknown layer {name!r}")


_TABLE_CACHE: dict = {}


def precomputed_rotated(gate: str) -> FrameTable:
    """Rotated-minimized table for a named gate, from the shipped artifact
    when available (iswap, cnot), computed on the fly otherwise."""
    if gate in _TABLE_CACHE:
        return _TABLE_CACHE[gate]
    fname = f"g_rotmin_{gate}.json.gz"
    try:
        path = resources.files("lowdegtomo.data").joinpath(fname)
        with resources.as_file(path) as p:
            table = load_frame(p)
    except (FileNotFoundError, ModuleNotFoundError):
        table, _ = rotated_frame(GATES[gate], g_min_closed_form())
    _TABLE_CACHE[gate] = table
    return table


def build_assignment(frame: str, n: int, layer: GateLayer | None):
    """Frame tables per block for the requested frame kind."""
    if frame == "shadow":
        return plain_frames(n, build_g_shadow())
    if frame == "min":
        return plain_frames(n, g_min_closed_form())
    if layer is None:
        raise SystemExit("config-error: rotated frames need a layer")
    if frame == "rotated-min":
        if all(U is GATES["iswap"] for _, U in layer.elements):
            table = precomputed_rotated("iswap")
            blocks = [(tuple(sup), table.entries, U) for sup, U in layer.elements]
            g1 = g_min_closed_form()
            covered = {q for sup, _ in layer.elements for q in sup}
            blocks += [
                ((q,), g1.entries, None) for q in range(n) if q not in covered
            ]
            from .estimation import FrameAssignment

            return FrameAssignment(n, blocks)
        return rotated_frames(layer, g_min_closed_form(), minimize=True)
    if frame == "rotated-shadow":
        return rotated_frames(layer, build_g_shadow(), minimize=False)
    raise SystemExit(f"config-error: unknown frame kind {frame!r}")


# ---------------------------------------------------------------------------
# figure data series
# ---------------------------------------------------------------------------

def _write_series(path: Path, kind: str, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema={kind}.{SCHEMA_VERSION}\n")
        writer = csv.writer(fh)
        writer.writerow(FIGURE_COLUMNS[kind])
        writer.writerows(rows)


def _entry_pair(n: int, name: str):
    gamma, _, delta = name.partition(";")
    return PauliString.parse(gamma, n), PauliString.parse(delta, n)


def _variance_series(cfg: ExperimentConfig, kind: str):
    """fig2/fig5/fig6: analytic variances over the n grid.

    fig2 uses the generic path with the exact degree-1 process matrix of
    the correlated channel; fig5/fig6 use the exact factorized path for
    the product noise behind the gate layer.
    """
    grid = cfg.n_grid or DEFAULT_GRIDS[kind]
    entry_names = cfg.entries or [";", ";X0"]
    rows = []
    for n in grid:
        if kind == "fig2":
            channel = build_channel("eq36", n, cfg.channel_params)
            assign = build_assignment("min", n, None)
            chi = chi_from_kraus(channel, cfg.d)
            compute = lambda g, d: analytic_variance(chi, assign, g, d)
        else:
            channel = build_channel(cfg.channel, n, cfg.channel_params)
            layer = build_layer("iswap" if kind == "fig5" else "t-pairs", n)
            assign = build_assignment("rotated-min", n, layer)
            compute = lambda g, d: analytic_variance_exact(channel, assign, g, d)
        for name in entry_names:
            gamma, delta = _entry_pair(n, name)
            rows.append([n, name, repr(compute(gamma, delta))])
    return rows


def sampled_entry_stream(sampler, assign, gamma, delta, rng, chunk, limit):
    """Yield chunks of estimator values from freshly drawn snapshots."""
    drawn = 0
    while drawn < limit:
        m = min(chunk, limit - drawn)
        S, R = sampler.draw(rng, m)
        yield eval_G_stream(assign, gamma, delta, S, R)
        drawn += m


def _convergence_task(args):
    """One (n, repetition) convergence measurement; runs in a worker."""
    (n, rep, worker, seed, channel_name, channel_params, layer_name,
     frame, entry_name, epsilon, window, cap) = args
    channel = build_channel(channel_name, n, channel_params)
    layer = build_layer(layer_name, n)
    sampler = SnapshotSampler(channel, layer)
    assign = build_assignment(frame, n, layer)
    gamma, delta = _entry_pair(n, entry_name)
    if frame in ("rotated-min", "rotated-shadow"):
        truth_chi = chi_from_kraus(channel, 1)
    else:
        truth_chi = chi_from_kraus(compose_with_layer(channel, layer), 1)
    truth = truth_chi.entry(gamma, delta)
    rng = worker_rng(seed, worker)
    chunks = sampled_entry_stream(sampler, assign, gamma, delta, rng, 8192, cap)
    count = convergence_samples(chunks, truth, epsilon, window, cap)
    return n, rep, count


def _run_tasks(tasks, threads: int):
    if threads <= 1:
        return [_convergence_task(t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_convergence_task, tasks))


def _fig3_rows(cfg: ExperimentConfig):
    cfg.require_seed()
    grid = cfg.n_grid or DEFAULT_GRIDS["fig3"]
    window = cfg.window or 100
    rows = []
    for frame_idx, frame in enumerate(("rotated-min", "rotated-shadow")):
        tasks = []
        for ni, n in enumerate(grid):
            for rep in range(cfg.repetitions):
                worker = frame_idx * 10_000 + ni * 100 + rep
                tasks.append(
                    (n, rep, worker, cfg.seed, "eq37", cfg.channel_params,
                     "iswap", frame, ";", cfg.epsilon, window, cfg.cap)
                )
        for n, rep, count in _run_tasks(tasks, cfg.threads):
            label = "min" if frame == "rotated-min" else "shadow"
            rows.append(
                [n, label, rep, -1 if count is None else count, int(count is None)]
            )
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    return rows


def _fig4_rows(cfg: ExperimentConfig):
    cfg.require_seed()
    grid = cfg.n_grid or DEFAULT_GRIDS["fig4"]
    window = cfg.window or 500
    entry_names = cfg.entries or [";", "X0;X0", ";X0"]
    scenarios = [("single", "single-iswap", "min"), ("layer", "iswap", "rotated-min")]
    rows = []
    for si, (label, layer_name, frame) in enumerate(scenarios):
        for ei, entry_name in enumerate(entry_names):
            tasks = []
            for ni, n in enumerate(grid):
                for rep in range(cfg.repetitions):
                    worker = si * 1_000_000 + ei * 100_000 + ni * 100 + rep
                    tasks.append(
                        (n, rep, worker, cfg.seed, "eq37", cfg.channel_params,
                         layer_name, frame, entry_name, cfg.epsilon, window,
                         cfg.cap)
                    )
            for n, rep, count in _run_tasks(tasks, cfg.threads):
                rows.append(
                    [n, label, entry_name, rep,
                     -1 if count is None else count, int(count is None)]
                )
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    return rows


def random_psd_sum(dim: int, trials: int, rng: np.random.Generator):
    """Entry sums of trace-normalized random Wishart matrices.

    X = V V^dag with V a dim x dim standard complex Gaussian matrix,
    normalized to unit trace; returns mean and standard deviation of
    1^T X 1 over the trials.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    sums = np.empty(trials)
    for t in range(trials):
        V = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        Xmat = V @ V.conj().T
        sums[t] = Xmat.sum().real / Xmat.trace().real
    return float(sums.mean()), float(sums.std())


def _fig7_rows(cfg: ExperimentConfig):
    cfg.require_seed()
    grid = cfg.n_grid or DEFAULT_GRIDS["fig7"]
    rows = []
    for i, n in enumerate(grid):
        rng = worker_rng(cfg.seed, i)
        mean, std = random_psd_sum(n * n, cfg.trials, rng)
        rows.append([n, n * n, cfg.trials, repr(mean), repr(std)])
    return rows


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run one figure reproduction; returns the manifest dictionary."""
    t0 = time.time()
    out_dir = Path(cfg.out)
    if cfg.kind in ("fig2", "fig5", "fig6"):
        rows = _variance_series(cfg, cfg.kind)
    elif cfg.kind == "fig3":
        rows = _fig3_rows(cfg)
    elif cfg.kind == "fig4":
        rows = _fig4_rows(cfg)
    elif cfg.kind == "fig7":
        rows = _fig7_rows(cfg)
    else:
        raise SystemExit(f"config-error: unknown experiment kind {cfg.kind!r}")
    csv_path = out_dir / f"{cfg.kind}.csv"
    _write_series(csv_path, cfg.kind, rows)
    manifest = {
        "kind": cfg.kind,
        "schema": f"{cfg.kind}.{SCHEMA_VERSION}",
        "version": __version__,
        "config": asdict(cfg),
        "outputs": [str(csv_path)],
        "wall_time_s": round(time.time() - t0, 3),
    }
    with open(out_dir / f"{cfg.kind}_manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

def _add_common(parser):
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", default="runs")
    parser.add_argument("--config", default=None)
    parser.add_argument("--threads", type=int, default=1)


def _gate_matrix(args):
    if args.unitary_file:
        return load_unitary(args.unitary_file)
    if args.gate not in GATES:
        raise SystemExit(f"config-error: unknown gate {args.gate!r}")
    return GATES[args.gate]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lowdegtomo",
        description="Randomized Pauli tomography of low-degree gate-layer noise",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_frames = sub.add_parser("frames", help="build, minimize, or rotate dual tables")
    frames_sub = p_frames.add_subparsers(dest="action", required=True)
    p_build = frames_sub.add_parser("build")
    p_build.add_argument("--kind", choices=("f", "shadow", "min"), required=True)
    p_build.add_argument("--arity", type=int, default=1, choices=(1, 2))
    p_build.add_argument("--save", required=True)
    p_min = frames_sub.add_parser("minimize")
    p_min.add_argument("--save", required=True)
    p_rot = frames_sub.add_parser("rotate")
    p_rot.add_argument("--gate", default="iswap")
    p_rot.add_argument("--unitary-file", default=None)
    p_rot.add_argument("--no-minimize", action="store_true")
    p_rot.add_argument("--save", required=True)

    p_chan = sub.add_parser("channel", help="process matrices and bounds")
    chan_sub = p_chan.add_subparsers(dest="action", required=True)
    for action in ("chi", "truncate"):
        pc = chan_sub.add_parser(action)
        pc.add_argument("--channel", default="eq37")
        pc.add_argument("--n", type=int, required=True)
        pc.add_argument("--d", type=int, default=1)
        pc.add_argument("--p0", type=float, default=0.1)
        pc.add_argument("--gamma0", type=float, default=0.1)
        pc.add_argument("--eps", type=float, default=0.1)
        pc.add_argument("--p", type=float, default=0.1)
        if action == "chi":
            pc.add_argument("--save", required=True)
    pb = chan_sub.add_parser("bounds")
    pb.add_argument("--kind", choices=("bitflip", "spurious"), required=True)
    pb.add_argument("--n", type=int, required=True)
    pb.add_argument("--d", type=int, default=1)
    pb.add_argument("--p", type=float, default=0.05)
    pb.add_argument("--alpha", type=float, default=1e-3)
    pb.add_argument("--h", type=float, default=1.0)
    pb.add_argument("--t", type=float, default=1.0)
    pb.add_argument("--epsilon", type=float, default=None)

    p_sample = sub.add_parser("sample", help="draw snapshots to CSV")
    p_sample.add_argument("--channel", default="eq37")
    p_sample.add_argument("--layer", default="none")
    p_sample.add_argument("--n", type=int, required=True)
    p_sample.add_argument("--shots", type=int, required=True)
    p_sample.add_argument("--save", required=True)
    _add_common(p_sample)

    p_est = sub.add_parser("estimate", help="estimate chi entries from fresh samples")
    p_est.add_argument("--channel", default="eq37")
    p_est.add_argument("--layer", default="none")
    p_est.add_argument("--frame", default="min")
    p_est.add_argument("--n", type=int, required=True)
    p_est.add_argument("--shots", type=int, required=True)
    p_est.add_argument("--entries", default=";")
    p_est.add_argument("--mode", choices=("mean", "mom"), default="mean")
    p_est.add_argument("--block-size", type=int, default=0)
    p_est.add_argument("--save", required=True)
    _add_common(p_est)

    p_rep = sub.add_parser("reproduce", help="regenerate a figure data series")
    p_rep.add_argument("figure", choices=sorted(DEFAULT_GRIDS))
    _add_common(p_rep)

    args = parser.parse_args(argv)

    if args.command == "frames":
        if args.action == "build":
            if args.kind == "f":
                table = build_f(args.arity)
            elif args.kind == "shadow":
                table = build_g_shadow()
            else:
                table = g_min_closed_form()
            if args.arity == 2 and args.kind != "f":
                table = FrameTable(2, table.kind, np.kron(table.entries, table.entries))
            save_frame(table, args.save)
        elif args.action == "minimize":
            table = g_min_closed_form()
            save_frame(table, args.save)
        else:
            table, objectives = rotated_frame(
                _gate_matrix(args), g_min_closed_form(),
                minimize=not args.no_minimize,
            )
            save_frame(table, args.save)
            if objectives is not None:
                print(f"objective(0,0) = {objectives[0]:.12f}")
        return 0

    if args.command == "channel":
        params = {"p0": args.p0, "gamma0": args.gamma0, "eps": args.eps, "p": args.p} \
            if args.action != "bounds" else {}
        if args.action == "chi":
            channel = build_channel(args.channel, args.n, params)
            chi = chi_from_kraus(channel, args.d)
            chi.validate()
            chi_to_csv(chi, args.save)
            print(f"D={chi.D} residual={chi.residual:.3e}")
        elif args.action == "truncate":
            channel = build_channel(args.channel, args.n, params)
            report = truncate_chi(channel, args.d)
            print(
                f"l2_error={report.l2_error:.6e} "
                f"diagonal_bound={report.diagonal_bound:.6e}"
            )
        else:
            if args.kind == "bitflip":
                bound, thr = bitflip_tail_bound(args.n, args.p, args.d, args.epsilon)
            else:
                bound, thr = spurious_coupling_bound(
                    args.n, args.d, args.alpha, args.h, args.t, epsilon=args.epsilon
                )
            print(f"bound={bound:.6e}" + ("" if thr is None else f" threshold={thr:.6e}"))
        return 0

    if args.command == "sample":
        if args.seed is None:
            raise SystemExit("sample is stochastic: --seed is required")
        channel = build_channel(args.channel, args.n, None)
        layer = build_layer(args.layer, args.n)
        sampler = SnapshotSampler(channel, layer)
        S, R = sampler.draw(worker_rng(args.seed), args.shots)
        save_snapshots(args.save, S, R)
        return 0

    if args.command == "estimate":
        if args.seed is None:
            raise SystemExit("estimate is stochastic: --seed is required")
        channel = build_channel(args.channel, args.n, None)
        layer = build_layer(args.layer, args.n)
        sampler = SnapshotSampler(channel, layer)
        assign = build_assignment(args.frame, args.n, layer)
        truth_channel = (
            channel
            if args.frame.startswith("rotated") or layer is None
            else compose_with_layer(channel, layer)
        )
        chi = chi_from_kraus(truth_channel, 1)
        S, R = sampler.draw(worker_rng(args.seed), args.shots)
        with open(args.save, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["alpha", "beta", "estimate_re", "estimate_im",
                 "truth_re", "truth_im", "shots", "mode"]
            )
            for name in args.entries.split(","):
                gamma, delta = _entry_pair(args.n, name)
                acc = EstimatorAccumulator(mode=args.mode, block_size=args.block_size)
                acc.add(eval_G_stream(assign, gamma, delta, S, R))
                est = acc.estimate()
                truth = chi.entry(gamma, delta)
                writer.writerow(
                    [str(gamma), str(delta), repr(est.real), repr(est.imag),
                     repr(truth.real), repr(truth.imag), args.shots, args.mode]
                )
        return 0

    # reproduce
    if args.config:
        cfg = load_config(args.config, args.figure)
        cfg.kind = args.figure
    else:
        cfg = ExperimentConfig(kind=args.figure)
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.out = args.out
    cfg.threads = args.threads
    manifest = run_experiment(cfg)
    print(json.dumps({k: manifest[k] for k in ("kind", "outputs", "wall_time_s")}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
