"""Subcommand dispatch: chain-info, zrp-run, diff-run, compare, verify,
psi4-check.

Every run reads one YAML config, writes CSV tables plus a JSON
manifest into the output directory, and exits with 0 (success),
1 (an assertion-class check failed), 2 (config error) or 3 (runtime
error).  The environment variable CONDENSIM_SEED overrides the config
seed; the override is recorded in the manifest.  Sites are reported
1-based and subsets as bitmasks (bit j-1 <-> site j).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import chain as chain_mod
from .chain import dirichlet_matrix, harmonic_extensions, superharmonic_radius, trace_rates, upsilon_map
from .config import RunConfig, __version__, config_hash, parse_config
from .diffusion import DiffusionConfig, simulate_diffusion_ensemble
from .errors import (
    CondensimError,
    ConfigRangeError,
    ConfigSchemaError,
)
from .experiments import (
    compare_winner,
    ks_distance,
    superharmonic_sign_check,
    hitting_bound_check,
    winner_distribution,
)
from .reporting import ManifestTimer, fmt, mask_of, write_csv
from .zrp import ZrpConfig, simulate_zrp_ensemble

IDENTITY_TOL = 1e-10
UNITY_TOL = 1e-12
SIGN_TOL = 1e-12


def default_eta0(size: int, n: int) -> np.ndarray:
    """Balanced start: floor(N/L) everywhere, remainder on the first sites."""
    eta = np.full(size, n // size, dtype=np.int64)
    eta[: n - int(eta.sum())] += 1
    return eta


def _seed(config: RunConfig) -> tuple[int, str]:
    env = os.environ.get("CONDENSIM_SEED")
    if env is not None:
        return int(env), "env"
    return config.experiment.seed, "config"


def _x0(config: RunConfig, size: int) -> np.ndarray:
    if config.experiment.x0 is not None:
        return np.asarray(config.experiment.x0, dtype=float)
    return np.full(size, 1.0 / size)


def _site_cols(size: int) -> list[str]:
    return [f"x_{j + 1}" for j in range(size)]


def _diffusion_config(config: RunConfig, seed: int) -> DiffusionConfig:
    d = config.diffusion
    return DiffusionConfig(
        chain=config.build_chain(),
        b=config.model.b,
        seed=seed,
        dt_base=d.dt_base,
        eps_abs=d.eps_abs,
        noise_scale=d.noise_scale,
        dt_rule=d.dt_rule,
        horizon=d.horizon,
        t_max=d.t_max,
        sample_times=tuple(config.experiment.sample_times),
        cond_delta=config.experiment.delta,
        allow_small_b=config.model.allow_small_b,
    )


def _zrp_config(config: RunConfig, n: int, seed: int) -> ZrpConfig:
    return ZrpConfig(
        chain=config.build_chain(),
        n_particles=n,
        b=config.model.b,
        seed=seed,
        g_family=config.model.g_family,
        g_correction=config.model.g_correction,
        sample_times=tuple(config.experiment.sample_times),
        horizon=config.experiment.horizon,
        delta=config.experiment.delta,
    )


def cmd_chain_info(config: RunConfig, outdir: Path, manifest: ManifestTimer) -> int:
    chain = config.build_chain()
    size = chain.size
    rows: list[tuple] = []
    for j in range(size):
        rows.append(("m", j + 1, "", chain.m[j]))
    a_s = dirichlet_matrix(chain)
    for i in range(size):
        for j in range(size):
            rows.append(("a_s", i + 1, j + 1, a_s[i, j]))
    subset = config.subset_indices(size)
    if len(subset) >= 2:
        basis = harmonic_extensions(chain, subset)
        for ki, k in enumerate(subset):
            for j in range(size):
                rows.append(("u", j + 1, k + 1, basis.matrix[j, ki]))
        trace = trace_rates(chain, subset)
        for ji, j in enumerate(subset):
            for ki, k in enumerate(subset):
                rows.append(("r_B", j + 1, k + 1, trace.rates[ji, ki]))
        ups = upsilon_map(chain, subset)
        for ki, k in enumerate(subset):
            for j in range(size):
                rows.append(("upsilon", k + 1, j + 1, ups.matrix[ki, j]))
        if len(subset) < size:
            p = config.effective_p()
            rows.append(("a0", "", "", superharmonic_radius(chain, subset, config.model.b, p)))
    path = write_csv(outdir / "chain_info.csv", ["quantity", "i", "j", "value"], rows)
    sys.stdout.write(path.read_text())
    return 0


def cmd_zrp_run(config: RunConfig, outdir: Path, manifest: ManifestTimer) -> int:
    exp = config.experiment
    size = config.build_chain().size
    for n in config.model.N:
        zc = _zrp_config(config, n, manifest.seed)
        eta0 = (
            np.asarray(exp.eta0, dtype=np.int64)
            if exp.eta0 is not None
            else default_eta0(size, n)
        )
        ens = simulate_zrp_ensemble(zc, eta0, exp.paths)
        if ens.samples is not None:
            rows = []
            for i in range(exp.paths):
                for ti, t in enumerate(ens.times):
                    point = ens.samples[i, ti]
                    if np.any(np.isnan(point)):
                        continue
                    rows.append((i, float(t), *point))
            write_csv(
                outdir / f"zrp_samples_N{n}.csv",
                ["path_id", "t", *_site_cols(size)],
                rows,
            )
        cond_rows = [
            (
                i,
                float(ens.t_cond[i]),
                int(ens.winner[i]) + 1 if ens.winner[i] >= 0 else None,
            )
            for i in range(exp.paths)
        ]
        write_csv(
            outdir / f"zrp_condensation_N{n}.csv",
            ["path_id", "t_cond", "winner"],
            cond_rows,
        )
        print(f"N={n}: {exp.paths} paths, condensed {np.sum(~np.isnan(ens.t_cond))}")
    return 0


def cmd_diff_run(config: RunConfig, outdir: Path, manifest: ManifestTimer) -> int:
    exp = config.experiment
    dc = _diffusion_config(config, manifest.seed)
    x0 = _x0(config, dc.chain.size)
    ens = simulate_diffusion_ensemble(dc, x0, exp.paths)
    size = dc.chain.size
    if ens.samples is not None:
        rows = []
        for i in range(exp.paths):
            for ti, t in enumerate(ens.times):
                point = ens.samples[i, ti]
                if np.any(np.isnan(point)):
                    continue
                rows.append((i, float(t), *point, int(ens.sample_masks[i, ti])))
        write_csv(
            outdir / "diff_samples.csv",
            ["path_id", "t", *_site_cols(size), "active_B"],
            rows,
        )
    abs_rows = []
    for i in range(exp.paths):
        trace = ens.trace(i)
        vertex = trace.trapped_vertex
        if not trace.events and vertex is not None:
            # Started at a vertex: a single synthetic row records it.
            abs_rows.append((i, 0, 0.0, mask_of((vertex,)), vertex + 1))
            continue
        for n_ev, (t_ev, b_ev) in enumerate(trace.events, start=1):
            is_last = n_ev == len(trace.events)
            abs_rows.append(
                (
                    i,
                    n_ev,
                    t_ev,
                    mask_of(b_ev),
                    vertex + 1 if (is_last and vertex is not None) else None,
                )
            )
    write_csv(
        outdir / "diff_absorption.csv",
        ["path_id", "n", "sigma_n", "B_n", "trapped_vertex"],
        abs_rows,
    )
    trapped = int((ens.trapped_vertex >= 0).sum())
    print(f"{exp.paths} paths, trapped {trapped}")
    return 0


def cmd_compare(config: RunConfig, outdir: Path, manifest: ManifestTimer) -> int:
    exp = config.experiment
    chain = config.build_chain()
    dc = replace(_diffusion_config(config, manifest.seed), sample_times=())
    x0 = _x0(config, chain.size)
    dens = simulate_diffusion_ensemble(dc, x0, exp.paths)
    hist_d = winner_distribution(
        dens.trapped_vertex, chain.size, engine="diffusion", chain_id=chain.fingerprint()
    )
    rows = []
    for n in config.model.N:
        zc = _zrp_config(config, n, manifest.seed)
        eta0 = (
            np.asarray(exp.eta0, dtype=np.int64)
            if exp.eta0 is not None
            else default_eta0(chain.size, n)
        )
        zens = simulate_zrp_ensemble(zc, eta0, exp.paths)
        hist_z = winner_distribution(
            zens.winner, chain.size, engine="zrp", chain_id=chain.fingerprint()
        )
        cmp = compare_winner(hist_z, hist_d)
        ks_cond = ks_distance(zens.t_cond, dens.t_cond)
        ks_sigma1 = ks_distance(zens.t_cond, dens.sigma1)
        rows.append(
            (n, cmp.tv, cmp.tv_stderr, cmp.chi2, cmp.dof, cmp.pvalue, ks_cond, ks_sigma1)
        )
        print(
            f"N={n}: winner TV={cmp.tv:.4f} (se {cmp.tv_stderr:.4f}), "
            f"KS cond={ks_cond:.4f}, KS sigma1={ks_sigma1:.4f}"
        )
    write_csv(
        outdir / "compare_report.csv",
        [
            "N", "tv_winner", "tv_stderr", "chi2", "dof", "pvalue",
            "ks_condensation", "ks_sigma1_vs_condensation",
        ],
        rows,
    )
    return 0


def _identity_rows(chain) -> list[tuple]:
    """Aggregate residuals of the exact chain identities over all
    subsets with at least two sites."""
    from itertools import combinations

    size = chain.size
    a_s = dirichlet_matrix(chain)
    rows = []
    rows.append(
        ("invariance", "m^T G residual", float(np.abs(chain.m @ chain.generator).max()), IDENTITY_TOL)
    )
    rows.append(
        ("dirichlet_row_sums", "max |row sum|", float(np.abs(a_s.sum(axis=1)).max()), IDENTITY_TOL)
    )
    rows.append(
        (
            "dirichlet_psd",
            "-(min eigenvalue)",
            float(-np.linalg.eigvalsh(a_s).min()),
            IDENTITY_TOL,
        )
    )
    eq10 = uvuv = kills = minv = unity = 0.0
    for nb in range(2, size + 1):
        for subset in combinations(range(size), nb):
            basis = harmonic_extensions(chain, subset)
            trace = trace_rates(chain, subset)
            ups = upsilon_map(chain, subset)
            lu = chain.generator @ basis.matrix  # (L, |B|): column k is L u_k
            eq10 = max(eq10, float(np.abs(trace.drift_vectors - lu[list(subset), :]).max()))
            for ji, j in enumerate(subset):
                uvuv = max(
                    uvuv,
                    float(np.abs(ups(chain.generator[j]) - trace.drift_vectors[ji]).max()),
                )
            for j in chain_mod.subset_complement(size, subset):
                kills = max(kills, float(np.abs(ups(chain.generator[j])).max()))
            minv = max(minv, float(np.abs(trace.m_B @ trace.generator).max()))
            unity = max(unity, float(np.abs(basis.matrix.sum(axis=1) - 1.0).max()))
    rows.append(("trace_drift_vs_harmonic", "max residual", eq10, IDENTITY_TOL))
    rows.append(("projection_intertwines", "max residual", uvuv, IDENTITY_TOL))
    rows.append(("projection_kills_complement", "max residual", kills, IDENTITY_TOL))
    rows.append(("restricted_measure_invariant", "max residual", minv, IDENTITY_TOL))
    rows.append(("partition_of_unity", "max residual", unity, UNITY_TOL))
    return rows


def cmd_verify(config: RunConfig, outdir: Path, manifest: ManifestTimer) -> int:
    chain = config.build_chain()
    report: list[tuple] = []
    for name, detail, value, tol in _identity_rows(chain):
        passed = manifest.record(name, value <= tol)
        report.append((name, detail, value, tol, passed))

    subset = config.subset_indices(chain.size)
    sign_subset = subset if len(subset) < chain.size else tuple(range(chain.size - 1))
    if len(sign_subset) >= 2:
        psi = superharmonic_sign_check(
            chain, sign_subset, config.model.b, config.effective_p(),
            config.experiment.eps, config.experiment.grid,
        )
        passed = manifest.record("superharmonic_sign", psi.max_value <= SIGN_TOL)
        report.append(
            ("superharmonic_sign", f"B mask {mask_of(sign_subset)}", psi.max_value, SIGN_TOL, passed)
        )

    dc = replace(_diffusion_config(config, manifest.seed), sample_times=())
    x0 = _x0(config, chain.size)
    dens = simulate_diffusion_ensemble(dc, x0, config.experiment.paths)
    check = hitting_bound_check(
        chain,
        tuple(int(j) for j in np.nonzero(x0 > 0)[0]),
        config.model.b,
        config.effective_q(),
        dens.sigma1,
    )
    passed = manifest.record("hitting_bound", not check.violated)
    report.append(
        (
            "hitting_bound",
            f"mean sigma1 {fmt(check.empirical_mean_sigma1)} +- {fmt(check.ci_halfwidth)}",
            check.empirical_mean_sigma1 - check.ci_halfwidth,
            check.bound,
            passed,
        )
    )

    write_csv(
        outdir / "verify_report.csv",
        ["check", "detail", "value", "threshold", "passed"],
        report,
    )
    for name, detail, value, tol, passed in report:
        status = "PASS" if passed else "FAIL"
        print(f"[{status}] {name}: {fmt(value)} vs {fmt(tol)} ({detail})")
    return 0 if manifest.all_passed else 1


def cmd_psi4_check(config: RunConfig, outdir: Path, manifest: ManifestTimer) -> int:
    chain = config.build_chain()
    subset = config.subset_indices(chain.size)
    if len(subset) >= chain.size:
        subset = tuple(range(chain.size - 1))
    psi = superharmonic_sign_check(
        chain, subset, config.model.b, config.effective_p(),
        config.experiment.eps, config.experiment.grid,
    )
    passed = manifest.record("superharmonic_sign", psi.max_value <= SIGN_TOL)
    write_csv(
        outdir / "psi4_report.csv",
        [
            "B", "b", "p", "eps", "a0", "resolution", "n_points",
            "max_value", *(f"argmax_x_{j + 1}" for j in range(chain.size)), "passed",
        ],
        [
            (
                mask_of(psi.B), psi.b, psi.p, psi.eps, psi.a0, psi.resolution,
                psi.n_points, psi.max_value, *psi.argmax, passed,
            )
        ],
    )
    print(f"max over region: {fmt(psi.max_value)} ({'PASS' if passed else 'FAIL'})")
    return 0 if passed else 1


COMMANDS = {
    "chain-info": cmd_chain_info,
    "zrp-run": cmd_zrp_run,
    "diff-run": cmd_diff_run,
    "compare": cmd_compare,
    "verify": cmd_verify,
    "psi4-check": cmd_psi4_check,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="condensim",
        description="Simulation laboratory for condensing zero-range processes "
        "and their absorbed-diffusion scaling limit.",
    )
    parser.add_argument("subcommand", choices=sorted(COMMANDS))
    parser.add_argument("config", help="path to a YAML run configuration")
    parser.add_argument("--out", help="override output.directory", default=None)
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
        return 2
    try:
        config = parse_config(text)
    except (ConfigSchemaError, ConfigRangeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        seed, seed_source = _seed(config)
    except ValueError:
        print("config error: CONDENSIM_SEED must be an integer", file=sys.stderr)
        return 2
    manifest = ManifestTimer(args.subcommand, config_hash(config), seed, seed_source)
    outdir = Path(args.out) if args.out else Path(config.output.directory)
    outdir.mkdir(parents=True, exist_ok=True)

    try:
        code = COMMANDS[args.subcommand](config, outdir, manifest)
    except (ConfigSchemaError, ConfigRangeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CondensimError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        manifest.record("completed", False)
        manifest.write(outdir / "run_manifest.json", __version__)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    manifest.write(outdir / "run_manifest.json", __version__)
    return code


if __name__ == "__main__":
    sys.exit(main())
