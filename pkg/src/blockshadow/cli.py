"""Command-line front end: reproducible acquisition, estimation, planning,
calibration, and scan workflows over JSON/CSV artifacts.

Exit codes: 0 success, 2 usage or validation, 3 runtime or data error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from fractions import Fraction

import numpy as np

from . import analytics, derand, ml, noise as noise_mod
from .clifford import (
    EnsembleSpec,
    build_mub_ensemble,
    build_stabilizer_basis_ensemble,
    enumerate_clifford,
    indicator_block,
)
from .pauli import BlockLayout, ObservableSum, PauliString
from .serialize import write_csv, write_json
from .shadows import (
    ShadowDataset,
    acquire,
    crm_estimate,
    estimate_fidelity,
    estimate_observable,
    estimate_purity,
    sff_estimate,
)
from .states import (
    StateVector,
    bell_pairs_state,
    expectation_pauli,
    ghz_state,
    ground_state_exact,
    random_circuit_state,
    ssh_ground_state,
    zero_state,
)


class UsageError(Exception):
    pass


def build_state(spec: str, n: int, seed: int = 0) -> StateVector:
    """Builtin state specs: zero | bell | ghz | random-circuit:DEPTH |
    ssh:V:W | ground:FILE."""
    if spec == "zero":
        return zero_state(n)
    if spec == "bell":
        return bell_pairs_state(n)
    if spec == "ghz":
        return ghz_state(n)
    if spec.startswith("random-circuit:"):
        depth = int(spec.split(":", 1)[1])
        rng = np.random.default_rng(np.random.SeedSequence(entropy=[seed, 0x57A7E]))
        return random_circuit_state(n, depth, rng)
    if spec.startswith("ssh:"):
        _, v, w = spec.split(":")
        return ssh_ground_state(n, float(v), float(w))
    if spec.startswith("ground:"):
        path = spec.split(":", 1)[1]
        obs = _load_observable(path)
        if obs.n != n:
            raise UsageError(f"hamiltonian acts on {obs.n} qubits, expected {n}")
        return ground_state_exact(obs)[1]
    raise UsageError(f"unknown state spec {spec!r}")


def _load_observable(path) -> ObservableSum:
    with open(path) as fh:
        return ObservableSum.from_json(json.load(fh))


def _load_dataset(path) -> ShadowDataset:
    with open(path) as fh:
        return ShadowDataset.from_json(json.load(fh))


def _load_noise(path) -> noise_mod.NoiseModel:
    with open(path) as fh:
        return noise_mod.NoiseModel.from_json(json.load(fh))


def _layout(n: int, k: int) -> BlockLayout:
    try:
        return BlockLayout(n, k)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _estimate_rows(ds, obs, state=None):
    rows = []
    for coeff, p in obs.terms:
        from .shadows import estimate_pauli

        res = estimate_pauli(ds, p)
        row = [p.to_text(), res.mean, res.stderr, ds.n_u, ds.n_s, ds.k]
        if state is not None:
            exact = expectation_pauli(state, p)
            pred = analytics.variance_pauli_multishot(p, exact, ds.n_u, ds.n_s, ds.layout)
            z = (res.mean - exact) / res.stderr if res.stderr > 0 else 0.0
            row += [exact, pred, z]
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# subcommands


def cmd_acquire(args):
    layout = _layout(args.n, args.k)
    state = build_state(args.state, args.n, args.seed)
    spec = EnsembleSpec(args.ensemble, layout)
    noise = _load_noise(args.noise) if args.noise else None
    ds = acquire(
        state, spec, args.nu, args.ns, seed=args.seed, noise=noise, measure_seed=args.measure_seed
    )
    write_json(args.out, ds.to_json())
    print(f"wrote {args.out}: {ds.n_u} records x {ds.n_s} shots")
    return 0


def cmd_estimate(args):
    ds = _load_dataset(args.dataset)
    obs = _load_observable(args.targets)
    state = build_state(args.state, ds.n, ds.seed) if args.state else None
    header = ["observable", "mean", "stderr", "N_U", "N_S", "k"]
    if state is not None:
        header += ["exact", "predicted_var", "z"]
    rows = _estimate_rows(ds, obs, state)
    total = estimate_observable(ds, obs, median_groups=args.median_groups)
    rows.append(["TOTAL", total.mean, total.stderr, ds.n_u, ds.n_s, ds.k] + ([""] * 3 if state else []))
    write_csv(args.out, header, rows)
    print(f"wrote {args.out}")
    return 0


def cmd_purity(args):
    ds = _load_dataset(args.dataset)
    res = estimate_purity(ds)
    write_csv(
        args.out,
        ["observable", "mean", "stderr", "N_U", "N_S", "k"],
        [["purity", res.mean, res.stderr, ds.n_u, ds.n_s, ds.k]],
    )
    print(f"wrote {args.out}: purity = {res.mean:.6g} +- {res.stderr:.2g}")
    return 0


def cmd_fidelity(args):
    ds = _load_dataset(args.dataset)
    target = build_state(args.target_state, ds.n, ds.seed)
    res = estimate_fidelity(ds, target)
    write_csv(
        args.out,
        ["observable", "mean", "stderr", "N_U", "N_S", "k"],
        [["fidelity", res.mean, res.stderr, ds.n_u, ds.n_s, ds.k]],
    )
    print(f"wrote {args.out}: fidelity = {res.mean:.6g} +- {res.stderr:.2g}")
    return 0


def cmd_crm(args):
    ds = _load_dataset(args.dataset)
    obs = _load_observable(args.targets)
    sigma = build_state(args.sigma, ds.n, ds.seed)
    ds_sigma = _load_dataset(args.sigma_dataset) if args.sigma_dataset else None
    report = None
    if args.report:
        with open(args.report) as fh:
            report = noise_mod.CalibrationReport.from_json(json.load(fh))
    rows = []
    for coeff, p in obs.terms:
        single = ObservableSum(ds.n, [(1.0, p)])
        res = crm_estimate(ds, sigma, single, mode=args.mode, ds_sigma=ds_sigma, report=report)
        rows.append([p.to_text(), res.mean, res.stderr, ds.n_u, ds.n_s, ds.k])
    res_total = crm_estimate(ds, sigma, obs, mode=args.mode, ds_sigma=ds_sigma, report=report)
    rows.append(["TOTAL", res_total.mean, res_total.stderr, ds.n_u, ds.n_s, ds.k])
    write_csv(args.out, ["observable", "mean", "stderr", "N_U", "N_S", "k"], rows)
    print(f"wrote {args.out}")
    return 0


def cmd_sff(args):
    layout = _layout(args.n, args.k)
    h = _load_observable(args.hamiltonian)
    if h.n != args.n:
        raise UsageError("hamiltonian size does not match --n")
    res = sff_estimate(h, args.t, layout, args.m, seed=args.seed)
    typ = analytics.variance_sff_typical(args.n, args.k, res.mean, args.m)
    write_csv(
        args.out,
        ["observable", "mean", "stderr", "M", "k", "typical_var"],
        [[f"sff(t={args.t:g})", res.mean, res.stderr, args.m, args.k, typ]],
    )
    print(f"wrote {args.out}: K(t) = {res.mean:.6g} +- {res.stderr:.2g}")
    return 0


def cmd_calibrate(args):
    ds = _load_dataset(args.dataset)
    report = noise_mod.calibrate_alpha(ds, factorized=not args.direct)
    write_json(args.out, report.to_json())
    print(f"wrote {args.out}: {len(report.factors)} labels")
    return 0


def cmd_mitigate(args):
    ds = _load_dataset(args.dataset)
    obs = _load_observable(args.targets)
    with open(args.report) as fh:
        report = noise_mod.CalibrationReport.from_json(json.load(fh))
    res = noise_mod.mitigated_estimate(ds, obs, report, clamp=args.clamp)
    rows = [["TOTAL", res.mean, res.stderr, ds.n_u, ds.n_s, ds.k]]
    for coeff, p in obs.terms:
        single = ObservableSum(ds.n, [(1.0, p)])
        r = noise_mod.mitigated_estimate(ds, single, report, clamp=args.clamp)
        rows.insert(-1, [p.to_text(), r.mean, r.stderr, ds.n_u, ds.n_s, ds.k])
    write_csv(args.out, ["observable", "mean", "stderr", "N_U", "N_S", "k"], rows)
    print(f"wrote {args.out}")
    return 0


def _derand_run(targets, n, k, args):
    layout = _layout(n, k)
    config = derand.DerandConfig(
        eps=args.eps,
        layout=layout,
        candidate_kind=args.candidates,
        basis_budget=args.bases,
        min_coverage=args.min_cover,
    )
    return derand.derandomize(targets, config)


def cmd_derandomize(args):
    obs = _load_observable(args.targets)
    targets = obs.paulis()
    if not targets:
        raise UsageError("empty target set")
    n = obs.n
    plan = _derand_run(targets, n, args.k, args)
    write_json(args.out, plan.to_json())
    cov = derand.coverage_report(plan)
    write_csv(
        args.coverage,
        ["pauli", "count"],
        [[p.to_text(), cov[p]] for p in targets],
    )
    print(
        f"wrote {args.out}: {len(plan.bases)} bases; conf <= expected: "
        f"{derand.conf(targets, plan.bases, args.eps) <= derand.expected_conf(targets, len(plan.bases), plan.config.layout, args.eps) + 1e-9}"
    )
    if args.compare_k:
        rows = []
        for k in [int(v) for v in args.compare_k.split(",")]:
            plan_k = _derand_run(targets, n, k, args)
            rows.append([k, len(plan_k.bases)])
        write_csv(args.compare_out, ["k", "bases"], rows)
        print(f"wrote {args.compare_out}")
    return 0


def cmd_phase_scan(args):
    if args.n % 2:
        raise UsageError("phase scan needs even n")
    layout = _layout(args.n, args.k)
    w_grid = np.linspace(args.w_min, args.w_max, args.w_points)
    noise = _load_noise(args.noise) if args.noise else None
    alpha = args.alpha
    ensemble = args.ensemble
    if noise is not None:
        ensemble = "clifford_full"  # calibration structure needs Clifford blocks
        if alpha is None:
            probe = PauliString(args.n, 0, ((1 << args.k) - 1) << (args.n - args.k), 0)
            spec = EnsembleSpec(ensemble, layout)
            alpha = analytics.m_eigenvalue(probe, layout) / noise_mod.noisy_m(
                probe, spec, noise, layout
            )
    res = ml.phase_scan(
        w_grid,
        args.v,
        args.n,
        args.t,
        layout,
        ensemble,
        seed=args.seed,
        noise=noise,
        n_s=args.ns,
        alpha=alpha,
    )
    write_csv(
        args.out,
        ["w", "pc1", "pc1_stderr"],
        [[w, p, ""] for w, p in zip(res.w_grid, res.pc1)],
    )
    write_json(args.fit_out, res.fit)
    print(f"wrote {args.out} and {args.fit_out}: w0 = {res.w0:.4g}")
    return 0


def cmd_verify(args):
    """Enumeration-oracle self-test: channel eigenvalues, f-table, ensembles."""
    failures = 0

    def check(name, ok):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failures += 0 if ok else 1

    for k in (1, 2):
        group = enumerate_clifford(k)
        ok = True
        for x in range(1 << k):
            for z in range(1 << k):
                if x == 0 and z == 0:
                    continue
                p = PauliString(k, x, z, 0)
                count = sum(indicator_block(t, p) for t in group)
                ok &= count * (2**k + 1) == len(group)
        check(f"channel eigenvalue exact over Cl({k})", ok)

    group = enumerate_clifford(2)
    paulis = [PauliString(2, x, z, 0) for x in range(4) for z in range(4)]
    ind = {p: [indicator_block(t, p) for t in group] for p in paulis}
    layout2 = BlockLayout(2, 2)
    ok = True
    for p in paulis:
        for q in paulis:
            joint = Fraction(sum(a & b for a, b in zip(ind[p], ind[q])), len(group))
            m_p = Fraction(sum(ind[p]), len(group))
            m_q = Fraction(sum(ind[q]), len(group))
            want = Fraction(analytics.f_pq(p, q, layout2)).limit_denominator(10**6)
            ok &= joint == want * m_p * m_q
    check("f-table closed form vs Cl(2) enumeration", ok)

    mub = build_mub_ensemble(2)
    ok = len(mub) == 5
    for p in paulis:
        if p.is_identity:
            continue
        ok &= sum(indicator_block(t, p) for t in mub) == 1
    check("MUB(k=2): 5 members, single coverage", ok)

    stab = build_stabilizer_basis_ensemble(2)
    ok = len(stab) == 15 and len(set(stab)) == 15
    for p in paulis:
        for q in paulis:
            small = Fraction(
                sum(indicator_block(t, p) & indicator_block(t, q) for t in stab), len(stab)
            )
            full = Fraction(sum(a & b for a, b in zip(ind[p], ind[q])), len(group))
            ok &= small == full
    check("stabilizer-basis(k=2): 15 members, f-table matches Cl(2)", ok)

    return 0 if failures == 0 else 3


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockshadow", description="block-structured randomized measurement toolbox"
    )
    parser.add_argument(
        "--threads",
        type=int,
        default=int(os.environ.get("SHADOW_THREADS", "0")),
        help="worker cap; outputs are independent of this value",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("acquire", help="sample a shadow dataset")
    p.add_argument("--state", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument(
        "--ensemble",
        default="clifford_full",
        choices=["clifford_full", "mub", "stabilizer_basis", "haar_dense"],
    )
    p.add_argument("--nu", type=int, required=True)
    p.add_argument("--ns", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--measure-seed", type=int, default=None)
    p.add_argument("--noise", default=None)
    p.add_argument("--out", default="dataset.json")
    p.set_defaults(func=cmd_acquire)

    p = sub.add_parser("estimate", help="Pauli-sum estimates from a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--state", default=None, help="exact-state spec for z-scores")
    p.add_argument("--median-groups", type=int, default=None)
    p.add_argument("--out", default="estimates.csv")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("purity", help="purity estimate from shot pairs")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default="purity.csv")
    p.set_defaults(func=cmd_purity)

    p = sub.add_parser("fidelity", help="fidelity against a pure target state")
    p.add_argument("--dataset", required=True)
    p.add_argument("--target-state", required=True)
    p.add_argument("--out", default="fidelity.csv")
    p.set_defaults(func=cmd_fidelity)

    p = sub.add_parser("crm", help="common-randomized-measurement estimates")
    p.add_argument("--dataset", required=True)
    p.add_argument("--sigma", required=True, help="bias-state spec")
    p.add_argument("--targets", required=True)
    p.add_argument("--mode", default="old", choices=["old", "new"])
    p.add_argument("--sigma-dataset", default=None)
    p.add_argument("--report", default=None, help="calibration report for EM")
    p.add_argument("--out", default="crm.csv")
    p.set_defaults(func=cmd_crm)

    p = sub.add_parser("sff", help="spectral form factor via the echo protocol")
    p.add_argument("--hamiltonian", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--m", type=int, required=True, help="number of echo runs")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default="sff.csv")
    p.set_defaults(func=cmd_sff)

    p = sub.add_parser("calibrate", help="amplification factors from a known-state dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--direct", action="store_true", help="per-label instead of factorized")
    p.add_argument("--out", default="calibration.json")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("mitigate", help="apply calibrated amplification factors")
    p.add_argument("--dataset", required=True)
    p.add_argument("--targets", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--clamp", action="store_true")
    p.add_argument("--out", default="mitigated.csv")
    p.set_defaults(func=cmd_mitigate)

    p = sub.add_parser("derandomize", help="greedy measurement plan for Pauli targets")
    p.add_argument("--targets", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--bases", type=int, default=None)
    p.add_argument("--min-cover", type=int, default=None)
    p.add_argument(
        "--candidates", default="mub", choices=["mub", "stabilizer_basis", "clifford_full"]
    )
    p.add_argument("--compare-k", default=None, help="comma list, e.g. 1,2")
    p.add_argument("--out", default="plan.json")
    p.add_argument("--coverage", default="coverage.csv")
    p.add_argument("--compare-out", default="compare.csv")
    p.set_defaults(func=cmd_derandomize)

    p = sub.add_parser("phase-scan", help="SSH kernel-PCA phase scan")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--t", type=int, default=30, help="records per scan point")
    p.add_argument("--ns", type=int, default=160, help="shots per record")
    p.add_argument("--v", type=float, default=1.0)
    p.add_argument("--w-min", type=float, default=0.2)
    p.add_argument("--w-max", type=float, default=2.0)
    p.add_argument("--w-points", type=int, default=19)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--ensemble", default="haar_dense",
                   choices=["clifford_full", "mub", "stabilizer_basis", "haar_dense"])
    p.add_argument("--noise", default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--out", default="scan.csv")
    p.add_argument("--fit-out", default="fit.json")
    p.set_defaults(func=cmd_phase_scan)

    p = sub.add_parser("verify", help="run the enumeration-oracle self-test")
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, KeyError, RuntimeError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
