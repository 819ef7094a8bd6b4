"""Command-line driver: certify, gap, benchmark, estimate, optimize-circuit,
train-nqs, congestion, enforce-check.

Exit codes: 0 success, 2 configuration error, 3 runtime estimator error.
A --config JSON file may supply defaults; explicit flags win. All outputs are
written atomically and embed {schema_version, config_digest}; timestamps go
only to the .meta.json sidecar.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import chains, circuit_opt, estimators, io, nqs, protocol
from .bits import RandomSource
from .models import (CliffordTPhaseModel, GhzXModel, GhzZModel, HaarDenseModel,
                     PhaseStateModel, RotatedProductPhaseModel)
from .states import DenseState, NoiseSpec, apply_noise


class ConfigError(ValueError):
    pass


def build_model(family: str, n: int, seed: int):
    if family == "phase":
        return PhaseStateModel(n=n, seed=seed)
    if family == "correlated-phase":
        return PhaseStateModel(n=n, phase_source="correlated", seed=seed)
    if family == "rotated-phase":
        return RotatedProductPhaseModel(n=n, seed=seed)
    if family == "ghz-x":
        return GhzXModel(n=n)
    if family == "ghz-z":
        return GhzZModel(n=n)
    if family == "haar":
        return HaarDenseModel(n=n, seed=seed)
    if family == "clifford-t":
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        return CliffordTPhaseModel(n=n, t_pattern=tuple(gen.integers(-1, 2, size=n)),
                                   cz_chain=True)
    raise ConfigError(f"unknown family {family!r}")


def parse_noise(text: str) -> NoiseSpec:
    try:
        kind, p = text.split(":")
        return NoiseSpec(kind, float(p))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad noise spec {text!r}: {exc}") from exc


def default_tau(family: str, n: int, model=None) -> float:
    if family in ("phase", "correlated-phase", "clifford-t"):
        return float(n)
    if family == "ghz-x":
        return n / 2.0
    if model is not None and n <= 12:
        rep = chains.spectral_report(chains.walk_from_model(model, 1))
        if rep.tau is None:
            raise ConfigError("degenerate walk: supply --tau explicitly")
        return rep.tau
    raise ConfigError("tau unavailable for this family; pass --tau")


def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    return RandomSource(seed, stream).generator()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_certify(args) -> int:
    model = build_model(args.family, args.n, args.seed)
    state = apply_noise(DenseState.from_model(model), parse_noise(args.noise),
                        _rng(args.seed, 1))
    tau = args.tau if args.tau is not None else default_tau(args.family, args.n, model)
    config = protocol.CertificationConfig(m=args.m, epsilon=args.eps,
                                          delta=args.delta, tau=tau,
                                          shots=args.shots)
    fn = protocol.certify_direct if args.direct else protocol.certify
    report = fn(state, model, config, _rng(args.seed, 2))
    cfg = _resolved(args, {"tau": tau, "shots_used": report.count})
    io.write_json(args.out, {"report": report.to_dict()}, cfg)
    print(f"verdict: {report.verdict} (mean omega = {report.mean:.6f}, "
          f"threshold = {report.threshold:.6f})")
    return 0


def cmd_gap(args) -> int:
    model = build_model(args.family, args.n, args.seed)
    walk = chains.walk_from_model(model, args.m, exact_jump=args.exact_jump)
    rep = chains.spectral_report(walk)
    cfg = _resolved(args, {})
    io.write_json(args.out, {"spectral_report": rep.to_dict(),
                             "walk": walk.descriptor()}, cfg)
    print(f"gap = {rep.gap:.9f}, tau = {rep.tau}, degeneracy = {rep.degeneracy}")
    return 0


def _parse_sweep(text: str):
    # kind:start..stop:count
    try:
        kind, rest = text.split(":", 1)
        span, count = rest.rsplit(":", 1)
        lo, hi = span.split("..")
        return kind, np.linspace(float(lo), float(hi), int(count))
    except ValueError as exc:
        raise ConfigError(f"bad sweep spec {text!r}") from exc


def cmd_benchmark(args) -> int:
    model = build_model(args.family, args.n, args.seed)
    base = DenseState.from_model(model)
    kind, ps = _parse_sweep(args.noise_sweep)
    ideal_p = base.probabilities()
    d = 1 << args.n
    rows = []
    for k, p in enumerate(ps):
        rng = _rng(args.seed, 10 + k)
        state = apply_noise(base, NoiseSpec(kind, float(p)), rng)
        fid = estimators.exact_fidelity(state, base)
        batch = protocol.collect_records(state, args.m, args.shots, rng)
        omega = protocol.evaluate_overlaps(batch, model)
        omega_hat = float(np.mean(omega))
        slope = (2.0 ** args.m / (2.0 ** args.m - 1.0)) * ((d - 1.0) / d)
        shadow = estimators.normalized_shadow_overlap(omega_hat, args.m, args.n)
        shadow_se = slope * float(np.std(omega, ddof=1) / math.sqrt(len(omega)))
        # Z samples from the lab state for XEB
        noisy_p = ((1.0 - state.p_white) * state.base.probabilities()
                   + state.p_white / d)
        cdf = np.cumsum(noisy_p)
        cdf[-1] = 1.0
        samples = np.searchsorted(cdf, rng.random(args.shots), side="right")
        xeb_val, xeb_se = estimators.xeb(samples, ideal_p)
        rows.append([kind, float(p), fid, shadow, shadow_se, xeb_val, xeb_se,
                     args.n, args.m, args.shots, args.seed])
    cfg = _resolved(args, {})
    io.write_csv(args.out,
                 ["noise_type", "p", "fidelity", "normalized_shadow_overlap",
                  "shadow_se", "xeb", "xeb_se", "n", "m", "shots", "seed"],
                 rows, cfg)
    print(f"wrote {len(rows)} sweep rows to {args.out}")
    return 0


def random_two_local_hamiltonian(n: int, terms: int, seed: int):
    """Seeded sum of weighted two-qubit Pauli strings as a SparseObservable."""
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    paulis = []
    for _ in range(terms):
        i, j = sorted(gen.choice(n, size=2, replace=False))
        pi, pj = gen.integers(1, 4, size=2)  # 1=X, 2=Y, 3=Z
        w = float(gen.standard_normal())
        paulis.append((int(i), int(j), int(pi), int(pj), w))

    def single(p, bit):
        # returns [(new_bit, factor)] for <new_bit| P |bit>
        if p == 1:
            return [(bit ^ 1, 1.0 + 0j)]
        if p == 2:
            return [(bit ^ 1, (1j if bit == 0 else -1j))]
        return [(bit, 1.0 + 0j if bit == 0 else -1.0 + 0j)]

    def row(x: int):
        acc = {}
        for i, j, pi, pj, w in paulis:
            bi = (x >> i) & 1
            bj = (x >> j) & 1
            for nbi, fi in single(pi, bi):
                for nbj, fj in single(pj, bj):
                    y = (x & ~((1 << i) | (1 << j))) | (nbi << i) | (nbj << j)
                    # row oracle returns <x|O|y>: P|y> = f|x> means f = <x|P|y>
                    acc[y] = acc.get(y, 0.0 + 0.0j) + w * np.conj(fi * fj)
        return [(y, v) for y, v in sorted(acc.items()) if v != 0]

    return paulis, row


def dense_from_paulis(paulis, n: int) -> np.ndarray:
    mats = {1: np.array([[0, 1], [1, 0]], dtype=complex),
            2: np.array([[0, -1j], [1j, 0]], dtype=complex),
            3: np.array([[1, 0], [0, -1]], dtype=complex)}
    d = 1 << n
    H = np.zeros((d, d), dtype=complex)
    for i, j, pi, pj, w in paulis:
        term = np.array([[1.0 + 0j]])
        for q in range(n):  # qubit q occupies bit q: kron later qubits outermost
            op = mats[pi] if q == i else (mats[pj] if q == j else np.eye(2))
            term = np.kron(op, term)
        H += w * term
    return H


def cmd_estimate(args) -> int:
    model = build_model(args.family, args.n, args.seed)
    rng = _rng(args.seed, 3)
    cfg = _resolved(args, {})
    if args.kind == "hamiltonian":
        paulis, row = random_two_local_hamiltonian(args.n, args.terms, args.seed)
        amps = model.amplitudes()
        psi = amps / np.linalg.norm(amps)
        H = dense_from_paulis(paulis, args.n)
        o2 = float(np.real(np.vdot(psi, H @ H @ psi)))
        obs = estimators.SparseObservable(row=row, sparsity=4 * args.terms,
                                          o2_bound=o2)
        mom = estimators.MoMConfig(epsilon=args.eps, delta=args.delta)
        res = estimators.sparse_expectation(model, obs, mom, rng)
        io.write_json(args.out, {"estimate_real": res["estimate"].real,
                                 "estimate_imag": res["estimate"].imag,
                                 "B": res["B"], "K": res["K"],
                                 "samples": res["samples"],
                                 "resampled": res["resampled"]}, cfg)
        print(f"<H> estimate = {res['estimate'].real:.6f}")
        return 0
    if args.kind == "purity":
        res = estimators.purity(model, list(range(args.subsystem_size)), args.n,
                                args.shots, rng)
        io.write_json(args.out, {"purity": res["purity"], "se": res["se"],
                                 "raw_mean": res["raw_mean"],
                                 "resampled": res["resampled"]}, cfg)
        print(f"purity(|A|={args.subsystem_size}) = {res['purity']:.6f}")
        return 0
    raise ConfigError(f"unknown estimate kind {args.kind!r}")


def cmd_optimize_circuit(args) -> int:
    gen = _rng(args.seed, 4)
    t_pattern = tuple(int(v) for v in gen.integers(-1, 2, size=args.n))
    target = CliffordTPhaseModel(n=args.n, t_pattern=t_pattern, cz_chain=True)
    n_gates = int(np.count_nonzero(t_pattern)) + (args.n - 1)
    steps = args.steps if args.steps is not None else args.n * n_gates + 20
    _, trace = circuit_opt.greedy_optimize(target, steps, args.objective,
                                           _rng(args.seed, 5), T=args.score_shots)
    rows = [[r.step, r.action, r.fidelity, r.shadow] for r in trace]
    cfg = _resolved(args, {"t_pattern": list(t_pattern), "steps_used": steps})
    io.write_csv(args.out, ["step", "action", "fidelity", "shadow"], rows, cfg)
    print(f"final fidelity = {trace[-1].fidelity:.6f} after {trace[-1].step} steps")
    return 0


def cmd_train_nqs(args) -> int:
    model = PhaseStateModel(n=args.n, phase_source=args.phase_source,
                            seed=args.seed)
    rng = _rng(args.seed, 6)
    data = nqs.simulate_training_data(model.phases, args.n, args.examples, rng)
    fmap = nqs.default_feature_map(model, count=args.features)
    net = nqs.DualInputNet(fmap.width, args.n, rng)
    net, trace = nqs.train(data, net, fmap, args.epochs, args.lr, rng)
    if args.fine_tune_epochs > 0:
        lr2 = args.fine_tune_lr if args.fine_tune_lr is not None else args.lr / 4.0
        net, trace2 = nqs.train(data, net, fmap, args.fine_tune_epochs, lr2, rng)
        offset = len(trace)
        for s in trace2:
            s.epoch += offset
        trace = trace + trace2
    sizes = sorted(set(max(1, round(f * args.n)) for f in (0.1, 0.25, 0.5, 0.75, 1.0)))
    ev = nqs.evaluate(net, fmap, model.phases, args.n, args.test_size,
                      _rng(args.seed, 7), subsystem_sizes=sizes)
    cfg = _resolved(args, {})
    io.write_csv(args.out_prefix + "_trace.csv",
                 ["epoch", "Tlogloss", "Vlogloss", "TShadowF", "VShadowF"],
                 [[s.epoch, s.train_logloss, s.val_logloss, s.train_shadow,
                   s.val_shadow] for s in trace], cfg)
    io.write_csv(args.out_prefix + "_eval.csv", ["metric", "value", "se"],
                 [["fidelity", ev["fidelity"], 0.0],
                  ["shadow_overlap", ev["shadow_overlap"], 0.0]], cfg)
    io.write_csv(args.out_prefix + "_purity.csv",
                 ["subsystem_size", "purity", "se"],
                 [[row["size"], row["purity"], row["se"]]
                  for row in ev["purity_curve"]], cfg)
    io.write_json(args.out_prefix + "_net.json", {"net": net.to_dict()}, cfg)
    print(f"fidelity = {ev['fidelity']:.4f}, shadow = {ev['shadow_overlap']:.4f}")
    return 0


def cmd_congestion(args) -> int:
    rng = _rng(args.seed, 8)
    z, pi = chains.porter_thomas(args.n, rng)
    res = chains.congestion_bound(z, args.n)
    walk = chains.build_walk(pi, args.n, 1)
    rep = chains.spectral_report(walk)
    rows = []
    d = 1 << args.n
    for u in range(d):
        for j in range(args.n):
            if res["load"][u, j] > 0:
                rows.append([f"{u}:{u ^ (1 << j)}", res["load"][u, j]])
    cfg = _resolved(args, {"rho": res["rho"], "tau": rep.tau})
    io.write_csv(args.out, ["edge_id", "load"], rows, cfg)
    print(f"rho = {res['rho']:.4f}, tau = {rep.tau:.4f}, "
          f"bad vertices = {res['bad_count']}")
    return 0


def cmd_enforce_check(args) -> int:
    model = build_model(args.family, args.n, args.seed)
    params = chains.EscapeParams(alpha=args.alpha)
    enforced = chains.enforce_escape(model, params)
    d = 1 << args.n
    tags = {}
    changed = 0
    base_amps = model.query_many(np.arange(d, dtype=np.uint64))
    enf_amps = enforced.query_many(np.arange(d, dtype=np.uint64))
    for x in range(d):
        ok, tag = enforced.check(x)
        if not ok:
            tags[tag] = tags.get(tag, 0) + 1
        if abs(base_amps[x] - enf_amps[x]) > 1e-12:
            changed += 1
    cfg = _resolved(args, {})
    io.write_json(args.out, {"violations": tags, "changed_amplitudes": changed,
                             "unchanged": changed == 0}, cfg)
    print(f"changed amplitudes: {changed}/{d}; violations: {tags}")
    return 0


# ---------------------------------------------------------------------------
# parser plumbing
# ---------------------------------------------------------------------------

def _resolved(args, extra: dict) -> dict:
    cfg = {k: v for k, v in vars(args).items()
           if k not in ("func", "config") and not callable(v)}
    cfg.update(extra)
    return cfg


def _add_common(p, n_default=None):
    p.add_argument("--n", type=int, required=n_default is None, default=n_default)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=0,
                   help="worker cap; results are independent of thread count")
    p.add_argument("--out", default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shadowcert")
    ap.add_argument("--config", default=None, help="JSON file of default flags")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify")
    _add_common(p)
    p.add_argument("--family", default="phase")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--eps", type=float, default=0.2)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--noise", default="white:0.0")
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--shots", type=int, default=None)
    p.add_argument("--direct", action="store_true")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("gap")
    _add_common(p)
    p.add_argument("--family", default="phase")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--exact-jump", action="store_true", dest="exact_jump")
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("benchmark")
    _add_common(p)
    p.add_argument("--family", default="haar")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--noise-sweep", default="white:0..1:11", dest="noise_sweep")
    p.add_argument("--shots", type=int, default=20000)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("estimate")
    _add_common(p)
    p.add_argument("--kind", default="hamiltonian")
    p.add_argument("--family", default="haar")
    p.add_argument("--terms", type=int, default=4)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--shots", type=int, default=30000)
    p.add_argument("--subsystem-size", type=int, default=2, dest="subsystem_size")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("optimize-circuit")
    _add_common(p)
    p.add_argument("--objective", default="shadow",
                   choices=["shadow", "fidelity"])
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--score-shots", type=int, default=10000, dest="score_shots")
    p.set_defaults(func=cmd_optimize_circuit)

    p = sub.add_parser("train-nqs")
    _add_common(p)
    p.add_argument("--phase-source", default="pseudorandom", dest="phase_source")
    p.add_argument("--examples", type=int, default=50000)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--features", type=int, default=nqs.DEFAULT_FEATURE_COUNT)
    p.add_argument("--fine-tune-epochs", type=int, default=0,
                   dest="fine_tune_epochs",
                   help="extra training epochs at a reduced learning rate")
    p.add_argument("--fine-tune-lr", type=float, default=None,
                   dest="fine_tune_lr")
    p.add_argument("--test-size", type=int, default=10000, dest="test_size")
    p.add_argument("--out-prefix", required=True, dest="out_prefix")
    p.set_defaults(func=cmd_train_nqs)

    p = sub.add_parser("congestion")
    _add_common(p)
    p.set_defaults(func=cmd_congestion)

    p = sub.add_parser("enforce-check")
    _add_common(p)
    p.add_argument("--family", default="phase")
    p.add_argument("--alpha", type=float, default=0.5)
    p.set_defaults(func=cmd_enforce_check)
    return ap


def _apply_config_file(ap: argparse.ArgumentParser, argv: list) -> list:
    """Pull --config out early and turn its JSON keys into default flags."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    path = argv[i + 1]
    try:
        with open(path) as fh:
            blob = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    rest = argv[:i] + argv[i + 2:]
    extra = []
    for key, val in blob.items():
        flag = "--" + key.replace("_", "-")
        if ("--" + key) in rest or flag in rest:
            continue  # explicit flags win
        if isinstance(val, bool):
            if val:
                extra.append(flag)
        else:
            extra.extend([flag, str(val)])
    return rest + extra


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv and "SHADOWCERT_OUTPUT_DIR" in os.environ:
        pass
    ap = build_parser()
    try:
        argv = _apply_config_file(ap, argv)
        args = ap.parse_args(argv)
        if args.out is None and hasattr(args, "out"):
            base = os.environ.get("SHADOWCERT_OUTPUT_DIR", ".")
            default_name = f"{args.command.replace('-', '_')}_out"
            ext = ".csv" if args.command in ("benchmark", "optimize-circuit",
                                             "congestion") else ".json"
            args.out = os.path.join(base, default_name + ext)
        if getattr(args, "threads", 0) < 0:
            raise ConfigError("--threads must be nonnegative")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        # distinguish config-shaped errors from statistical runtime failures
        if isinstance(exc, (estimators.DegenerateXEBError,
                            chains.ConstructionFailedError)):
            print(f"runtime error: {exc}", file=sys.stderr)
            return 3
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (estimators.DegenerateXEBError, chains.ConstructionFailedError,
            nqs.TrainingDivergedError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
