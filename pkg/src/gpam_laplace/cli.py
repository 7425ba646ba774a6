"""Command-line front end.

    gpam-laplace {solve,minimize,hessian,a0,lambda-study,validate,verify}
                 --config PATH [--out DIR] [--seed U64] [--workers N] [--verify]

Exit codes: 0 success, 1 verification mismatch, 2 configuration error,
3 numerical hypothesis violation, 4 I/O error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import tempfile
from pathlib import Path

from . import lab
from .config import Built, ConfigError, config_hash, load_config, normalize
from .errors import HypothesisViolation, NonDegeneracyViolation
from .fredholm import A0Report
from .hessian import assemble
from .minimizer import MinimizerResult, multistart, nondegeneracy_check
from .noise import renorm_constant
from .solver import solve_gpam
from .torus import field_to_bytes, save_path

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_IO = 0, 1, 2, 3, 4


class Run:
    """One command invocation: validated config, output directory, manifest."""

    def __init__(self, cfg: dict, out: Path, workers: int):
        self.cfg = cfg
        self.b = Built(cfg)
        self.out = out
        self.workers = workers
        self.files: dict[str, str] = {}

    # -- writers --------------------------------------------------------------
    def write_bytes(self, name: str, data: bytes) -> None:
        (self.out / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def write_json(self, name: str, obj: dict) -> None:
        doc = {"config_hash": self.b.hash, **obj}
        self.write_bytes(name, (json.dumps(doc, indent=1, sort_keys=True) + "\n").encode())

    def finish(self, command: str) -> None:
        s = self.b.solver
        manifest = {
            "command": command,
            "config_hash": self.b.hash,
            "config": {k: v for k, v in self.cfg.items() if not k.startswith("_")},
            "N": s.n,
            "T": s.T,
            "M": s.steps,
            "files": dict(sorted(self.files.items())),
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")

    # -- pipeline stages ----------------------------------------------------------
    def minimise(self) -> MinimizerResult:
        if hasattr(self, "_minres"):
            return self._minres
        opt = self.cfg["minimizer"]
        res, basins = multistart(self.b.observable, self.b.solver, self.b.u0, starts=opt["starts"], seed=self.b.seed,
                                 workers=self.workers, max_iter=opt["max_iter"], tol=opt["tol"])
        self._minres, self._basins = res, basins
        return res

    def hessian(self):
        if hasattr(self, "_bundle"):
            return self._bundle
        res = self.minimise()
        w = solve_gpam(res.h_star, self.b.u0, self.b.solver)
        self._w = w
        self._bundle = assemble(res.h_star, w, self.b.observable, self.b.solver, self.cfg["basis_size"])
        return self._bundle

    def a0(self) -> A0Report:
        bundle = self.hessian()
        margin = nondegeneracy_check(bundle.A)
        if margin <= 0:
            raise NonDegeneracyViolation(margin - 1.0)
        delta = self.b.deltas[-1]
        spec = self.b.mollifier(delta)
        c = renorm_constant(delta, spec, self.b.solver.n)
        est = lab.estimate_lambda(self._minres.h_star, self._w, self.b.observable, delta,
                                  self.cfg["mc"]["lambda_samples"], self.b.seed, self.b.solver, spec,
                                  workers=self.workers, config_hash=self.b.hash)
        return A0Report.build(bundle.trace_q, est.mean, est.stderr, bundle.eig_A, delta,
                              {"c_delta": c, "mollifier": spec.to_dict(), "seed": self.b.seed,
                               "lambda_samples": est.n_samples, "trace_Atilde": bundle.trace_Atilde,
                               "hs_norm_A": bundle.hs_norm_A, "phase_value": self._minres.value})


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_solve(run: Run) -> None:
    path = solve_gpam(run.b.control, run.b.u0, run.b.solver)
    tmp = run.out / "path.tf2d"
    save_path(path, tmp)
    run.files["path.tf2d"] = hashlib.sha256(tmp.read_bytes()).hexdigest()
    run.write_json("solve.json", {"sup_l2": path.sup_l2(), "t_grid": [float(t) for t in path.t_grid]})


def cmd_minimize(run: Run) -> None:
    res = run.minimise()
    data = field_to_bytes(res.h_star)
    run.write_bytes("h_star.tf2d", data)
    run.write_json("minimizer.json", {
        **res.summary(),
        "h_star_file": "h_star.tf2d",
        "h_star_sha256": hashlib.sha256(data).hexdigest(),
        "basins": run._basins,
    })


def cmd_hessian(run: Run) -> None:
    bundle = run.hessian()
    run.write_bytes("hessian.bin", bundle.to_bytes())
    run.write_json("hessian.json", {**bundle.header(), "nondegeneracy_margin": nondegeneracy_check(bundle.A)})


def cmd_a0(run: Run) -> None:
    rep = run.a0()
    run.write_json("a0_report.json", json.loads(rep.to_json()))
    print(rep.table())


def cmd_lambda_study(run: Run) -> None:
    res = run.minimise()
    w = solve_gpam(res.h_star, run.b.u0, run.b.solver)
    study = lab.lambda_delta_study(res.h_star, w, run.b.observable, run.b.deltas, run.cfg["mc"]["lambda_samples"],
                                   run.b.seed, run.b.solver, run.b.mollifier_shape, workers=run.workers)
    run.write_json("lambda_study.json", study.as_dict())
    lines = ["delta,lambda,stderr,n"] + [f"{e.delta!r},{e.mean!r},{e.stderr!r},{e.n_samples}" for e in study.estimates]
    run.write_bytes("lambda_study.csv", ("\n".join(lines) + "\n").encode())


def cmd_validate(run: Run) -> None:
    rep = run.a0()
    mc = run.cfg["mc"]
    rows = lab.validate_expansion(mc["epsilons"], run.b.deltas[-1], run.b.observable, run._minres.value, rep.a0,
                                  mc["J_samples"], run.b.seed, run.b.solver, u0=run.b.u0,
                                  mollifier=run.b.mollifier_shape, workers=run.workers)
    run.write_json("a0_report.json", json.loads(rep.to_json()))
    run.write_bytes("expansion.csv", lab.rows_to_csv(rows).encode())
    run.write_json("expansion.json", {"rows": [r.__dict__ for r in rows]})


COMMANDS = {
    "solve": cmd_solve,
    "minimize": cmd_minimize,
    "hessian": cmd_hessian,
    "a0": cmd_a0,
    "lambda-study": cmd_lambda_study,
    "validate": cmd_validate,
}


def verify_dir(out: Path, cfg: dict) -> list[str]:
    """Problems found when re-deriving the config hash and file digests of an output directory."""
    problems = []
    want = config_hash(cfg)
    man_path = out / "manifest.json"
    if not man_path.exists():
        return [f"{man_path} missing"]
    man = json.loads(man_path.read_text())
    if man.get("config_hash") != want:
        problems.append(f"manifest hash {man.get('config_hash')} != config hash {want}")
    for name, digest in man.get("files", {}).items():
        p = out / name
        if not p.exists():
            problems.append(f"{name} missing")
            continue
        data = p.read_bytes()
        if hashlib.sha256(data).hexdigest() != digest:
            problems.append(f"{name} digest mismatch")
        if name.endswith(".json") and json.loads(data).get("config_hash") != want:
            problems.append(f"{name} embeds a different config hash")
    return problems


def _execute(command: str, cfg: dict, out: Path, workers: int) -> None:
    out.mkdir(parents=True, exist_ok=True)
    run = Run(cfg, out, workers)
    COMMANDS[command](run)
    run.finish(command)


def _compare_dirs(a: Path, b: Path) -> list[str]:
    diffs = []
    names = sorted({p.name for p in a.iterdir()} | {p.name for p in b.iterdir()})
    for name in names:
        pa, pb = a / name, b / name
        if not (pa.exists() and pb.exists()) or pa.read_bytes() != pb.read_bytes():
            diffs.append(name)
    return diffs


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gpam-laplace", description="Laplace-asymptotics lab for generalised PAM on T^2")
    p.add_argument("command", choices=[*COMMANDS, "verify"])
    p.add_argument("--config", required=True, help="YAML or JSON run configuration")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="worker threads")
    p.add_argument("--verify", action="store_true", help="re-run into a scratch directory and compare bytes")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            raw = {k: v for k, v in cfg.items() if not k.startswith("_")}
            raw["seed"] = args.seed
            cfg = normalize(raw, base_dir=Path(cfg["_base_dir"]) if "_base_dir" in cfg else None)
        out = Path(args.out)
        if args.command == "verify":
            problems = verify_dir(out, cfg)
            for msg in problems:
                print(f"verify: {msg}", file=sys.stderr)
            print("verify: ok" if not problems else f"verify: {len(problems)} problem(s)")
            return EXIT_MISMATCH if problems else EXIT_OK
        _execute(args.command, cfg, out, max(1, args.workers))
        if args.verify:
            with tempfile.TemporaryDirectory() as tmp:
                _execute(args.command, copy.deepcopy(cfg), Path(tmp), max(1, args.workers))
                diffs = _compare_dirs(out, Path(tmp))
            if diffs:
                print(f"verify: re-run differs in {', '.join(diffs)}", file=sys.stderr)
                return EXIT_MISMATCH
            print("verify: re-run bit-identical")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisViolation as exc:
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
