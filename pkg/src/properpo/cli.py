"""Command-line interface.

Exit codes: 0 when the command succeeds and its check passes, 1 when a
mathematical check fails (a valid finding, reported with its witness) and 2
for usage, input or I/O errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from typing import Optional

import jsonschema
import numpy as np

from . import catalog
from .constructors import (POTENTIALS, EligibilityError, FConditionError,
                           composite_decompose, phi_po_build)
from .core_math import sigmoid
from .klst import ALL_ALPHAS, ChoiceTable, verify_klst
from .pipeline import (PSI_LIBRARY, STEP1_POTENTIALS, ConvergenceError, kl_closed_form,
                       length_normalize, oracle_length_solution, recover_reward_diffs,
                       solve_step1, spec_from_dict)
from .proper_loss import check_proper
from .schemas import COMMANDS, SCHEMA_VERSION
from .trainer import TrainingDivergence, evaluate, generate, train, write_trace

EXIT_OK, EXIT_FINDING, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad input, bad config or unreadable file: exit code 2."""


def _clipped_linear(z):
    return np.clip(0.5 + 0.5 * np.asarray(z, dtype=float), 0.0, 1.0)


LINKS = {
    "sigmoid": sigmoid,
    "sigmoid_half": lambda z: sigmoid(np.asarray(z, dtype=float) / 2.0),
    "gumbel": lambda z: -np.expm1(-np.exp(np.asarray(z, dtype=float))),
    "matsushita": lambda z: 0.5 * (1.0 + np.asarray(z) / np.sqrt(np.asarray(z) ** 2 + 1.0)),
    "clipped_linear": _clipped_linear,
}


# ------------------------------------------------------------------ plumbing


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def config_hash(config: dict) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def load_json(path: str, what: str = "config"):
    """Read JSON, turning parse errors into :class:`UsageError` with line/column."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {what} {path!r}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {what} {path!r} at line {exc.lineno}, "
                         f"column {exc.colno}: {exc.msg}") from None


def validate(command: str, config: dict) -> None:
    try:
        jsonschema.validate(config, COMMANDS[command])
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise UsageError(f"config field {path!r}: {exc.message}") from None


def _loss_params(cfg: dict, loss_id: str) -> dict:
    keys = catalog.DEFAULT_PARAMS[loss_id]
    return {k: cfg[k] for k in keys if k in cfg}


# ------------------------------------------------------------------ commands


def cmd_catalog(cfg):
    ids = [cfg["id"]] if "id" in cfg else catalog.ids()
    rows = []
    for loss_id in ids:
        params = dict(catalog.DEFAULT_PARAMS[loss_id])
        params.update(_loss_params(cfg, loss_id))
        e = catalog.get(loss_id, **params)
        z = np.array([-1.0, 0.0, 1.0])
        row = e.to_dict()
        row["F"] = {str(v): float(e.link(np.array(v))) for v in z}
        row["psi"] = {str(v): float(e.surrogate(np.array(v))) for v in z}
        rows.append(row)
    return EXIT_OK, {"entries": rows}


def cmd_check_proper(cfg):
    loss_id = cfg["loss"]
    params = dict(catalog.DEFAULT_PARAMS[loss_id])
    params.update(_loss_params(cfg, loss_id))
    e = catalog.get(loss_id, **params)
    n = cfg["n"]
    L = e.binary if n == 2 else e.multiclass
    cert = check_proper(L, n=n, resolution=cfg.get("resolution", 20), tol=cfg.get("tol", 1e-10),
                        loss_id=f"{loss_id}{params or ''}")
    claimed = e.claimed_proper_n2 if n == 2 else e.claimed_proper_n_gt2
    out = cert.to_dict()
    out["claimed_proper"] = claimed
    return (EXIT_OK if cert.proper else EXIT_FINDING), out


def cmd_phipo_build(cfg):
    name = cfg["potential"]
    pot = POTENTIALS[name](cfg["q"]) if name == "tsallis" and "q" in cfg else POTENTIALS[name]()
    try:
        built = phi_po_build(pot, resolution=cfg.get("resolution", 50))
    except EligibilityError as exc:
        return EXIT_FINDING, {"eligible": False, "reason": str(exc), "witness": exc.witness}
    p = np.linspace(0.1, 0.9, 9)
    loss = built.loss
    return EXIT_OK, {"eligible": True, "loss": loss.name, "certificate": built.certificate.to_dict(),
                     "p": p, "l0": loss.l0(p), "l1": loss.l1(p)}


def cmd_composite_build(cfg):
    psi, dpsi = PSI_LIBRARY[cfg["psi"]]
    F = LINKS[cfg["link"]]
    try:
        dec = composite_decompose(psi, F, dpsi=dpsi, resolution=cfg.get("resolution", 50))
    except FConditionError as exc:
        r = exc.result
        return EXIT_FINDING, {"accepted": False, "reason": str(exc), "worst_z": r.worst_z,
                              "F_at_worst": r.F_at_worst, "worst_sum": r.worst_sum}
    except ValueError as exc:
        return EXIT_FINDING, {"accepted": False, "reason": str(exc)}
    return EXIT_OK, {"accepted": True, "debreu": dec.f_condition.debreu,
                     "certificate": dec.built.certificate.to_dict(),
                     "reconstruction_error": dec.reconstruction_error}


def cmd_klst_verify(cfg):
    table_cfg = load_json(cfg["table"], "table")
    try:
        table = ChoiceTable.from_json(table_cfg)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid choice table {cfg['table']!r}: {exc}") from None
    cert = verify_klst(table, alphas=tuple(cfg.get("alphas", ALL_ALPHAS)),
                       alpha_mono=cfg.get("alpha_mono", 0.5), tol=cfg.get("tol", 1e-9),
                       mono_mode=cfg.get("mono_mode", "auto"))
    out = cert.to_dict()
    out["failures"] = [r.to_dict() for r in cert.failures()]
    return (EXIT_OK if cert.passed else EXIT_FINDING), out


def cmd_solve_step1(cfg):
    r = np.asarray(cfg["rewards"], dtype=float)
    pi_ref = np.asarray(cfg.get("pi_ref", np.full(r.size, 1.0 / r.size)), dtype=float)
    if pi_ref.size != r.size:
        raise UsageError("config field 'pi_ref': length must match 'rewards'")
    pi_ref = pi_ref / pi_ref.sum()
    pot = STEP1_POTENTIALS[cfg["potential"]]()
    try:
        res = solve_step1(r, pi_ref, pot, eta=cfg.get("eta", 0.1), tol=cfg.get("tol", 1e-12))
    except ConvergenceError as exc:
        return EXIT_FINDING, {"converged": False, "reason": str(exc)}
    out = {"converged": True, "pi": res.pi, "kkt_residual": res.kkt_residual,
           "iterations": res.iterations, "interior": res.interior}
    if res.interior:
        M = recover_reward_diffs(res.pi, pi_ref, pot.G)
        out["reward_diffs"] = M
        out["max_recovery_error"] = float(np.max(np.abs(M - (r[:, None] - r[None, :]))))
    if cfg["potential"] == "neg_entropy":
        out["closed_form_gap"] = float(np.max(np.abs(res.pi - kl_closed_form(r, pi_ref))))
    return EXIT_OK, out


def cmd_lennorm(cfg):
    f = np.asarray(cfg["factors"], dtype=float)
    mode = cfg["mode"]
    res = length_normalize(f, mode)
    if mode == "kl_geometric":
        oracle = oracle_length_solution(f, lambda t: t * np.log(t), lambda t: np.log(t) + 1.0)
    else:
        oracle = oracle_length_solution(f, lambda t: -np.log(t), lambda t: -1.0 / t)
    gap = abs(res.value - oracle)
    tol = cfg.get("tol", 1e-6)
    return (EXIT_OK if gap <= tol else EXIT_FINDING), {
        "value": res.value, "alpha": res.alpha, "oracle": oracle, "gap": gap}


def cmd_train(cfg):
    try:
        spec = spec_from_dict(cfg["spec"])
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"config field 'spec': {exc}") from None
    base = LINKS[cfg.get("link", "sigmoid")]
    scale = cfg.get("link_scale", 1.0)

    def F_gen(z):
        return scale * np.asarray(base(z), dtype=float)

    rewards = np.asarray(cfg["rewards"], dtype=float)
    if len({len(row) for row in cfg["rewards"]}) != 1:
        raise UsageError("config field 'rewards': rows must have equal length")
    task = generate(rewards, F_gen, cfg.get("n_samples", 2000), seed=cfg.get("seed", 0))
    expected = cfg.get("expected", False)
    if not expected and task.triples.shape[0] == 0:
        return EXIT_FINDING, {"reason": "every sampled comparison was an abstention"}
    try:
        res = train(spec, task, steps=cfg.get("steps", 500), lr=cfg.get("lr", 1.0),
                    expected=expected, tol=cfg.get("tol", 0.0))
    except TrainingDivergence as exc:
        return EXIT_FINDING, {"diverged": True, "step": exc.step, "reason": str(exc)}
    if "trace" in cfg:
        try:
            write_trace(res.trace, cfg["trace"])
        except OSError as exc:
            raise UsageError(f"cannot write trace {cfg['trace']!r}: {exc.strerror}") from None
    metrics = evaluate(res.policy, task, spec, margin=cfg.get("margin_eval", 0.0))
    return EXIT_OK, {"diverged": False, "spec": spec.name, "metrics": metrics,
                     "abstentions": task.abstentions, "triples": int(task.triples.shape[0]),
                     "final": {"step": res.trace[-1].step, "objective": res.trace[-1].objective,
                               "grad_norm": res.trace[-1].grad_norm},
                     "policy": res.policy.probs}


HANDLERS = {
    "catalog": cmd_catalog,
    "check-proper": cmd_check_proper,
    "phipo-build": cmd_phipo_build,
    "composite-build": cmd_composite_build,
    "klst-verify": cmd_klst_verify,
    "solve-step1": cmd_solve_step1,
    "lennorm": cmd_lennorm,
    "train": cmd_train,
}


# ------------------------------------------------------------------ parser


def _json_arg(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(
            f"malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with the command's parameters")
    common.add_argument("--out", help="write the JSON result here instead of stdout")
    common.add_argument("--seed", type=int)
    common.add_argument("--tol", type=float)
    common.add_argument("--resolution", type=int)

    parser = argparse.ArgumentParser(prog="properpo",
                                     description="Proper-loss preference optimization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text,
                              argument_default=argparse.SUPPRESS)

    def loss_params(p):
        p.add_argument("--tau", type=float)
        p.add_argument("--mu", type=float)
        p.add_argument("--beta", type=float)

    p = add("catalog", "list catalog losses with links and surrogates")
    p.add_argument("--id", choices=catalog.ids())
    loss_params(p)

    p = add("check-proper", "grid-certify properness of a catalog loss")
    p.add_argument("--loss", choices=catalog.ids())
    p.add_argument("--n", type=int)
    loss_params(p)

    p = add("phipo-build", "build a binary loss from a convex potential")
    p.add_argument("--potential", choices=sorted(POTENTIALS))
    p.add_argument("--q", type=float, help="Tsallis exponent")

    p = add("composite-build", "build a loss from a surrogate and a link")
    p.add_argument("--psi", choices=sorted(PSI_LIBRARY))
    p.add_argument("--link", choices=sorted(LINKS))

    p = add("klst-verify", "check the choice-structure axioms on a table")
    p.add_argument("--table")
    p.add_argument("--alphas", type=_json_arg, help="JSON list of mixing weights")
    p.add_argument("--alpha-mono", dest="alpha_mono", type=float)
    p.add_argument("--mono-mode", dest="mono_mode", choices=["auto", "exhaustive", "sampled"])

    p = add("solve-step1", "solve the regularized reward maximization on the simplex")
    p.add_argument("--rewards", type=_json_arg, help="JSON list")
    p.add_argument("--pi-ref", dest="pi_ref", type=_json_arg, help="JSON list")
    p.add_argument("--potential", choices=sorted(STEP1_POTENTIALS))
    p.add_argument("--eta", type=float)

    p = add("lennorm", "normalize a product of token factors")
    p.add_argument("--factors", type=_json_arg, help="JSON list")
    p.add_argument("--mode", choices=["kl_geometric", "is_harmonic"])

    p = add("train", "train a tabular policy on synthetic preferences")
    p.add_argument("--spec", type=_json_arg, help="pipeline spec as JSON")
    p.add_argument("--rewards", type=_json_arg, help="JSON matrix, one row per state")
    p.add_argument("--link", choices=sorted(LINKS))
    p.add_argument("--link-scale", dest="link_scale", type=float)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--expected", action="store_true")
    p.add_argument("--margin-eval", dest="margin_eval", type=float)
    p.add_argument("--trace", help="CSV path for the per-step trace")
    return parser


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge the ``--config`` file with command-line flags (flags win) and validate."""
    cfg = {}
    if getattr(args, "config", None):
        loaded = load_json(args.config)
        if not isinstance(loaded, dict):
            raise UsageError(f"config {args.config!r} must be a JSON object")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if key in ("command", "config", "out") or value is None:
            continue
        cfg[key] = value
    cfg.setdefault("seed", 0)
    validate(args.command, cfg)
    for key in ("table",):
        if key in cfg and not os.path.exists(cfg[key]):
            raise UsageError(f"config field {key!r}: file {cfg[key]!r} does not exist")
    return cfg


def _emit(payload: dict, out: Optional[str], meta: dict) -> None:
    text = json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n"
    if out is None:
        sys.stdout.write(text)
        return
    try:
        with open(out, "w") as fh:
            fh.write(text)
        with open(out + ".meta.json", "w") as fh:
            json.dump(meta, fh, sort_keys=True, indent=2)
    except OSError as exc:
        raise UsageError(f"cannot write {out!r}: {exc.strerror}") from None


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    start = time.time()
    try:
        cfg = resolve_config(args)
        np.random.seed(cfg["seed"])
        code, result = HANDLERS[args.command](cfg)
        payload = {"command": args.command, "schema_version": SCHEMA_VERSION,
                   "config": cfg, "config_hash": config_hash(cfg), "seed": cfg["seed"],
                   "status": "pass" if code == EXIT_OK else "fail", "result": result}
        meta = {"started": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(start)),
                "elapsed_s": time.time() - start,
                "threads": os.environ.get("PROPERPO_THREADS", "1")}
        _emit(payload, getattr(args, "out", None), meta)
        return code
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # remaining ValueErrors come from inputs the schema cannot express
        # (e.g. a reference policy with a zero entry or PROPERPO_THREADS=0)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
