"""Command line front end.

Exit codes: 0 positive answer, 1 negative answer, 2 unknown or budget-limited,
64 usage error, 65 bad input.  ``--format json`` prints one JSON document per
call; keys and labels are sorted so output is stable across runs.
"""
from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click

from .bisim import UnknownConstant, greatest_bisimulation
from .definability import ConstantOutsideScope, ConstantPolicy, HasNominals, is_definable, uniform_separator
from .encodings import (
    HaltsWithinDepth, MalformedMachine, MinskyMachine, encode_phi, encode_psi,
    intended_prefix, phi_conjuncts, psi_conjuncts, shared_signature_2rm,
)
from .formula import (
    ClosureIndex, Fragment, ParseError, Signature, max_grade, modal_depth, parse_formula,
    signature_of, to_text, uses,
)
from .mosaic import decide_separation
from .sat import UnsupportedFragment, bounded_model_search, sat_check
from .semantics import Structure, UnknownSymbol, model_check
from .startype import decide_separation_inverse

EXIT_YES, EXIT_NO, EXIT_UNKNOWN, EXIT_USAGE, EXIT_INPUT = 0, 1, 2, 64, 65

_INPUT_ERRORS = (
    ParseError, UnsupportedFragment, HasNominals, ConstantOutsideScope, UnknownSymbol,
    UnknownConstant, MalformedMachine, HaltsWithinDepth, ValueError, KeyError, OSError,
)


class InputError(click.ClickException):
    exit_code = EXIT_INPUT


def _emit(ctx, doc: dict, code: int, text_lines=None):
    obj = ctx.find_root().obj
    doc = dict(doc)
    doc["exit"] = code
    if obj.get("timing"):
        doc["seconds"] = round(time.perf_counter() - obj["t0"], 3)
    if obj.get("format") == "json":
        click.echo(json.dumps(doc, sort_keys=True, indent=1))
    else:
        for line in text_lines if text_lines is not None else _text(doc):
            click.echo(line)
    ctx.exit(code)


def _text(doc):
    out = []
    for k in sorted(doc):
        v = doc[k]
        if isinstance(v, (dict, list)):
            v = json.dumps(v, sort_keys=True)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        out.append(f"{k}: {v}")
    return out


def _formula(text, what="formula"):
    try:
        return parse_formula(text)
    except ParseError as e:
        raise InputError(f"{what}: {e}") from e


def _fragment(name):
    try:
        return Fragment.parse(name)
    except ValueError as e:
        raise InputError(str(e)) from e


def _structure(path):
    try:
        return Structure.load(path)
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise InputError(f"cannot read structure {path}: {e}") from e


def _point(A: Structure, label, what="point"):
    try:
        return A.index(label)
    except (KeyError, ValueError) as e:
        raise InputError(f"{what} {label!r} is not an element") from e


def _sig_text(sig: Signature):
    return {"props": sorted(sig.props), "rels": sorted(sig.rels), "consts": sorted(sig.consts)}


def _type_text(C: ClosureIndex, t: int):
    return sorted(to_text(b) for i, b in enumerate(C.base) if i and (t >> i) & 1)


def _guard(fn):
    """Map library exceptions on bad input to exit 65."""
    def run(*a, **kw):
        try:
            return fn(*a, **kw)
        except click.exceptions.Exit:
            raise
        except click.ClickException:
            raise
        except _INPUT_ERRORS as e:
            raise InputError(f"{type(e).__name__}: {e}") from e
    run.__name__ = fn.__name__
    run.__doc__ = fn.__doc__
    return run


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text", help="Output shape.")
@click.option("--jobs", type=click.IntRange(1), default=1, help="Parallelism hint (accepted, currently single-threaded).")
@click.option("--timing", is_flag=True, help="Add wall-clock seconds to the output.")
@click.pass_context
def cli(ctx, fmt, jobs, timing):
    """Graded modal logic: model checking, bisimulation, satisfiability, definability, separation."""
    ctx.obj = {"format": fmt, "jobs": jobs, "timing": timing, "t0": time.perf_counter()}


@cli.command()
@click.option("--formula", required=True)
@click.pass_context
@_guard
def parse(ctx, formula):
    """Parse a formula and report its normal form and measures."""
    f = _formula(formula)
    doc = {
        "query": "parse", "answer": "ok", "formula": to_text(f), "fragment": uses(f).name,
        "modal_depth": modal_depth(f), "max_grade": max_grade(f), "signature": _sig_text(signature_of(f)),
    }
    _emit(ctx, doc, EXIT_YES)


@cli.command()
@click.option("--model", "model", required=True, type=click.Path(dir_okay=False))
@click.option("--point", required=True)
@click.option("--formula", required=True)
@click.pass_context
@_guard
def check(ctx, model, point, formula):
    """Model check a formula at a point of a structure file."""
    A = _structure(model)
    f = _formula(formula)
    ok = model_check(A, _point(A, point), f)
    doc = {"query": "check", "answer": "true" if ok else "false", "formula": to_text(f), "point": point}
    _emit(ctx, doc, EXIT_YES if ok else EXIT_NO)


@cli.command()
@click.option("--model-a", required=True, type=click.Path(dir_okay=False))
@click.option("--model-b", required=True, type=click.Path(dir_okay=False))
@click.option("--sig", "sig", default=None, help="props=..;rels=..;consts=.. (default: both structures' symbols).")
@click.option("--fragment", default="ML", show_default=True)
@click.option("--points", default=None, help="a,b: ask whether these two points are bisimilar.")
@click.pass_context
@_guard
def bisim(ctx, model_a, model_b, sig, fragment, points):
    """Greatest bisimulation between two structures."""
    A, B = _structure(model_a), _structure(model_b)
    F = _fragment(fragment)
    s = Signature.parse(sig) if sig is not None else (A.signature() & B.signature())
    Z = greatest_bisimulation(A, B, s, F)
    doc = {"query": "bisim", "fragment": F.name, "signature": _sig_text(s), "relation": Z.labelled(A, B)}
    code = EXIT_YES
    if points is not None:
        a, _, b = points.partition(",")
        ok = (_point(A, a.strip()), _point(B, b.strip())) in Z
        doc["answer"] = "bisimilar" if ok else "not-bisimilar"
        code = EXIT_YES if ok else EXIT_NO
    else:
        doc["answer"] = "ok"
    _emit(ctx, doc, code)


@cli.command()
@click.option("--formula", required=True)
@click.option("--fragment", default=None, help="Check the formula lies in this fragment first.")
@click.option("--emit-model", type=click.Path(dir_okay=False), default=None)
@click.pass_context
@_guard
def sat(ctx, formula, fragment, emit_model):
    """Satisfiability by type elimination (inverse-free fragments)."""
    f = _formula(formula)
    r = sat_check(f, _fragment(fragment) if fragment else None)
    doc = {"query": "sat", "answer": "sat" if r else "unsat", "exact": True}
    if r:
        doc["point"] = r.model.labels[r.point]
        doc["model"] = r.model.to_dict()
        if emit_model:
            r.model.dump(emit_model)
            doc["model_path"] = str(emit_model)
    _emit(ctx, doc, EXIT_YES if r else EXIT_NO)


@cli.command("oracle-sat")
@click.option("--formula", required=True)
@click.option("--max-size", required=True, type=click.IntRange(1))
@click.pass_context
@_guard
def oracle_sat(ctx, formula, max_size):
    """Exhaustive model search up to a size bound (exit 1: none up to the bound)."""
    f = _formula(formula)
    r = bounded_model_search(f, max_size)
    doc = {"query": "oracle-sat", "answer": "sat" if r else "none-up-to", "bound": max_size}
    if r:
        doc["point"] = r.model.labels[r.point]
        doc["model"] = r.model.to_dict()
    _emit(ctx, doc, EXIT_YES if r else EXIT_NO)


def _answer_code(kind):
    return {"Definable": EXIT_YES, "Exists": EXIT_YES, "NotDefinable": EXIT_NO, "NotExists": EXIT_NO}.get(kind, EXIT_UNKNOWN)


@cli.command()
@click.option("--formula", required=True)
@click.option("--target", required=True)
@click.pass_context
@_guard
def definable(ctx, formula, target):
    """Is the formula equivalent to a counting-free formula of the target?"""
    a = is_definable(_formula(formula), _fragment(target))
    doc = {"query": "definable", "answer": a.kind, "exact": a.exact}
    if a.witness is not None:
        doc["witness"] = to_text(a.witness)
    _emit(ctx, doc, _answer_code(a.kind))


@cli.command()
@click.option("--formula", required=True)
@click.option("--target", required=True)
@click.option("--constants", default="none", show_default=True, help="none | c1,c2 | infinite:c1,c2")
@click.pass_context
@_guard
def uniform(ctx, formula, target, constants):
    """Strongest counting-free consequence (uniform separator)."""
    a = uniform_separator(_formula(formula), ConstantPolicy.parse(constants), _fragment(target))
    doc = {"query": "uniform", "answer": a.kind, "exact": a.exact}
    if a.witness is not None:
        doc["witness"] = to_text(a.witness)
    _emit(ctx, doc, _answer_code(a.kind))


def _sep_doc(query, r, mode, target):
    doc = {
        "query": query, "answer": r.verdict, "exact": bool(r.exact), "mode": mode,
        "target": target.name, "signature": _sig_text(r.rho) if r.rho is not None else None,
    }
    stats = {k: v for k, v in sorted(r.stats.items()) if isinstance(v, (int, bool, str))}
    doc["stats"] = stats
    if r.separable:
        code = EXIT_YES if r.exact else EXIT_UNKNOWN
    else:
        code = EXIT_NO
    return doc, code


def _dump_mosaic_cert(cert, phi, psi, out: Path):
    C = ClosureIndex(phi, psi)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def mos(M):
        return {"side1": [_type_text(C, t) for t in sorted(M.m1)], "side2": [_type_text(C, t) for t in sorted(M.m2)]}

    graph = {
        "star": mos(cert["star"]),
        "types": [_type_text(C, t) for t in cert["types"]],
        "survivors": [mos(M) for M in cert["survivors"]],
        "anchor": [mos(M) for M in cert["anchor"]],
        "witnesses": [
            {"slot": si, "rel": rel, "candidates": [mos(M) for M in wc.candidates],
             "edges": sorted([[side, _type_text(C, t)], [_type_text(C, s), ui, j]]
                             for (side, t), tgts in wc.edges.items() for s, ui, j in tgts)}
            for (si, rel), wc in sorted(cert["witnesses"].items())
        ],
    }
    (out / "mosaics.json").write_text(json.dumps(graph, sort_keys=True, indent=1) + "\n")
    written.append("mosaics.json")
    m = cert.get("models")
    if m is not None:
        m["A1"].dump(out / "model1.json")
        m["A2"].dump(out / "model2.json")
        rel = {"points": [m["A1"].labels[m["a1"]], m["A2"].labels[m["a2"]]],
               "pairs": m["beta"].labelled(m["A1"], m["A2"])}
        (out / "relation.json").write_text(json.dumps(rel, sort_keys=True, indent=1) + "\n")
        written += ["model1.json", "model2.json", "relation.json"]
    return [str(out / w) for w in written]


def _dump_star_cert(cert, phi, psi, out: Path):
    C = ClosureIndex(phi, psi)
    out.mkdir(parents=True, exist_ok=True)

    def succ(ss):
        return [{"rel": S[0], "inverse": S[1], "type": _type_text(C, t), "count": "many" if n == float("inf") else n}
                for S, t, n in ss]

    def st(x):
        return {"type": _type_text(C, x.t), "parents": succ(x.sp), "children": succ(x.sc)}

    mosaics = [{f"side{i}": [st(x) for s, x in M.star_types() if s == i] for i in (1, 2)}
               for M in cert["mosaics"]]
    doc = {"root": cert["root"], "mosaics": mosaics, "levels": cert.get("levels"),
           "witnessed": sorted(cert["witnesses"])}
    (out / "startypes.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    return [str(out / "startypes.json")]


_MODES = click.Choice(["plain", "craig", "unary"])


@cli.command()
@click.option("--phi", required=True)
@click.option("--psi", required=True)
@click.option("--target", required=True)
@click.option("--mode", type=_MODES, default="craig", show_default=True)
@click.option("--budget", type=click.IntRange(1), default=None, help="Search cap (default: GRADSEP_BUDGET or 20000).")
@click.option("--emit-cert", type=click.Path(file_okay=False), default=None)
@click.pass_context
@_guard
def separate(ctx, phi, psi, target, mode, budget, emit_cert):
    """Separation by mosaic elimination (inverse-free inputs)."""
    f1, f2 = _formula(phi, "phi"), _formula(psi, "psi")
    F = _fragment(target)
    r = decide_separation(f1, f2, F, mode, budget)
    doc, code = _sep_doc("separate", r, mode, F)
    if emit_cert and r.certificate is not None:
        doc["certificate"] = _dump_mosaic_cert(r.certificate, f1, f2, Path(emit_cert))
    _emit(ctx, doc, code)


@cli.command("separate-inv")
@click.option("--phi", required=True)
@click.option("--psi", required=True)
@click.option("--target", required=True)
@click.option("--mode", type=_MODES, default="craig", show_default=True)
@click.option("--budget", type=click.IntRange(1), default=None, help="Search steps per class pair.")
@click.option("--emit-cert", type=click.Path(file_okay=False), default=None)
@click.pass_context
@_guard
def separate_inv(ctx, phi, psi, target, mode, budget, emit_cert):
    """Separation with converse modalities via star-type mosaics."""
    f1, f2 = _formula(phi, "phi"), _formula(psi, "psi")
    F = _fragment(target)
    r = decide_separation_inverse(f1, f2, F, mode, budget)
    doc, code = _sep_doc("separate-inv", r, mode, F)
    if emit_cert and r.certificate is not None:
        doc["certificate"] = _dump_star_cert(r.certificate, f1, f2, Path(emit_cert))
    _emit(ctx, doc, code)


@cli.command("encode-2rm")
@click.option("--machine", required=True, type=click.Path(dir_okay=False))
@click.option("--psi", "want_psi", is_flag=True, help="Emit the register formula instead of the chain formula.")
@click.option("--prefix", type=click.IntRange(1), default=None, help="Also build intended-model prefixes to this depth.")
@click.option("--emit", type=click.Path(file_okay=False), default=None, help="Directory for prefix files.")
@click.pass_context
@_guard
def encode_2rm(ctx, machine, want_psi, prefix, emit):
    """Formulas (and intended-model prefixes) for a two-register machine."""
    try:
        M = MinskyMachine.parse(Path(machine).read_text())
    except OSError as e:
        raise InputError(f"cannot read machine {machine}: {e}") from e
    conjs = psi_conjuncts(M) if want_psi else phi_conjuncts(M)
    f = encode_psi(M) if want_psi else encode_phi(M)
    doc = {
        "query": "encode-2rm", "answer": "ok", "which": "psi" if want_psi else "phi",
        "formula": to_text(f), "conjuncts": [[n, to_text(g)] for n, g in conjs],
        "shared": _sig_text(shared_signature_2rm(M)),
    }
    if prefix is not None:
        P = intended_prefix(M, prefix)
        doc["prefix"] = {"depth": prefix, "trace": [list(c) for c in P.trace],
                         "populations": [list(p) for p in P.populations]}
        if emit:
            out = Path(emit)
            out.mkdir(parents=True, exist_ok=True)
            P.A.dump(out / "chain.json")
            P.B.dump(out / "registers.json")
            (out / "relation.json").write_text(json.dumps({"pairs": P.relation.labelled(P.A, P.B)}, indent=1) + "\n")
            checks = {"phi": [[c.name, to_text(c.formula), list(c.depths)] for c in P.phi_checks],
                      "psi": [[c.name, to_text(c.formula), list(c.depths)] for c in P.psi_checks]}
            (out / "local_checks.json").write_text(json.dumps(checks, indent=1) + "\n")
            doc["prefix"]["files"] = [str(out / n) for n in ("chain.json", "registers.json", "relation.json", "local_checks.json")]
    lines = None if ctx.find_root().obj["format"] == "json" or prefix is not None else [doc["formula"]]
    _emit(ctx, doc, EXIT_YES, lines)


def main(argv=None) -> int:
    """Entry point; returns the exit code instead of raising SystemExit."""
    try:
        rv = cli.main(args=argv, prog_name="gradsep", standalone_mode=False)
    except click.exceptions.Exit as e:
        return e.exit_code
    except InputError as e:
        e.show()
        return EXIT_INPUT
    except click.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.FileError as e:
        e.show()
        return EXIT_INPUT
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except click.Abort:
        return EXIT_USAGE
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    sys.exit(main())
