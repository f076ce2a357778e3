from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import TextIO

import numpy as np

from itlb import __version__ as itlb_version
from itlb.board import HalfPosition, Kind, WholePosition, decode, superpose
from itlb.config import DEFAULT_MATERIALS, DEFAULT_MAX_MEMORY, ExperimentConfig, parse_board, parse_materials, resolve_cache_dir
from itlb.errors import BudgetExceeded, ItlbError, ParseError
from itlb.intransitivity import (
    Chain,
    ChainKind,
    SearchCursor,
    beats,
    chain_length_study,
    classify_chain,
    exhaustive_search,
    oriented,
    parse_certificate,
    potential_feasibility,
    slot_materials,
    verify_certificate,
)
from itlb.magicians import (
    MagBoard,
    Side,
    Swap,
    apply_swap,
    best_swap,
    heuristic_policy,
    heuristic_value,
    optimal_line,
    play_match,
    row_order,
)
from itlb.reports import mc_to_csv, mc_to_json, to_json
from itlb.solver import Solver
from itlb.tablefile import cache_path, load_table
from itlb.tables import DRAW_CONVENTION, MaterialSignature

EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2
EXIT_TABLE_FILE = 6
DEFAULT_CHECKPOINT = "itlb-search.npz"


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--board", metavar="FILESxRANKS", default="8x8", help="Board size [default: 8x8]")
    parser.add_argument(
        "--topology", choices=["planar", "cylinder", "torus"], default="planar", help="Board topology [default: planar]"
    )
    parser.add_argument("--cache-dir", metavar="PATH", help="Table cache directory [default: $ITLB_CACHE_DIR]")
    parser.add_argument("--workers", metavar="N", type=int, default=1, help="Worker processes [default: 1]")
    parser.add_argument(
        "--max-memory",
        metavar="MIB",
        type=int,
        default=DEFAULT_MAX_MEMORY >> 20,
        help=f"Refuse to build a table needing more memory [default: {DEFAULT_MAX_MEMORY >> 20}]",
    )
    parser.add_argument("-o", "--out", metavar="PATH", help="Output file [default: stdout]")


def _experiment(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--material",
        metavar="SLOTS",
        action="append",
        help=f"Per-slot materials, repeatable for a material study [default: {DEFAULT_MATERIALS}]",
    )
    parser.add_argument("--seed", metavar="N", type=int, default=0, help="Random seed [default: 0]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Intransitively winning players' positions in small-material chess", prog="itlb"
    )
    parser.add_argument("-v", "--version", action="version", version=f"%(prog)s {itlb_version}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Only print warnings and errors")
    verbosity.add_argument("--verbose", action="store_true", help="Print debug messages")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("solve", help="Solve a whole position")
    _common(p)
    p.add_argument("position", metavar="POSITION", help='e.g. "W:Kf6,Qg6 | B:Kh8 | wtm | board=8x8,planar"')

    p = commands.add_parser("beats", help="Compare a White and a Black half-position")
    _common(p)
    p.add_argument("white", metavar="WHITE", help='e.g. "W:Kf6,Qg6"')
    p.add_argument("black", metavar="BLACK", help='e.g. "B:Kh8"')

    p = commands.add_parser("chain", help="Classify a chain of alternating half-positions")
    _common(p)
    p.add_argument("members", metavar="HALF", nargs="+", help="White first, colors alternating")

    p = commands.add_parser("mc", help="Monte-Carlo frequency of intransitive chains")
    _common(p)
    _experiment(p)
    p.add_argument("--chain-len", metavar="N[,N...]", default="4", help="Chain lengths [default: 4]")
    p.add_argument("--samples", metavar="N", type=int, default=1000, help="Chains per run [default: 1000]")
    p.add_argument("--format", choices=["json", "csv"], default="json", help="Report format [default: json]")

    p = commands.add_parser("exhaustive", help="Search every chain for an intransitive cycle")
    _common(p)
    _experiment(p)
    p.add_argument("--chain-len", metavar="N", type=int, default=4, help="Chain length [default: 4]")
    p.add_argument("--budget-nodes", metavar="N", type=int, help="Superpositions to evaluate before stopping")
    p.add_argument("--checkpoint", metavar="PATH", default=DEFAULT_CHECKPOINT, help="Where to save the cursor")
    p.add_argument("--resume", metavar="PATH", help="Resume from a saved cursor")
    p.add_argument("--cert-out", metavar="PATH", help="Write the certificate found here")

    p = commands.add_parser("verify-cert", help="Re-solve every edge of a certificate")
    _common(p)
    p.add_argument("certificate", metavar="FILE", help="Certificate text file")

    p = commands.add_parser("magicians", help="The Magicians card game")
    magicians = p.add_subparsers(dest="action", required=True)
    q = magicians.add_parser("solve", help="Perfect value and one optimal line")
    q.add_argument("board", metavar="BOARD", help='e.g. "XOX/OXO"')
    q = magicians.add_parser("order", help="Heuristic order of the three-card rows")
    q = magicians.add_parser("ai-move", help="The chief magician's swap")
    q.add_argument("board", metavar="BOARD")
    q.add_argument("--side", choices=["good", "bad"], default="bad", help="Side to move [default: bad]")
    q.add_argument("--seed", metavar="N", type=int, help="Tie-break seed [default: first best swap]")
    q = magicians.add_parser("play", help="Play against the chief magician")
    q.add_argument("--board", metavar="BOARD", default="XOX/OXO", help="Starting board [default: XOX/OXO]")
    q.add_argument("--side", choices=["good", "bad"], default="good", help="Your side [default: good]")
    q.add_argument("--seed", metavar="N", type=int, default=0, help="Tie-break seed [default: 0]")

    p = commands.add_parser("table", help="Build or inspect solved tables")
    tables = p.add_subparsers(dest="action", required=True)
    q = tables.add_parser("build", help="Build a table and its sub-tables into the cache")
    _common(q)
    q.add_argument("material", metavar="MATERIAL", help='e.g. "KQvK"')
    q = tables.add_parser("info", help="Summarise a table file")
    q.add_argument("path", metavar="FILE")
    q.add_argument("-o", "--out", metavar="PATH", help="Output file [default: stdout]")
    return parser


def _config(args: argparse.Namespace) -> ExperimentConfig:
    if isinstance(args.chain_len, int):
        lengths: tuple[int, ...] = (args.chain_len,)
    else:
        try:
            lengths = tuple(int(n) for n in args.chain_len.split(","))
        except ValueError:
            raise ParseError(f"chain lengths must be integers, got {args.chain_len!r}")
    return ExperimentConfig(
        board=parse_board(args.board, args.topology),
        materials=tuple(parse_materials(text) for text in (args.material or [DEFAULT_MATERIALS])),
        chain_lengths=lengths,
        samples=getattr(args, "samples", 1),
        seed=args.seed,
        workers=args.workers,
        output_format=getattr(args, "format", "json"),
        output=args.out,
        cache_dir=resolve_cache_dir(args.cache_dir),
        budget_nodes=getattr(args, "budget_nodes", None),
        max_memory=args.max_memory << 20,
    ).validate()


def _slots_text(slots: Sequence[tuple[Kind, ...]]) -> str:
    return ",".join("".join(k.value for k in m) for m in slots)


def _log_progress(label: str):
    def callback(done: int, total: int) -> None:
        logging.info(f"{label}: {done}/{total}")

    return callback


def _solver(args: argparse.Namespace) -> Solver:
    return Solver(resolve_cache_dir(args.cache_dir), workers=args.workers, max_memory=args.max_memory << 20)


def _half(text: str, args: argparse.Namespace) -> HalfPosition:
    half = decode(text, parse_board(args.board, args.topology))
    if not isinstance(half, HalfPosition):
        raise ParseError(f"expected a half-position, got {text!r}")
    return half


def cmd_solve(args: argparse.Namespace, out: TextIO) -> int:
    pos = decode(args.position)
    if not isinstance(pos, WholePosition):
        raise ParseError("expected a whole position with side to move and board", 0)
    solver = _solver(args)
    outcome = solver.solve(pos)
    line = solver.line_text(pos) if outcome.dtm else ""
    out.write(f"{outcome.text} line={line}\n" if line else f"{outcome.text}\n")
    return 0


def cmd_beats(args: argparse.Namespace, out: TextIO) -> int:
    white, black = _half(args.white, args), _half(args.black, args)
    solver = _solver(args)
    relation = beats(white, black, solver)
    outcome = solver.solve(superpose(white, black))
    out.write(f"{relation.value} ({outcome.text})\n")
    return 0


def cmd_chain(args: argparse.Namespace, out: TextIO) -> int:
    chain = Chain(tuple(_half(text, args) for text in args.members))
    result = classify_chain(chain, _solver(args))
    out.write(f"{result.kind.value}\n")
    for edge in result.edges:
        out.write(f"edge {edge.i} {edge.j} {edge.outcome.text}\n")
    if result.kind is not ChainKind.DRAW_DEGENERATE:
        out.write(f"potentials: {potential_feasibility(oriented(result, chain), range(len(chain)))}\n")
    if result.certificate is not None:
        out.write(result.certificate.to_text())
    return 0


def cmd_mc(args: argparse.Namespace, out: TextIO) -> int:
    config = _config(args)
    solver = Solver(config.cache_dir, workers=config.workers, max_memory=config.max_memory)
    reports = []
    for slots in config.materials:
        reports += chain_length_study(
            config.board,
            slots,
            config.chain_lengths,
            config.samples,
            config.seed,
            config.workers,
            solver,
            config.max_rejections,
            _log_progress("mc"),
        )
    emit = mc_to_csv if config.output_format == "csv" else mc_to_json
    out.write(emit(config.to_dict(), "mc", reports))
    return 0


def cmd_exhaustive(args: argparse.Namespace, out: TextIO) -> int:
    config = _config(args)
    solver = Solver(config.cache_dir, workers=config.workers, max_memory=config.max_memory)
    length = config.chain_lengths[0]
    resume = SearchCursor.load(args.resume) if args.resume else None
    if resume is not None and not any(resume.slots == slot_materials(slots, length) for slots in config.materials):
        raise ValueError(f"resume cursor holds {_slots_text(resume.slots)}, which is not among the requested materials")
    results = []
    for slots in config.materials:
        # the checkpoint only holds the material that ran out of budget, the others are recomputed
        cursor = resume if resume is not None and resume.slots == slot_materials(slots, length) else None
        try:
            result = exhaustive_search(
                config.board, slots, length, solver, config.budget_nodes, cursor, _log_progress("exhaustive")
            )
        except BudgetExceeded as e:
            e.cursor.save(args.checkpoint)
            logging.error(f"{e}; checkpoint written to {args.checkpoint}")
            raise
        row = {
            "materials": _slots_text(slots),
            "found": result.certificate is not None,
            "exhausted": result.exhausted,
            "nodes": result.nodes,
        }
        if result.certificate is not None:
            row["certificate"] = result.certificate.to_text()
            if args.cert_out:
                Path(args.cert_out).write_text(result.certificate.to_text(), encoding="utf-8")
        results.append(row)
    out.write(to_json(config.to_dict(), "exhaustive", results))
    return 0


def cmd_verify_cert(args: argparse.Namespace, out: TextIO) -> int:
    certificate = parse_certificate(Path(args.certificate).read_text(encoding="utf-8"))
    checks = verify_certificate(certificate, _solver(args))
    for check in checks:
        status = "pass" if check.ok else "FAIL"
        out.write(f"edge {check.edge.i} {check.edge.j} {status} stored={check.edge.outcome} solved={check.recomputed}\n")
    feasibility = potential_feasibility(certificate.oriented_edges(), range(len(certificate.chain)))
    out.write(f"potentials: {feasibility}\n")
    out.write(f"convention: {DRAW_CONVENTION}\n")
    return 0 if all(check.ok for check in checks) else EXIT_VERIFY_FAILED


def _prompt_policy(out: TextIO):
    def policy(board: MagBoard, side: Side) -> Swap:
        while True:
            out.write(f"{board.text}  your swap (e.g. u1 l0): ")
            out.flush()
            text = sys.stdin.readline()
            if not text:
                raise EOFError
            try:
                swap = Swap.parse(text)
                apply_swap(board, swap)
            except ItlbError as e:
                logging.error(e)
                continue
            return swap

    return policy


def cmd_magicians(args: argparse.Namespace, out: TextIO) -> int:
    if args.action == "order":
        out.write(row_order(3) + "\n")
        return 0
    if args.action == "solve":
        board = MagBoard.parse(args.board)
        line = optimal_line(board)
        body = {"board": board.text, "value": None if line is None else len(line)}
        if line is not None:
            body["line"] = [f"{swap.text} -> {after.text}" for swap, after in line]
        out.write(json.dumps(body, indent=2) + "\n")
        return 0
    if args.action == "ai-move":
        board = MagBoard.parse(args.board)
        side = Side(args.side)
        rng = np.random.default_rng(args.seed) if args.seed is not None else None
        swap = best_swap(board, side, rng)
        after = apply_swap(board, swap)
        out.write(f"{swap.text} -> {after.text} value={heuristic_value(after, side)}\n")
        return 0

    human = Side(args.side)
    ai = heuristic_policy(np.random.default_rng(args.seed))
    prompt = _prompt_policy(out)

    def show(side: Side, swap: Swap, board: MagBoard) -> None:
        out.write(f"{side.value}: {swap.text} -> {board.text}\n")

    try:
        result = play_match(
            MagBoard.parse(args.board),
            prompt if human is Side.GOOD_PLAYER else ai,
            ai if human is Side.GOOD_PLAYER else prompt,
            observer=show,
        )
    except EOFError:
        out.write("\n")
        return 0
    winner = "draw" if result.winner is None else f"{result.winner.value} wins"
    out.write(f"{winner} ({result.reason}) after {len(result.moves)} swaps\n")
    return 0


def cmd_table(args: argparse.Namespace, out: TextIO) -> int:
    if args.action == "info":
        table = load_table(args.path)
        body = {"board": table.board.text, "material": table.material.code, "version": table.version}
        body.update(table.summary())
        out.write(json.dumps(body, indent=2) + "\n")
        return 0
    board = parse_board(args.board, args.topology)
    material = MaterialSignature.parse(args.material)
    cache_dir = resolve_cache_dir(args.cache_dir)
    if cache_dir is None:
        raise ParseError("table build needs --cache-dir or $ITLB_CACHE_DIR")
    table = Solver(cache_dir, workers=args.workers, max_memory=args.max_memory << 20).table(material, board)
    body = {"path": str(cache_path(cache_dir, material, board)), "material": material.code, "board": board.text}
    body.update(table.summary())
    out.write(json.dumps(body, indent=2) + "\n")
    return 0


COMMANDS = {
    "solve": cmd_solve,
    "beats": cmd_beats,
    "chain": cmd_chain,
    "mc": cmd_mc,
    "exhaustive": cmd_exhaustive,
    "verify-cert": cmd_verify_cert,
    "magicians": cmd_magicians,
    "table": cmd_table,
}


def main(argv: Sequence[str] | None = None):
    logging.basicConfig(format="%(levelname)s: %(message)s")
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        argv.append("--help")
    args = build_parser().parse_args(argv)
    logging.getLogger().setLevel(logging.WARNING if args.quiet else logging.DEBUG if args.verbose else logging.INFO)

    out_path = getattr(args, "out", None)
    fo = open(out_path, "w", encoding="utf-8", newline="\n") if out_path else sys.stdout
    try:
        code = COMMANDS[args.command](args, fo)
    except ItlbError as e:
        logging.error(f"{type(e).__name__}: {e}")
        code = e.exit_code
    except ValueError as e:
        logging.error(str(e))
        code = EXIT_USAGE
    except OSError as e:
        logging.error(str(e))
        code = EXIT_TABLE_FILE
    finally:
        if fo is not sys.stdout:
            fo.close()
    sys.exit(code)


if __name__ == "__main__":
    main()
