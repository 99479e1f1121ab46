"""Command-line interface.

Exit codes: 0 accepted/ok, 1 violations or rejected strategy, 2 backend
failure, 3 configuration or I/O error.  Standard output carries only the
requested artifact; logs and diagnostics go to standard error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from importlib import resources
from pathlib import Path
from typing import TextIO

from .codec import decode_canonical, encode_canonical, extract_structured_block, render_strategy_markdown
from .knowledge_base import (
    KnowledgeBase,
    KnowledgeBaseError,
    SensorCategory,
    default_knowledge_base,
    kb_summary,
    load_knowledge_base,
    lookup_sensor,
    sensors_by_category,
)
from .llm import API_KEY_ENV, DEFAULT_MODEL, MockBackend, MockScript, MockScriptError, RemoteBackend
from .pipeline import Outcome, PipelineConfig, RunRecord, StepMode, generate_strategy, persist_run
from .prompts import InvalidExampleError, load_examples, render_example
from .strategy import Inquiry
from .validator import guess_sensor_category, validate_strategy

log = logging.getLogger("mobisense")

EXIT_OK = 0
EXIT_REJECTED = 1
EXIT_BACKEND = 2
EXIT_CONFIG = 3

DEFAULT_STORE = ".mobisense/runs"


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(f"{self.format_usage().strip()}\n{self.prog}: error: {message}")


def _shipped(kind: str, name: str) -> Path | None:
    base = Path(str(resources.files("mobisense").joinpath("data", kind)))
    for candidate in (base / name, base / f"{name}.yaml", base / f"{name}.json"):
        if candidate.is_file():
            return candidate
    return None


def _load_kb(args: argparse.Namespace) -> KnowledgeBase:
    if not getattr(args, "kb", None):
        return default_knowledge_base()
    try:
        return load_knowledge_base(args.kb)
    except OSError as exc:
        raise ConfigError(f"cannot read knowledge base: {exc}") from exc
    except KnowledgeBaseError as exc:
        raise ConfigError(f"invalid knowledge base: {exc}") from exc


def _make_backend(args: argparse.Namespace):
    if args.backend == "mock":
        if not args.mock_script:
            raise ConfigError("--backend mock requires --mock-script")
        path = Path(args.mock_script)
        if not path.is_file():
            path = _shipped("mock_scripts", args.mock_script) or path
        try:
            return MockBackend(MockScript.load(path))
        except OSError as exc:
            raise ConfigError(f"cannot read mock script: {exc}") from exc
        except (MockScriptError, ValueError) as exc:
            raise ConfigError(f"invalid mock script {path}: {exc}") from exc
    if not args.endpoint:
        raise ConfigError("--backend remote requires --endpoint")
    if not os.environ.get(API_KEY_ENV):
        raise ConfigError(f"--backend remote requires the {API_KEY_ENV} environment variable")
    return RemoteBackend(args.endpoint)


def _make_config(args: argparse.Namespace) -> PipelineConfig:
    try:
        examples = load_examples(args.examples) if args.examples else None
        overrides = {
            "max_repairs": args.max_repairs,
            "step_mode": StepMode(args.step_mode),
            "model_name": args.model_name,
        }
        if examples is not None:
            overrides["examples"] = tuple(examples)
        return PipelineConfig.default(**overrides)
    except (OSError, InvalidExampleError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _emit_strategy(record: RunRecord, fmt: str, kb: KnowledgeBase, out: TextIO) -> None:
    if fmt == "canonical":
        out.write(encode_canonical(record.strategy))
    else:
        out.write(render_strategy_markdown(record.strategy, kb))


def _report_failure(record: RunRecord, err: TextIO) -> None:
    last = record.attempts[-1] if record.attempts else None
    if record.outcome is Outcome.BACKEND_FAILURE:
        print(f"backend failure: {last.error if last else 'unknown'}", file=err)
        return
    print(f"strategy rejected after {len(record.attempts)} attempt(s)", file=err)
    if last is not None:
        for d in last.diagnostics:
            print(f"  {d}", file=err)
        for v in last.report or ():
            print(f"  {v.code.value} {v.subject}: {v.detail}", file=err)


def _run_once(
    text: str, args: argparse.Namespace, config: PipelineConfig, kb: KnowledgeBase, backend, out: TextIO, err: TextIO
) -> int:
    record = generate_strategy(Inquiry(text), config, kb, backend)
    try:
        where = persist_run(record, args.store)
        print(f"run {record.run_id} saved to {where}", file=err)
    except OSError as exc:
        print(f"could not save run record: {exc}", file=err)
    if record.outcome is Outcome.ACCEPTED:
        _emit_strategy(record, args.format, kb, out)
        return EXIT_OK
    _report_failure(record, err)
    return EXIT_BACKEND if record.outcome is Outcome.BACKEND_FAILURE else EXIT_REJECTED


def cmd_generate(args: argparse.Namespace, stdin: TextIO, out: TextIO, err: TextIO) -> int:
    text = " ".join(args.inquiry).strip() if args.inquiry else ""
    if not text and not stdin.isatty():
        text = stdin.read().strip()
    try:
        Inquiry(text)
    except ValueError:
        raise ConfigError(f"{args.usage}mobisense generate: error: an inquiry is required, as an argument or on standard input") from None
    kb = _load_kb(args)
    config = _make_config(args)
    backend = _make_backend(args)
    return _run_once(text, args, config, kb, backend, out, err)


def cmd_validate(args: argparse.Namespace, stdin: TextIO, out: TextIO, err: TextIO) -> int:
    path = Path(args.path)
    if not path.is_file():
        path = _shipped("strategies", args.path) or path
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {args.path}: {exc}") from exc
    block, _ = extract_structured_block(text)
    strategy, diagnostics = decode_canonical(block if block is not None else text)
    for d in diagnostics:
        print(str(d), file=err)
    if strategy is None:
        raise ConfigError(f"{args.path} is not a decodable strategy")
    report = validate_strategy(strategy, _load_kb(args))
    if report.accepted:
        print("OK: no violations", file=out)
        return EXIT_OK
    for v in report:
        print(f"{v.code.value}\t{v.subject}\t{v.detail}", file=out)
    return EXIT_REJECTED


def cmd_kb(args: argparse.Namespace, stdin: TextIO, out: TextIO, err: TextIO) -> int:
    kb = _load_kb(args)
    if args.action == "list":
        summary = kb_summary(kb)
        print(f"Knowledge base version {summary['version']}", file=out)
        for category in SensorCategory:
            sensors = sensors_by_category(kb, category)
            print(f"{category.value} ({len(sensors)})", file=out)
            for s in sensors:
                aliases = f"  [aliases: {', '.join(s.aliases)}]" if s.aliases else ""
                print(f"  {s.name}{aliases}", file=out)
        print(f"Metrics: {summary['metrics']} in {summary['metrics_categories']} categories", file=out)
        print(f"Models ({summary['models']}): {', '.join(m.name for m in kb.models)}", file=out)
        return EXIT_OK
    if not args.name:
        raise ConfigError("kb show needs a sensor name")
    spec = lookup_sensor(kb, args.name)
    if not spec:
        print(f"unknown sensor {args.name!r}", file=err)
        if spec.suggestions:
            print(f"did you mean: {', '.join(spec.suggestions)}", file=err)
        category = guess_sensor_category(args.name, kb)
        groups = [category] if category is not None else list(SensorCategory)
        for group in groups:
            names = ", ".join(s.name for s in sensors_by_category(kb, group))
            print(f"known {group.value} sensors: {names}", file=err)
        return EXIT_REJECTED
    print(f"{spec.name} ({spec.category.value})", file=out)
    if spec.aliases:
        print(f"Aliases: {', '.join(spec.aliases)}", file=out)
    print(f"Description: {spec.description}", file=out)
    print(f"Availability: {spec.availability_note}", file=out)
    return EXIT_OK


def cmd_examples(args: argparse.Namespace, stdin: TextIO, out: TextIO, err: TextIO) -> int:
    try:
        examples = load_examples(args.examples)
    except (OSError, InvalidExampleError) as exc:
        raise ConfigError(str(exc)) from exc
    if args.action == "list":
        for i, e in enumerate(examples, 1):
            print(f"{i}\t{e.inquiry}", file=out)
        return EXIT_OK
    if args.index is None or not 1 <= args.index <= len(examples):
        raise ConfigError(f"examples show needs an index between 1 and {len(examples)}")
    print(render_example(examples[args.index - 1]), file=out)
    return EXIT_OK


REPL_HELP = """\
Type an inquiry (optionally prefixed with INPUT:) to generate a strategy.
Commands: :history  list this session's inquiries
          :help     show this text
          :quit     leave"""


def cmd_repl(args: argparse.Namespace, stdin: TextIO, out: TextIO, err: TextIO) -> int:
    kb = _load_kb(args)
    config = _make_config(args)
    backend = _make_backend(args)
    history: list[str] = []
    print(REPL_HELP, file=err)
    while True:
        err.write("> ")
        err.flush()
        line = stdin.readline()
        if not line:
            return EXIT_OK
        line = line.strip()
        if not line:
            continue
        if line in (":quit", ":q", ":exit"):
            return EXIT_OK
        if line == ":history":
            for i, past in enumerate(history, 1):
                print(f"{i}. {past}", file=out)
            continue
        if line == ":help":
            print(REPL_HELP, file=err)
            continue
        try:
            inquiry = Inquiry(line)
        except ValueError:
            continue
        history.append(inquiry.normalized_text)
        try:
            code = _run_once(line, args, config, kb, backend, out, err)
        except Exception as exc:  # keep the session alive
            print(f"error: {exc}", file=err)
            continue
        if code != EXIT_OK:
            print(f"(inquiry failed with exit code {code})", file=err)
        out.flush()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mobisense", description="Generate and check mobile sensing strategies.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to standard error")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    kb_opt = _Parser(add_help=False)
    kb_opt.add_argument("--kb", help="knowledge base file (default: shipped)")

    run_opts = _Parser(add_help=False)
    run_opts.add_argument("--examples", help="directory of worked examples (default: shipped)")
    run_opts.add_argument("--backend", choices=("remote", "mock"), default="remote")
    run_opts.add_argument("--endpoint", help="chat-completion URL for the remote backend")
    run_opts.add_argument("--model-name", default=DEFAULT_MODEL)
    run_opts.add_argument("--mock-script", help="mock script file, or a shipped name (demo, repair, per_step)")
    run_opts.add_argument("--format", choices=("md", "canonical"), default="md")
    run_opts.add_argument("--store", default=DEFAULT_STORE, help=f"run record directory (default: {DEFAULT_STORE})")
    run_opts.add_argument("--max-repairs", type=int, default=2)
    run_opts.add_argument("--step-mode", choices=("single", "per-step"), default="single")

    p = sub.add_parser("generate", parents=[kb_opt, run_opts], help="generate a strategy for one inquiry")
    p.add_argument("inquiry", nargs="*", help="the inquiry; read from standard input when omitted")
    p.set_defaults(func=cmd_generate, usage=p.format_usage())

    p = sub.add_parser("validate", parents=[kb_opt], help="rule-check a strategy file")
    p.add_argument("path", help="canonical strategy file (or a shipped name)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("kb", parents=[kb_opt], help="browse the knowledge base")
    p.add_argument("action", choices=("list", "show"))
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_kb)

    p = sub.add_parser("examples", help="list or show the worked examples")
    p.add_argument("action", choices=("list", "show"))
    p.add_argument("index", nargs="?", type=int)
    p.add_argument("--examples", help="directory of worked examples (default: shipped)")
    p.set_defaults(func=cmd_examples)

    p = sub.add_parser("repl", parents=[kb_opt, run_opts], help="interactive session")
    p.set_defaults(func=cmd_repl)
    return parser


def main(
    argv: list[str] | None = None,
    stdin: TextIO | None = None,
    stdout: TextIO | None = None,
    stderr: TextIO | None = None,
) -> int:
    stdin = stdin or sys.stdin
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            stream=err,
            format="%(levelname)s %(name)s: %(message)s",
        )
        if not getattr(args, "func", None):
            raise ConfigError(parser.format_usage().strip() + "\nmobisense: error: a command is required")
        if getattr(args, "max_repairs", 0) is not None and not 0 <= getattr(args, "max_repairs", 0) <= 5:
            raise ConfigError("--max-repairs must be between 0 and 5")
        return args.func(args, stdin, out, err)
    except ConfigError as exc:
        print(str(exc), file=err)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
