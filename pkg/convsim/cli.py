"""
`sim` command line interface
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from . import __version__
from .exceptions import SimError
from .judge import load_human_labels
from .persona import baseline_profile, generate_profiles, read_profiles, write_profiles
from .prompt import compile_baseline, compile_parameterized
from .runner import (
    FORMAT_CSV,
    FORMAT_MARKDOWN,
    REPORT_FORMATS,
    load_experiment,
    load_result,
    preset_names,
    report,
    resume,
    run_experiment,
    with_overrides,
)
from .schema import read_parameters, validate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_ERROR = 2


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    logging.getLogger('urllib3').setLevel(logging.WARNING)


def _print_json(data) -> None:
    print(json.dumps(data, indent=2, ensure_ascii=False))


def cmd_validate(args) -> int:
    params = read_parameters(args.file)
    result = validate(params)
    if args.json:
        _print_json(result.to_dict())
    else:
        for warning in result.warnings:
            print(f"warning: {warning.path}: {warning.message}")
        for violation in result.violations:
            print(f"{violation.path}: {violation.message} [{violation.rule}]")
        if result.ok:
            print(f"{args.file}: ok")
    return EXIT_OK if result.ok else EXIT_INVALID


def cmd_profiles(args) -> int:
    if args.baseline:
        profiles = [baseline_profile(args.seed + i) for i in range(args.count)]
    else:
        profiles = generate_profiles(args.seed, args.count, industry_pool=args.industry or None)
    if args.output:
        write_profiles(profiles, args.output)
        logger.info("Wrote %d profiles to %s", len(profiles), args.output)
    else:
        for profile in profiles:
            print(json.dumps(profile.to_dict(), ensure_ascii=False))
    return EXIT_OK


def cmd_prompt_compile(args) -> int:
    if args.profiles:
        profiles = read_profiles(args.profiles)
    else:
        profiles = generate_profiles(args.seed, args.index + 1)
    if not 0 <= args.index < len(profiles):
        raise SimError(f"Profile index {args.index} out of range (have {len(profiles)})")
    profile = profiles[args.index]

    if args.baseline:
        bundle = compile_baseline(profile, args.turns)
    else:
        if not args.params:
            raise SimError("A parameter file is required unless --baseline is given")
        bundle = compile_parameterized(profile, read_parameters(args.params), omit=args.omit or ())
    if args.json:
        _print_json(bundle.to_dict())
    else:
        print(bundle.instruction_text)
    return EXIT_OK


def _summarize(result) -> None:
    stats = result.stats
    print(f"{result.config.name}: {len(result.records)} conversations recorded, "
          f"{len(result.failures)} failed, {stats.get('providerCalls', 0)} provider calls "
          f"-> {result.run_dir}")


def cmd_run(args) -> int:
    config = with_overrides(load_experiment(args.experiment), scale=args.scale, provider=args.provider,
                            mock=args.mock, output_dir=args.output_dir, workers=args.workers)
    result = run_experiment(config, progress=not args.no_progress)
    for fmt in (FORMAT_CSV, FORMAT_MARKDOWN):
        report(result, fmt)
    _summarize(result)
    return EXIT_OK if not result.failures else EXIT_INVALID


def cmd_resume(args) -> int:
    result = resume(args.run_dir, progress=not args.no_progress, workers=args.workers)
    for fmt in (FORMAT_CSV, FORMAT_MARKDOWN):
        report(result, fmt)
    _summarize(result)
    return EXIT_OK if not result.failures else EXIT_INVALID


def cmd_report(args) -> int:
    result = load_result(args.run_dir)
    for path in report(result, args.format, out_dir=args.out):
        print(path)
    return EXIT_OK


def cmd_labels_import(args) -> int:
    result = load_human_labels(args.file)
    annotators = {r.annotator_id for r in result.records}
    conversations = {r.conversation_id for r in result.records}
    print(f"{len(result.records)} label records from {len(annotators)} annotator(s) "
          f"over {len(conversations)} conversation(s); {len(result.errors)} row(s) rejected")
    for error in result.errors:
        print(f"line {error.line}: {error.message}")
    return EXIT_OK if not result.errors else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='sim',
        description='Generate and evaluate parameterized entrepreneur-adviser conversations')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    parser.add_argument('-v', '--verbose', action='store_true', help='Debug logging')
    parser.add_argument('-q', '--quiet', action='store_true', help='Warnings and errors only')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('validate', help='Validate a parameter document')
    p.add_argument('file', help='Parameter JSON file')
    p.add_argument('--json', action='store_true', help='Print the report as JSON')
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser('profiles', help='Generate entrepreneur profiles (JSONL)')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--count', type=int, default=10)
    p.add_argument('--industry', action='append', help='Restrict the industry pool (repeatable)')
    p.add_argument('--baseline', action='store_true', help='Brief baseline character settings')
    p.add_argument('-o', '--output', help='Output file (stdout when omitted)')
    p.set_defaults(func=cmd_profiles)

    prompt = sub.add_parser('prompt', help='Prompt tools')
    prompt_sub = prompt.add_subparsers(dest='prompt_command', required=True)
    p = prompt_sub.add_parser('compile', help='Compile a generation prompt')
    p.add_argument('params', nargs='?', help='Parameter JSON file')
    p.add_argument('--profiles', help='Profile JSONL file (generated from --seed when omitted)')
    p.add_argument('--seed', type=int, default=0, help='Profile batch seed')
    p.add_argument('--index', type=int, default=0, help='Profile index in the batch')
    p.add_argument('--baseline', action='store_true', help='Compile the raw baseline prompt')
    p.add_argument('--turns', type=int, default=10, help='Baseline turn count')
    p.add_argument('--omit', action='append', help='Leave a parameter out (repeatable)')
    p.add_argument('--json', action='store_true', help='Print the whole prompt bundle')
    p.set_defaults(func=cmd_prompt_compile)

    p = sub.add_parser('run', help='Run an experiment preset or config file')
    p.add_argument('experiment', help=f"Preset ({', '.join(preset_names())}) or config JSON file")
    p.add_argument('--scale', type=float, help='Multiply the profile count')
    p.add_argument('--provider', help='Run every cell on this provider')
    p.add_argument('--mock', action='store_true', help='Offline mock provider, judge and stub embeddings')
    p.add_argument('--output-dir', help='Run directory')
    p.add_argument('--workers', type=int, help='Concurrent cells')
    p.add_argument('--no-progress', action='store_true', help='Hide the progress bar')
    p.set_defaults(func=cmd_run)

    p = sub.add_parser('resume', help='Finish the missing cells of a run')
    p.add_argument('run_dir')
    p.add_argument('--workers', type=int, help='Concurrent cells')
    p.add_argument('--no-progress', action='store_true', help='Hide the progress bar')
    p.set_defaults(func=cmd_resume)

    p = sub.add_parser('report', help='Write reports for a run directory')
    p.add_argument('run_dir')
    p.add_argument('--format', default=FORMAT_CSV, help=f"One of {', '.join(REPORT_FORMATS)}")
    p.add_argument('--out', help='Report directory (run_dir/reports when omitted)')
    p.set_defaults(func=cmd_report)

    labels = sub.add_parser('labels', help='Human label tools')
    labels_sub = labels.add_subparsers(dest='labels_command', required=True)
    p = labels_sub.add_parser('import', help='Check and summarize a human label JSONL file')
    p.add_argument('file')
    p.set_defaults(func=cmd_labels_import)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose, args.quiet)
    try:
        return args.func(args)
    except SimError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_ERROR
    except OSError as e:
        logger.error("%s", e)
        return EXIT_ERROR


if __name__ == '__main__':
    sys.exit(main())
