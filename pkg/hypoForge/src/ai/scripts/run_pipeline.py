#!/usr/bin/env python3
"""
hypoForge pipeline command line.

Usage:
    python run_pipeline.py <stage> --config pipeline.yaml [--run-id ID] [--resume]
        [--backend live|scripted|replay] [--fixtures DIR] [--hypothesis ID] [--verbose]

Stages: ingest, extract, generate, evaluate, categorize, visualize, audit,
report, all. ingest and all start a new run (a numbered sibling when the
derived run already exists) unless --resume is given; the other stages
continue the derived run, or the one named by --run-id. Exit status is 0 when
the stage completed, 1 on any fatal error.

Secrets come from the environment (or a .env file): HYPOFORGE_API_KEY for the
primary backend, HYPOFORGE_EVAL_API_KEY for the evaluation backend.
"""

import argparse
import asyncio
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Tuple

from dotenv import load_dotenv

sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))
from llm_gateway.api.backends import ChatHttpBackend, RecordReplayBackend, ScriptedBackend
from llm_gateway.api.llm_client import ChatBackend
from llm_gateway.config import API_KEY_ENV, EVAL_API_KEY_ENV
from ai.managers.pipeline_config import PipelineConfig, load_config
from ai.managers.pipeline_manager import STAGES, PipelineManager, open_report

load_dotenv()

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Generate and categorize materials design hypotheses from paper sets")
    parser.add_argument("stage", choices=list(STAGES) + ["all"], help="Stage to run")
    parser.add_argument("--config", required=True, type=Path, help="Pipeline YAML config")
    parser.add_argument("--run-id", help="Run directory to use instead of the derived one")
    parser.add_argument("--resume", action="store_true",
                        help="ingest/all: continue the run with the derived id instead of starting a new one")
    parser.add_argument("--backend", choices=["live", "scripted", "replay"], default="live",
                        help="Chat backend (default: live)")
    parser.add_argument("--fixtures", type=Path,
                        help="Scripted fixtures or recorded transcripts; with --backend live, "
                             "replies are also recorded here")
    parser.add_argument("--hypothesis", type=int,
                        help="visualize: render only this hypothesis graph")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    return parser


def setup_logging(verbose: bool = False):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT,
                        force=True)
    for noisy in ("httpx", "openai", "urllib3"):
        logging.getLogger(noisy).setLevel(logging.WARNING)


def attach_run_log(run_root: Path) -> logging.Handler:
    """Mirror every log record into runs/<run_id>/pipeline.log."""
    run_root.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(run_root / "pipeline.log", encoding="utf-8")
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logging.getLogger().addHandler(handler)
    return handler


def build_backends(config: PipelineConfig, kind: str,
                   fixtures: Optional[Path]) -> Tuple[ChatBackend, ChatBackend]:
    """
    Primary and evaluation backends for a --backend choice.

    Raises:
        ValueError: scripted/replay without --fixtures
    """
    if kind in ("scripted", "replay") and fixtures is None:
        raise ValueError(f"--backend {kind} needs --fixtures")

    if kind == "scripted":
        backend = ScriptedBackend.from_directory(fixtures)
        return backend, backend
    if kind == "replay":
        backend = RecordReplayBackend(fixtures)
        return backend, backend

    eval_key_env = EVAL_API_KEY_ENV
    if not os.getenv(EVAL_API_KEY_ENV):
        logging.getLogger(__name__).warning(
            f"{EVAL_API_KEY_ENV} is not set; the evaluation backend uses {API_KEY_ENV}")
        eval_key_env = API_KEY_ENV

    primary: ChatBackend = ChatHttpBackend(base_url=config.backend.base_url, api_key_env=API_KEY_ENV,
                                           timeout=config.backend.timeout, backend_id="primary")
    evaluation: ChatBackend = ChatHttpBackend(base_url=config.eval_backend.base_url,
                                              api_key_env=eval_key_env,
                                              timeout=config.eval_backend.timeout,
                                              backend_id="evaluation")
    if fixtures is not None:
        primary = RecordReplayBackend(fixtures, inner=primary)
        evaluation = RecordReplayBackend(fixtures, inner=evaluation)
    return primary, evaluation


async def run(stage: str, config: PipelineConfig, backend: ChatBackend, eval_backend: ChatBackend,
              run_id: Optional[str] = None, resume: bool = False,
              hypothesis_id: Optional[int] = None) -> PipelineManager:
    """Open the run and execute the stage; returns the manager for inspection."""
    manager = PipelineManager.open_run(config, backend, eval_backend, run_id=run_id, resume=resume,
                                       hypothesis_id=hypothesis_id,
                                       create=stage in ("ingest", "all"))
    handler = attach_run_log(manager.store.root)
    try:
        completed = await manager.execute(stage)
        logging.getLogger(__name__).info(
            f"Run {manager.store.run_id}: completed {', '.join(completed)}")
    finally:
        logging.getLogger().removeHandler(handler)
        handler.close()
    return manager


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    logger = logging.getLogger(__name__)

    try:
        config = load_config(args.config)
        backend, eval_backend = build_backends(config, args.backend, args.fixtures)
        manager = asyncio.run(run(args.stage, config, backend, eval_backend,
                                  run_id=args.run_id, resume=args.resume,
                                  hypothesis_id=args.hypothesis))
    except KeyboardInterrupt:
        logger.error("Interrupted")
        return 1
    except Exception as e:
        logger.error(f"{args.stage} failed: {type(e).__name__}: {e}")
        logger.debug("Traceback", exc_info=True)
        return 1

    print(f"Run: {manager.store.run_id} ({manager.store.root})")
    if args.stage in ("report", "all"):
        print(open_report(manager.store.runs_dir, manager.store.run_id), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
