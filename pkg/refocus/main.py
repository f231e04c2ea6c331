import argparse
import sys
from typing import List, Optional
from pydantic import ValidationError
from refocus.cli.commands import ABLATION_ARMS, COMMANDS
from refocus.config import get_settings
from refocus.models.enums import (
    ReportFormat,
    SpectrumTransform,
    SplitName,
    SynthKind,
    VerifyScope,
)
from refocus.utils import (
    ConfigError,
    ContractError,
    IngestionError,
    RefocusError,
    StorageError,
    VerificationError,
    logger,
    setup_logging,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_IO = 3

def _common(parser: argparse.ArgumentParser, config_required: bool = False) -> None:
    parser.add_argument("--config", required=config_required, help="Experiment config (JSON)")
    parser.add_argument("--seed", type=int, default=None, help="Overrides REFOCUS_SEED and the config seed")
    parser.add_argument("--out", default=None, help="Output directory")
    parser.add_argument("--format", choices=[f.value for f in ReportFormat], default=ReportFormat.CSV.value,
                        help="Format of the report written to stdout")

def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog="refocus",
        description=f"{settings.APP_NAME}: mid-frequency aware multivariate forecasting",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Train a model and write checkpoint, history and metrics")
    _common(p, config_required=True)

    p = sub.add_parser("eval", help="Score a checkpoint on a named split")
    _common(p, config_required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=[s.value for s in SplitName], default=SplitName.TEST.value)

    p = sub.add_parser("verify", help="Run verifier suites and print a pass/fail table")
    _common(p)
    p.add_argument("scope", nargs="?", choices=[s.value for s in VerifyScope], default=VerifyScope.ALL.value)

    p = sub.add_parser("spectrum", help="Per-channel energy spectrum before and after a transform")
    _common(p)
    p.add_argument("input", help="ETT-layout CSV")
    p.add_argument("--transform", choices=[t.value for t in SpectrumTransform], default=SpectrumTransform.NONE.value)
    p.add_argument("--K", type=int, default=25,
                   help="AMEO kernel size (the circular identity checked by `verify ameo` needs an even K)")
    p.add_argument("--beta", type=float, default=1.0)

    p = sub.add_parser("synth", help="Write a synthetic dataset in ETT layout")
    _common(p)
    p.add_argument("--kind", choices=[k.value for k in SynthKind], default=SynthKind.SHARED_KEY.value)
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--length", type=int, default=2000)
    p.add_argument("--key-bin", dest="key_bin", type=int, default=80)
    p.add_argument("--carriers", type=int, nargs="*", default=[1, 2])
    p.add_argument("--snr", type=float, default=10.0, help="Linear SNR; 0 or below means noiseless")
    p.add_argument("--private-bins", dest="private_bins", type=int, nargs="*", default=[])
    p.add_argument("--low-bins", dest="low_bins", type=int, default=3)
    p.add_argument("--mid-leak", dest="mid_leak", type=float, default=0.05)

    p = sub.add_parser("gradcheck", help="Finite-difference check of the full model on a tiny config")
    _common(p)
    p.add_argument("--tol", type=float, default=1e-4)

    p = sub.add_parser("ablate", help="Train the ablation grid and report median metrics per arm")
    _common(p, config_required=True)
    p.add_argument("--arms", nargs="*", choices=list(ABLATION_ARMS), default=None)
    return parser

def main(argv: Optional[List[str]] = None) -> int:
    setup_logging(get_settings().LOG_LEVEL)
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except VerificationError as e:
        logger.error(f"Verification error: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except (ConfigError, ContractError, ValidationError) as e:
        logger.error(f"Configuration error: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (IngestionError, StorageError, OSError) as e:
        logger.error(f"IO error: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except RefocusError as e:
        logger.error(f"Run failed: {str(e)}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE
