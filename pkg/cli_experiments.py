"""
Experiment CLI
simulate-paths / marginals / estimate / check，結束碼：0 成功、2 設定錯誤、3 數值錯誤、4 驗收失敗
"""
import argparse
import logging
import sys

from errors import AcceptanceError, ConfigError, NumericError, ParameterError
from experiment_agent import CHECKS, ExperimentAgent
from experiment_config import ExperimentConfig
from io_helpers import configure_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_ACCEPTANCE = 4

VERBS = {
    "simulate-paths": "run_paths",
    "marginals": "run_marginals",
    "estimate": "run_estimation",
    "check": "run_check",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cli_experiments.py",
        description="Quasi-process M-estimation experiments",
    )
    parser.add_argument("verb", choices=sorted(VERBS))
    parser.add_argument("--config", help="JSON experiment config (defaults when omitted)")
    parser.add_argument("--seed", type=int, help="renumber the config seed list from this seed")
    parser.add_argument("--out", help="output directory (default: QUASI_OUTPUT_DIR)")
    parser.add_argument("--jobs", type=int, help="worker processes (default: QUASI_JOBS)")
    parser.add_argument("--only", nargs="+", choices=sorted(CHECKS), help="check: run only these properties")
    parser.add_argument("--log-level", help="logging level (default: QUASI_LOG_LEVEL)")
    return parser


def load_config(args):
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    return config.with_overrides(seed=args.seed, output_dir=args.out, jobs=args.jobs)


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = load_config(args)
        agent = ExperimentAgent(config)
        logger.info("%s -> %s (config %s)", args.verb, config.output_dir, config.config_hash()[:12])
        if args.verb == "check":
            agent.run_check(only=args.only)
        else:
            getattr(agent, VERBS[args.verb])()
    except (ConfigError, ParameterError) as e:
        logger.error("config error: %s", e)
        return EXIT_CONFIG
    except NumericError as e:
        logger.error("numeric error: %s", e)
        return EXIT_NUMERIC
    except AcceptanceError as e:
        logger.error("acceptance failure: %s", e)
        return EXIT_ACCEPTANCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
