"""Run one adapter process from a config file.

    turnbench-adapter --config adapter.json [--max-turns N]

The file holds an AdapterConfig document; TURNBENCH_HUB and
TURNBENCH_TOKEN environment variables override its hub_url and token.
"""

from __future__ import annotations

import argparse
import json
import sys

from .adapter import Adapter, AdapterConfig, AdapterError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="turnbench-adapter", description=__doc__)
    parser.add_argument("--config", required=True, help="path to the JSON config")
    parser.add_argument(
        "--max-turns",
        type=int,
        default=None,
        help="exit after completing this many stages (default: run until killed)",
    )
    args = parser.parse_args(argv)

    try:
        config = AdapterConfig.from_file(args.config).with_env()
    except (AdapterError, OSError, ValueError) as exc:
        print(f"bad config: {exc}", file=sys.stderr)
        return 2

    adapter = Adapter(config)
    try:
        stats = adapter.run(max_turns=args.max_turns)
    except KeyboardInterrupt:
        adapter.stop()
        stats = adapter.stats
    print(json.dumps(stats.as_dict()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
