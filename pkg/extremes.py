import argparse
import sys

import toml

from extremes.cli import main


def run_from_config(config_path):
    # [run] command picks the subcommand; the rest of the file is read by the CLI
    config = toml.load(config_path)
    command = config.get("run", {}).get("command")
    if command is None:
        print(f"No [run] command in '{config_path}'")
        return 2
    return main([command, "--config", config_path])


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="Run a stopped-extremes workflow from a TOML configuration file.")
    parser.add_argument("config_path", type=str, help="Path to the TOML configuration file.")
    args = parser.parse_args()
    sys.exit(run_from_config(args.config_path))
