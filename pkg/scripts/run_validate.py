"""Run the `validate` study; arguments as for `nlrb validate` (defaults to configs/default.yaml)."""
import sys
from pathlib import Path

from nlrb.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--config" not in args:
        args += ["--config", str(Path(__file__).resolve().parent.parent / "configs" / "default.yaml")]
    sys.exit(main(["validate"] + args))
