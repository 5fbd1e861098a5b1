"""Run the `affine-s` study; arguments as for `nlrb affine-s` (defaults to configs/default.yaml)."""
import sys
from pathlib import Path

from nlrb.cli import main

if __name__ == "__main__":
    args = sys.argv[1:]
    if "--config" not in args:
        args += ["--config", str(Path(__file__).resolve().parent.parent / "configs" / "default.yaml")]
    sys.exit(main(["affine-s"] + args))
