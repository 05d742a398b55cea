#!/usr/bin/env python3
"""Phase-transition sweep at L=8 plus the exact reference curves.

Writes out/fig3/{algorithm,oracle}/; the curves CSVs overlay directly.
"""
import sys
from pathlib import Path

from echomc.cli import main

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out/fig3")

if __name__ == "__main__":
    code = main(["run", "--preset", "fig3-L8", "--out", str(OUT / "algorithm")])
    code = code or main(["oracle", "--preset", "fig3-L8", "--out", str(OUT / "oracle")])
    sys.exit(code)
