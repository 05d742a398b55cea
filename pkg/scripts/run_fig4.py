#!/usr/bin/env python3
"""Robustness study at L=10: simulated Ramsey pipeline at two shot budgets
against the noiseless pipeline and the exact reference."""
import sys
from pathlib import Path

from echomc.cli import main

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out/fig4")

if __name__ == "__main__":
    code = main(["protocol", "--preset", "fig4-noise", "--out", str(OUT / "shots100")])
    code = code or main(["protocol", "--preset", "fig4-noise-100k",
                         "--out", str(OUT / "shots100k")])
    code = code or main(["run", "--preset", "fig4-exact", "--out", str(OUT / "noiseless")])
    code = code or main(["oracle", "--preset", "fig4-exact", "--out", str(OUT / "oracle")])
    sys.exit(code)
