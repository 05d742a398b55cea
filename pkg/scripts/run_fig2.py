#!/usr/bin/env python3
"""Echo/work-distribution diagnostics and the error-scaling study at L=16.

The echo command writes the polarized and zero-magnetization diagnostic
states; the run command sweeps n_mc for the jackknife-error scaling.
"""
import sys
from pathlib import Path

from echomc.cli import main

OUT = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out/fig2")

if __name__ == "__main__":
    code = main(["echo", "--preset", "fig2-L16", "--out", str(OUT / "states")])
    code = code or main(["run", "--preset", "fig2-L16", "--out", str(OUT / "scaling")])
    sys.exit(code)
