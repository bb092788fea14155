"""Ensemble means of the shifted square-root process against phi*(t) = t**2.

Writes ``figure_ladder.csv`` (columns eps,t,mean_path,phi_star) in the
current directory, ready for any plotting tool.
"""
import sys

from cevldp.cli import run

sys.exit(run(["figure1", "--eps", "0.4,0.2,0.1,0.05", "--paths", "2000", "--steps", "1000", "-o", "figure_ladder.csv"]))
