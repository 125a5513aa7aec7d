"""Wall-clock timing of the default sweep (4 kernels x 2 images x 3 noise levels).

    python scripts/time_sweep.py [--config configs/default_sweep.toml]
"""

import argparse
import os
import platform
import tempfile
import time

from pnpkit.bench import ExperimentConfig, enumerate_cells, run_experiment, thread_count


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/default_sweep.toml")
    args = ap.parse_args()
    cfg = ExperimentConfig.load(args.config)
    with tempfile.TemporaryDirectory() as tmp:
        t0 = time.perf_counter()
        table, runs = run_experiment(cfg, tmp)
        seconds = time.perf_counter() - t0
    print(table.to_text(), end="")
    print(f"{len(enumerate_cells(cfg))} cells, max_iter {cfg.max_iter}, "
          f"{thread_count()} threads: {seconds:.1f} s")
    print(f"{platform.processor() or platform.machine()}, {os.cpu_count()} logical CPUs, "
          f"Python {platform.python_version()}")


if __name__ == "__main__":
    main()
