# run_utils.py

import os

BASE_RUNS_DIR = "runs"


def get_next_run_id(base_dir: str = BASE_RUNS_DIR) -> str:
    """
    Returns the next sequential run id as a zero-padded string, e.g. '001', '002', ...
    Looks at the existing 'runs/run_XXX' folders and picks max+1.
    """
    os.makedirs(base_dir, exist_ok=True)

    max_n = 0
    for d in os.listdir(base_dir):
        if not d.startswith("run_") or not os.path.isdir(os.path.join(base_dir, d)):
            continue
        try:
            max_n = max(max_n, int(d.split("_", 1)[1]))
        except ValueError:
            continue

    return f"{max_n + 1:03d}"


def prepare_run_dir(out_dir: str | None, base_dir: str = BASE_RUNS_DIR) -> tuple[str, str]:
    """
    Resolve the output directory of a command.

    With an explicit out_dir the run id is its basename; otherwise a fresh
    runs/run_NNN directory is created.
    """
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        return os.path.basename(os.path.normpath(out_dir)), out_dir

    run_id = get_next_run_id(base_dir)
    run_dir = os.path.join(base_dir, f"run_{run_id}")
    os.makedirs(run_dir, exist_ok=True)
    return run_id, run_dir
