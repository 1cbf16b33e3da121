"""
CSV / JSON writers for datasets, round logs, soft labels, checkpoints and summaries
Every CSV starts with a '# schema=1' comment line. Files are written to a
temporary name in the target directory and renamed into place.
"""
import csv
import io
import json
import os
import tempfile

import numpy as np

SCHEMA_LINE = "# schema=1"

ROUND_LOG_COLUMNS = ["round", "agent", "train_loss", "test_loss"]
PI_COLUMNS = ["round", "agent", "m", "pi"]
SUMMARY_COLUMNS = ["algo", "seed", "avg_loss", "faa", "agnostic", "acc_parity"]


# --- low level ---

def atomic_write_text(path, text):
    """Write text to path via a temp file in the same directory and os.replace"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, temp_path = tempfile.mkstemp(prefix=".tmp_", dir=directory)
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(temp_path, path)
    except BaseException:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise
    return path


def _plain(value):
    """numpy scalars/arrays -> JSON-friendly Python values"""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def write_json(path, obj):
    text = json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"
    return atomic_write_text(path, text)


def read_json(path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def write_csv(path, header, rows):
    buf = io.StringIO()
    buf.write(SCHEMA_LINE + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_plain(v) for v in row])
    return atomic_write_text(path, buf.getvalue())


def read_csv(path):
    """
    Read a file written by write_csv.

    Returns:
        (header, rows) with every cell as a string
    """
    with open(path, 'r', encoding='utf-8', newline='') as f:
        first = f.readline().rstrip("\n")
        if first != SCHEMA_LINE:
            raise ValueError(f"{path}: expected '{SCHEMA_LINE}', got {first!r}")
        reader = csv.reader(f)
        header = next(reader)
        return header, [row for row in reader]


# --- datasets ---

def export_datasets(datasets, out_dir, prefix="agent"):
    """
    One CSV per agent: x0..x{d-1} feature columns and a y label column.

    Returns:
        List of written paths in agent order
    """
    paths = []
    for e, data in enumerate(datasets):
        header = [f"x{i}" for i in range(data.dimension)] + ["y"]
        rows = (list(x) + [y] for x, y in zip(data.features.tolist(), data.labels.tolist()))
        paths.append(write_csv(os.path.join(out_dir, f"{prefix}_{e:02d}.csv"), header, rows))
    return paths


# --- run artifacts ---

def write_round_log(path, logs):
    """round, agent, train_loss, test_loss; one row per (round, agent)"""
    rows = []
    for entry in logs:
        for e, (train, test) in enumerate(zip(entry.per_agent_train_loss, entry.per_agent_test_loss)):
            rows.append([entry.round, e, train, test])
    return write_csv(path, ROUND_LOG_COLUMNS, rows)


def write_pi_history(path, snapshots):
    """
    round, agent, m, pi for every recorded soft-label matrix. Snapshot 0 is
    the initialization and is written as round -1.
    """
    rows = []
    for index, (pi, _) in enumerate(snapshots):
        matrix = getattr(pi, "pi", pi)
        for e in range(matrix.shape[0]):
            for m in range(matrix.shape[1]):
                rows.append([index - 1, e, m, matrix[e, m]])
    return write_csv(path, PI_COLUMNS, rows)


def write_summary_csv(path, rows):
    """rows: dicts with the SUMMARY_COLUMNS keys (missing keys stay empty)"""
    return write_csv(path, SUMMARY_COLUMNS, ([row.get(c, "") for c in SUMMARY_COLUMNS] for row in rows))


SWEEP_COLUMNS = ["param", "value", "repetition"] + SUMMARY_COLUMNS


def write_sweep_csv(path, rows):
    """One row per (sweep value, repetition, algorithm)"""
    return write_csv(path, SWEEP_COLUMNS, ([row.get(c, "") for c in SWEEP_COLUMNS] for row in rows))


def write_checkpoint(path, models, pi, config, seed):
    """Final (W, Pi) as {weights, pi, config, seed}"""
    matrix = None if pi is None else getattr(pi, "pi", pi)
    return write_json(path, {
        "weights": getattr(models, "weights", models),
        "pi": matrix,
        "config": config,
        "seed": seed,
    })


def write_round_checkpoints(path, snapshots, every):
    """
    JSON array of {round, weights} for every `every`-th round.

    Args:
        snapshots: list of (round, weights) in round order
        every: checkpoint interval C; 0 writes nothing
    """
    if every <= 0:
        return None
    kept = [{"round": t, "weights": getattr(w, "weights", w)} for t, w in snapshots if (t + 1) % every == 0]
    return write_json(path, kept)
