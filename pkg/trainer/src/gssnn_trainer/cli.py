"""Command line worker for the filesystem job protocol."""

from __future__ import annotations

import os
import time

import click

from .train import TrainerConfig, run_job

_DONE = ("fitness.json", "error.json")


def _claim(job_dir: str) -> bool:
    try:
        fd = os.open(os.path.join(job_dir, ".claim"), os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        return False
    os.close(fd)
    return True


def _pending(watch_dir: str) -> list[str]:
    dirs = []
    try:
        entries = sorted(os.listdir(watch_dir))
    except FileNotFoundError:
        return []
    for name in entries:
        job_dir = os.path.join(watch_dir, name)
        if not os.path.isfile(os.path.join(job_dir, "job.json")):
            continue
        if any(os.path.exists(os.path.join(job_dir, done)) for done in _DONE):
            continue
        if os.path.exists(os.path.join(job_dir, ".claim")):
            continue
        dirs.append(job_dir)
    return dirs


@click.command()
@click.option("--job", "job_dir", type=click.Path(file_okay=False), help="Evaluate one job directory and exit.")
@click.option("--watch", "watch_dir", type=click.Path(file_okay=False), help="Poll a directory of job directories.")
@click.option("--toy", is_flag=True, help="Train on the bundled synthetic task.")
@click.option("--quick", is_flag=True, help="Shortened schedule for smoke tests.")
@click.option("--poll-secs", default=0.5, show_default=True, help="Watch poll interval.")
@click.option("--max-jobs", default=None, type=int, help="Exit after this many jobs.")
@click.option("--idle-exit-secs", default=None, type=float, help="Exit after this long with nothing to do.")
def main(job_dir, watch_dir, toy, quick, poll_secs, max_jobs, idle_exit_secs):
    """Answer graph-evaluation jobs with trained-model fitness."""
    if bool(job_dir) == bool(watch_dir):
        raise click.UsageError("pass exactly one of --job or --watch")
    if not toy:
        raise click.UsageError("only the toy task is bundled; pass --toy")
    config = TrainerConfig.toy().quick() if quick else TrainerConfig.toy()

    if job_dir:
        result = run_job(job_dir, toy=toy, config=config)
        click.echo(f"{job_dir}: {'ok' if result else 'error'}")
        return

    done = 0
    idle_since = time.monotonic()
    while True:
        claimed = False
        for pending in _pending(watch_dir):
            if not _claim(pending):
                continue
            claimed = True
            idle_since = time.monotonic()
            result = run_job(pending, toy=toy, config=config)
            click.echo(f"{pending}: {'ok' if result else 'error'}")
            done += 1
            if max_jobs is not None and done >= max_jobs:
                return
        if not claimed:
            if idle_exit_secs is not None and time.monotonic() - idle_since >= idle_exit_secs:
                return
            time.sleep(poll_secs)
