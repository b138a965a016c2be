from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Iterator

from steinbar.models import EventRecord, ModelSpec
from steinbar.repos.base import get_csv_writer


def event_log_columns(model: ModelSpec) -> list[str]:
    queues = [f"q{i + 1}_before" for i in range(model.stations)]
    return ["time", "kind", "station", *queues, "r_a_before", "payload"]


@contextmanager
def open_event_log(path: Path, model: ModelSpec) -> Iterator[Callable[[EventRecord], None]]:
    """
    Event-log dump for one run, used as ``simulate(..., on_event=log)``.
    Yields:
        Callable[[EventRecord], None]: appends one row per event.
    """
    with get_csv_writer(path, event_log_columns(model)) as w:

        def log(event: EventRecord):
            before = event.state_before
            w.writerow(
                [
                    event.time,
                    event.kind.value,
                    event.station + 1,
                    *before.queues,
                    before.r_a,
                    event.payload,
                ]
            )

        yield log
