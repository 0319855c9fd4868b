import os
import sys

from fire import Fire

from .cli import Experiment
from .utils import WQRError, dump_json, dumps_json, join


def main(argv=None):
    try:
        Fire(Experiment, command=argv)
    except WQRError as e:
        record = e.record()
        print(dumps_json(record), file=sys.stderr)
        if Experiment.error_dir is not None:
            os.makedirs(Experiment.error_dir, exist_ok=True)
            dump_json(record, join(Experiment.error_dir, "error.json"))
        sys.exit(e.exit_code)


if __name__ == "__main__":
    main()
