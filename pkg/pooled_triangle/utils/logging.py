# This source code is licensed under the MIT license found in the
# LICENSE file in the root directory of this source tree.

import logging
import os
import sys


def init_logger(name, log_dir=None, level=logging.INFO):
    logger = logging.getLogger()

    logger.setLevel(logging.NOTSET)
    # Repeated CLI invocations in one process must not stack handlers
    for handler in list(logger.handlers):
        if getattr(handler, "pooled_triangle", False):
            logger.removeHandler(handler)
            handler.close()

    # Progress and log lines go to stderr, reports may be streamed on stdout
    stderr_handler = logging.StreamHandler(sys.stderr)
    stderr_handler.setLevel(level)
    stderr_handler.setFormatter(logging.Formatter("%(name)s %(levelname)s %(msg)s"))
    stderr_handler.pooled_triangle = True
    logger.addHandler(stderr_handler)

    # Set logging level of other libraries
    logging.getLogger("PIL").setLevel(logging.INFO)
    logging.getLogger("matplotlib").setLevel(logging.INFO)

    if log_dir is not None:
        os.makedirs(log_dir, exist_ok=True)
        file_handler = logging.FileHandler(
            os.path.join(log_dir, f"pooled-triangle-{name}.log")
        )
        formatter = logging.Formatter("%(name)s %(asctime)s %(msg)s")
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        file_handler.pooled_triangle = True
        logger.addHandler(file_handler)

    return logger
