import logging
import sys

from rich.logging import RichHandler

from lsanet import cli
from lsanet.settings import DEBUG
from lsanet.setup import AppSetup


def main():
    logging.basicConfig(
        level=logging.DEBUG if DEBUG else logging.INFO,
        format='%(message)s',
        datefmt='[%X]',
        handlers=[RichHandler(rich_tracebacks=DEBUG)],
    )
    AppSetup().setup_app()
    sys.exit(cli.run())


if __name__ == "__main__":
    main()
