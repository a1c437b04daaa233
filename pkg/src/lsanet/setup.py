import logging

from lsanet.app_paths import AppPaths
from lsanet.db import RunLedger


logger = logging.getLogger(__name__)


class AppSetup(AppPaths):
    def __init__(self):
        super().__init__()
        self.ledger = RunLedger(self.ledger_file_path)

    def setup_app(self):
        # Create app directory
        if not self.main_dir_path.exists():
            logger.info('Creating %s folder', self.main_dir_path.name)
            self.main_dir_path.mkdir(parents=True)

        # Create working directories
        for path in (self.runs_path, self.datasets_path, self.exports_path):
            if not path.exists():
                logger.info('Creating %s folder', path.name)
                path.mkdir()

        # Create SQLite run ledger
        if not self.ledger_file_path.exists():
            logger.info('Creating %s file', self.ledger_file_path.name)
            self.ledger.db_setup()
