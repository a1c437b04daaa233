from datetime import datetime
from pathlib import Path
from sqlite3 import connect

from lsanet.app_paths import AppPaths


class RunLedger:
    """Training runs and their per-epoch results in one sqlite file"""

    def __init__(self, db_file: Path | None = None):
        self.db_file = db_file or AppPaths().ledger_file_path

    def db_setup(self) -> None:
        """Create the tables; safe to call on an existing ledger"""
        with connect(self.db_file) as con:
            con.cursor().execute("""
                CREATE TABLE IF NOT EXISTS runs(
                    id INTEGER PRIMARY KEY,
                    name TEXT,
                    variant TEXT,
                    seed INTEGER,
                    out_dir TEXT,
                    started DATE
                )
            """)
            con.cursor().execute("""
                CREATE TABLE IF NOT EXISTS epochs(
                    run_id INTEGER REFERENCES runs(id),
                    epoch INTEGER,
                    loss REAL,
                    train_oa REAL,
                    test_oa REAL,
                    test_ma REAL,
                    lr REAL
                )
            """)
            con.commit()

    def create_run_entry(self, name: str, variant: str, seed: int, out_dir: Path) -> int:
        with connect(self.db_file) as con:
            cursor = con.cursor()
            cursor.execute("""
                INSERT INTO runs(name, variant, seed, out_dir, started)
                VALUES (?, ?, ?, ?, ?)
            """, (name, variant, seed, str(out_dir), datetime.now())
            )
            return cursor.lastrowid

    def create_epoch_entry(self, run_id: int, record: dict) -> None:
        with connect(self.db_file) as con:
            con.cursor().execute("""
                INSERT INTO epochs(run_id, epoch, loss, train_oa, test_oa, test_ma, lr)
                VALUES (?, ?, ?, ?, ?, ?, ?)
            """, (
                run_id,
                record['epoch'],
                record['loss'],
                record['train_oa'],
                record.get('test_oa'),
                record.get('test_ma'),
                record['lr'],
            ))

    def final_test_accuracy(self, name: str) -> list[tuple[str, int, float]]:
        """(variant, seed, test OA of the last epoch) for every run called `name`"""
        with connect(self.db_file) as con:
            return con.cursor().execute("""
                SELECT runs.variant, runs.seed, epochs.test_oa
                FROM runs JOIN epochs ON epochs.run_id = runs.id
                WHERE runs.name = ? AND epochs.epoch = (
                    SELECT MAX(epoch) FROM epochs WHERE run_id = runs.id
                )
                ORDER BY runs.id
            """, (name,)).fetchall()
