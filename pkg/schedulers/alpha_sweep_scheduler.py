import asyncio
import traceback
from typing import Callable, Optional, Sequence

from helper.logger_utils import force_log
from models import ProblemParams, RadialFunction, RieszKernel, SweepRow, SweepTable, WorkingConstants
from services.solver_service import SolverService


class AlphaSweepScheduler:
    """Runs the alpha ladder row by row; stop_scheduler ends it after the current row"""

    def __init__(
        self,
        solver: SolverService,
        on_row: Optional[Callable[[SweepRow], None]] = None,
    ):
        self.solver = solver
        self.on_row = on_row
        self.is_running = False

    async def start_scheduler(
        self,
        params: ProblemParams,
        alphas: Sequence[float],
        kernel: RieszKernel,
        constants: WorkingConstants,
        include_reference: bool = True,
    ) -> SweepTable:
        """Solve every ladder row in order, warm-starting each from the last"""
        self.is_running = True
        force_log(f"Alpha sweep started over {len(alphas)} rows", "AlphaSweepScheduler")

        table = SweepTable(rows=[])
        previous_loc: Optional[RadialFunction] = None
        previous_mp: Optional[RadialFunction] = None
        try:
            for alpha in alphas:
                if not self.is_running:
                    force_log(f"Alpha sweep stopped before alpha={alpha}", "AlphaSweepScheduler", "WARN")
                    return table
                row, loc, mp, previous_loc, previous_mp = await asyncio.to_thread(
                    self.solver.sweep_row, params, alpha, kernel, constants, previous_loc, previous_mp
                )
                self._record(table, row)
                table.local_records.append(loc)
                table.mp_records.append(mp)

            if include_reference and self.is_running:
                row, table.reference = await asyncio.to_thread(self.solver.reference_row, params, kernel, previous_mp)
                self._record(table, row)
        except Exception as e:
            force_log(f"Error in alpha sweep: {e}", "AlphaSweepScheduler", "ERROR")
            force_log(f"Traceback: {traceback.format_exc()}", "AlphaSweepScheduler", "ERROR")
            raise
        finally:
            self.is_running = False

        force_log(f"Alpha sweep finished with {len(table.rows)} rows", "AlphaSweepScheduler")
        return table

    async def stop_scheduler(self):
        self.is_running = False
        force_log("Alpha sweep stop requested", "AlphaSweepScheduler")

    def _record(self, table: SweepTable, row: SweepRow) -> None:
        table.rows.append(row)
        force_log(f"alpha={row.alpha:.6g} m={row.m} sigma={row.sigma}", "AlphaSweepScheduler", "DEBUG")
        if self.on_row:
            self.on_row(row)
