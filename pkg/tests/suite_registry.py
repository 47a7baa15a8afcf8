"""Records every ``SolveReport`` built during the test session.

The suite-wide certificate check inspects the converged ones.  Reports built
by the NNV and OPF routines are tagged nonconvex: their certificates carry a
bound pair or a Lagrangian value rather than a convex duality gap.
"""
import sys

from pdkit import solvers

NONCONVEX_MODULES = {"pdkit.problems.nnv", "pdkit.problems.opf"}
REPORTS: list = []  # (report, nonconvex)

_original_init = solvers.SolveReport.__init__


def _recording_init(self, *args, **kwargs):
    _original_init(self, *args, **kwargs)
    frame, modules = sys._getframe(1), set()
    while frame is not None:
        modules.add(frame.f_globals.get("__name__", ""))
        frame = frame.f_back
    REPORTS.append((self, bool(modules & NONCONVEX_MODULES)))


def install() -> None:
    solvers.SolveReport.__init__ = _recording_init


def converged_convex_reports():
    return [r for r, nonconvex in REPORTS if r.converged and not nonconvex]
